#include "c2lab/c2lab.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "c2lab/adversarial.hpp"
#include "c2lab/detector.hpp"
#include "c2lab/experiment.hpp"
#include "c2lab/tls_extract.hpp"

struct c2lab_config {
  c2lab::harness::ExperimentConfig value;
};
struct c2lab_dataset {
  c2lab::Dataset value;
};
struct c2lab_detector {
  c2lab::detector::DetectorParams value;
};
struct c2lab_plans {
  std::vector<c2lab::StuffingPlan> value;
};

namespace {

thread_local std::string g_last_error;

c2lab_status fail(c2lab_status s, const std::string& what) {
  g_last_error = what;
  return s;
}

// Runs `fn`, translating exceptions into status codes.
template <typename F>
c2lab_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return C2LAB_OK;
  } catch (const c2lab::Error& e) {
    return fail(static_cast<c2lab_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(C2LAB_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(C2LAB_E_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw c2lab::Error(c2lab::ErrorCode::kInvalidArgument, what);
}

std::span<const c2lab::StuffingPlan> plans_of(const c2lab_plans* p) {
  return p ? std::span<const c2lab::StuffingPlan>(p->value) : std::span<const c2lab::StuffingPlan>{};
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* c2lab_version(void) { return "1.0.0"; }

const char* c2lab_last_error(void) { return g_last_error.c_str(); }

void c2lab_string_free(char* s) { std::free(s); }

c2lab_status c2lab_config_default(c2lab_config** out) {
  return guarded([&] {
    require(out, "null output");
    *out = new c2lab_config{};
  });
}

c2lab_status c2lab_config_load(const char* path, c2lab_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new c2lab_config{c2lab::harness::ExperimentConfig::load(path)};
  });
}

c2lab_status c2lab_config_parse(const char* json_text, c2lab_config** out) {
  return guarded([&] {
    require(json_text && out, "null argument");
    *out = new c2lab_config{c2lab::harness::ExperimentConfig::from_json(json_text)};
  });
}

c2lab_status c2lab_config_set_seed(c2lab_config* cfg, uint64_t seed) {
  return guarded([&] {
    require(cfg, "null config");
    cfg->value.seed = seed;
  });
}

c2lab_status c2lab_config_to_json(const c2lab_config* cfg, char** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    *out = dup_string(cfg->value.to_json());
  });
}

void c2lab_config_free(c2lab_config* cfg) { delete cfg; }

c2lab_status c2lab_dataset_generate(const c2lab_config* cfg, const char* provenance, const char* split, size_t flows,
                                    const c2lab_plans* plans, c2lab_dataset** out) {
  return c2lab_dataset_simulate(cfg, provenance, split, flows, plans, nullptr, nullptr, out);
}

c2lab_status c2lab_dataset_simulate(const c2lab_config* cfg, const char* provenance, const char* split, size_t flows,
                                    const c2lab_plans* plans, const char* pcap_path, const char* event_log_path,
                                    c2lab_dataset** out) {
  return guarded([&] {
    require(cfg && provenance && split && out, "null argument");
    require(flows > 0, "flows must be positive");
    using namespace c2lab;
    const Provenance p = provenance_from_string(provenance);
    const auto result = harness::simulate_provenance(cfg->value, p, split, flows, plans_of(plans));
    if (pcap_path) {
      const auto wire = cfg->value.sim.wire;
      sim::emit_pcap(result, wire, pcap_path, harness::named_seed(cfg->value, std::string("pcap/") + split));
    }
    if (event_log_path) sim::write_event_log(result, event_log_path);
    auto ds = harness::dataset_from(result, p);
    ds.seed = cfg->value.seed;
    *out = new c2lab_dataset{std::move(ds)};
  });
}

c2lab_status c2lab_dataset_from_pcap(const char* pcap_path, const char* provenance, c2lab_dataset** out) {
  return guarded([&] {
    require(pcap_path && provenance && out, "null argument");
    using namespace c2lab;
    const Provenance p = provenance_from_string(provenance);
    Dataset ds;
    for (const auto& t : tls::traces_from_pcap(pcap_path)) ds.add(features_from_trace(t), p);
    *out = new c2lab_dataset{std::move(ds)};
  });
}

c2lab_status c2lab_dataset_read_csv(const char* path, c2lab_dataset** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new c2lab_dataset{c2lab::read_dataset_csv(std::string(path))};
  });
}

c2lab_status c2lab_dataset_write_csv(const c2lab_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds && path, "null argument");
    c2lab::write_dataset_csv(std::string(path), ds->value);
  });
}

c2lab_status c2lab_dataset_append(c2lab_dataset* dst, const c2lab_dataset* src) {
  return guarded([&] {
    require(dst && src, "null argument");
    dst->value.append(src->value);
  });
}

size_t c2lab_dataset_size(const c2lab_dataset* ds) { return ds ? ds->value.samples.size() : 0; }

c2lab_status c2lab_dataset_sample(const c2lab_dataset* ds, size_t index, double features[C2LAB_FEATURES], int* label) {
  return guarded([&] {
    require(ds && features, "null argument");
    require(index < ds->value.samples.size(), "sample index out of range");
    const auto& s = ds->value.samples[index];
    for (std::size_t i = 0; i < c2lab::kFeatureLength; ++i) features[i] = s.features[i];
    if (label) *label = static_cast<int>(s.label);
  });
}

void c2lab_dataset_free(c2lab_dataset* ds) { delete ds; }

c2lab_status c2lab_detector_train(const c2lab_config* cfg, const c2lab_dataset* ds, uint64_t seed,
                                  c2lab_detector** out) {
  return guarded([&] {
    require(cfg && ds && out, "null argument");
    auto tc = cfg->value.train;
    tc.seed = seed;
    *out = new c2lab_detector{c2lab::detector::train(ds->value, tc).params};
  });
}

c2lab_status c2lab_detector_load(const char* path, c2lab_detector** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new c2lab_detector{c2lab::detector::load(path)};
  });
}

c2lab_status c2lab_detector_save(const c2lab_detector* det, const char* path) {
  return guarded([&] {
    require(det && path, "null argument");
    c2lab::detector::save(det->value, path);
  });
}

c2lab_status c2lab_detector_predict(const c2lab_detector* det, const c2lab_dataset* ds, int* labels) {
  return guarded([&] {
    require(det && ds && (labels || ds->value.samples.empty()), "null argument");
    const auto preds = c2lab::detector::predict_all(det->value, ds->value);
    for (std::size_t i = 0; i < preds.size(); ++i) labels[i] = static_cast<int>(preds[i]);
  });
}

c2lab_status c2lab_detector_score(const c2lab_detector* det, const double features[C2LAB_FEATURES], double* p_c2) {
  return guarded([&] {
    require(det && features && p_c2, "null argument");
    const auto fv = c2lab::FeatureVector::from_values(std::span<const double>(features, c2lab::kFeatureLength));
    *p_c2 = c2lab::detector::forward(det->value, fv).c2;
  });
}

void c2lab_detector_free(c2lab_detector* det) { delete det; }

c2lab_status c2lab_evaluate(const c2lab_detector* det, const c2lab_dataset* ds, c2lab_eval_result* out) {
  return guarded([&] {
    require(det && ds && out, "null argument");
    using namespace c2lab;
    require(!ds->value.samples.empty(), "empty dataset");
    const auto preds = detector::predict_all(det->value, ds->value);
    c2lab_eval_result r{};
    r.total = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto& s = ds->value.samples[i];
      r.correct += preds[i] == s.label;
      if (s.label == Label::C2) {
        ++r.c2_total;
        r.c2_evaded += preds[i] == Label::NonC2;
      }
    }
    r.accuracy = accuracy(ds->value, preds);
    r.evasion_rate = r.c2_total == 0 ? 0.0 : static_cast<double>(r.c2_evaded) / static_cast<double>(r.c2_total);
    *out = r;
  });
}

c2lab_status c2lab_plans_build(const c2lab_detector* det, const c2lab_dataset* source, double epsilon,
                               c2lab_plans** out) {
  return guarded([&] {
    require(det && source && out, "null argument");
    c2lab::adv::FgsmConfig fc;
    fc.epsilon = epsilon;
    *out = new c2lab_plans{c2lab::adv::build_plan_library(det->value, source->value.filtered(c2lab::Label::C2), fc)};
  });
}

c2lab_status c2lab_plans_load(const char* path, c2lab_plans** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new c2lab_plans{c2lab::read_plan_library(path)};
  });
}

c2lab_status c2lab_plans_save(const c2lab_plans* plans, const char* path) {
  return guarded([&] {
    require(plans && path, "null argument");
    c2lab::write_plan_library(path, plans->value);
  });
}

size_t c2lab_plans_size(const c2lab_plans* plans) { return plans ? plans->value.size() : 0; }

void c2lab_plans_free(c2lab_plans* plans) { delete plans; }

c2lab_status c2lab_run_overhead(const c2lab_config* cfg, const c2lab_plans* plans, size_t repetitions,
                                const char* out_dir, c2lab_overhead_summary* out) {
  return guarded([&] {
    require(cfg && plans && out, "null argument");
    require(!plans->value.empty(), "empty plan library");
    require(repetitions > 0, "repetitions must be positive");
    using namespace c2lab::harness;
    auto sim_cfg = cfg->value.sim;
    sim_cfg.seed = named_seed(cfg->value, "overhead");
    Report report;
    report.config_json = cfg->value.to_json();
    report.seeds["master"] = cfg->value.seed;
    report.seeds["overhead"] = sim_cfg.seed;
    report.overhead = measure_overhead(c2lab::sim::default_overhead_script(), sim_cfg, plans->value, repetitions,
                                       plans->value.front().epsilon);
    if (out_dir) export_report(report, out_dir);
    const auto& o = report.overhead;
    *out = {o.regular.appdata_bytes, o.adversarial.appdata_bytes, o.regular.wire_bytes, o.adversarial.wire_bytes,
            o.regular.connections,   o.adversarial.connections,   o.regular.runtime,    o.adversarial.runtime};
  });
}

c2lab_status c2lab_run_experiment(const c2lab_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg && out_dir, "null argument");
    c2lab::harness::Experiment exp(cfg->value, out_dir);
    const auto report = exp.run();
    c2lab::harness::export_report(report, std::string(out_dir) + "/report");
  });
}

}  // extern "C"
