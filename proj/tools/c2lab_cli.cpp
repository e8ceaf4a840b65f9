// c2lab command-line front end. Talks to the library only through c2lab.h.
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "c2lab/c2lab.h"

namespace fs = std::filesystem;

namespace {

struct CliError {
  int status;
};

void check(c2lab_status s, const char* what) {
  if (s != C2LAB_OK) {
    std::fprintf(stderr, "c2lab: %s: %s\n", what, c2lab_last_error());
    throw CliError{static_cast<int>(s)};
  }
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<c2lab_config, Deleter<c2lab_config, c2lab_config_free>>;
using DatasetPtr = std::unique_ptr<c2lab_dataset, Deleter<c2lab_dataset, c2lab_dataset_free>>;
using Detector = std::unique_ptr<c2lab_detector, Deleter<c2lab_detector, c2lab_detector_free>>;
using Plans = std::unique_ptr<c2lab_plans, Deleter<c2lab_plans, c2lab_plans_free>>;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string mode = "regular";
};

Config load_config(const Common& c) {
  c2lab_config* raw = nullptr;
  if (c.config.empty())
    check(c2lab_config_default(&raw), "config");
  else
    check(c2lab_config_load(c.config.c_str(), &raw), "config");
  Config cfg(raw);
  if (c.seed) check(c2lab_config_set_seed(cfg.get(), *c.seed), "seed");
  return cfg;
}

DatasetPtr read_datasets(const std::vector<std::string>& paths) {
  DatasetPtr all;
  for (const auto& p : paths) {
    c2lab_dataset* raw = nullptr;
    check(c2lab_dataset_read_csv(p.c_str(), &raw), p.c_str());
    DatasetPtr ds(raw);
    if (!all)
      all = std::move(ds);
    else
      check(c2lab_dataset_append(all.get(), ds.get()), "append");
  }
  return all;
}

void add_common(CLI::App* cmd, Common& c, bool with_mode) {
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory");
  if (with_mode) cmd->add_option("--mode", c.mode, "provenance: regular, stuff50, stuffRand, fixed3Req, randReq, "
                                                   "advFramework, advPayload, advTwoSide, web");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c2lab: C2 traffic detection and evasion lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", c2lab_version());

  Common gen_opts;
  std::string gen_split = "eval";
  std::size_t gen_flows = 1000;
  std::string gen_plans;
  bool gen_pcap = false;
  auto* gen = app.add_subcommand("gen", "simulate traffic and write a dataset (optionally pcap + event log)");
  add_common(gen, gen_opts, true);
  gen->add_option("--split", gen_split, "seed split: train, test or eval");
  gen->add_option("--flows", gen_flows, "number of connections");
  gen->add_option("--plans", gen_plans, "plan library for adversarial modes");
  gen->add_flag("--pcap", gen_pcap, "also write capture.pcap and events.json");

  Common ext_opts;
  std::string ext_input;
  auto* ext = app.add_subcommand("extract", "extract record-size features from a pcap into CSV");
  add_common(ext, ext_opts, true);
  ext->add_option("pcap", ext_input, "classic pcap file")->required();

  Common train_opts;
  std::vector<std::string> train_inputs;
  auto* train = app.add_subcommand("train", "train a detector on dataset CSVs");
  add_common(train, train_opts, false);
  train->add_option("datasets", train_inputs, "dataset CSV files")->required();

  Common atk_opts;
  std::string atk_model, atk_source;
  double atk_eps = 0.05;
  auto* attack = app.add_subcommand("attack", "build an FGSM stuffing-plan library");
  add_common(attack, atk_opts, false);
  attack->add_option("--model", atk_model, "detector file")->required();
  attack->add_option("--source", atk_source, "C2 dataset CSV the plans are derived from")->required();
  attack->add_option("--epsilon", atk_eps, "FGSM step in normalized units");

  Common eval_opts;
  std::string eval_model;
  std::vector<std::string> eval_inputs;
  auto* eval = app.add_subcommand("eval", "accuracy and evasion rate of a detector on dataset CSVs");
  add_common(eval, eval_opts, false);
  eval->add_option("--model", eval_model, "detector file")->required();
  eval->add_option("datasets", eval_inputs, "dataset CSV files")->required();

  Common ovh_opts;
  std::string ovh_plans;
  std::size_t ovh_reps = 10;
  auto* overhead = app.add_subcommand("overhead", "regular vs adversarial overhead of the 12-command script");
  add_common(overhead, ovh_opts, false);
  overhead->add_option("--plans", ovh_plans, "plan library")->required();
  overhead->add_option("--repetitions", ovh_reps, "session repetitions");

  Common rep_opts;
  auto* report = app.add_subcommand("report", "run the full experiment and export the report");
  add_common(report, rep_opts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Config cfg = load_config(gen_opts);
      Plans plans;
      if (!gen_plans.empty()) {
        c2lab_plans* raw = nullptr;
        check(c2lab_plans_load(gen_plans.c_str(), &raw), "plans");
        plans.reset(raw);
      }
      fs::create_directories(gen_opts.out);
      const std::string stem = (fs::path(gen_opts.out) / (gen_opts.mode + "_" + gen_split)).string();
      const std::string pcap = stem + ".pcap", events = stem + ".events.json";
      c2lab_dataset* raw = nullptr;
      check(c2lab_dataset_simulate(cfg.get(), gen_opts.mode.c_str(), gen_split.c_str(), gen_flows, plans.get(),
                                   gen_pcap ? pcap.c_str() : nullptr, gen_pcap ? events.c_str() : nullptr, &raw),
            "gen");
      DatasetPtr ds(raw);
      check(c2lab_dataset_write_csv(ds.get(), (stem + ".csv").c_str()), "write");
      std::printf("%s.csv: %zu flows\n", stem.c_str(), c2lab_dataset_size(ds.get()));
    } else if (ext->parsed()) {
      c2lab_dataset* raw = nullptr;
      check(c2lab_dataset_from_pcap(ext_input.c_str(), ext_opts.mode.c_str(), &raw), "extract");
      DatasetPtr ds(raw);
      fs::create_directories(ext_opts.out);
      const std::string path = (fs::path(ext_opts.out) / (fs::path(ext_input).stem().string() + ".csv")).string();
      check(c2lab_dataset_write_csv(ds.get(), path.c_str()), "write");
      std::printf("%s: %zu flows\n", path.c_str(), c2lab_dataset_size(ds.get()));
    } else if (train->parsed()) {
      Config cfg = load_config(train_opts);
      DatasetPtr ds = read_datasets(train_inputs);
      c2lab_detector* raw = nullptr;
      check(c2lab_detector_train(cfg.get(), ds.get(), train_opts.seed.value_or(1), &raw), "train");
      Detector det(raw);
      fs::create_directories(train_opts.out);
      const std::string path = (fs::path(train_opts.out) / "detector.bin").string();
      check(c2lab_detector_save(det.get(), path.c_str()), "save");
      std::printf("%s\n", path.c_str());
    } else if (attack->parsed()) {
      c2lab_detector* rd = nullptr;
      check(c2lab_detector_load(atk_model.c_str(), &rd), "model");
      Detector det(rd);
      DatasetPtr src = read_datasets({atk_source});
      c2lab_plans* rp = nullptr;
      check(c2lab_plans_build(det.get(), src.get(), atk_eps, &rp), "attack");
      Plans plans(rp);
      fs::create_directories(atk_opts.out);
      const std::string path = (fs::path(atk_opts.out) / "plans.json").string();
      check(c2lab_plans_save(plans.get(), path.c_str()), "save");
      std::printf("%s: %zu plans\n", path.c_str(), c2lab_plans_size(plans.get()));
    } else if (eval->parsed()) {
      c2lab_detector* rd = nullptr;
      check(c2lab_detector_load(eval_model.c_str(), &rd), "model");
      Detector det(rd);
      std::printf("dataset,total,accuracy,c2_total,c2_evaded,evasion_rate\n");
      for (const auto& p : eval_inputs) {
        DatasetPtr ds = read_datasets({p});
        c2lab_eval_result r{};
        check(c2lab_evaluate(det.get(), ds.get(), &r), p.c_str());
        std::printf("%s,%zu,%.6f,%zu,%zu,%.6f\n", p.c_str(), r.total, r.accuracy, r.c2_total, r.c2_evaded,
                    r.evasion_rate);
      }
    } else if (overhead->parsed()) {
      Config cfg = load_config(ovh_opts);
      c2lab_plans* rp = nullptr;
      check(c2lab_plans_load(ovh_plans.c_str(), &rp), "plans");
      Plans plans(rp);
      c2lab_overhead_summary s{};
      check(c2lab_run_overhead(cfg.get(), plans.get(), ovh_reps, ovh_opts.out.c_str(), &s), "overhead");
      std::printf("mode,appdata_bytes,wire_bytes,connections,runtime\n");
      std::printf("regular,%" PRIu64 ",%" PRIu64 ",%zu,%.6f\n", s.regular_appdata_bytes, s.regular_wire_bytes,
                  s.regular_connections, s.regular_runtime);
      std::printf("adversarial,%" PRIu64 ",%" PRIu64 ",%zu,%.6f\n", s.adversarial_appdata_bytes,
                  s.adversarial_wire_bytes, s.adversarial_connections, s.adversarial_runtime);
    } else if (report->parsed()) {
      Config cfg = load_config(rep_opts);
      check(c2lab_run_experiment(cfg.get(), rep_opts.out.c_str()), "report");
      std::printf("%s/report/report.json\n", rep_opts.out.c_str());
    }
  } catch (const CliError& e) {
    return e.status;
  }
  return 0;
}
