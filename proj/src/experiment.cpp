#include "c2lab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace c2lab::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads `key` into `field` if present; unknown keys are rejected by check_keys.
template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw Error(ErrorCode::kConfig, "unknown config key '" + where + k + "'");
  }
}

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::string eps_tag(double eps) { return "eps" + number(eps); }

}  // namespace

void ExperimentConfig::validate() const {
  if (train_per_mode == 0 || test_per_mode == 0 || eval_per_mode == 0)
    throw Error(ErrorCode::kConfig, "dataset sizes must be positive");
  if (threat_model_2 || overhead) {
    if (epsilons.empty()) throw Error(ErrorCode::kConfig, "epsilon sweep is empty");
    for (double e : epsilons)
      if (!(e >= 0.0)) throw Error(ErrorCode::kConfig, "epsilon must be >= 0");
  }
  if (overhead && overhead_repetitions == 0) throw Error(ErrorCode::kConfig, "overhead needs at least one repetition");
  sim.validate();
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["train_per_mode"] = train_per_mode;
  j["test_per_mode"] = test_per_mode;
  j["eval_per_mode"] = eval_per_mode;
  j["epsilons"] = epsilons;
  j["overhead_repetitions"] = overhead_repetitions;
  j["threat_model_1"] = threat_model_1;
  j["threat_model_2"] = threat_model_2;
  j["overhead"] = overhead;
  j["persist_datasets"] = persist_datasets;
  j["train"] = {{"learning_rate", train.learning_rate},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"epsilon_hat", train.epsilon_hat},
                {"dropout_rate", train.dropout_rate},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"patience", train.patience},
                {"validation_fraction", train.validation_fraction},
                {"architecture", train.architecture}};
  j["sim"] = {{"stuff_fixed_bytes", sim.stuff_fixed_bytes},
              {"stuff_random_min", sim.stuff_random_min},
              {"stuff_random_max", sim.stuff_random_max},
              {"fixed_req_per_conn", sim.fixed_req_per_conn},
              {"rand_req_min", sim.rand_req_min},
              {"rand_req_max", sim.rand_req_max},
              {"poll_initial", sim.poll_initial},
              {"poll_max", sim.poll_max},
              {"rtt", sim.rtt},
              {"command_exec_time", sim.command_exec_time},
              {"tls_tag_bytes", sim.tls.tag_bytes},
              {"tls_block_bytes", sim.tls.block_bytes},
              {"handshake_wire_bytes", sim.wire.handshake_wire_bytes},
              {"mss", sim.wire.mss}};
  j["scripts"] = {{"min_commands", scripts.min_commands},
                  {"max_commands", scripts.max_commands},
                  {"min_gap", scripts.min_gap},
                  {"max_gap", scripts.max_gap},
                  {"size_jitter", scripts.size_jitter}};
  j["web"] = {{"min_records", web.min_records},
              {"max_records", web.max_records},
              {"short_flow_fraction", web.short_flow_fraction},
              {"full_burst_probability", web.full_burst_probability},
              {"small_record_probability", web.small_record_probability},
              {"client_min_size", web.client_min_size},
              {"client_max_size", web.client_max_size},
              {"api_flow_fraction", web.api_flow_fraction},
              {"api_request_min", web.api_request_min},
              {"api_request_max", web.api_request_max},
              {"api_response_min", web.api_response_min},
              {"api_response_max", web.api_response_max},
              {"mean_think_time", web.mean_think_time},
              {"rtt", web.rtt}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j,
               {"seed", "train_per_mode", "test_per_mode", "eval_per_mode", "epsilons", "overhead_repetitions",
                "threat_model_1", "threat_model_2", "overhead", "persist_datasets", "train", "sim", "scripts", "web"},
               "");
    take(j, "seed", c.seed);
    take(j, "train_per_mode", c.train_per_mode);
    take(j, "test_per_mode", c.test_per_mode);
    take(j, "eval_per_mode", c.eval_per_mode);
    take(j, "epsilons", c.epsilons);
    take(j, "overhead_repetitions", c.overhead_repetitions);
    take(j, "threat_model_1", c.threat_model_1);
    take(j, "threat_model_2", c.threat_model_2);
    take(j, "overhead", c.overhead);
    take(j, "persist_datasets", c.persist_datasets);
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t,
                 {"learning_rate", "beta1", "beta2", "epsilon_hat", "dropout_rate", "batch_size", "epochs", "patience",
                  "validation_fraction", "architecture"},
                 "train.");
      take(t, "learning_rate", c.train.learning_rate);
      take(t, "beta1", c.train.beta1);
      take(t, "beta2", c.train.beta2);
      take(t, "epsilon_hat", c.train.epsilon_hat);
      take(t, "dropout_rate", c.train.dropout_rate);
      take(t, "batch_size", c.train.batch_size);
      take(t, "epochs", c.train.epochs);
      take(t, "patience", c.train.patience);
      take(t, "validation_fraction", c.train.validation_fraction);
      take(t, "architecture", c.train.architecture);
    }
    if (j.contains("sim")) {
      const json& s = j["sim"];
      check_keys(s,
                 {"stuff_fixed_bytes", "stuff_random_min", "stuff_random_max", "fixed_req_per_conn", "rand_req_min",
                  "rand_req_max", "poll_initial", "poll_max", "rtt", "command_exec_time", "tls_tag_bytes",
                  "tls_block_bytes", "handshake_wire_bytes", "mss"},
                 "sim.");
      take(s, "stuff_fixed_bytes", c.sim.stuff_fixed_bytes);
      take(s, "stuff_random_min", c.sim.stuff_random_min);
      take(s, "stuff_random_max", c.sim.stuff_random_max);
      take(s, "fixed_req_per_conn", c.sim.fixed_req_per_conn);
      take(s, "rand_req_min", c.sim.rand_req_min);
      take(s, "rand_req_max", c.sim.rand_req_max);
      take(s, "poll_initial", c.sim.poll_initial);
      take(s, "poll_max", c.sim.poll_max);
      take(s, "rtt", c.sim.rtt);
      take(s, "command_exec_time", c.sim.command_exec_time);
      take(s, "tls_tag_bytes", c.sim.tls.tag_bytes);
      take(s, "tls_block_bytes", c.sim.tls.block_bytes);
      take(s, "handshake_wire_bytes", c.sim.wire.handshake_wire_bytes);
      take(s, "mss", c.sim.wire.mss);
    }
    if (j.contains("scripts")) {
      const json& s = j["scripts"];
      check_keys(s, {"min_commands", "max_commands", "min_gap", "max_gap", "size_jitter"}, "scripts.");
      take(s, "min_commands", c.scripts.min_commands);
      take(s, "max_commands", c.scripts.max_commands);
      take(s, "min_gap", c.scripts.min_gap);
      take(s, "max_gap", c.scripts.max_gap);
      take(s, "size_jitter", c.scripts.size_jitter);
    }
    if (j.contains("web")) {
      const json& w = j["web"];
      check_keys(w,
                 {"min_records", "max_records", "short_flow_fraction", "full_burst_probability",
                  "small_record_probability", "client_min_size", "client_max_size", "api_flow_fraction", "api_request_min", "api_request_max",
                  "api_response_min", "api_response_max", "mean_think_time", "rtt"},
                 "web.");
      take(w, "min_records", c.web.min_records);
      take(w, "max_records", c.web.max_records);
      take(w, "short_flow_fraction", c.web.short_flow_fraction);
      take(w, "full_burst_probability", c.web.full_burst_probability);
      take(w, "small_record_probability", c.web.small_record_probability);
      take(w, "client_min_size", c.web.client_min_size);
      take(w, "client_max_size", c.web.client_max_size);
      take(w, "api_flow_fraction", c.web.api_flow_fraction);
      take(w, "api_request_min", c.web.api_request_min);
      take(w, "api_request_max", c.web.api_request_max);
      take(w, "api_response_min", c.web.api_response_min);
      take(w, "api_response_max", c.web.api_response_max);
      take(w, "mean_think_time", c.web.mean_think_time);
      take(w, "rtt", c.web.rtt);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::uint64_t named_seed(const ExperimentConfig& config, std::string_view name) {
  return substream_seed(config.seed, name);
}

sim::SimMode mode_of(Provenance p) {
  switch (p) {
    case Provenance::Regular: return sim::SimMode::Regular;
    case Provenance::Stuff50: return sim::SimMode::StuffFixed;
    case Provenance::StuffRand: return sim::SimMode::StuffRandom;
    case Provenance::Fixed3Req: return sim::SimMode::FixedReqPerConn;
    case Provenance::RandReq: return sim::SimMode::RandReqPerConn;
    case Provenance::AdvFramework:
    case Provenance::AdvPayload:
    case Provenance::AdvTwoSide: return sim::SimMode::Adversarial;
    case Provenance::Web: break;
  }
  throw Error(ErrorCode::kInvalidArgument, "web traffic has no C2 simulator mode");
}

std::optional<StuffingSide> side_of(Provenance p) {
  switch (p) {
    case Provenance::AdvFramework: return StuffingSide::FrameworkOnly;
    case Provenance::AdvPayload: return StuffingSide::PayloadOnly;
    case Provenance::AdvTwoSide: return StuffingSide::TwoSide;
    default: return std::nullopt;
  }
}

sim::SimConfig sim_config_for(const ExperimentConfig& config, Provenance p, std::string_view split) {
  sim::SimConfig s = config.sim;
  s.mode = mode_of(p);
  if (auto side = side_of(p)) s.side = *side;
  // Every C2 provenance of a split shares scripts and timing; only shaping differs.
  s.seed = named_seed(config, "sim/" + std::string(split));
  return s;
}

sim::SimulationResult simulate_provenance(const ExperimentConfig& config, Provenance p, std::string_view split,
                                          std::size_t flows, std::span<const StuffingPlan> plans) {
  if (p == Provenance::Web) {
    sim::WebConfig w = config.web;
    w.seed = named_seed(config, "web/" + std::string(split));
    return sim::simulate_web(w, flows);
  }
  std::vector<StuffingPlan> restricted;
  if (auto side = side_of(p)) {
    restricted.reserve(plans.size());
    for (const auto& plan : plans) restricted.push_back(adv::restrict_to_side(plan, *side));
    plans = restricted;
  }
  return sim::simulate_c2_corpus(sim_config_for(config, p, split), config.scripts, flows, plans);
}

Dataset dataset_from(const sim::SimulationResult& result, Provenance p) {
  Dataset ds;
  ds.samples.reserve(result.traces.size());
  for (const auto& t : result.traces) ds.add(features_from_trace(t), p);
  return ds;
}

Dataset generate(const ExperimentConfig& config, Provenance p, std::string_view split, std::size_t flows,
                 std::span<const StuffingPlan> plans) {
  Dataset ds = dataset_from(simulate_provenance(config, p, split, flows, plans), p);
  ds.seed = p == Provenance::Web ? named_seed(config, "web/" + std::string(split))
                                 : named_seed(config, "sim/" + std::string(split));
  return ds;
}

const EvasionRow* Report::find_evasion(std::string_view detector, std::string_view provenance) const {
  for (const auto& r : evasion)
    if (r.detector == detector && r.provenance == provenance && (!side_of(provenance_from_string(provenance)) ||
                                                                 (best_epsilon && r.epsilon == *best_epsilon)))
      return &r;
  return nullptr;
}

const AccuracyRow* Report::find_accuracy(std::string_view detector) const {
  for (const auto& r : accuracy)
    if (r.detector == detector) return &r;
  return nullptr;
}

std::string Report::to_json() const {
  json j;
  j["config"] = json::parse(config_json.empty() ? "{}" : config_json);
  j["seeds"] = seeds;
  json acc = json::array();
  for (const auto& r : accuracy)
    acc.push_back({{"detector", r.detector}, {"total", r.total}, {"correct", r.correct}, {"accuracy", r.accuracy}});
  j["accuracy"] = acc;
  json ev = json::array();
  for (const auto& r : evasion)
    ev.push_back({{"detector", r.detector},
                  {"provenance", r.provenance},
                  {"epsilon", r.epsilon},
                  {"total", r.total},
                  {"evaded", r.evaded},
                  {"rate", r.rate}});
  j["evasion"] = ev;
  json sweep = json::array();
  for (const auto& r : epsilon_sweep)
    sweep.push_back({{"epsilon", r.epsilon}, {"framework", r.framework}, {"payload", r.payload}, {"two_side", r.two_side}});
  j["epsilon_sweep"] = sweep;
  j["best_epsilon"] = best_epsilon ? json(*best_epsilon) : json(nullptr);
  json tr = json::object();
  for (const auto& [name, hist] : training) {
    json h = json::array();
    for (const auto& m : hist)
      h.push_back({{"train_loss", m.train_loss},
                   {"train_accuracy", m.train_accuracy},
                   {"validation_loss", m.validation_loss},
                   {"validation_accuracy", m.validation_accuracy}});
    tr[name] = h;
  }
  j["training"] = tr;
  if (overhead.empty()) {
    j["overhead"] = nullptr;
  } else {
    auto totals = [](const ModeTotals& t) {
      return json{{"appdata_bytes", t.appdata_bytes},
                  {"wire_bytes", t.wire_bytes},
                  {"connections", t.connections},
                  {"runtime", t.runtime}};
    };
    const auto& reg = overhead.regular;
    const auto& adv = overhead.adversarial;
    auto ratio = [](double a, double b) { return b == 0.0 ? json(nullptr) : json(a / b); };
    json runs = json::array();
    for (const auto& r : overhead.runs)
      runs.push_back({{"repetition", r.repetition},
                      {"mode", r.mode},
                      {"appdata_bytes", r.appdata_bytes},
                      {"wire_bytes", r.wire_bytes},
                      {"connections", r.connections},
                      {"runtime", r.runtime}});
    j["overhead"] = {
        {"epsilon", overhead.epsilon},
        {"regular", totals(reg)},
        {"adversarial", totals(adv)},
        {"appdata_ratio", ratio(static_cast<double>(adv.appdata_bytes), static_cast<double>(reg.appdata_bytes))},
        {"wire_ratio", ratio(static_cast<double>(adv.wire_bytes), static_cast<double>(reg.wire_bytes))},
        {"connection_ratio", ratio(static_cast<double>(reg.connections), static_cast<double>(adv.connections))},
        {"runtime_difference", adv.runtime - reg.runtime},
        {"runs", runs}};
  }
  return j.dump(2) + "\n";
}

std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> samples) {
  std::vector<std::pair<double, double>> out;
  if (samples.empty()) return out;
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    out.emplace_back(samples[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

OverheadSection measure_overhead(const sim::SessionScript& script, const sim::SimConfig& base,
                                 std::span<const StuffingPlan> plans, std::size_t repetitions, double epsilon) {
  OverheadSection out;
  out.epsilon = epsilon;
  const struct {
    const char* name;
    sim::SimMode mode;
    ModeTotals* totals;
  } modes[] = {{"regular", sim::SimMode::Regular, &out.regular}, {"adversarial", sim::SimMode::Adversarial, &out.adversarial}};
  for (std::size_t r = 0; r < repetitions; ++r) {
    for (const auto& m : modes) {
      sim::SimConfig cfg = base;
      cfg.mode = m.mode;
      cfg.side = StuffingSide::TwoSide;
      sim::SessionContext ctx;
      ctx.session_index = static_cast<std::uint32_t>(r);
      ctx.start_us = static_cast<std::int64_t>(r) * 3'600'000'000;
      const sim::SimulationResult res =
          sim::simulate_session(script, cfg, m.mode == sim::SimMode::Adversarial ? plans : std::span<const StuffingPlan>{}, ctx);
      OverheadRun run;
      run.repetition = r;
      run.mode = m.name;
      run.connections = res.connections.size();
      run.runtime = res.runtime;
      for (std::size_t i = 0; i < res.traces.size(); ++i) {
        const auto& t = res.traces[i];
        run.appdata_bytes += t.appdata_bytes();
        run.wire_bytes += t.total_wire_bytes;
        out.connection_bytes[m.name].push_back(static_cast<double>(t.total_wire_bytes));
        out.connection_duration[m.name].push_back(t.close_time - t.open_time);
        if (i > 0) out.connection_gap[m.name].push_back(t.open_time - res.traces[i - 1].close_time);
      }
      m.totals->appdata_bytes += run.appdata_bytes;
      m.totals->wire_bytes += run.wire_bytes;
      m.totals->connections += run.connections;
      m.totals->runtime += run.runtime;
      out.runs.push_back(std::move(run));
    }
  }
  return out;
}

Experiment::Experiment(ExperimentConfig config, std::string out_dir) : config_(std::move(config)), out_dir_(std::move(out_dir)) {
  config_.validate();
  if (!out_dir_.empty())
    for (const char* sub : {"datasets", "predictions", "models", "plans"}) fs::create_directories(fs::path(out_dir_) / sub);
}

const Dataset& Experiment::dataset(Provenance p, std::string_view split, std::size_t flows) {
  const std::string key = std::string(to_string(p)) + "_" + std::string(split) + "_" + std::to_string(flows);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  Dataset ds = generate(config_, p, split, flows);
  persist(ds, std::string(to_string(p)) + "_" + std::string(split));
  return cache_.emplace(key, std::move(ds)).first->second;
}

void Experiment::persist(const Dataset& ds, const std::string& name) const {
  if (out_dir_.empty() || !config_.persist_datasets) return;
  write_dataset_csv((fs::path(out_dir_) / "datasets" / (name + ".csv")).string(), ds);
}

EvasionRow Experiment::evaluate(const detector::DetectorParams& det, std::string_view det_name, const Dataset& ds,
                                std::string_view file_tag, double epsilon) {
  const auto preds = detector::predict_all(det, ds);
  if (!out_dir_.empty())
    write_predictions((fs::path(out_dir_) / "predictions" / (std::string(det_name) + "_" + std::string(file_tag) + ".csv")).string(),
                      preds);
  EvasionRow row;
  row.detector = det_name;
  row.provenance = ds.samples.empty() ? "" : std::string(to_string(ds.samples.front().provenance));
  row.epsilon = epsilon;
  row.total = ds.samples.size();
  row.evaded = static_cast<std::size_t>(std::count(preds.begin(), preds.end(), Label::NonC2));
  row.rate = evasion_rate(ds, preds);
  return row;
}

AccuracyRow Experiment::score(const detector::DetectorParams& det, std::string_view det_name, const Dataset& ds) {
  const auto preds = detector::predict_all(det, ds);
  if (!out_dir_.empty())
    write_predictions((fs::path(out_dir_) / "predictions" / (std::string(det_name) + "_test.csv")).string(), preds);
  AccuracyRow row;
  row.detector = det_name;
  row.total = ds.samples.size();
  for (std::size_t i = 0; i < preds.size(); ++i) row.correct += preds[i] == ds.samples[i].label;
  row.accuracy = accuracy(ds, preds);
  return row;
}

void Experiment::run_threat_model_1(Report& report) {
  const std::size_t n = config_.train_per_mode, t = config_.test_per_mode, e = config_.eval_per_mode;
  Dataset train = dataset(Provenance::Regular, "train", n);
  train.append(dataset(Provenance::Web, "train", n));
  detector::TrainConfig tc = config_.train;
  tc.seed = named_seed(config_, "detector/baseline");
  report.seeds["detector/baseline"] = tc.seed;
  detector::TrainResult res = detector::train(train, tc);
  report.training["baseline"] = res.history;
  baseline_ = std::move(res.params);
  if (!out_dir_.empty()) detector::save(*baseline_, (fs::path(out_dir_) / "models" / "baseline.bin").string());

  Dataset test = dataset(Provenance::Regular, "test", t);
  test.append(dataset(Provenance::Web, "test", t));
  report.accuracy.push_back(score(*baseline_, "baseline", test));

  for (Provenance p : {Provenance::Regular, Provenance::Stuff50, Provenance::StuffRand, Provenance::Fixed3Req,
                       Provenance::RandReq})
    report.evasion.push_back(evaluate(*baseline_, "baseline", dataset(p, "eval", e), to_string(p)));
}

void Experiment::run_threat_model_2(Report& report) {
  const std::size_t n = config_.train_per_mode, t = config_.test_per_mode, e = config_.eval_per_mode;
  Dataset train = dataset(Provenance::Regular, "train", n);
  train.append(dataset(Provenance::RandReq, "train", n));
  train.append(dataset(Provenance::Web, "train", 2 * n));
  detector::TrainConfig tc = config_.train;
  tc.seed = named_seed(config_, "detector/aware");
  report.seeds["detector/aware"] = tc.seed;
  detector::TrainResult res = detector::train(train, tc);
  report.training["aware"] = res.history;
  aware_ = std::move(res.params);
  if (!out_dir_.empty()) detector::save(*aware_, (fs::path(out_dir_) / "models" / "aware.bin").string());

  Dataset test = dataset(Provenance::Regular, "test", t);
  test.append(dataset(Provenance::RandReq, "test", t));
  test.append(dataset(Provenance::Web, "test", 2 * t));
  report.accuracy.push_back(score(*aware_, "aware", test));
  for (Provenance p : {Provenance::Regular, Provenance::RandReq})
    report.evasion.push_back(evaluate(*aware_, "aware", dataset(p, "eval", e), to_string(p)));

  const Dataset& source = dataset(Provenance::RandReq, "train", n);
  std::optional<double> best;
  double best_rate = -1.0;
  for (double eps : config_.epsilons) {
    adv::FgsmConfig fc;
    fc.epsilon = eps;
    fc.tls = config_.sim.tls;
    std::vector<StuffingPlan> plans = adv::build_plan_library(*aware_, source, fc);
    if (!out_dir_.empty()) write_plan_library((fs::path(out_dir_) / "plans" / ("plans_" + eps_tag(eps) + ".json")).string(), plans);
    EpsilonRow row;
    row.epsilon = eps;
    for (Provenance p : {Provenance::AdvFramework, Provenance::AdvPayload, Provenance::AdvTwoSide}) {
      Dataset ds = generate(config_, p, "eval", e, plans);
      const std::string tag = std::string(to_string(p)) + "_" + eps_tag(eps);
      persist(ds, tag + "_eval");
      EvasionRow ev = evaluate(*aware_, "aware", ds, tag, eps);
      (p == Provenance::AdvFramework ? row.framework : p == Provenance::AdvPayload ? row.payload : row.two_side) = ev.rate;
      report.evasion.push_back(std::move(ev));
    }
    report.epsilon_sweep.push_back(row);
    // The best epsilon maximizes framework-only evasion; ties keep the smaller epsilon.
    if (row.framework > best_rate) {
      best_rate = row.framework;
      best = eps;
      best_plans_ = std::move(plans);
    }
  }
  report.best_epsilon = best;
  best_epsilon_ = best.value_or(0.0);
}

void Experiment::run_overhead(Report& report) {
  if (best_plans_.empty()) run_threat_model_2(report);
  sim::SimConfig cfg = config_.sim;
  cfg.seed = named_seed(config_, "overhead");
  report.seeds["overhead"] = cfg.seed;
  report.overhead =
      measure_overhead(sim::default_overhead_script(), cfg, best_plans_, config_.overhead_repetitions, best_epsilon_);
}

Report Experiment::run() {
  Report report;
  report.config_json = config_.to_json();
  report.seeds["master"] = config_.seed;
  for (const char* split : {"train", "test", "eval"}) {
    report.seeds[std::string("sim/") + split] = named_seed(config_, std::string("sim/") + split);
    report.seeds[std::string("web/") + split] = named_seed(config_, std::string("web/") + split);
  }
  auto timed = [&](const char* name, void (Experiment::*stage)(Report&)) {
    const auto t0 = std::chrono::steady_clock::now();
    (this->*stage)(report);
    stage_seconds_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  stage_seconds_.clear();
  if (config_.threat_model_1) timed("threat_model_1", &Experiment::run_threat_model_1);
  if (config_.threat_model_2) timed("threat_model_2", &Experiment::run_threat_model_2);
  if (config_.overhead) timed("overhead", &Experiment::run_overhead);
  return report;
}

std::vector<std::string> export_report(const Report& report, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);
  std::vector<std::string> files;
  std::vector<std::string> notes;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(root / name, text);
    files.push_back(name);
  };

  emit("report.json", report.to_json());

  std::string acc = "detector,total,correct,accuracy\n";
  for (const auto& r : report.accuracy)
    acc += r.detector + "," + std::to_string(r.total) + "," + std::to_string(r.correct) + "," + number(r.accuracy) + "\n";
  emit("accuracy.csv", acc);

  std::string ev = "detector,provenance,epsilon,total,evaded,rate\n";
  for (const auto& r : report.evasion)
    ev += r.detector + "," + r.provenance + "," + number(r.epsilon) + "," + std::to_string(r.total) + "," +
          std::to_string(r.evaded) + "," + number(r.rate) + "\n";
  emit("evasion.csv", ev);

  if (!report.epsilon_sweep.empty()) {
    std::string sw = "epsilon,framework,payload,two_side\n";
    for (const auto& r : report.epsilon_sweep)
      sw += number(r.epsilon) + "," + number(r.framework) + "," + number(r.payload) + "," + number(r.two_side) + "\n";
    emit("epsilon_sweep.csv", sw);
  }

  if (!report.training.empty()) {
    std::string tr = "detector,epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n";
    for (const auto& [name, hist] : report.training)
      for (std::size_t i = 0; i < hist.size(); ++i)
        tr += name + "," + std::to_string(i) + "," + number(hist[i].train_loss) + "," + number(hist[i].train_accuracy) +
              "," + number(hist[i].validation_loss) + "," + number(hist[i].validation_accuracy) + "\n";
    emit("training.csv", tr);
  }

  if (report.overhead.empty()) {
    notes.push_back("overhead section empty: overhead_runs.csv and cdf_*.csv omitted");
  } else {
    std::string runs = "repetition,mode,appdata_bytes,wire_bytes,connections,runtime\n";
    for (const auto& r : report.overhead.runs)
      runs += std::to_string(r.repetition) + "," + r.mode + "," + std::to_string(r.appdata_bytes) + "," +
              std::to_string(r.wire_bytes) + "," + std::to_string(r.connections) + "," + number(r.runtime) + "\n";
    emit("overhead_runs.csv", runs);
    const std::pair<const char*, const std::map<std::string, std::vector<double>>*> series[] = {
        {"connection_bytes", &report.overhead.connection_bytes},
        {"connection_duration", &report.overhead.connection_duration},
        {"connection_gap", &report.overhead.connection_gap}};
    for (const auto& [name, by_mode] : series) {
      for (const auto& [mode, samples] : *by_mode) {
        std::string text = "value,cdf\n";
        for (const auto& [v, p] : empirical_cdf(samples)) text += number(v) + "," + number(p) + "\n";
        emit(std::string("cdf_") + name + "_" + mode + ".csv", text);
      }
    }
  }

  std::string manifest;
  for (const auto& f : files) manifest += f + "\n";
  for (const auto& n : notes) manifest += "# " + n + "\n";
  write_text(root / "manifest.txt", manifest);
  files.push_back("manifest.txt");
  return files;
}

void write_predictions(const std::string& path, std::span<const Label> predictions) {
  std::string text = "prediction\n";
  for (Label l : predictions) {
    text += to_string(l);
    text += '\n';
  }
  write_text(path, text);
}

std::vector<Label> read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "prediction") throw Error(ErrorCode::kParse, "predictions file lacks its header");
  std::vector<Label> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(label_from_string(line));
  }
  return out;
}

}  // namespace c2lab::harness
