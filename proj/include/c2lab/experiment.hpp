#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2lab/adversarial.hpp"
#include "c2lab/detector.hpp"
#include "c2lab/model.hpp"
#include "c2lab/plan.hpp"
#include "c2lab/traffic_sim.hpp"

namespace c2lab::harness {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t train_per_mode = 10000;  // C2 flows per training mode; web gets the same per C2 mode
  std::size_t test_per_mode = 2000;    // held-out flows for accuracy
  std::size_t eval_per_mode = 10000;   // C2 flows per evasion test
  std::vector<double> epsilons = {0.01, 0.02, 0.05, 0.1, 0.2};
  std::size_t overhead_repetitions = 10;
  bool threat_model_1 = true;
  bool threat_model_2 = true;
  bool overhead = true;
  bool persist_datasets = true;

  detector::TrainConfig train;
  sim::SimConfig sim;
  sim::ScriptGenerator scripts;
  sim::WebConfig web;

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

/// Seed of a named substream of the experiment's master seed.
std::uint64_t named_seed(const ExperimentConfig& config, std::string_view name);

/// Simulator mode for a C2 provenance; web has none.
sim::SimMode mode_of(Provenance p);
std::optional<StuffingSide> side_of(Provenance p);

/// `split` separates otherwise identical draws (train/test/eval).
sim::SimConfig sim_config_for(const ExperimentConfig& config, Provenance p, std::string_view split);
sim::SimulationResult simulate_provenance(const ExperimentConfig& config, Provenance p, std::string_view split,
                                          std::size_t flows, std::span<const StuffingPlan> plans = {});
Dataset dataset_from(const sim::SimulationResult& result, Provenance p);
Dataset generate(const ExperimentConfig& config, Provenance p, std::string_view split, std::size_t flows,
                 std::span<const StuffingPlan> plans = {});

struct AccuracyRow {
  std::string detector;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvasionRow {
  std::string detector;
  std::string provenance;
  double epsilon = 0.0;  // 0 for non-adversarial modes
  std::size_t total = 0;
  std::size_t evaded = 0;
  double rate = 0.0;
};

struct EpsilonRow {
  double epsilon = 0.0;
  double framework = 0.0;
  double payload = 0.0;
  double two_side = 0.0;
};

struct OverheadRun {
  std::size_t repetition = 0;
  std::string mode;
  std::uint64_t appdata_bytes = 0;
  std::uint64_t wire_bytes = 0;
  std::size_t connections = 0;
  double runtime = 0.0;
};

struct ModeTotals {
  std::uint64_t appdata_bytes = 0;
  std::uint64_t wire_bytes = 0;
  std::size_t connections = 0;
  double runtime = 0.0;
};

struct OverheadSection {
  double epsilon = 0.0;
  std::vector<OverheadRun> runs;
  ModeTotals regular;
  ModeTotals adversarial;
  // Raw samples; CDFs are derived at export.
  std::map<std::string, std::vector<double>> connection_bytes;     // by mode
  std::map<std::string, std::vector<double>> connection_duration;  // by mode, seconds
  std::map<std::string, std::vector<double>> connection_gap;       // by mode, seconds

  bool empty() const { return runs.empty(); }
};

struct Report {
  std::string config_json;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<AccuracyRow> accuracy;
  std::vector<EvasionRow> evasion;
  std::vector<EpsilonRow> epsilon_sweep;
  std::optional<double> best_epsilon;
  std::map<std::string, std::vector<detector::EpochMetrics>> training;
  OverheadSection overhead;

  const EvasionRow* find_evasion(std::string_view detector, std::string_view provenance) const;
  const AccuracyRow* find_accuracy(std::string_view detector) const;
  std::string to_json() const;
};

/// (value, cumulative fraction) at each distinct value.
std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> samples);

/// Runs the 12-command script `repetitions` times in regular and adversarial (two-side) mode.
OverheadSection measure_overhead(const sim::SessionScript& script, const sim::SimConfig& base,
                                 std::span<const StuffingPlan> plans, std::size_t repetitions, double epsilon);

/// End-to-end experiment. With a non-empty `out_dir`, datasets, predictions, models and
/// plan libraries are persisted there as they are produced.
class Experiment {
 public:
  Experiment(ExperimentConfig config, std::string out_dir = {});

  void run_threat_model_1(Report& report);
  void run_threat_model_2(Report& report);
  void run_overhead(Report& report);
  Report run();

  const std::optional<detector::DetectorParams>& baseline() const { return baseline_; }
  const std::optional<detector::DetectorParams>& aware() const { return aware_; }
  const std::vector<StuffingPlan>& best_plans() const { return best_plans_; }
  /// Wall-clock seconds per stage of the last run(); kept out of the report.
  const std::map<std::string, double>& stage_seconds() const { return stage_seconds_; }

 private:
  const Dataset& dataset(Provenance p, std::string_view split, std::size_t flows);
  EvasionRow evaluate(const detector::DetectorParams& det, std::string_view det_name, const Dataset& ds,
                      std::string_view file_tag, double epsilon = 0.0);
  AccuracyRow score(const detector::DetectorParams& det, std::string_view det_name, const Dataset& ds);
  void persist(const Dataset& ds, const std::string& name) const;

  ExperimentConfig config_;
  std::string out_dir_;
  std::map<std::string, Dataset> cache_;
  std::optional<detector::DetectorParams> baseline_;
  std::optional<detector::DetectorParams> aware_;
  std::vector<StuffingPlan> best_plans_;
  double best_epsilon_ = 0.0;
  std::map<std::string, double> stage_seconds_;
};

/// Writes report.json, CSV tables, CDF point files and manifest.txt into `dir`.
/// Returns the files written, relative to `dir`.
std::vector<std::string> export_report(const Report& report, const std::string& dir);

/// Predictions file: header `prediction`, one label per line.
void write_predictions(const std::string& path, std::span<const Label> predictions);
std::vector<Label> read_predictions(const std::string& path);

}  // namespace c2lab::harness
