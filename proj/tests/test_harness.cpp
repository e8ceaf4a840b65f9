#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "c2lab/experiment.hpp"

using namespace c2lab;
using namespace c2lab::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.seed = 2024;
  c.train_per_mode = 1200;
  c.test_per_mode = 300;
  c.eval_per_mode = 400;
  c.epsilons = {0.05, 0.2};
  c.overhead_repetitions = 2;
  c.train.architecture = {20, 64, 32, 2};
  c.train.epochs = 8;
  c.train.learning_rate = 3e-3;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("c2lab_test_" + name);
  fs::remove_all(p);
  return p;
}

// One small end-to-end run shared by several cases.
struct SmallRun {
  fs::path dir = scratch("small_run");
  Report report;
  SmallRun() {
    Experiment exp(small_config(), dir.string());
    report = exp.run();
    export_report(report, (dir / "report").string());
  }
};

const SmallRun& small_run() {
  static const SmallRun run;
  return run;
}

}  // namespace

TEST_CASE("config JSON round-trips and rejects unknown keys") {
  ExperimentConfig c = small_config();
  c.sim.stuff_random_max = 900;
  c.web.mean_think_time = 0.4;
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.sim.stuff_random_max == 900);
  CHECK(back.train.architecture == c.train.architecture);
  try {
    ExperimentConfig::from_json(R"({"seed": 1, "bogus": 2})");
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
  CHECK_THROWS_AS(ExperimentConfig::from_json("{"), Error);
  CHECK(ExperimentConfig::from_json(R"({"seed": 9})").seed == 9);
}

TEST_CASE("named seeds differ by name and follow the master seed") {
  ExperimentConfig a, b;
  b.seed = 2;
  CHECK(named_seed(a, "sim/train") != named_seed(a, "sim/test"));
  CHECK(named_seed(a, "sim/train") != named_seed(b, "sim/train"));
  CHECK(named_seed(a, "sim/train") == named_seed(ExperimentConfig{}, "sim/train"));
}

TEST_CASE("provenances map to simulator modes and sides") {
  CHECK(mode_of(Provenance::Stuff50) == sim::SimMode::StuffFixed);
  CHECK(mode_of(Provenance::RandReq) == sim::SimMode::RandReqPerConn);
  CHECK(side_of(Provenance::AdvFramework) == StuffingSide::FrameworkOnly);
  CHECK_FALSE(side_of(Provenance::Regular).has_value());
}

TEST_CASE("C2 modes of one split share scripts; only shaping differs") {
  const ExperimentConfig c = small_config();
  const auto reg = simulate_provenance(c, Provenance::Regular, "eval", 100);
  const auto s50 = simulate_provenance(c, Provenance::Stuff50, "eval", 100);
  REQUIRE(reg.events.size() == s50.events.size());
  for (std::size_t i = 0; i < reg.events.size(); ++i)
    CHECK(s50.events[i].request.plaintext == reg.events[i].request.plaintext + 50);
}

TEST_CASE("empirical CDF") {
  const auto cdf = empirical_cdf({3, 1, 2, 2});
  REQUIRE(cdf.size() == 3);
  CHECK(cdf[0] == std::pair(1.0, 0.25));
  CHECK(cdf[1] == std::pair(2.0, 0.75));
  CHECK(cdf[2] == std::pair(3.0, 1.0));
  CHECK(empirical_cdf({}).empty());
}

TEST_CASE("the same report exports byte-identical files") {
  Report r;
  r.config_json = small_config().to_json();
  r.seeds["master"] = 7;
  r.accuracy.push_back({"baseline", 10, 9, 0.9});
  r.evasion.push_back({"baseline", "stuffRand", 0.0, 10, 9, 0.9});
  const auto a = scratch("export_a"), b = scratch("export_b");
  const auto files_a = export_report(r, a.string());
  const auto files_b = export_report(r, b.string());
  CHECK(files_a == files_b);
  for (const auto& f : files_a) CHECK(slurp(a / f) == slurp(b / f));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("an empty overhead section omits its files and says so") {
  Report r;
  r.config_json = "{}";
  const auto dir = scratch("export_empty");
  const auto files = export_report(r, dir.string());
  for (const auto& f : files) {
    CHECK(f != "overhead_runs.csv");
    CHECK(f.rfind("cdf_", 0) != 0);
  }
  CHECK_FALSE(fs::exists(dir / "overhead_runs.csv"));
  CHECK(slurp(dir / "manifest.txt").find("overhead section empty") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("predictions file round-trips") {
  const auto dir = scratch("preds");
  fs::create_directories(dir);
  const std::vector<Label> preds = {Label::C2, Label::NonC2, Label::NonC2};
  write_predictions((dir / "p.csv").string(), preds);
  CHECK(read_predictions((dir / "p.csv").string()) == preds);
  CHECK(slurp(dir / "p.csv") == "prediction\nc2\nweb\nweb\n");
  fs::remove_all(dir);
}

TEST_CASE("small experiment: persisted artefacts agree with the report") {
  const SmallRun& run = small_run();
  const Report& r = run.report;
  REQUIRE(r.find_accuracy("baseline"));
  REQUIRE(r.find_accuracy("aware"));
  CHECK(r.epsilon_sweep.size() == 2);
  REQUIRE(r.best_epsilon.has_value());
  CHECK_FALSE(r.overhead.empty());

  // Every dataset CSV has the 22-column header.
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(run.dir / "datasets")) {
    std::ifstream in(e.path());
    std::string header;
    std::getline(in, header);
    CHECK(std::count(header.begin(), header.end(), ',') == 21);
    CHECK(header.rfind("f0,f1,", 0) == 0);
    CHECK(header.substr(header.size() - 17) == ",label,provenance");
    ++csvs;
  }
  CHECK(csvs >= 10);

  // Reported evasion equals the rate recomputed from persisted predictions and datasets.
  for (const auto& row : r.evasion) {
    CAPTURE(row.detector);
    CAPTURE(row.provenance);
    const bool adversarial = row.provenance.rfind("adv", 0) == 0;
    char eps[32];
    std::snprintf(eps, sizeof eps, "eps%g", row.epsilon);
    const std::string tag = adversarial ? row.provenance + "_" + eps : row.provenance;
    const auto preds = read_predictions((run.dir / "predictions" / (row.detector + "_" + tag + ".csv")).string());
    const Dataset ds = read_dataset_csv((run.dir / "datasets" / (tag + "_eval.csv")).string());
    REQUIRE(preds.size() == ds.samples.size());
    CHECK(evasion_rate(ds, preds) == row.rate);
    CHECK(row.total == ds.samples.size());
  }

  const auto m = slurp(run.dir / "report" / "manifest.txt");
  CHECK(m.find("report.json") != std::string::npos);
  CHECK(m.find("overhead_runs.csv") != std::string::npos);
  CHECK(fs::exists(run.dir / "models" / "baseline.bin"));
  CHECK(fs::exists(run.dir / "plans" / "plans_eps0.05.json"));
}

TEST_CASE("the same seed reproduces the experiment byte for byte") {
  const SmallRun& first = small_run();
  const auto dir = scratch("small_run_again");
  Experiment exp(small_config(), dir.string());
  const Report again = exp.run();
  CHECK(again.to_json() == first.report.to_json());
  export_report(again, (dir / "report").string());
  for (const auto& sub : {"report", "datasets", "predictions", "plans"}) {
    for (const auto& e : fs::directory_iterator(first.dir / sub)) {
      CAPTURE(e.path().string());
      CHECK(slurp(e.path()) == slurp(dir / sub / e.path().filename()));
    }
  }
  fs::remove_all(dir);
}
