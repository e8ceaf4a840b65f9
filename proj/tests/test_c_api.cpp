// Exercises the shared library through its C interface only.
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "c2lab/c2lab.h"

namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "seed": 5,
  "train": {"architecture": [20, 32, 2], "epochs": 4, "learning_rate": 0.003}
})";

c2lab_dataset* generate(const c2lab_config* cfg, const char* prov, size_t n, const c2lab_plans* plans = nullptr) {
  c2lab_dataset* ds = nullptr;
  REQUIRE(c2lab_dataset_generate(cfg, prov, "eval", n, plans, &ds) == C2LAB_OK);
  return ds;
}

}  // namespace

TEST_CASE("C API: end-to-end through opaque handles") {
  const fs::path dir = fs::temp_directory_path() / "c2lab_test_capi";
  fs::remove_all(dir);
  fs::create_directories(dir);

  c2lab_config* cfg = nullptr;
  REQUIRE(c2lab_config_parse(kSmallConfig, &cfg) == C2LAB_OK);
  CHECK(std::string(c2lab_last_error()).empty());
  CHECK(c2lab_config_set_seed(cfg, 6) == C2LAB_OK);
  char* text = nullptr;
  REQUIRE(c2lab_config_to_json(cfg, &text) == C2LAB_OK);
  CHECK(std::string(text).find("\"seed\": 6") != std::string::npos);
  c2lab_string_free(text);

  c2lab_dataset* train = generate(cfg, "regular", 600);
  c2lab_dataset* web = generate(cfg, "web", 600);
  CHECK(c2lab_dataset_append(train, web) == C2LAB_OK);
  CHECK(c2lab_dataset_size(train) == 1200);
  double fv[C2LAB_FEATURES];
  int label = -1;
  REQUIRE(c2lab_dataset_sample(train, 0, fv, &label) == C2LAB_OK);
  CHECK(label == 0);
  CHECK(fv[0] >= 16);
  CHECK(c2lab_dataset_sample(train, 5000, fv, &label) == C2LAB_E_INVALID_ARGUMENT);

  const std::string csv = (dir / "train.csv").string();
  REQUIRE(c2lab_dataset_write_csv(train, csv.c_str()) == C2LAB_OK);
  c2lab_dataset* reread = nullptr;
  REQUIRE(c2lab_dataset_read_csv(csv.c_str(), &reread) == C2LAB_OK);
  CHECK(c2lab_dataset_size(reread) == 1200);

  c2lab_detector* det = nullptr;
  REQUIRE(c2lab_detector_train(cfg, reread, 3, &det) == C2LAB_OK);
  const std::string model = (dir / "det.bin").string();
  REQUIRE(c2lab_detector_save(det, model.c_str()) == C2LAB_OK);
  c2lab_detector* loaded = nullptr;
  REQUIRE(c2lab_detector_load(model.c_str(), &loaded) == C2LAB_OK);

  c2lab_eval_result a{}, b{};
  REQUIRE(c2lab_evaluate(det, train, &a) == C2LAB_OK);
  REQUIRE(c2lab_evaluate(loaded, train, &b) == C2LAB_OK);
  CHECK(a.correct == b.correct);
  CHECK(a.total == 1200);
  CHECK(a.c2_total == 600);
  CHECK(a.accuracy > 0.9);

  std::vector<int> preds(c2lab_dataset_size(train));
  REQUIRE(c2lab_detector_predict(det, train, preds.data()) == C2LAB_OK);
  std::size_t evaded = 0;
  for (std::size_t i = 0; i < 600; ++i) evaded += preds[i] == 1;
  CHECK(evaded == a.c2_evaded);

  double p = -1;
  REQUIRE(c2lab_detector_score(det, fv, &p) == C2LAB_OK);
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);

  c2lab_plans* plans = nullptr;
  REQUIRE(c2lab_plans_build(det, train, 0.05, &plans) == C2LAB_OK);
  CHECK(c2lab_plans_size(plans) == 600);  // web samples are filtered out
  const std::string plan_path = (dir / "plans.json").string();
  REQUIRE(c2lab_plans_save(plans, plan_path.c_str()) == C2LAB_OK);
  c2lab_plans* plans2 = nullptr;
  REQUIRE(c2lab_plans_load(plan_path.c_str(), &plans2) == C2LAB_OK);
  CHECK(c2lab_plans_size(plans2) == 600);

  c2lab_dataset* adv = generate(cfg, "advTwoSide", 100, plans2);
  CHECK(c2lab_dataset_size(adv) == 100);

  c2lab_overhead_summary s{};
  REQUIRE(c2lab_run_overhead(cfg, plans2, 2, (dir / "overhead").string().c_str(), &s) == C2LAB_OK);
  CHECK(s.adversarial_connections > s.regular_connections / 10);
  CHECK(s.regular_runtime > 0);
  CHECK(fs::exists(dir / "overhead" / "overhead_runs.csv"));

  c2lab_dataset_free(adv);
  c2lab_plans_free(plans2);
  c2lab_plans_free(plans);
  c2lab_detector_free(loaded);
  c2lab_detector_free(det);
  c2lab_dataset_free(reread);
  c2lab_dataset_free(web);
  c2lab_dataset_free(train);
  c2lab_config_free(cfg);
  fs::remove_all(dir);
}

TEST_CASE("C API: errors map to status codes with a message") {
  c2lab_config* cfg = nullptr;
  CHECK(c2lab_config_parse("{\"nope\": 1}", &cfg) == C2LAB_E_CONFIG);
  CHECK(std::strlen(c2lab_last_error()) > 0);
  CHECK(c2lab_config_load("/nonexistent/config.json", &cfg) != C2LAB_OK);
  REQUIRE(c2lab_config_default(&cfg) == C2LAB_OK);
  CHECK(std::string(c2lab_last_error()).empty());

  c2lab_dataset* ds = nullptr;
  CHECK(c2lab_dataset_generate(cfg, "martian", "eval", 10, nullptr, &ds) == C2LAB_E_PARSE);
  CHECK(c2lab_dataset_generate(cfg, "advTwoSide", "eval", 10, nullptr, &ds) == C2LAB_E_CONFIG);
  CHECK(c2lab_dataset_generate(cfg, "regular", "eval", 0, nullptr, &ds) == C2LAB_E_INVALID_ARGUMENT);
  CHECK(c2lab_dataset_read_csv("/nonexistent.csv", &ds) == C2LAB_E_IO);
  CHECK(c2lab_detector_load("/nonexistent.bin", nullptr) == C2LAB_E_INVALID_ARGUMENT);
  CHECK(c2lab_dataset_size(nullptr) == 0);
  c2lab_dataset_free(nullptr);
  c2lab_config_free(cfg);
}
