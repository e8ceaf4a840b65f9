#include <cmath>
#include <random>

#include "doctest.h"
#include "c2lab/detector.hpp"

using namespace c2lab;
using namespace c2lab::detector;

namespace {

Eigen::VectorXd random_input(std::mt19937_64& rng) {
  // Realistic mix: record sizes, some padding at the tail.
  std::uniform_real_distribution<double> size(16, 16400);
  const std::size_t len = 1 + rng() % kFeatureLength;
  Eigen::VectorXd x(kFeatureLength);
  for (std::size_t i = 0; i < kFeatureLength; ++i) x(i) = (i < len ? size(rng) : kPadValue) / kNormalizationScale;
  return x;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

Dataset toy_dataset(std::size_t n, std::uint64_t seed) {
  // C2: short flows of small records. Web: longer flows of large records.
  std::mt19937_64 rng(seed);
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    const bool c2 = i % 2 == 0;
    std::vector<double> v(c2 ? 2 + rng() % 3 : 6 + rng() % 10);
    for (auto& x : v) x = c2 ? 176 + 16 * static_cast<double>(rng() % 8) : 4000 + static_cast<double>(rng() % 12000);
    ds.add(FeatureVector::from_values(v), c2 ? Provenance::Regular : Provenance::Web);
  }
  return ds;
}

}  // namespace

TEST_CASE("default architecture and parameter count") {
  const auto arch = default_architecture();
  CHECK(arch == std::vector<std::size_t>{20, 2048, 1024, 512, 2});
  const auto p = DetectorParams::initialize(arch, 1);
  CHECK(p.layer_sizes() == arch);
  CHECK(p.parameter_count() == 20 * 2048 + 2048 + 2048 * 1024 + 1024 + 1024 * 512 + 512 + 512 * 2 + 2);
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("He-uniform initialization stays inside its bound and is seeded") {
  const std::vector<std::size_t> arch = {20, 64, 2};
  const auto a = DetectorParams::initialize(arch, 3);
  const auto b = DetectorParams::initialize(arch, 3);
  const auto c = DetectorParams::initialize(arch, 4);
  CHECK(serialize(a) == serialize(b));
  CHECK(serialize(a) != serialize(c));
  CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 20));
  CHECK(a.layers[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 64));
  CHECK(a.layers[0].bias.isZero());
}

TEST_CASE("normalization is a fixed affine map") {
  Normalizer n;
  CHECK(n.apply(16408.0) == 1.0);
  CHECK(n.apply(kPadValue) == -1.0 / 16408.0);
  CHECK(n.invert(n.apply(1234.0)) == doctest::Approx(1234.0));
}

TEST_CASE("probabilities sum to one and ties go to C2") {
  const auto p = DetectorParams::initialize(std::vector<std::size_t>{20, 32, 2}, 9);
  const auto fv = FeatureVector::from_values(std::vector<double>{288, 176});
  const auto pr = forward(p, fv);
  CHECK(pr.c2 + pr.non_c2 == doctest::Approx(1.0));
  CHECK(decide({0.5, 0.5}) == Label::C2);
  CHECK(decide({0.49, 0.51}) == Label::NonC2);
  // Zero network outputs an exact tie.
  CHECK(predict(DetectorParams::zeros(std::vector<std::size_t>{20, 2}), fv) == Label::C2);
}

TEST_CASE("batch and single forward agree") {
  const auto p = DetectorParams::initialize(std::vector<std::size_t>{20, 48, 24, 2}, 2);
  std::mt19937_64 rng(1);
  Eigen::MatrixXd xs(kFeatureLength, 37);
  for (int i = 0; i < xs.cols(); ++i) xs.col(i) = random_input(rng);
  const Eigen::MatrixXd out = forward_batch(p, xs);
  for (int i = 0; i < xs.cols(); ++i) {
    const auto pr = forward_normalized(p, xs.col(i));
    CHECK(out(0, i) == doctest::Approx(pr.c2).epsilon(1e-12));
    CHECK(out(1, i) == doctest::Approx(pr.non_c2).epsilon(1e-12));
  }
}

TEST_CASE("input gradient matches central finite differences") {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t net = 0; net < 4; ++net) {
    const auto p = DetectorParams::initialize(std::vector<std::size_t>{20, 64, 32, 16, 2}, 100 + net);
    for (int k = 0; k < 30; ++k) {
      const Eigen::VectorXd x = random_input(rng);
      const Label y = k % 2 ? Label::C2 : Label::NonC2;
      const Eigen::VectorXd g = input_gradient(p, x, y);
      Eigen::VectorXd fd(x.size());
      const double h = 1e-6;
      for (int i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        fd(i) = (loss(p, xp, y) - loss(p, xm, y)) / (2 * h);
      }
      worst = std::max(worst, relative_error(g, fd));
      ++cases;
    }
  }
  CHECK(cases >= 100);
  CHECK(worst < 1e-4);
}

TEST_CASE("batched input gradient equals per-sample gradients") {
  const auto p = DetectorParams::initialize(std::vector<std::size_t>{20, 40, 2}, 5);
  std::mt19937_64 rng(5);
  Eigen::MatrixXd xs(kFeatureLength, 9);
  std::vector<Label> ys;
  for (int i = 0; i < xs.cols(); ++i) {
    xs.col(i) = random_input(rng);
    ys.push_back(i % 3 ? Label::C2 : Label::NonC2);
  }
  const Eigen::MatrixXd g = input_gradient_batch(p, xs, ys);
  for (int i = 0; i < xs.cols(); ++i)
    CHECK(relative_error(g.col(i), input_gradient(p, xs.col(i), ys[static_cast<std::size_t>(i)])) < 1e-12);
}

TEST_CASE("training-mode dropout is seeded and inference ignores it") {
  const auto p = DetectorParams::initialize(std::vector<std::size_t>{20, 64, 2}, 1);
  const auto fv = FeatureVector::from_values(std::vector<double>{288, 176, 512});
  CHECK(forward_training(p, fv, 3).c2 == forward_training(p, fv, 3).c2);
  CHECK(forward_training(p, fv, 3).c2 != forward_training(p, fv, 4).c2);
  CHECK(forward(p, fv).c2 == forward(p, fv).c2);
}

TEST_CASE("training separates a toy problem and is deterministic") {
  TrainConfig tc;
  tc.architecture = {20, 32, 16, 2};
  tc.epochs = 15;
  tc.learning_rate = 5e-3;
  tc.seed = 42;
  const Dataset train_set = toy_dataset(2000, 1);
  const auto a = train(train_set, tc);
  const auto b = train(train_set, tc);
  CHECK(serialize(a.params) == serialize(b.params));
  CHECK(a.history.size() == b.history.size());
  CHECK(a.best_epoch < a.history.size());
  const Dataset test_set = toy_dataset(1000, 2);
  CHECK(accuracy(test_set, predict_all(a.params, test_set)) > 0.98);
  CHECK(a.history.front().train_loss > a.history[a.best_epoch].validation_loss);
}

TEST_CASE("training needs both labels") {
  Dataset only_c2 = toy_dataset(100, 1).filtered(Label::C2);
  TrainConfig tc;
  tc.architecture = {20, 8, 2};
  CHECK_THROWS_AS(train(only_c2, tc), Error);
}

TEST_CASE("serialization round-trips and rejects bad input") {
  const auto p = DetectorParams::initialize(std::vector<std::size_t>{20, 12, 6, 2}, 8);
  const auto bytes = serialize(p);
  const auto q = deserialize(bytes);
  CHECK(serialize(q) == bytes);
  CHECK(q.layer_sizes() == p.layer_sizes());
  CHECK(q.dropout_rate == p.dropout_rate);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(deserialize(truncated), Error);
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xff;
  CHECK_THROWS_AS(deserialize(bad_magic), Error);

  auto broken = p;
  broken.layers[1].weight.resize(6, 11);
  try {
    broken.validate();
    FAIL("accepted a broken shape chain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
  CHECK_THROWS_AS(load("/nonexistent/detector.bin"), Error);
}
