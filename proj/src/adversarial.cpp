#include "c2lab/adversarial.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace c2lab::adv {

void FgsmConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(ErrorCode::kConfig, "epsilon must be finite and >= 0");
}

namespace {

std::vector<bool> padding_mask(const FeatureVector& x, bool respect) {
  std::vector<bool> mask(kFeatureLength, false);
  if (respect)
    for (std::size_t i = 0; i < kFeatureLength; ++i) mask[i] = x.is_padding(i);
  return mask;
}

FeatureVector project(const detector::DetectorParams& params, const Eigen::VectorXd& adv, const std::vector<bool>& mask,
                      const FgsmConfig& config) {
  std::array<double, kFeatureLength> values{};
  for (std::size_t i = 0; i < kFeatureLength; ++i) {
    if (mask[i]) {
      values[i] = kPadValue;
      continue;
    }
    const double raw = params.normalizer.invert(adv(static_cast<Eigen::Index>(i)));
    // Unprojected output may leave the feature domain; clamp to the smallest representable size.
    values[i] = config.project ? config.tls.round_to_grid(raw) : std::max(raw, 1.0);
  }
  return FeatureVector::from_values(values);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Eigen::VectorXd fgsm_normalized(const detector::DetectorParams& params, const Eigen::VectorXd& x, Label y,
                                double epsilon, const std::vector<bool>& mask) {
  const Eigen::VectorXd g = detector::input_gradient(params, x, y);
  Eigen::VectorXd out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!mask.empty() && mask[static_cast<std::size_t>(i)]) continue;
    out(i) = x(i) + epsilon * sign(g(i));
  }
  return out;
}

FeatureVector fgsm(const detector::DetectorParams& params, const FeatureVector& x, Label y, const FgsmConfig& config) {
  config.validate();
  const auto mask = padding_mask(x, config.respect_padding_mask);
  const Eigen::VectorXd adv = fgsm_normalized(params, params.normalizer.apply(x), y, config.epsilon, mask);
  return project(params, adv, mask, config);
}

std::vector<Direction> alternating_directions(std::size_t n) {
  std::vector<Direction> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i % 2 == 0 ? Direction::PayloadToFramework : Direction::FrameworkToPayload;
  return out;
}

StuffingPlan plan_from_adversarial(const FeatureVector& x_adv, std::span<const Direction> directions, StuffingSide side,
                                   const TlsSizeModel& tls) {
  const std::size_t n = x_adv.length();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "adversarial sequence is empty");
  if (directions.size() < n) throw Error(ErrorCode::kInvalidArgument, "direction assignment shorter than the sequence");
  StuffingPlan plan;
  plan.connection_records = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!stuffs(side, directions[i])) continue;
    plan.targets.push_back({i, directions[i], tls.round_to_grid(x_adv[i])});
  }
  plan.validate(tls);
  return plan;
}

StuffingPlan restrict_to_side(const StuffingPlan& plan, StuffingSide side) {
  StuffingPlan out = plan;
  std::erase_if(out.targets, [&](const PlanTarget& t) { return !stuffs(side, t.direction); });
  return out;
}

std::vector<StuffingPlan> build_plan_library(const detector::DetectorParams& params, const Dataset& source,
                                             const FgsmConfig& config) {
  config.validate();
  std::vector<StuffingPlan> out;
  out.reserve(source.samples.size());
  const auto dirs = alternating_directions(kFeatureLength);
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < source.samples.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, source.samples.size() - start);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(kFeatureLength), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = source.samples[start + i];
      if (s.label != Label::C2) throw Error(ErrorCode::kInvalidArgument, "plan sources must be C2 samples");
      x.col(static_cast<Eigen::Index>(i)) = params.normalizer.apply(s.features);
    }
    const std::vector<Label> labels(n, Label::C2);
    const Eigen::MatrixXd g = detector::input_gradient_batch(params, x, labels);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = source.samples[start + i];
      const auto mask = padding_mask(s.features, config.respect_padding_mask);
      Eigen::VectorXd adv = x.col(static_cast<Eigen::Index>(i));
      for (Eigen::Index k = 0; k < adv.size(); ++k)
        if (!mask[static_cast<std::size_t>(k)]) adv(k) += config.epsilon * sign(g(k, static_cast<Eigen::Index>(i)));
      StuffingPlan p = plan_from_adversarial(project(params, adv, mask, config), dirs, StuffingSide::TwoSide, config.tls);
      p.source_sample = static_cast<std::int64_t>(start + i);
      p.epsilon = config.epsilon;
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace c2lab::adv
