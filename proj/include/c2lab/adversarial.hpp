#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "c2lab/detector.hpp"
#include "c2lab/model.hpp"
#include "c2lab/plan.hpp"
#include "c2lab/tls_size.hpp"

namespace c2lab::adv {

struct FgsmConfig {
  double epsilon = 0.05;  // normalized units; 0.05 is about 820 bytes
  bool respect_padding_mask = true;
  // Snap to the TLS record grid and floor at the empty-message size. Off gives raw FGSM.
  bool project = true;
  TlsSizeModel tls;

  void validate() const;
};

/// x* = x + eps * sign(dJ/dx) on normalized input; masked entries stay put.
Eigen::VectorXd fgsm_normalized(const detector::DetectorParams& params, const Eigen::VectorXd& x, Label y,
                                double epsilon, const std::vector<bool>& mask = {});

/// FGSM in byte units. Padding entries stay -1 when the mask is respected.
FeatureVector fgsm(const detector::DetectorParams& params, const FeatureVector& x, Label y, const FgsmConfig& config);

/// Payload request first, then strict alternation, as C2 traffic is observed.
std::vector<Direction> alternating_directions(std::size_t n);

/// Plan for one connection spanning the non-padding entries of `x_adv`.
StuffingPlan plan_from_adversarial(const FeatureVector& x_adv, std::span<const Direction> directions, StuffingSide side,
                                   const TlsSizeModel& tls = {});

/// Drops targets the side does not stuff.
StuffingPlan restrict_to_side(const StuffingPlan& plan, StuffingSide side);

/// Runs FGSM over every sample of `source` (C2 only) and projects each into a TwoSide plan.
std::vector<StuffingPlan> build_plan_library(const detector::DetectorParams& params, const Dataset& source,
                                             const FgsmConfig& config);

}  // namespace c2lab::adv
