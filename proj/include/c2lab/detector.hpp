#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "c2lab/model.hpp"

namespace c2lab::detector {

/// Largest record size observed in web traffic; the fixed input scale.
inline constexpr double kNormalizationScale = 16408.0;

/// Fixed affine input map: normalized = raw / scale (padding -1 maps to -1/scale).
struct Normalizer {
  double scale = kNormalizationScale;

  double apply(double raw) const { return raw / scale; }
  double invert(double normalized) const { return normalized * scale; }
  Eigen::VectorXd apply(const FeatureVector& fv) const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Fully connected ReLU network with a 2-way softmax head. Hidden layers are
/// followed by dropout during training. Output index 0 is C2, 1 is NonC2.
struct DetectorParams {
  std::vector<DenseLayer> layers;
  double dropout_rate = 0.2;
  Normalizer normalizer;

  /// Sizes including input and output, e.g. {20, 2048, 1024, 512, 2}.
  std::vector<std::size_t> layer_sizes() const;
  std::size_t parameter_count() const;
  /// Throws kShapeMismatch unless shapes chain from 20 inputs to 2 outputs.
  void validate() const;

  /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  static DetectorParams initialize(std::span<const std::size_t> sizes, std::uint64_t seed);
  static DetectorParams zeros(std::span<const std::size_t> sizes);
};

/// 20 -> 2048 -> 1024 -> 512 -> 2.
std::vector<std::size_t> default_architecture();

struct Probabilities {
  double c2 = 0.5;
  double non_c2 = 0.5;
};

/// Inference pass (dropout disabled).
Probabilities forward(const DetectorParams& params, const FeatureVector& x);
Probabilities forward_normalized(const DetectorParams& params, const Eigen::VectorXd& x);
/// Training-mode pass: inverted dropout with masks drawn from `seed`.
Probabilities forward_training(const DetectorParams& params, const FeatureVector& x, std::uint64_t seed);

/// Columns of the result are (p_c2, p_nonc2) per input column (normalized inputs).
Eigen::MatrixXd forward_batch(const DetectorParams& params, const Eigen::MatrixXd& inputs);

/// argmax; an exact tie resolves to C2.
Label decide(const Probabilities& p);
Label predict(const DetectorParams& params, const FeatureVector& x);
std::vector<Label> predict_all(const DetectorParams& params, const Dataset& ds);

/// Cross-entropy J = -log p_y on normalized input.
double loss(const DetectorParams& params, const Eigen::VectorXd& normalized_x, Label y);
/// dJ/dx with respect to the normalized input.
Eigen::VectorXd input_gradient(const DetectorParams& params, const Eigen::VectorXd& normalized_x, Label y);
/// Column i is dJ_i/dx_i for input column i.
Eigen::MatrixXd input_gradient_batch(const DetectorParams& params, const Eigen::MatrixXd& normalized_x,
                                     std::span<const Label> labels);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_hat = 1e-7;
  double dropout_rate = 0.2;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::size_t patience = 3;  // early stop after this many epochs without a validation-loss gain; 0 disables
  double validation_fraction = 0.2;
  std::vector<std::size_t> architecture = default_architecture();
  std::uint64_t seed = 1;
};

struct EpochMetrics {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  DetectorParams params;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
};

/// Seed-deterministic Adam training on categorical cross-entropy. Throws
/// kInvalidArgument when the dataset lacks one of the labels.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// Continues training from `initial` (same procedure as train()).
TrainResult train_from(DetectorParams initial, const Dataset& dataset, const TrainConfig& config);

/// Versioned little-endian binary: magic, version, scale, dropout, layer shapes, data.
void save(const DetectorParams& params, const std::string& path);
DetectorParams load(const std::string& path);
std::vector<std::uint8_t> serialize(const DetectorParams& params);
DetectorParams deserialize(std::span<const std::uint8_t> bytes);

}  // namespace c2lab::detector
