#include "c2lab/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "c2lab/rng.hpp"

namespace c2lab::detector {

Eigen::VectorXd Normalizer::apply(const FeatureVector& fv) const {
  Eigen::VectorXd v(kFeatureLength);
  for (std::size_t i = 0; i < kFeatureLength; ++i) v(static_cast<Eigen::Index>(i)) = apply(fv[i]);
  return v;
}

std::vector<std::size_t> default_architecture() { return {kFeatureLength, 2048, 1024, 512, 2}; }

std::vector<std::size_t> DetectorParams::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(static_cast<std::size_t>(layers.front().weight.cols()));
  for (const auto& l : layers) sizes.push_back(static_cast<std::size_t>(l.weight.rows()));
  return sizes;
}

std::size_t DetectorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void DetectorParams::validate() const {
  if (layers.empty()) throw Error(ErrorCode::kShapeMismatch, "detector has no layers");
  if (static_cast<std::size_t>(layers.front().weight.cols()) != kFeatureLength)
    throw Error(ErrorCode::kShapeMismatch, "detector input must have 20 features");
  if (layers.back().weight.rows() != 2) throw Error(ErrorCode::kShapeMismatch, "detector output must have 2 classes");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].bias.size() != layers[i].weight.rows())
      throw Error(ErrorCode::kShapeMismatch, "bias size differs from layer width");
    if (i > 0 && layers[i].weight.cols() != layers[i - 1].weight.rows())
      throw Error(ErrorCode::kShapeMismatch, "layer widths do not chain");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error(ErrorCode::kShapeMismatch, "dropout rate out of range");
}

DetectorParams DetectorParams::zeros(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw Error(ErrorCode::kShapeMismatch, "need at least input and output sizes");
  DetectorParams p;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(sizes[i]), out = static_cast<Eigen::Index>(sizes[i + 1]);
    p.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  return p;
}

DetectorParams DetectorParams::initialize(std::span<const std::size_t> sizes, std::uint64_t seed) {
  DetectorParams p = zeros(sizes);
  Rng rng = substream(seed, "init");
  for (auto& l : p.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    // Fill row by row so the draw order does not depend on storage order.
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = u(rng);
  }
  return p;
}

namespace {

void softmax_columns(Eigen::MatrixXd& z) {
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    auto col = z.col(c);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Activations of one pass; `masks[l]` holds the scaled dropout mask of hidden layer l.
struct Pass {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = input
  std::vector<Eigen::MatrixXd> masks;
  Eigen::MatrixXd probabilities;
};

Pass run(const DetectorParams& p, const Eigen::MatrixXd& input, Rng* dropout_rng) {
  Pass pass;
  pass.activations.reserve(p.layers.size());
  pass.activations.push_back(input);
  const double keep = 1.0 - p.dropout_rate;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    Eigen::MatrixXd z = layer.weight * pass.activations.back();
    z.colwise() += layer.bias;
    if (l + 1 == p.layers.size()) {
      softmax_columns(z);
      pass.probabilities = std::move(z);
      break;
    }
    z = z.cwiseMax(0.0);
    if (dropout_rng && p.dropout_rate > 0.0) {
      Eigen::MatrixXd mask(z.rows(), z.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = uniform01(*dropout_rng) < keep ? 1.0 / keep : 0.0;
      z = z.cwiseProduct(mask);
      pass.masks.push_back(std::move(mask));
    }
    pass.activations.push_back(std::move(z));
  }
  return pass;
}

/// Gradient of the mean cross-entropy with respect to every parameter and the input.
struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd input;
};

/// With `per_sample` the loss is summed instead of averaged, so input columns hold per-sample gradients.
Gradients backward(const DetectorParams& p, const Pass& pass, const Eigen::MatrixXd& targets, bool want_params,
                   bool per_sample = false) {
  const auto batch = static_cast<double>(targets.cols());
  Gradients g;
  g.weight.resize(p.layers.size());
  g.bias.resize(p.layers.size());
  Eigen::MatrixXd delta = pass.probabilities - targets;
  if (!per_sample) delta /= batch;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    if (want_params) {
      g.weight[l].noalias() = delta * pass.activations[l].transpose();
      g.bias[l] = delta.rowwise().sum();
    }
    Eigen::MatrixXd upstream = p.layers[l].weight.transpose() * delta;
    if (l == 0) {
      g.input = std::move(upstream);
      break;
    }
    // ReLU derivative: the stored activation is positive exactly where z > 0 and the unit was kept.
    const Eigen::MatrixXd& a = pass.activations[l];
    if (!pass.masks.empty()) {
      delta = upstream.cwiseProduct(pass.masks[l - 1]).cwiseProduct((a.array() > 0.0).cast<double>().matrix());
    } else {
      delta = upstream.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

Eigen::MatrixXd one_hot(std::span<const Label> labels) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y(labels[i] == Label::C2 ? 0 : 1, static_cast<Eigen::Index>(i)) = 1.0;
  return y;
}

double mean_cross_entropy(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets) {
  const double eps = 1e-12;
  return -(targets.array() * (probs.array() + eps).log()).sum() / static_cast<double>(targets.cols());
}

std::size_t correct(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets) {
  std::size_t n = 0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    const Label pred = decide({probs(0, c), probs(1, c)});
    if ((pred == Label::C2) == (targets(0, c) == 1.0)) ++n;
  }
  return n;
}

}  // namespace

Eigen::MatrixXd forward_batch(const DetectorParams& params, const Eigen::MatrixXd& inputs) {
  return run(params, inputs, nullptr).probabilities;
}

Probabilities forward_normalized(const DetectorParams& params, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != kFeatureLength) throw Error(ErrorCode::kShapeMismatch, "input must have 20 entries");
  const Eigen::MatrixXd probs = forward_batch(params, x);
  return {probs(0, 0), probs(1, 0)};
}

Probabilities forward(const DetectorParams& params, const FeatureVector& x) {
  return forward_normalized(params, params.normalizer.apply(x));
}

Probabilities forward_training(const DetectorParams& params, const FeatureVector& x, std::uint64_t seed) {
  Rng rng = substream(seed, "dropout");
  const Pass pass = run(params, params.normalizer.apply(x), &rng);
  return {pass.probabilities(0, 0), pass.probabilities(1, 0)};
}

Label decide(const Probabilities& p) { return p.c2 >= p.non_c2 ? Label::C2 : Label::NonC2; }

Label predict(const DetectorParams& params, const FeatureVector& x) { return decide(forward(params, x)); }

std::vector<Label> predict_all(const DetectorParams& params, const Dataset& ds) {
  std::vector<Label> out;
  out.reserve(ds.samples.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < ds.samples.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, ds.samples.size() - start);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(kFeatureLength), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) x.col(static_cast<Eigen::Index>(i)) = params.normalizer.apply(ds.samples[start + i].features);
    const Eigen::MatrixXd probs = forward_batch(params, x);
    for (Eigen::Index c = 0; c < probs.cols(); ++c) out.push_back(decide({probs(0, c), probs(1, c)}));
  }
  return out;
}

double loss(const DetectorParams& params, const Eigen::VectorXd& normalized_x, Label y) {
  const Probabilities p = forward_normalized(params, normalized_x);
  return -std::log(y == Label::C2 ? p.c2 : p.non_c2);
}

Eigen::VectorXd input_gradient(const DetectorParams& params, const Eigen::VectorXd& normalized_x, Label y) {
  if (static_cast<std::size_t>(normalized_x.size()) != kFeatureLength)
    throw Error(ErrorCode::kShapeMismatch, "input must have 20 entries");
  const Pass pass = run(params, normalized_x, nullptr);
  const Label labels[] = {y};
  return backward(params, pass, one_hot(labels), false, true).input.col(0);
}

Eigen::MatrixXd input_gradient_batch(const DetectorParams& params, const Eigen::MatrixXd& normalized_x,
                                     std::span<const Label> labels) {
  if (static_cast<std::size_t>(normalized_x.rows()) != kFeatureLength)
    throw Error(ErrorCode::kShapeMismatch, "input must have 20 rows");
  if (static_cast<std::size_t>(normalized_x.cols()) != labels.size())
    throw Error(ErrorCode::kShapeMismatch, "one label per input column required");
  const Pass pass = run(params, normalized_x, nullptr);
  return backward(params, pass, one_hot(labels), false, true).input;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  DetectorParams init = DetectorParams::initialize(config.architecture, config.seed);
  init.dropout_rate = config.dropout_rate;
  return train_from(std::move(init), dataset, config);
}

TrainResult train_from(DetectorParams params, const Dataset& dataset, const TrainConfig& config) {
  params.validate();
  if (dataset.count(Label::C2) == 0 || dataset.count(Label::NonC2) == 0)
    throw Error(ErrorCode::kInvalidArgument, "training needs both C2 and NonC2 samples");
  for (const auto& s : dataset.samples)
    for (double v : s.features.values())
      if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite feature");
  if (config.batch_size == 0 || config.epochs == 0) throw Error(ErrorCode::kConfig, "batch size and epochs must be > 0");
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0))
    throw Error(ErrorCode::kConfig, "validation fraction must be in [0, 1)");

  std::vector<std::size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = substream(config.seed, "split");
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto val_n = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(order.size())));
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_n));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(val_n), order.end());
  if (train_idx.empty()) throw Error(ErrorCode::kInvalidArgument, "no training samples after the validation split");

  auto gather = [&](std::span<const std::size_t> idx, Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
    x.resize(static_cast<Eigen::Index>(kFeatureLength), static_cast<Eigen::Index>(idx.size()));
    std::vector<Label> labels;
    labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& s = dataset.samples[idx[i]];
      x.col(static_cast<Eigen::Index>(i)) = params.normalizer.apply(s.features);
      labels.push_back(s.label);
    }
    y = one_hot(labels);
  };
  Eigen::MatrixXd val_x, val_y;
  if (!val_idx.empty()) gather(val_idx, val_x, val_y);

  const std::size_t n_layers = params.layers.size();
  std::vector<Eigen::MatrixXd> m_w(n_layers), v_w(n_layers);
  std::vector<Eigen::VectorXd> m_b(n_layers), v_b(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    m_w[l] = v_w[l] = Eigen::MatrixXd::Zero(params.layers[l].weight.rows(), params.layers[l].weight.cols());
    m_b[l] = v_b[l] = Eigen::VectorXd::Zero(params.layers[l].bias.size());
  }

  Rng shuffle_rng = substream(config.seed, "shuffle");
  Rng dropout_rng = substream(config.seed, "dropout");
  TrainResult result;
  DetectorParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    Eigen::MatrixXd x, y;
    for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, train_idx.size() - start);
      gather(std::span(train_idx).subspan(start, n), x, y);
      const Pass pass = run(params, x, &dropout_rng);
      loss_sum += mean_cross_entropy(pass.probabilities, y) * static_cast<double>(n);
      hits += correct(pass.probabilities, y);
      const Gradients g = backward(params, pass, y, true);

      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      const double lr = config.learning_rate;
      const double b1 = config.beta1, b2 = config.beta2, eps = config.epsilon_hat;
      for (std::size_t l = 0; l < n_layers; ++l) {
        m_w[l] = b1 * m_w[l] + (1.0 - b1) * g.weight[l];
        v_w[l] = b2 * v_w[l] + (1.0 - b2) * g.weight[l].cwiseAbs2();
        params.layers[l].weight.array() -= lr * (m_w[l].array() / c1) / ((v_w[l].array() / c2).sqrt() + eps);
        m_b[l] = b1 * m_b[l] + (1.0 - b1) * g.bias[l];
        v_b[l] = b2 * v_b[l] + (1.0 - b2) * g.bias[l].cwiseAbs2();
        params.layers[l].bias.array() -= lr * (m_b[l].array() / c1) / ((v_b[l].array() / c2).sqrt() + eps);
      }
    }

    EpochMetrics m;
    m.train_loss = loss_sum / static_cast<double>(train_idx.size());
    m.train_accuracy = static_cast<double>(hits) / static_cast<double>(train_idx.size());
    if (val_x.cols() > 0) {
      const Eigen::MatrixXd probs = forward_batch(params, val_x);
      m.validation_loss = mean_cross_entropy(probs, val_y);
      m.validation_accuracy = static_cast<double>(correct(probs, val_y)) / static_cast<double>(val_x.cols());
    } else {
      m.validation_loss = m.train_loss;
      m.validation_accuracy = m.train_accuracy;
    }
    result.history.push_back(m);

    if (m.validation_loss < best_val) {
      best_val = m.validation_loss;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

namespace {

constexpr char kMagic[8] = {'C', '2', 'L', 'A', 'B', 'M', 'L', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));  // the format is little-endian; so is every supported host
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    if (bytes_.size() - pos_ < sizeof(T)) throw Error(ErrorCode::kParse, "detector file truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const DetectorParams& params) {
  params.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put(out, kFormatVersion);
  put(out, params.normalizer.scale);
  put(out, params.dropout_rate);
  put(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    put(out, static_cast<std::uint32_t>(l.weight.rows()));
    put(out, static_cast<std::uint32_t>(l.weight.cols()));
  }
  for (const auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put(out, l.bias(r));
  }
  return out;
}

DetectorParams deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw Error(ErrorCode::kParse, "not a detector file");
  Reader rd(bytes.subspan(sizeof(kMagic)));
  if (rd.get<std::uint32_t>() != kFormatVersion) throw Error(ErrorCode::kParse, "unsupported detector file version");
  DetectorParams p;
  p.normalizer.scale = rd.get<double>();
  p.dropout_rate = rd.get<double>();
  const auto n_layers = rd.get<std::uint32_t>();
  if (n_layers == 0 || n_layers > 64) throw Error(ErrorCode::kShapeMismatch, "bad layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  std::uint64_t expected = 0;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto rows = rd.get<std::uint32_t>(), cols = rd.get<std::uint32_t>();
    shapes.emplace_back(rows, cols);
    expected += (static_cast<std::uint64_t>(rows) * cols + rows) * sizeof(double);
  }
  if (expected != rd.remaining()) throw Error(ErrorCode::kShapeMismatch, "declared layer shapes do not match file size");
  for (const auto& [rows, cols] : shapes) {
    DenseLayer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rd.get<double>();
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = rd.get<double>();
    p.layers.push_back(std::move(l));
  }
  p.validate();
  return p;
}

void save(const DetectorParams& params, const std::string& path) {
  const auto bytes = serialize(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

DetectorParams load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace c2lab::detector
