#include "c2lab/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace c2lab {

std::string_view to_string(Direction d) {
  return d == Direction::PayloadToFramework ? "payload_to_framework" : "framework_to_payload";
}

std::string_view to_string(Label l) { return l == Label::C2 ? "c2" : "web"; }

Label label_from_string(std::string_view s) {
  if (s == "c2") return Label::C2;
  if (s == "web") return Label::NonC2;
  throw Error(ErrorCode::kParse, "unknown label '" + std::string(s) + "'");
}

namespace {

constexpr std::array<std::pair<Provenance, std::string_view>, 9> kProvenanceNames{{
    {Provenance::Regular, "regular"},
    {Provenance::Stuff50, "stuff50"},
    {Provenance::StuffRand, "stuffRand"},
    {Provenance::Fixed3Req, "fixed3Req"},
    {Provenance::RandReq, "randReq"},
    {Provenance::AdvFramework, "advFramework"},
    {Provenance::AdvPayload, "advPayload"},
    {Provenance::AdvTwoSide, "advTwoSide"},
    {Provenance::Web, "web"},
}};

}  // namespace

std::string_view to_string(Provenance p) {
  for (const auto& [value, name] : kProvenanceNames)
    if (value == p) return name;
  return "unknown";
}

Provenance provenance_from_string(std::string_view s) {
  for (const auto& [value, name] : kProvenanceNames)
    if (name == s) return value;
  throw Error(ErrorCode::kParse, "unknown provenance '" + std::string(s) + "'");
}

std::uint64_t FlowTrace::appdata_bytes() const {
  std::uint64_t total = 0;
  for (const auto& r : records) total += r.size;
  return total;
}

void FlowTrace::validate() const {
  if (close_time < open_time) throw Error(ErrorCode::kInvalidArgument, "flow closes before it opens");
  double last = open_time;
  for (const auto& r : records) {
    if (r.size < 1) throw Error(ErrorCode::kInvalidArgument, "record size must be >= 1");
    if (r.timestamp < last || r.timestamp > close_time)
      throw Error(ErrorCode::kInvalidArgument, "record timestamp out of order or outside the flow");
    last = r.timestamp;
  }
  if (total_wire_bytes < appdata_bytes())
    throw Error(ErrorCode::kInvalidArgument, "wire bytes smaller than appdata bytes");
}

FeatureVector FeatureVector::from_values(std::span<const double> values) {
  if (values.size() > kFeatureLength) throw Error(ErrorCode::kShapeMismatch, "feature vector longer than 20");
  FeatureVector fv;
  bool padded = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v == kPadValue) {
      padded = true;
    } else if (padded) {
      throw Error(ErrorCode::kInvalidArgument, "padding must be suffix-only");
    } else if (!(v >= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "feature entries must be -1 or >= 1");
    }
    fv.values_[i] = v;
  }
  return fv;
}

std::size_t FeatureVector::length() const {
  return static_cast<std::size_t>(std::find(values_.begin(), values_.end(), kPadValue) - values_.begin());
}

void Dataset::add(const FeatureVector& f, Provenance p) { samples.push_back({f, label_of(p), p}); }

std::size_t Dataset::count(Label l) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [l](const auto& s) { return s.label == l; }));
}

Dataset Dataset::filtered(Label l) const {
  Dataset out;
  out.seed = seed;
  for (const auto& s : samples)
    if (s.label == l) out.samples.push_back(s);
  return out;
}

void Dataset::append(const Dataset& other) {
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

FeatureVector features_from_trace(const FlowTrace& trace) {
  if (trace.records.empty()) throw Error(ErrorCode::kInvalidArgument, "empty flow");
  // Stable sort keeps the per-direction order for equal timestamps.
  std::vector<RecordEvent> ordered = trace.records;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const RecordEvent& a, const RecordEvent& b) { return a.timestamp < b.timestamp; });
  std::array<double, kFeatureLength> values;
  values.fill(kPadValue);
  const std::size_t n = std::min(kFeatureLength, ordered.size());
  for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<double>(ordered[i].size);
  return FeatureVector::from_values(values);
}

double evasion_rate(const Dataset& c2_only, std::span<const Label> predictions) {
  if (predictions.size() != c2_only.samples.size())
    throw Error(ErrorCode::kShapeMismatch, "predictions and samples differ in length");
  if (predictions.empty()) return 0.0;
  std::size_t missed = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (c2_only.samples[i].label != Label::C2)
      throw Error(ErrorCode::kInvalidArgument, "evasion rate needs a C2-only dataset");
    if (predictions[i] == Label::NonC2) ++missed;
  }
  return static_cast<double>(missed) / static_cast<double>(predictions.size());
}

double accuracy(const Dataset& ds, std::span<const Label> predictions) {
  if (predictions.size() != ds.samples.size())
    throw Error(ErrorCode::kShapeMismatch, "predictions and samples differ in length");
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == ds.samples[i].label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t i = 0; i < kFeatureLength; ++i) out << 'f' << i << ',';
  out << "label,provenance\n";
  for (const auto& s : ds.samples) {
    for (double v : s.features.values()) out << static_cast<long long>(v) << ',';
    out << to_string(s.label) << ',' << to_string(s.provenance) << '\n';
  }
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  write_dataset_csv(out, ds);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "missing CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split_commas(line).size() != kFeatureLength + 2) throw Error(ErrorCode::kParse, "CSV header must have 22 columns");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_commas(line);
    if (cols.size() != kFeatureLength + 2)
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": expected 22 columns");
    std::array<double, kFeatureLength> values;
    for (std::size_t i = 0; i < kFeatureLength; ++i) {
      long long v = 0;
      const auto [ptr, ec] = std::from_chars(cols[i].data(), cols[i].data() + cols[i].size(), v);
      if (ec != std::errc{} || ptr != cols[i].data() + cols[i].size())
        throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": bad feature value");
      values[i] = static_cast<double>(v);
    }
    LabeledSample s;
    s.features = FeatureVector::from_values(values);
    s.label = label_from_string(cols[kFeatureLength]);
    s.provenance = provenance_from_string(cols[kFeatureLength + 1]);
    if ((s.provenance == Provenance::Web) != (s.label == Label::NonC2))
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": label/provenance mismatch");
    ds.samples.push_back(s);
  }
  return ds;
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_dataset_csv(in);
}

}  // namespace c2lab
