#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace c2lab {

/// Error categories shared by the C++ core and the C API.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kParse = 2,
  kIo = 3,
  kConfig = 4,
  kShapeMismatch = 5,
  kProtocol = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Direction : std::uint8_t { PayloadToFramework = 0, FrameworkToPayload = 1 };

std::string_view to_string(Direction d);

/// One TLS Application Data record as observed on the wire.
/// `size` is the record header's length field (5-byte header excluded).
struct RecordEvent {
  std::uint32_t size = 0;
  Direction direction = Direction::PayloadToFramework;
  double timestamp = 0.0;

  bool operator==(const RecordEvent&) const = default;
};

/// All AppData records of one TCP connection, in timestamp order.
struct FlowTrace {
  std::uint64_t connection_id = 0;
  std::vector<RecordEvent> records;
  double open_time = 0.0;
  double close_time = 0.0;
  std::uint64_t total_wire_bytes = 0;

  std::uint64_t appdata_bytes() const;
  /// Throws kInvalidArgument when an ordering or byte-count invariant is broken.
  void validate() const;
};

inline constexpr std::size_t kFeatureLength = 20;
inline constexpr double kPadValue = -1.0;

/// Fixed-length record-size sequence, suffix-padded with -1.
class FeatureVector {
 public:
  FeatureVector() { values_.fill(kPadValue); }
  /// Takes up to 20 sizes; throws if a size is < 1 or padding is not suffix-only.
  static FeatureVector from_values(std::span<const double> values);

  double operator[](std::size_t i) const { return values_[i]; }
  const std::array<double, kFeatureLength>& values() const { return values_; }
  std::size_t length() const;  // number of non-padding entries
  bool is_padding(std::size_t i) const { return values_[i] == kPadValue; }

  bool operator==(const FeatureVector&) const = default;

 private:
  std::array<double, kFeatureLength> values_;
};

enum class Label : std::uint8_t { C2 = 0, NonC2 = 1 };

std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

enum class Provenance : std::uint8_t {
  Regular,
  Stuff50,
  StuffRand,
  Fixed3Req,
  RandReq,
  AdvFramework,
  AdvPayload,
  AdvTwoSide,
  Web,
};

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);
inline Label label_of(Provenance p) { return p == Provenance::Web ? Label::NonC2 : Label::C2; }

struct LabeledSample {
  FeatureVector features;
  Label label = Label::C2;
  Provenance provenance = Provenance::Regular;

  bool operator==(const LabeledSample&) const = default;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::uint64_t seed = 0;

  void add(const FeatureVector& f, Provenance p);
  std::size_t count(Label l) const;
  Dataset filtered(Label l) const;
  void append(const Dataset& other);
};

/// Chronologically interleaved sizes of the first 20 records, -1 padded.
FeatureVector features_from_trace(const FlowTrace& trace);

/// Fraction of (C2-only) samples predicted NonC2.
double evasion_rate(const Dataset& c2_only, std::span<const Label> predictions);

double accuracy(const Dataset& ds, std::span<const Label> predictions);

// Dataset CSV: header `f0,...,f19,label,provenance`; features are integers or -1;
// label is `c2` or `web`; LF line endings.
void write_dataset_csv(std::ostream& out, const Dataset& ds);
void write_dataset_csv(const std::string& path, const Dataset& ds);
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::string& path);

}  // namespace c2lab
