#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace c2lab {

inline constexpr std::uint32_t kTlsHeaderBytes = 5;
inline constexpr std::uint32_t kTlsMaxPlaintext = 1u << 14;
inline constexpr std::uint32_t kTlsMaxRecordLength = (1u << 14) + 2048;

/// Maps HTTP plaintext sizes to TLS AppData record lengths:
/// length = ceil((plaintext + tag) / block) * block.
struct TlsSizeModel {
  std::uint32_t tag_bytes = 16;
  std::uint32_t block_bytes = 16;

  std::uint32_t record_length(std::uint32_t plaintext) const {
    const std::uint32_t b = block_bytes == 0 ? 1 : block_bytes;
    return (plaintext + tag_bytes + b - 1) / b * b;
  }

  /// Record length of a zero-byte message.
  std::uint32_t min_record_length() const { return record_length(0); }

  /// Largest record length a single record can carry.
  std::uint32_t max_record_length() const { return record_length(kTlsMaxPlaintext); }

  /// Rounds a length to the nearest feasible record length (ties go up),
  /// clamped to [min_record_length, max_record_length].
  std::uint32_t round_to_grid(double length) const {
    const double b = block_bytes == 0 ? 1.0 : block_bytes;
    const double snapped = std::floor(length / b + 0.5) * b;
    const double lo = min_record_length(), hi = max_record_length();
    return static_cast<std::uint32_t>(std::clamp(snapped, lo, hi));
  }

  /// Largest plaintext whose record length is <= `length`. Requires length >= min_record_length().
  std::uint32_t max_plaintext_for(std::uint32_t length) const {
    const std::uint32_t b = block_bytes == 0 ? 1 : block_bytes;
    return length / b * b - tag_bytes;
  }

  /// Wire bytes of the record including its 5-byte header.
  std::uint32_t wire_bytes(std::uint32_t plaintext) const { return record_length(plaintext) + kTlsHeaderBytes; }
};

}  // namespace c2lab
