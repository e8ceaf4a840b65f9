#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2lab/model.hpp"
#include "c2lab/rng.hpp"
#include "c2lab/tls_size.hpp"

namespace c2lab {

enum class StuffingSide : std::uint8_t { FrameworkOnly, PayloadOnly, TwoSide };

std::string_view to_string(StuffingSide s);
StuffingSide stuffing_side_from_string(std::string_view s);
inline bool stuffs_framework(StuffingSide s) { return s != StuffingSide::PayloadOnly; }
inline bool stuffs_payload(StuffingSide s) { return s != StuffingSide::FrameworkOnly; }
inline bool stuffs(StuffingSide s, Direction d) {
  return d == Direction::FrameworkToPayload ? stuffs_framework(s) : stuffs_payload(s);
}

struct PlanTarget {
  std::size_t position = 0;
  Direction direction = Direction::PayloadToFramework;
  std::uint32_t size = 0;  // target record length

  bool operator==(const PlanTarget&) const = default;
};

/// Adversarial record sizes for one TCP connection.
struct StuffingPlan {
  std::size_t connection_records = 0;  // records the connection carries before it closes
  std::vector<PlanTarget> targets;     // positions strictly increasing
  std::optional<std::uint32_t> first_size_next_conn;
  // Provenance.
  std::int64_t source_sample = -1;
  double epsilon = 0.0;

  /// Target for `position` in `direction`, if planned.
  std::optional<std::uint32_t> target_at(std::size_t position, Direction direction) const;
  std::size_t exchanges() const { return (connection_records + 1) / 2; }
  /// Throws kInvalidArgument on unordered positions or infeasible sizes.
  void validate(const TlsSizeModel& model) const;

  bool operator==(const StuffingPlan&) const = default;
};

/// Growth in record length needed to reach `target` from `content`; never negative.
std::uint32_t stuff_amount(std::uint32_t target, std::uint32_t content);

/// Plaintext stuffing bytes that grow a message of `content_plaintext` bytes to a
/// record of exactly `target` bytes; 0 when the content already reaches the target.
/// The result is capped so the message still fits one record.
std::uint32_t stuffing_plaintext(const TlsSizeModel& model, std::uint32_t target, std::uint32_t content_plaintext);

/// Seeded uniform choice from a non-empty plan library.
const StuffingPlan& sample_plan(std::span<const StuffingPlan> library, Rng& rng);

std::string plans_to_json(std::span<const StuffingPlan> plans);
std::vector<StuffingPlan> plans_from_json(const std::string& text);
void write_plan_library(const std::string& path, std::span<const StuffingPlan> plans);
std::vector<StuffingPlan> read_plan_library(const std::string& path);

}  // namespace c2lab
