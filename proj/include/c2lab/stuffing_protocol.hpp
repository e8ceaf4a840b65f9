#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "c2lab/plan.hpp"
#include "c2lab/tls_size.hpp"

namespace c2lab::proto {

enum class HeaderKind : std::uint8_t { Padding, NextSize, ConnState };
enum class ConnState : std::uint8_t { KeepAlive, Close };

inline constexpr std::uint64_t kMaxHeaderValue = 1ull << 24;

struct HeaderNames {
  std::string padding = "X-Pad";
  std::string next_size = "X-Token";
  std::string conn_state = "Connection";
};

/// One HTTP header line used by the stuffing protocol.
struct StuffHeader {
  HeaderKind kind = HeaderKind::Padding;
  std::string padding;            // Padding: printable ASCII filler
  std::uint32_t next_size = 0;    // NextSize: target record length
  ConnState conn_state = ConnState::KeepAlive;

  static StuffHeader make_padding(std::string filler);
  /// Padding header whose serialized line is exactly `total_bytes` long.
  /// Throws kInvalidArgument when `total_bytes` is shorter than the empty header line.
  static StuffHeader padding_of_length(std::size_t total_bytes, const HeaderNames& names = {});
  static StuffHeader make_next_size(std::uint32_t size);
  static StuffHeader make_conn_state(ConnState state);

  bool operator==(const StuffHeader&) const = default;
};

/// Serialized length of an empty-valued padding line: `<name>: \r\n`.
std::size_t min_padding_line(const HeaderNames& names = {});

/// `<name> ":" SP <value> CRLF`
std::string encode_header(const StuffHeader& h, const HeaderNames& names = {});
/// Decodes exactly one CRLF-terminated line. Throws kParse on malformed input.
StuffHeader decode_header(std::string_view line, const HeaderNames& names = {});

std::size_t encoded_size(const std::vector<StuffHeader>& headers, const HeaderNames& names = {});

/// Draws the plan for each new connection.
using PlanSource = std::function<StuffingPlan()>;

struct FrameworkStep {
  std::vector<StuffHeader> headers;  // protocol headers (NextSize, ConnState), padding excluded
  std::uint32_t protocol_bytes = 0;  // serialized size of `headers`
  std::uint32_t stuffing_bytes = 0;  // plaintext padding-line bytes
  bool close = false;
};

/// Framework side: answers each payload request, stuffing its own responses
/// toward the plan and telling the payload the next target.
class FrameworkProtocol {
 public:
  FrameworkProtocol(StuffingSide side, TlsSizeModel model, PlanSource source, HeaderNames names = {});

  /// One response of the current connection. `content_plaintext` excludes protocol
  /// and padding headers.
  FrameworkStep step(std::uint32_t content_plaintext);

  const StuffingPlan& current_plan() const { return current_; }
  std::size_t cursor() const { return cursor_; }
  std::size_t plans_started() const { return plans_started_; }
  std::size_t closes_sent() const { return closes_sent_; }

 private:
  StuffingSide side_;
  TlsSizeModel model_;
  PlanSource source_;
  HeaderNames names_;
  StuffingPlan current_;
  std::optional<StuffingPlan> pending_;
  std::size_t cursor_ = 0;  // position of the next payload request
  bool active_ = false;
  std::size_t plans_started_ = 0;
  std::size_t closes_sent_ = 0;
};

/// Payload side: realizes the sizes the framework announces.
class PayloadProtocol {
 public:
  PayloadProtocol(StuffingSide side, TlsSizeModel model, HeaderNames names = {});

  /// Stuffing for the next request, consuming the stored NextSize (if any).
  std::uint32_t request_stuffing(std::uint32_t content_plaintext);
  /// Processes a response's protocol headers; returns whether the connection is reused.
  bool on_response(const std::vector<StuffHeader>& headers);
  /// on_response followed by request_stuffing for the next request.
  std::pair<std::uint32_t, bool> step(const std::vector<StuffHeader>& received, std::uint32_t next_content_plaintext);

  std::optional<std::uint32_t> stored_next_size() const { return next_size_; }
  std::size_t missing_next_size() const { return missing_next_size_; }

 private:
  StuffingSide side_;
  TlsSizeModel model_;
  HeaderNames names_;
  std::optional<std::uint32_t> next_size_;
  bool seen_response_ = false;
  std::size_t missing_next_size_ = 0;
};

/// Padding line bytes for `stuffing` plaintext bytes; 0 stays 0, shorter requests
/// are raised to the minimum line length.
std::uint32_t padding_line_bytes(std::uint32_t stuffing, const HeaderNames& names = {});

}  // namespace c2lab::proto
