#pragma once

#include <compare>
#include <optional>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "c2lab/model.hpp"
#include "c2lab/pcap.hpp"
#include "c2lab/tls_size.hpp"

namespace c2lab::tls {

namespace content_type {
inline constexpr std::uint8_t kChangeCipherSpec = 20;
inline constexpr std::uint8_t kAlert = 21;
inline constexpr std::uint8_t kHandshake = 22;
inline constexpr std::uint8_t kApplicationData = 23;
}  // namespace content_type

struct TlsRecordHeader {
  std::uint8_t content_type = 0;
  std::uint16_t version = 0;
  std::uint16_t length = 0;
};

/// Both directions of one connection map to the same key: endpoint `a` is the
/// lexicographically smaller (ip, port) pair.
struct TcpStreamKey {
  std::uint32_t a_ip = 0;
  std::uint16_t a_port = 0;
  std::uint32_t b_ip = 0;
  std::uint16_t b_port = 0;

  static TcpStreamKey normalized(std::uint32_t src_ip, std::uint16_t src_port, std::uint32_t dst_ip,
                                 std::uint16_t dst_port);
  auto operator<=>(const TcpStreamKey&) const = default;
};

struct TcpSegment {
  double timestamp = 0.0;
  TcpStreamKey key;
  std::uint32_t src_ip = 0;
  std::uint16_t src_port = 0;
  std::uint32_t seq = 0;
  std::uint8_t flags = 0;
  std::uint32_t frame_length = 0;
  std::vector<std::uint8_t> payload;

  /// True when the segment travels from key endpoint `a` to `b`.
  bool from_a() const { return src_ip == key.a_ip && src_port == key.a_port; }
};

struct SegmentStream {
  std::vector<TcpSegment> segments;  // capture order, TCP only (payload may be empty)
  std::size_t skipped_non_tcp = 0;
};

SegmentStream read_pcap(const pcap::Capture& capture);
SegmentStream read_pcap(const std::string& path);

/// One direction's in-order byte stream, with arrival timestamps per chunk.
struct ReassembledStream {
  struct Chunk {
    std::size_t end = 0;  // exclusive end offset in `bytes`
    double timestamp = 0.0;
  };
  std::vector<std::uint8_t> bytes;
  std::vector<Chunk> chunks;
  std::size_t gaps = 0;
  std::size_t duplicates = 0;

  /// Latest arrival time among the chunks covering [begin, end).
  double completion_time(std::size_t begin, std::size_t end) const;
};

struct DirectionalSegment {
  std::uint32_t seq = 0;
  double timestamp = 0.0;
  std::span<const std::uint8_t> payload;
};

/// `initial_seq` is the first payload sequence number (SYN seq + 1) when known;
/// otherwise the lowest sequence number seen is used.
ReassembledStream reassemble(std::span<const DirectionalSegment> segments, std::optional<std::uint32_t> initial_seq);

struct TlsRecord {
  std::uint8_t content_type = 0;
  std::uint16_t length = 0;
  std::size_t offset = 0;  // offset of the 5-byte header in the stream
};

struct TlsParseResult {
  std::vector<TlsRecord> records;
  std::size_t errors = 0;
  bool incomplete_tail = false;
};

TlsParseResult parse_tls_records(std::span<const std::uint8_t> stream);

struct ExtractionStats {
  std::size_t skipped_non_tcp = 0;
  std::size_t connections = 0;
  std::size_t gaps = 0;
  std::size_t duplicates = 0;
  std::size_t parse_errors = 0;
  std::size_t tcp_payload_bytes = 0;
};

std::vector<FlowTrace> traces_from_capture(const pcap::Capture& capture, ExtractionStats* stats = nullptr);
std::vector<FlowTrace> traces_from_pcap(const std::string& path, ExtractionStats* stats = nullptr);

}  // namespace c2lab::tls
