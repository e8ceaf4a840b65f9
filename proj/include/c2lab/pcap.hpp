#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace c2lab::pcap {

inline constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kEthernetHeader = 14;
inline constexpr std::size_t kIpv4Header = 20;
inline constexpr std::size_t kTcpHeader = 20;
inline constexpr std::size_t kFrameOverhead = kEthernetHeader + kIpv4Header + kTcpHeader;

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

struct Packet {
  double timestamp = 0.0;
  std::vector<std::uint8_t> data;
  std::uint32_t orig_len = 0;
};

/// Classic little-endian, microsecond-resolution pcap writer.
class Writer {
 public:
  explicit Writer(const std::string& path, std::uint32_t snaplen = 262144);
  void write(double timestamp, std::span<const std::uint8_t> frame);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

/// Reads a whole classic pcap held in memory. Throws c2lab::Error on bad magic,
/// unsupported link type or a truncated record.
struct Capture {
  std::uint32_t link_type = 0;
  std::vector<Packet> packets;
};

Capture parse(std::span<const std::uint8_t> bytes);
Capture read_file(const std::string& path);

struct TcpFrameSpec {
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::uint16_t ip_id = 0;
};

/// Ethernet + IPv4 + TCP frame with valid IP and TCP checksums.
std::vector<std::uint8_t> build_tcp_frame(const TcpFrameSpec& spec, std::span<const std::uint8_t> payload);

std::string ipv4_to_string(std::uint32_t ip);

}  // namespace c2lab::pcap
