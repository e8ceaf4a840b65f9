#include "c2lab/pcap.hpp"

#include <cmath>
#include <iterator>

#include "c2lab/model.hpp"

namespace c2lab::pcap {

namespace {

void put_le32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  out.write(b, 4);
}

void put_le16(std::ofstream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_be16(std::vector<std::uint8_t>& buf, std::size_t at, std::uint16_t v) {
  buf[at] = static_cast<std::uint8_t>(v >> 8);
  buf[at + 1] = static_cast<std::uint8_t>(v);
}

void put_be32(std::vector<std::uint8_t>& buf, std::size_t at, std::uint32_t v) {
  buf[at] = static_cast<std::uint8_t>(v >> 24);
  buf[at + 1] = static_cast<std::uint8_t>(v >> 16);
  buf[at + 2] = static_cast<std::uint8_t>(v >> 8);
  buf[at + 3] = static_cast<std::uint8_t>(v);
}

std::uint32_t checksum_add(std::uint32_t sum, std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) sum += static_cast<std::uint32_t>(bytes[i] << 8 | bytes[i + 1]);
  if (bytes.size() % 2 == 1) sum += static_cast<std::uint32_t>(bytes.back() << 8);
  return sum;
}

std::uint16_t checksum_fold(std::uint32_t sum) {
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace

Writer::Writer(const std::string& path, std::uint32_t snaplen) : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  put_le32(out_, kMagicMicros);
  put_le16(out_, 2);
  put_le16(out_, 4);
  put_le32(out_, 0);  // thiszone
  put_le32(out_, 0);  // sigfigs
  put_le32(out_, snaplen);
  put_le32(out_, kLinkTypeEthernet);
}

void Writer::write(double timestamp, std::span<const std::uint8_t> frame) {
  const auto micros = static_cast<std::uint64_t>(std::llround(timestamp * 1e6));
  put_le32(out_, static_cast<std::uint32_t>(micros / 1000000));
  put_le32(out_, static_cast<std::uint32_t>(micros % 1000000));
  put_le32(out_, static_cast<std::uint32_t>(frame.size()));
  put_le32(out_, static_cast<std::uint32_t>(frame.size()));
  out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  if (!out_) throw Error(ErrorCode::kIo, "write failed: " + path_);
}

void Writer::close() {
  out_.close();
  if (!out_) throw Error(ErrorCode::kIo, "close failed: " + path_);
}

Capture parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 24) throw Error(ErrorCode::kParse, "not a pcap");
  auto le32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(bytes[at]) | static_cast<std::uint32_t>(bytes[at + 1]) << 8 |
           static_cast<std::uint32_t>(bytes[at + 2]) << 16 | static_cast<std::uint32_t>(bytes[at + 3]) << 24;
  };
  auto be32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(bytes[at]) << 24 | static_cast<std::uint32_t>(bytes[at + 1]) << 16 |
           static_cast<std::uint32_t>(bytes[at + 2]) << 8 | static_cast<std::uint32_t>(bytes[at + 3]);
  };
  bool big_endian = false;
  bool nanos = false;
  const std::uint32_t magic_le = le32(0);
  if (magic_le == kMagicMicros || magic_le == kMagicNanos) {
    nanos = magic_le == kMagicNanos;
  } else if (be32(0) == kMagicMicros || be32(0) == kMagicNanos) {
    big_endian = true;
    nanos = be32(0) == kMagicNanos;
  } else {
    throw Error(ErrorCode::kParse, "not a pcap");
  }
  auto rd32 = [&](std::size_t at) { return big_endian ? be32(at) : le32(at); };

  Capture cap;
  cap.link_type = rd32(20);
  if (cap.link_type != kLinkTypeEthernet) throw Error(ErrorCode::kParse, "unsupported link type");

  std::size_t off = 24;
  while (off < bytes.size()) {
    if (bytes.size() - off < 16) throw Error(ErrorCode::kParse, "truncated capture at offset " + std::to_string(off));
    const std::uint32_t sec = rd32(off), frac = rd32(off + 4), incl = rd32(off + 8), orig = rd32(off + 12);
    if (bytes.size() - off - 16 < incl)
      throw Error(ErrorCode::kParse, "truncated capture at offset " + std::to_string(off));
    Packet p;
    p.timestamp = static_cast<double>(sec) + static_cast<double>(frac) / (nanos ? 1e9 : 1e6);
    p.orig_len = orig;
    p.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off + 16),
                  bytes.begin() + static_cast<std::ptrdiff_t>(off + 16 + incl));
    cap.packets.push_back(std::move(p));
    off += 16 + incl;
  }
  return cap;
}

Capture read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

std::vector<std::uint8_t> build_tcp_frame(const TcpFrameSpec& spec, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> f(kFrameOverhead + payload.size(), 0);
  // Ethernet: locally administered MACs derived from the IPs.
  f[0] = 0x02;
  put_be32(f, 2, spec.dst_ip);
  f[6] = 0x02;
  put_be32(f, 8, spec.src_ip);
  put_be16(f, 12, 0x0800);

  const std::size_t ip = kEthernetHeader;
  f[ip] = 0x45;
  put_be16(f, ip + 2, static_cast<std::uint16_t>(kIpv4Header + kTcpHeader + payload.size()));
  put_be16(f, ip + 4, spec.ip_id);
  put_be16(f, ip + 6, 0x4000);  // DF
  f[ip + 8] = 64;
  f[ip + 9] = 6;
  put_be32(f, ip + 12, spec.src_ip);
  put_be32(f, ip + 16, spec.dst_ip);
  put_be16(f, ip + 10, checksum_fold(checksum_add(0, std::span(f).subspan(ip, kIpv4Header))));

  const std::size_t tcp = ip + kIpv4Header;
  put_be16(f, tcp, spec.src_port);
  put_be16(f, tcp + 2, spec.dst_port);
  put_be32(f, tcp + 4, spec.seq);
  put_be32(f, tcp + 8, spec.ack);
  f[tcp + 12] = 5 << 4;
  f[tcp + 13] = spec.flags;
  put_be16(f, tcp + 14, 65535);
  std::copy(payload.begin(), payload.end(), f.begin() + static_cast<std::ptrdiff_t>(tcp + kTcpHeader));

  std::uint32_t sum = 0;
  sum += spec.src_ip >> 16;
  sum += spec.src_ip & 0xffff;
  sum += spec.dst_ip >> 16;
  sum += spec.dst_ip & 0xffff;
  sum += 6;
  sum += static_cast<std::uint32_t>(kTcpHeader + payload.size());
  put_be16(f, tcp + 16, checksum_fold(checksum_add(sum, std::span(f).subspan(tcp))));
  return f;
}

std::string ipv4_to_string(std::uint32_t ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." + std::to_string((ip >> 8) & 0xff) +
         "." + std::to_string(ip & 0xff);
}

}  // namespace c2lab::pcap
