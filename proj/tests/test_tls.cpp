#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "c2lab/pcap.hpp"
#include "c2lab/tls_extract.hpp"
#include "c2lab/tls_size.hpp"

using namespace c2lab;

namespace {

std::vector<std::uint8_t> record(std::uint8_t type, std::uint16_t len, std::uint8_t fill = 0xab) {
  std::vector<std::uint8_t> r = {type, 3, 3, static_cast<std::uint8_t>(len >> 8), static_cast<std::uint8_t>(len)};
  r.resize(r.size() + len, fill);
  return r;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("c2lab_test_" + name)).string();
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put32(std::vector<std::uint8_t>& b, std::uint32_t v, bool big) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(big ? v >> (24 - 8 * i) : v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& b, std::uint16_t v, bool big) {
  for (int i = 0; i < 2; ++i) b.push_back(static_cast<std::uint8_t>(big ? v >> (8 - 8 * i) : v >> (8 * i)));
}

// Hand-made connection: client 10.0.0.1:50000 <-> server 198.51.100.100:443.
struct ConnBuilder {
  std::vector<std::pair<double, std::vector<std::uint8_t>>> frames;
  std::uint32_t cseq = 1000, sseq = 5000;
  std::uint16_t id = 0;
  pcap::TcpFrameSpec spec(bool client, std::uint8_t flags) {
    pcap::TcpFrameSpec s;
    s.src_ip = client ? 0x0a000001 : 0xc6336464;
    s.dst_ip = client ? 0xc6336464 : 0x0a000001;
    s.src_port = client ? 50000 : 443;
    s.dst_port = client ? 443 : 50000;
    s.flags = flags;
    s.ip_id = id++;
    return s;
  }
  void handshake(double t) {
    auto s = spec(true, pcap::tcp_flags::kSyn);
    s.seq = cseq - 1;
    frames.push_back({t, pcap::build_tcp_frame(s, {})});
    s = spec(false, pcap::tcp_flags::kSyn | pcap::tcp_flags::kAck);
    s.seq = sseq - 1;
    frames.push_back({t + 0.001, pcap::build_tcp_frame(s, {})});
  }
  // Sends `bytes` from one side as segments of at most `mss`, at time t (optionally shuffled).
  void send(bool client, double t, const std::vector<std::uint8_t>& bytes, std::size_t mss, bool reverse = false,
            bool duplicate_first = false) {
    std::uint32_t& seq = client ? cseq : sseq;
    std::vector<std::pair<double, std::vector<std::uint8_t>>> segs;
    for (std::size_t off = 0; off < bytes.size(); off += mss) {
      auto s = spec(client, pcap::tcp_flags::kAck | pcap::tcp_flags::kPsh);
      s.seq = seq + static_cast<std::uint32_t>(off);
      const std::size_t n = std::min(mss, bytes.size() - off);
      segs.push_back({t, pcap::build_tcp_frame(s, std::span(bytes).subspan(off, n))});
    }
    seq += static_cast<std::uint32_t>(bytes.size());
    if (reverse) std::reverse(segs.begin(), segs.end());
    if (duplicate_first && !segs.empty()) segs.push_back(segs.front());
    for (auto& s : segs) frames.push_back(std::move(s));
  }
  std::string write(const std::string& name) {
    const std::string path = temp_path(name);
    pcap::Writer w(path);
    for (const auto& [t, f] : frames) w.write(t, f);
    w.close();
    return path;
  }
};

}  // namespace

TEST_CASE("TLS size model matches the record formula") {
  TlsSizeModel m;
  CHECK(m.record_length(268) == 288);
  CHECK(m.record_length(152) == 176);
  CHECK(m.record_length(0) == 16);
  CHECK(m.min_record_length() == 16);
  CHECK(m.max_record_length() == 16400);
  // Oracle: brute-force ceil over every plaintext up to the maximum.
  for (std::uint32_t p = 0; p <= kTlsMaxPlaintext; ++p) {
    const std::uint32_t expect = static_cast<std::uint32_t>(std::ceil((p + 16.0) / 16.0) * 16.0);
    if (m.record_length(p) != expect) {
      FAIL("mismatch at " << p);
    }
    CHECK_FALSE(m.max_plaintext_for(m.record_length(p)) < p);
  }
  CHECK(m.wire_bytes(268) == 293);
}

TEST_CASE("grid rounding snaps to 16-byte multiples within the feasible range") {
  TlsSizeModel m;
  CHECK(m.round_to_grid(1000.0) == 1008);
  CHECK(m.round_to_grid(1007.9) == 1008);
  CHECK(m.round_to_grid(1000.0 - 9) == 992);
  CHECK(m.round_to_grid(1000.0 - 8) == 992);
  CHECK(m.round_to_grid(1000.0 + 16) == 1024);  // tie at 1008 + 8 rounds up
  CHECK(m.round_to_grid(-500.0) == 16);
  CHECK(m.round_to_grid(1e9) == 16400);
  for (double v = -100; v < 17000; v += 3.7) {
    const auto r = m.round_to_grid(v);
    CHECK(r % 16 == 0);
    CHECK(r >= 16);
    CHECK(r <= 16400);
  }
}

TEST_CASE("tcp frames carry valid checksums") {
  pcap::TcpFrameSpec s{0x0a000001, 0xc6336464, 50000, 443, 7, 9, pcap::tcp_flags::kAck, 1};
  const std::uint8_t payload[] = {1, 2, 3};
  const auto f = pcap::build_tcp_frame(s, payload);
  REQUIRE(f.size() == pcap::kFrameOverhead + 3);
  auto fold = [](std::uint32_t sum) {
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return sum;
  };
  // Oracle: the one's-complement sum over a header including its checksum is 0xffff.
  std::uint32_t ip = 0;
  for (std::size_t i = 14; i < 34; i += 2) ip += static_cast<std::uint32_t>(f[i] << 8 | f[i + 1]);
  CHECK(fold(ip) == 0xffff);
  std::uint32_t tcp = 0;
  for (std::size_t i = 26; i < 34; i += 2) tcp += static_cast<std::uint32_t>(f[i] << 8 | f[i + 1]);
  tcp += 6 + 23;
  for (std::size_t i = 34; i < f.size(); i += 2)
    tcp += static_cast<std::uint32_t>(f[i] << 8 | (i + 1 < f.size() ? f[i + 1] : 0));
  CHECK(fold(tcp) == 0xffff);
  CHECK(pcap::ipv4_to_string(0xc6336464) == "198.51.100.100");
}

TEST_CASE("pcap writer output parses back") {
  const std::string path = temp_path("rt.pcap");
  {
    pcap::Writer w(path);
    const std::uint8_t a[] = {1, 2, 3}, b[] = {4};
    w.write(1.5, a);
    w.write(2.000001, b);
    w.close();
  }
  const auto cap = pcap::read_file(path);
  CHECK(cap.link_type == pcap::kLinkTypeEthernet);
  REQUIRE(cap.packets.size() == 2);
  CHECK(cap.packets[0].timestamp == doctest::Approx(1.5));
  CHECK(cap.packets[1].timestamp == doctest::Approx(2.000001));
  CHECK(cap.packets[1].data == std::vector<std::uint8_t>{4});
  std::remove(path.c_str());
}

TEST_CASE("pcap reader accepts big-endian and nanosecond captures") {
  for (bool big : {false, true}) {
    for (bool nanos : {false, true}) {
      std::vector<std::uint8_t> b;
      put32(b, nanos ? pcap::kMagicNanos : pcap::kMagicMicros, big);
      put16(b, 2, big);
      put16(b, 4, big);
      put32(b, 0, big);
      put32(b, 0, big);
      put32(b, 65535, big);
      put32(b, 1, big);
      put32(b, 10, big);
      put32(b, nanos ? 500000000 : 500000, big);
      put32(b, 2, big);
      put32(b, 2, big);
      b.push_back(0xaa);
      b.push_back(0xbb);
      const auto cap = pcap::parse(b);
      REQUIRE(cap.packets.size() == 1);
      CHECK(cap.packets[0].timestamp == doctest::Approx(10.5));
      CHECK(cap.packets[0].data.size() == 2);
    }
  }
}

TEST_CASE("pcap reader rejects bad magic and truncation") {
  std::vector<std::uint8_t> junk(24, 0);
  CHECK_THROWS_AS(pcap::parse(junk), Error);
  const std::string path = temp_path("trunc.pcap");
  {
    pcap::Writer w(path);
    const std::uint8_t a[] = {1, 2, 3, 4, 5, 6};
    w.write(1.0, a);
    w.close();
  }
  auto bytes = slurp(path);
  bytes.pop_back();
  try {
    pcap::parse(bytes);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  CHECK_THROWS_AS(pcap::read_file(temp_path("does_not_exist.pcap")), Error);
  std::remove(path.c_str());
}

TEST_CASE("record parser walks back-to-back records") {
  std::vector<std::uint8_t> s;
  for (auto r : {record(22, 100), record(23, 288), record(23, 176)}) s.insert(s.end(), r.begin(), r.end());
  const auto res = tls::parse_tls_records(s);
  REQUIRE(res.records.size() == 3);
  CHECK(res.records[1].length == 288);
  CHECK(res.records[1].offset == 105);
  CHECK(res.records[2].content_type == tls::content_type::kApplicationData);
  CHECK_FALSE(res.incomplete_tail);
  CHECK(res.errors == 0);
}

TEST_CASE("record parser flags truncated tails and garbage") {
  auto r = record(23, 100);
  r.resize(50);
  auto res = tls::parse_tls_records(r);
  CHECK(res.records.empty());
  CHECK(res.incomplete_tail);
  std::vector<std::uint8_t> three = {23, 3, 3};
  CHECK(tls::parse_tls_records(three).incomplete_tail);
  const auto bad_type = record(99, 10);
  CHECK(tls::parse_tls_records(bad_type).errors == 1);
  std::vector<std::uint8_t> huge = {23, 3, 3, 0xff, 0xff};
  CHECK(tls::parse_tls_records(huge).errors == 1);
}

TEST_CASE("record parser never reads past its input") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::uint8_t> buf(rng() % 200);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng() % 4 == 0 ? 23 : rng());
    const auto res = tls::parse_tls_records(buf);
    std::size_t covered = 0;
    for (const auto& rec : res.records) {
      CHECK(rec.offset == covered);
      covered += kTlsHeaderBytes + rec.length;
    }
    CHECK(covered <= buf.size());
  }
}

TEST_CASE("pcap parser survives random corruption") {
  const std::string path = temp_path("fuzz.pcap");
  ConnBuilder cb;
  cb.handshake(1.0);
  cb.send(true, 1.1, record(23, 500), 1460);
  const auto base = slurp(cb.write("fuzz.pcap"));
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    auto b = base;
    for (int k = 0; k < 4; ++k) b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
    b.resize(rng() % (b.size() + 1));
    try {
      const auto cap = pcap::parse(b);
      (void)tls::traces_from_capture(cap);
    } catch (const Error&) {
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("reassembly reorders, drops duplicates and stops at gaps") {
  const std::vector<std::uint8_t> a = {1, 2, 3}, b = {4, 5}, c = {6};
  std::vector<tls::DirectionalSegment> segs = {{103, 2.0, b}, {100, 1.0, a}, {100, 3.0, a}, {105, 4.0, c}};
  auto rs = tls::reassemble(segs, 100);
  CHECK(rs.bytes == std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6});
  CHECK(rs.duplicates == 1);
  CHECK(rs.gaps == 0);
  CHECK(rs.completion_time(0, 6) == doctest::Approx(4.0));
  CHECK(rs.completion_time(0, 3) == doctest::Approx(1.0));

  std::vector<tls::DirectionalSegment> holey = {{100, 1.0, a}, {110, 2.0, b}};
  rs = tls::reassemble(holey, 100);
  CHECK(rs.bytes.size() == 3);
  CHECK(rs.gaps == 1);
}

TEST_CASE("reassembly handles sequence wrap-around") {
  const std::vector<std::uint8_t> a = {1, 2}, b = {3, 4};
  std::vector<tls::DirectionalSegment> segs = {{0, 2.0, b}, {0xfffffffe, 1.0, a}};
  const auto rs = tls::reassemble(segs, std::nullopt);
  CHECK(rs.bytes == std::vector<std::uint8_t>{1, 2, 3, 4});
}

TEST_CASE("extraction keeps AppData records split across segments") {
  ConnBuilder cb;
  cb.handshake(1.0);
  cb.send(true, 1.01, record(22, 512), 1460);
  cb.send(false, 1.02, record(22, 2978), 1460);
  std::vector<std::uint8_t> two;
  for (auto r : {record(23, 4000), record(23, 288)}) two.insert(two.end(), r.begin(), r.end());
  cb.send(true, 1.10, two, 1000, /*reverse=*/true, /*duplicate_first=*/true);
  cb.send(false, 1.20, record(23, 16400), 1460);
  cb.send(true, 1.30, record(23, 32), 7);
  const std::string path = cb.write("split.pcap");
  tls::ExtractionStats stats;
  const auto traces = tls::traces_from_pcap(path, &stats);
  REQUIRE(traces.size() == 1);
  const auto& recs = traces[0].records;
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].size == 4000);
  CHECK(recs[0].direction == Direction::PayloadToFramework);
  CHECK(recs[1].size == 288);
  CHECK(recs[2].size == 16400);
  CHECK(recs[2].direction == Direction::FrameworkToPayload);
  CHECK(recs[3].size == 32);
  CHECK(stats.duplicates >= 1);
  CHECK(stats.gaps == 0);
  const auto fv = features_from_trace(traces[0]);
  CHECK(fv.length() == 4);
  std::remove(path.c_str());
}

TEST_CASE("non-TCP frames are skipped and counted") {
  const std::string path = temp_path("nontcp.pcap");
  {
    pcap::Writer w(path);
    std::vector<std::uint8_t> arp(42, 0);
    arp[12] = 0x08;
    arp[13] = 0x06;
    w.write(1.0, arp);
    w.close();
  }
  tls::ExtractionStats stats;
  CHECK(tls::traces_from_pcap(path, &stats).empty());
  CHECK(stats.skipped_non_tcp == 1);
  std::remove(path.c_str());
}

TEST_CASE("stream keys are direction independent") {
  const auto k1 = tls::TcpStreamKey::normalized(1, 80, 2, 443);
  const auto k2 = tls::TcpStreamKey::normalized(2, 443, 1, 80);
  CHECK(k1 == k2);
  CHECK(k1.a_ip == 1);
}
