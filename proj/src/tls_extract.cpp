#include "c2lab/tls_extract.hpp"

#include <algorithm>
#include <map>
#include <optional>

namespace c2lab::tls {

TcpStreamKey TcpStreamKey::normalized(std::uint32_t src_ip, std::uint16_t src_port, std::uint32_t dst_ip,
                                      std::uint16_t dst_port) {
  if (std::pair(src_ip, src_port) <= std::pair(dst_ip, dst_port)) return {src_ip, src_port, dst_ip, dst_port};
  return {dst_ip, dst_port, src_ip, src_port};
}

namespace {

std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] << 8 | b[at + 1]);
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) << 24 | static_cast<std::uint32_t>(b[at + 1]) << 16 |
         static_cast<std::uint32_t>(b[at + 2]) << 8 | static_cast<std::uint32_t>(b[at + 3]);
}

std::optional<TcpSegment> decode_frame(const pcap::Packet& pkt) {
  std::span<const std::uint8_t> f(pkt.data);
  if (f.size() < pcap::kEthernetHeader) return std::nullopt;
  std::size_t ip = pcap::kEthernetHeader;
  std::uint16_t ethertype = be16(f, 12);
  if (ethertype == 0x8100) {  // single 802.1Q tag
    if (f.size() < ip + 4) return std::nullopt;
    ethertype = be16(f, 16);
    ip += 4;
  }
  if (ethertype != 0x0800 || f.size() < ip + pcap::kIpv4Header) return std::nullopt;
  if ((f[ip] >> 4) != 4) return std::nullopt;
  const std::size_t ihl = static_cast<std::size_t>(f[ip] & 0x0f) * 4;
  const std::size_t total_len = be16(f, ip + 2);
  if (ihl < pcap::kIpv4Header || total_len < ihl || f[ip + 9] != 6) return std::nullopt;
  if ((be16(f, ip + 6) & 0x3fff) != 0) return std::nullopt;  // fragments are out of scope
  const std::size_t ip_end = std::min(f.size(), ip + total_len);
  const std::size_t tcp = ip + ihl;
  if (ip_end < tcp + pcap::kTcpHeader) return std::nullopt;
  const std::size_t data_off = static_cast<std::size_t>(f[tcp + 12] >> 4) * 4;
  if (data_off < pcap::kTcpHeader || ip_end < tcp + data_off) return std::nullopt;

  TcpSegment seg;
  seg.timestamp = pkt.timestamp;
  seg.src_ip = be32(f, ip + 12);
  const std::uint32_t dst_ip = be32(f, ip + 16);
  seg.src_port = be16(f, tcp);
  const std::uint16_t dst_port = be16(f, tcp + 2);
  seg.key = TcpStreamKey::normalized(seg.src_ip, seg.src_port, dst_ip, dst_port);
  seg.seq = be32(f, tcp + 4);
  seg.flags = f[tcp + 13];
  seg.frame_length = static_cast<std::uint32_t>(pkt.data.size());
  seg.payload.assign(f.begin() + static_cast<std::ptrdiff_t>(tcp + data_off),
                     f.begin() + static_cast<std::ptrdiff_t>(ip_end));
  return seg;
}

}  // namespace

SegmentStream read_pcap(const pcap::Capture& capture) {
  SegmentStream out;
  for (const auto& pkt : capture.packets) {
    auto seg = decode_frame(pkt);
    if (!seg) {
      ++out.skipped_non_tcp;
      continue;
    }
    out.segments.push_back(std::move(*seg));
  }
  return out;
}

SegmentStream read_pcap(const std::string& path) { return read_pcap(pcap::read_file(path)); }

double ReassembledStream::completion_time(std::size_t begin, std::size_t end) const {
  auto it = std::upper_bound(chunks.begin(), chunks.end(), begin,
                             [](std::size_t off, const Chunk& c) { return off < c.end; });
  double t = 0.0;
  for (; it != chunks.end(); ++it) {
    t = std::max(t, it->timestamp);
    if (it->end >= end) break;
  }
  return t;
}

ReassembledStream reassemble(std::span<const DirectionalSegment> segments, std::optional<std::uint32_t> initial_seq) {
  ReassembledStream out;
  if (segments.empty()) return out;
  std::uint32_t base = initial_seq.value_or(segments.front().seq);
  if (!initial_seq) {
    for (const auto& s : segments)
      if (static_cast<std::int32_t>(s.seq - base) < 0) base = s.seq;
  }
  std::vector<std::pair<std::int64_t, const DirectionalSegment*>> ordered;
  ordered.reserve(segments.size());
  for (const auto& s : segments) ordered.emplace_back(static_cast<std::int32_t>(s.seq - base), &s);
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::int64_t cursor = 0;
  for (const auto& [rel, seg] : ordered) {
    const auto len = static_cast<std::int64_t>(seg->payload.size());
    if (len == 0) continue;
    if (rel + len <= cursor) {
      ++out.duplicates;
      continue;
    }
    if (rel > cursor) {
      ++out.gaps;
      break;
    }
    const auto skip = static_cast<std::size_t>(cursor - rel);
    out.bytes.insert(out.bytes.end(), seg->payload.begin() + static_cast<std::ptrdiff_t>(skip), seg->payload.end());
    out.chunks.push_back({out.bytes.size(), seg->timestamp});
    cursor = rel + len;
  }
  return out;
}

TlsParseResult parse_tls_records(std::span<const std::uint8_t> stream) {
  TlsParseResult out;
  std::size_t off = 0;
  while (off < stream.size()) {
    if (stream.size() - off < kTlsHeaderBytes) {
      out.incomplete_tail = true;
      break;
    }
    TlsRecordHeader h{stream[off], be16(stream, off + 1), be16(stream, off + 3)};
    if (h.content_type < content_type::kChangeCipherSpec || h.content_type > content_type::kApplicationData ||
        h.length > kTlsMaxRecordLength) {
      ++out.errors;
      break;
    }
    if (stream.size() - off - kTlsHeaderBytes < h.length) {
      out.incomplete_tail = true;
      break;
    }
    out.records.push_back({h.content_type, h.length, off});
    off += kTlsHeaderBytes + h.length;
  }
  return out;
}

namespace {

struct Side {
  std::optional<std::uint32_t> initial_seq;
  std::vector<DirectionalSegment> segments;
};

struct Connection {
  TcpStreamKey key;
  std::optional<std::pair<std::uint32_t, std::uint16_t>> client;
  Side a_side, b_side;
  double first_ts = 0.0, last_ts = 0.0;
  std::uint64_t wire_bytes = 0;
  bool has_data = false;
  bool finished = false;
};

}  // namespace

std::vector<FlowTrace> traces_from_capture(const pcap::Capture& capture, ExtractionStats* stats) {
  SegmentStream stream = read_pcap(capture);
  ExtractionStats local;
  local.skipped_non_tcp = stream.skipped_non_tcp;

  std::vector<Connection> conns;
  std::map<TcpStreamKey, std::size_t> active;
  for (const auto& seg : stream.segments) {
    const bool syn_only = (seg.flags & pcap::tcp_flags::kSyn) && !(seg.flags & pcap::tcp_flags::kAck);
    auto it = active.find(seg.key);
    if (it == active.end() || (syn_only && (conns[it->second].has_data || conns[it->second].finished))) {
      Connection c;
      c.key = seg.key;
      c.first_ts = seg.timestamp;
      conns.push_back(std::move(c));
      active[seg.key] = conns.size() - 1;
      it = active.find(seg.key);
    }
    Connection& c = conns[it->second];
    if (syn_only || !c.client) c.client = std::pair(seg.src_ip, seg.src_port);
    Side& side = seg.from_a() ? c.a_side : c.b_side;
    if (seg.flags & pcap::tcp_flags::kSyn) side.initial_seq = seg.seq + 1;
    if (!seg.payload.empty()) {
      side.segments.push_back({seg.seq, seg.timestamp, seg.payload});
      c.has_data = true;
      local.tcp_payload_bytes += seg.payload.size();
    }
    if (seg.flags & (pcap::tcp_flags::kFin | pcap::tcp_flags::kRst)) c.finished = true;
    c.last_ts = std::max(c.last_ts, seg.timestamp);
    c.wire_bytes += seg.frame_length;
  }
  local.connections = conns.size();

  std::vector<FlowTrace> traces;
  for (std::size_t idx = 0; idx < conns.size(); ++idx) {
    const Connection& c = conns[idx];
    const bool a_is_client = c.client && c.client->first == c.key.a_ip && c.client->second == c.key.a_port;
    FlowTrace trace;
    trace.connection_id = idx;
    trace.open_time = c.first_ts;
    trace.close_time = c.last_ts;
    trace.total_wire_bytes = c.wire_bytes;
    for (const Side* side : {&c.a_side, &c.b_side}) {
      const bool is_client = (side == &c.a_side) == a_is_client;
      const Direction dir = is_client ? Direction::PayloadToFramework : Direction::FrameworkToPayload;
      const ReassembledStream rs = reassemble(side->segments, side->initial_seq);
      local.gaps += rs.gaps;
      local.duplicates += rs.duplicates;
      const TlsParseResult parsed = parse_tls_records(rs.bytes);
      local.parse_errors += parsed.errors;
      for (const auto& rec : parsed.records) {
        if (rec.content_type != content_type::kApplicationData) continue;
        trace.records.push_back(
            {rec.length, dir, rs.completion_time(rec.offset, rec.offset + kTlsHeaderBytes + rec.length)});
      }
    }
    if (trace.records.empty()) continue;
    // Client records were appended first, so ties resolve client-first.
    std::stable_sort(trace.records.begin(), trace.records.end(),
                     [](const RecordEvent& x, const RecordEvent& y) { return x.timestamp < y.timestamp; });
    traces.push_back(std::move(trace));
  }
  if (stats) *stats = local;
  return traces;
}

std::vector<FlowTrace> traces_from_pcap(const std::string& path, ExtractionStats* stats) {
  return traces_from_capture(pcap::read_file(path), stats);
}

}  // namespace c2lab::tls
