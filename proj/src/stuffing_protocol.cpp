#include "c2lab/stuffing_protocol.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace c2lab::proto {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::string filler(std::size_t n) {
  static constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string out(n, ' ');
  for (std::size_t i = 0; i < n; ++i) out[i] = kAlphabet[i % kAlphabet.size()];
  return out;
}

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::kParse, "malformed header: " + why); }

}  // namespace

StuffHeader StuffHeader::make_padding(std::string filler_text) {
  StuffHeader h;
  h.kind = HeaderKind::Padding;
  h.padding = std::move(filler_text);
  return h;
}

StuffHeader StuffHeader::padding_of_length(std::size_t total_bytes, const HeaderNames& names) {
  const std::size_t min = min_padding_line(names);
  if (total_bytes < min)
    throw Error(ErrorCode::kInvalidArgument, "padding line needs at least " + std::to_string(min) + " bytes");
  return make_padding(filler(total_bytes - min));
}

StuffHeader StuffHeader::make_next_size(std::uint32_t size) {
  StuffHeader h;
  h.kind = HeaderKind::NextSize;
  h.next_size = size;
  return h;
}

StuffHeader StuffHeader::make_conn_state(ConnState state) {
  StuffHeader h;
  h.kind = HeaderKind::ConnState;
  h.conn_state = state;
  return h;
}

std::size_t min_padding_line(const HeaderNames& names) { return names.padding.size() + 4; }

std::string encode_header(const StuffHeader& h, const HeaderNames& names) {
  switch (h.kind) {
    case HeaderKind::Padding: return names.padding + ": " + h.padding + "\r\n";
    case HeaderKind::NextSize: return names.next_size + ": " + std::to_string(h.next_size) + "\r\n";
    case HeaderKind::ConnState:
      return names.conn_state + ": " + (h.conn_state == ConnState::Close ? "close" : "Keep-alive") + "\r\n";
  }
  return {};
}

StuffHeader decode_header(std::string_view line, const HeaderNames& names) {
  if (line.size() < 2 || line.substr(line.size() - 2) != "\r\n") malformed("missing CRLF");
  const std::string_view body = line.substr(0, line.size() - 2);
  if (body.find_first_of("\r\n") != std::string_view::npos) malformed("embedded line break");
  const auto colon = body.find(':');
  if (colon == std::string_view::npos || colon == 0) malformed("missing name");
  if (colon + 1 >= body.size() + 1 || body.substr(colon + 1, 1) != " ") malformed("expected ': '");
  const std::string_view name = body.substr(0, colon);
  const std::string_view value = body.substr(colon + 2);
  if (value.size() > kMaxHeaderValue) malformed("oversize value");

  if (iequals(name, names.padding)) {
    for (char c : value)
      if (c < 0x20 || c > 0x7e) malformed("non-printable padding");
    return StuffHeader::make_padding(std::string(value));
  }
  if (iequals(name, names.next_size)) {
    if (value.empty() || (value.size() > 1 && value[0] == '0')) malformed("bad size");
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) malformed("bad size");
    if (v > kMaxHeaderValue) malformed("oversize value");
    return StuffHeader::make_next_size(static_cast<std::uint32_t>(v));
  }
  if (iequals(name, names.conn_state)) {
    if (iequals(value, "keep-alive")) return StuffHeader::make_conn_state(ConnState::KeepAlive);
    if (iequals(value, "close")) return StuffHeader::make_conn_state(ConnState::Close);
    malformed("unknown connection state");
  }
  malformed("unknown header name");
}

std::size_t encoded_size(const std::vector<StuffHeader>& headers, const HeaderNames& names) {
  std::size_t n = 0;
  for (const auto& h : headers) n += encode_header(h, names).size();
  return n;
}

std::uint32_t padding_line_bytes(std::uint32_t stuffing, const HeaderNames& names) {
  if (stuffing == 0) return 0;
  return std::max<std::uint32_t>(stuffing, static_cast<std::uint32_t>(min_padding_line(names)));
}

FrameworkProtocol::FrameworkProtocol(StuffingSide side, TlsSizeModel model, PlanSource source, HeaderNames names)
    : side_(side), model_(model), source_(std::move(source)), names_(std::move(names)) {
  if (!source_) throw Error(ErrorCode::kConfig, "adversarial stuffing needs a plan source");
}

FrameworkStep FrameworkProtocol::step(std::uint32_t content_plaintext) {
  if (!active_) {
    current_ = pending_ ? std::move(*pending_) : source_();
    pending_.reset();
    if (current_.connection_records == 0) throw Error(ErrorCode::kProtocol, "plan spans no records");
    current_.first_size_next_conn.reset();
    cursor_ = 0;
    active_ = true;
    ++plans_started_;
  }
  if (cursor_ >= current_.connection_records)
    throw Error(ErrorCode::kProtocol, "plan exhausted without a close");

  FrameworkStep out;
  const std::size_t response_pos = cursor_ + 1;
  out.close = cursor_ + 2 >= current_.connection_records;

  std::optional<std::uint32_t> next_payload_target;
  if (out.close) {
    pending_ = source_();
    next_payload_target = pending_->target_at(0, Direction::PayloadToFramework);
    current_.first_size_next_conn = next_payload_target;
  } else {
    next_payload_target = current_.target_at(cursor_ + 2, Direction::PayloadToFramework);
  }
  if (stuffs_payload(side_) && next_payload_target) out.headers.push_back(StuffHeader::make_next_size(*next_payload_target));
  out.headers.push_back(StuffHeader::make_conn_state(out.close ? ConnState::Close : ConnState::KeepAlive));
  out.protocol_bytes = static_cast<std::uint32_t>(encoded_size(out.headers, names_));

  if (stuffs_framework(side_)) {
    if (auto target = current_.target_at(response_pos, Direction::FrameworkToPayload)) {
      out.stuffing_bytes =
          padding_line_bytes(stuffing_plaintext(model_, *target, content_plaintext + out.protocol_bytes), names_);
    }
  }

  cursor_ += 2;
  if (out.close) {
    ++closes_sent_;
    active_ = false;
  }
  return out;
}

PayloadProtocol::PayloadProtocol(StuffingSide side, TlsSizeModel model, HeaderNames names)
    : side_(side), model_(model), names_(std::move(names)) {}

std::uint32_t PayloadProtocol::request_stuffing(std::uint32_t content_plaintext) {
  if (!next_size_) {
    if (stuffs_payload(side_) && seen_response_) ++missing_next_size_;
    return 0;
  }
  const std::uint32_t target = *next_size_;
  next_size_.reset();
  return padding_line_bytes(stuffing_plaintext(model_, target, content_plaintext), names_);
}

bool PayloadProtocol::on_response(const std::vector<StuffHeader>& headers) {
  seen_response_ = true;
  bool reuse = true;
  for (const auto& h : headers) {
    if (h.kind == HeaderKind::NextSize && stuffs_payload(side_)) next_size_ = h.next_size;
    if (h.kind == HeaderKind::ConnState) reuse = h.conn_state != ConnState::Close;
  }
  return reuse;
}

std::pair<std::uint32_t, bool> PayloadProtocol::step(const std::vector<StuffHeader>& received,
                                                     std::uint32_t next_content_plaintext) {
  const bool reuse = on_response(received);
  return {request_stuffing(next_content_plaintext), reuse};
}

}  // namespace c2lab::proto
