#include "c2lab/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include <nlohmann/json.hpp>

#include "c2lab/pcap.hpp"
#include "c2lab/tls_extract.hpp"

namespace c2lab::sim {

namespace {

std::int64_t to_us(double seconds) { return std::llround(seconds * 1e6); }
double to_seconds(std::int64_t us) { return static_cast<double>(us) * 1e-6; }

}  // namespace

std::string_view to_string(SimMode m) {
  switch (m) {
    case SimMode::Regular: return "regular";
    case SimMode::StuffFixed: return "stuff_fixed";
    case SimMode::StuffRandom: return "stuff_random";
    case SimMode::FixedReqPerConn: return "fixed_req_per_conn";
    case SimMode::RandReqPerConn: return "rand_req_per_conn";
    case SimMode::Adversarial: return "adversarial";
  }
  return "unknown";
}

std::string_view to_string(ExchangeKind k) {
  switch (k) {
    case ExchangeKind::Poll: return "poll";
    case ExchangeKind::Command: return "command";
    case ExchangeKind::Result: return "result";
  }
  return "unknown";
}

void SessionScript::validate() const {
  if (commands.empty()) throw Error(ErrorCode::kInvalidArgument, "session script has no commands");
  for (const auto& c : commands) {
    if (c.request_size < 1 || c.response_size < 1)
      throw Error(ErrorCode::kInvalidArgument, "command sizes must be >= 1 (" + c.name + ")");
    if (c.request_size > kMaxCommandBody || c.response_size > kMaxCommandBody)
      throw Error(ErrorCode::kInvalidArgument, "command body exceeds one record (" + c.name + ")");
  }
  for (double g : inter_command_gaps)
    if (!(g >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative inter-command gap");
}

void SimConfig::validate() const {
  if (!(poll_initial > 0.0) || poll_max < poll_initial) throw Error(ErrorCode::kConfig, "bad polling backoff");
  if (!(rtt > 0.0) || poll_initial < rtt) throw Error(ErrorCode::kConfig, "poll interval shorter than the RTT");
  if (command_exec_time < 0.0) throw Error(ErrorCode::kConfig, "negative command execution time");
  if (stuff_random_min < 1 || stuff_random_max < stuff_random_min) throw Error(ErrorCode::kConfig, "bad random stuffing range");
  if (fixed_req_per_conn < 1) throw Error(ErrorCode::kConfig, "requests per connection must be >= 1");
  if (rand_req_min < 1 || rand_req_max < rand_req_min) throw Error(ErrorCode::kConfig, "bad requests-per-connection range");
  if (proto::min_padding_line(header_names) > tls.block_bytes + tls.tag_bytes)
    throw Error(ErrorCode::kConfig, "padding header name too long for the TLS block grid");
  if (wire.mss < 64) throw Error(ErrorCode::kConfig, "MSS too small");
  if (wire.handshake_wire_bytes < wire.client_handshake_bytes + kTlsHeaderBytes + 1 ||
      wire.client_handshake_bytes < kTlsHeaderBytes + 1)
    throw Error(ErrorCode::kConfig, "handshake byte model too small");
  if (wire.connect_latency_us < 5 || wire.close_delay_us < 2) throw Error(ErrorCode::kConfig, "latencies too small");
}

void SimulationResult::append(SimulationResult&& other) {
  std::move(other.connections.begin(), other.connections.end(), std::back_inserter(connections));
  std::move(other.traces.begin(), other.traces.end(), std::back_inserter(traces));
  std::move(other.events.begin(), other.events.end(), std::back_inserter(events));
  runtime += other.runtime;
  plans_consumed += other.plans_consumed;
  closes_sent += other.closes_sent;
  missing_next_size += other.missing_next_size;
}

std::vector<FeatureVector> SimulationResult::features() const {
  std::vector<FeatureVector> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(features_from_trace(t));
  return out;
}

namespace {

/// Mode-independent timeline entry; stuffing is decided later.
struct PlannedExchange {
  ExchangeKind kind = ExchangeKind::Poll;
  std::string command;
  std::int64_t request_us = 0;
  std::int64_t response_us = 0;
  HttpMessageModel request;
  HttpMessageModel response;
};

std::vector<PlannedExchange> build_timeline(const SessionScript& script, const SimConfig& cfg, std::int64_t start_us) {
  const std::int64_t rtt = to_us(cfg.rtt);
  const std::int64_t exec = to_us(cfg.command_exec_time);
  const std::int64_t poll_initial = to_us(cfg.poll_initial);
  const std::int64_t poll_max = to_us(cfg.poll_max);
  auto gap = [&](std::size_t i) { return i < script.inter_command_gaps.size() ? to_us(script.inter_command_gaps[i]) : 0; };

  std::vector<PlannedExchange> out;
  std::int64_t t = start_us + cfg.wire.connect_latency_us;
  std::int64_t interval = poll_initial;
  std::int64_t available = t + gap(0);
  std::size_t next_cmd = 0;
  while (next_cmd < script.commands.size()) {
    const CommandSpec& cmd = script.commands[next_cmd];
    PlannedExchange get;
    get.request_us = t;
    get.response_us = t + rtt;
    get.request = {HttpMethod::Get, cfg.http.get_header, 0, 0};
    if (available <= t) {
      get.kind = ExchangeKind::Command;
      get.command = cmd.name;
      get.response = {HttpMethod::Response, cfg.http.response_header, cmd.request_size, 0};
      PlannedExchange post;
      post.kind = ExchangeKind::Result;
      post.command = cmd.name;
      post.request_us = get.response_us + exec;
      post.response_us = post.request_us + rtt;
      post.request = {HttpMethod::Post, cfg.http.post_header, cmd.response_size, 0};
      post.response = {HttpMethod::Response, cfg.http.response_header, 0, 0};
      const std::int64_t done = post.response_us;
      out.push_back(std::move(get));
      out.push_back(std::move(post));
      ++next_cmd;
      available = done + gap(next_cmd);
      t = done + poll_initial;
      interval = std::min(poll_initial * 2, poll_max);
    } else {
      get.kind = ExchangeKind::Poll;
      get.response = {HttpMethod::Response, cfg.http.response_header, 0, 0};
      out.push_back(std::move(get));
      t += interval;
      interval = std::min(interval * 2, poll_max);
    }
  }
  return out;
}

/// Decides when each connection ends for the non-adversarial modes.
class Grouper {
 public:
  Grouper(const SimConfig& cfg, Rng rng) : cfg_(cfg), rng_(std::move(rng)) {}

  /// Called when a connection starts; returns its exchange budget.
  std::uint32_t budget() {
    switch (cfg_.mode) {
      case SimMode::FixedReqPerConn: return cfg_.fixed_req_per_conn;
      case SimMode::RandReqPerConn:
        return std::uniform_int_distribution<std::uint32_t>(cfg_.rand_req_min, cfg_.rand_req_max)(rng_);
      default: return 1;
    }
  }

 private:
  const SimConfig& cfg_;
  Rng rng_;
};

SimConnection open_connection(std::uint64_t id, std::uint32_t client_ip, std::uint32_t index_in_session) {
  SimConnection c;
  c.id = id;
  c.client_ip = client_ip;
  c.client_port = static_cast<std::uint16_t>(49152 + index_in_session % 16384);
  return c;
}

FlowTrace trace_of(const SimConnection& c, const WireConfig& wire) {
  FlowTrace t;
  t.connection_id = c.id;
  t.open_time = to_seconds(c.open_us);
  t.close_time = to_seconds(c.close_us);
  for (const auto& r : c.records) t.records.push_back({r.length, r.direction, to_seconds(r.time_us)});
  t.total_wire_bytes = connection_wire_bytes(c, wire);
  return t;
}

void finish_connection(SimConnection& c, const WireConfig& wire) {
  c.open_us = c.records.front().time_us - wire.connect_latency_us;
  c.close_us = c.records.back().time_us + wire.close_delay_us;
}

}  // namespace

SimulationResult simulate_session(const SessionScript& script, const SimConfig& cfg,
                                  std::span<const StuffingPlan> plan_library, const SessionContext& ctx) {
  script.validate();
  cfg.validate();
  const bool adversarial = cfg.mode == SimMode::Adversarial;
  if (adversarial && plan_library.empty())
    throw Error(ErrorCode::kConfig, "adversarial mode needs a plan library");

  // Named substreams keep the unstuffed content identical across modes.
  const std::uint64_t session_seed = substream_seed(cfg.seed, "session/" + std::to_string(ctx.session_index));
  Rng stuff_rng = substream(session_seed, "stuffing");
  Rng plan_rng = substream(session_seed, "plans");
  Grouper grouper(cfg, substream(session_seed, "grouping"));

  std::optional<proto::FrameworkProtocol> framework;
  std::optional<proto::PayloadProtocol> payload;
  if (adversarial) {
    for (const auto& p : plan_library) p.validate(cfg.tls);
    framework.emplace(cfg.side, cfg.tls, [&]() { return sample_plan(plan_library, plan_rng); }, cfg.header_names);
    payload.emplace(cfg.side, cfg.tls, cfg.header_names);
  }

  auto random_stuffing = [&]() {
    return std::uniform_int_distribution<std::uint32_t>(cfg.stuff_random_min, cfg.stuff_random_max)(stuff_rng);
  };
  auto mode_stuffing = [&]() -> std::uint32_t {
    switch (cfg.mode) {
      case SimMode::StuffFixed: return proto::padding_line_bytes(cfg.stuff_fixed_bytes, cfg.header_names);
      case SimMode::StuffRandom: return proto::padding_line_bytes(random_stuffing(), cfg.header_names);
      default: return 0;
    }
  };

  const std::vector<PlannedExchange> timeline = build_timeline(script, cfg, ctx.start_us);
  const std::uint32_t client_ip = cfg.wire.client_ip_base + ctx.session_index;

  SimulationResult result;
  std::optional<SimConnection> conn;
  std::uint32_t budget = 0;
  std::uint32_t conn_index = 0;
  auto close_current = [&]() {
    finish_connection(*conn, cfg.wire);
    result.traces.push_back(trace_of(*conn, cfg.wire));
    result.connections.push_back(std::move(*conn));
    conn.reset();
  };

  for (const auto& ex : timeline) {
    if (!conn) {
      conn = open_connection(ctx.first_connection_id + conn_index, client_ip, conn_index);
      ++conn_index;
      budget = adversarial ? 0 : grouper.budget();
    }
    HttpMessageModel req = ex.request;
    HttpMessageModel resp = ex.response;
    bool close_after = false;
    if (adversarial) {
      req.stuffing_size = payload->request_stuffing(req.plaintext());
      const proto::FrameworkStep step = framework->step(resp.plaintext());
      resp.stuffing_size = step.protocol_bytes + step.stuffing_bytes;
      close_after = !payload->on_response(step.headers);
    } else {
      req.stuffing_size = mode_stuffing();
      resp.stuffing_size = mode_stuffing();
      close_after = --budget == 0;
    }
    if (req.plaintext() > kTlsMaxPlaintext || resp.plaintext() > kTlsMaxPlaintext)
      throw Error(ErrorCode::kInternal, "message exceeds one TLS record");

    ExchangeEvent ev;
    ev.connection_id = conn->id;
    ev.kind = ex.kind;
    ev.command = ex.command;
    ev.request = {to_seconds(ex.request_us), Direction::PayloadToFramework, req.plaintext(), req.stuffing_size,
                  req.record_length(cfg.tls)};
    ev.response = {to_seconds(ex.response_us), Direction::FrameworkToPayload, resp.plaintext(), resp.stuffing_size,
                   resp.record_length(cfg.tls)};
    conn->records.push_back({Direction::PayloadToFramework, ex.request_us, ev.request.framed});
    conn->records.push_back({Direction::FrameworkToPayload, ex.response_us, ev.response.framed});
    result.events.push_back(std::move(ev));
    if (close_after) close_current();
  }
  if (conn) close_current();

  result.runtime = timeline.empty() ? 0.0 : to_seconds(timeline.back().response_us - timeline.front().request_us);
  if (framework) {
    result.plans_consumed = framework->plans_started();
    result.closes_sent = framework->closes_sent();
    result.missing_next_size = payload->missing_next_size();
  }
  return result;
}

std::vector<CommandSpec> default_command_catalogue() {
  return {
      {"sysinfo", 520, 380},  {"ps", 480, 6200},    {"getuid", 440, 150},
      {"getpid", 440, 120},   {"ipconfig", 470, 1400}, {"route", 470, 900},
      {"pwd", 440, 140},      {"ls", 500, 2200},    {"cat /etc/shadow", 540, 1100},
      {"download /etc/shadow", 600, 1300}, {"webcam_list", 460, 160}, {"exit", 430, 100},
  };
}

SessionScript default_overhead_script() {
  SessionScript s;
  s.commands = default_command_catalogue();
  s.inter_command_gaps = {0.0, 0.5, 1.5, 0.2, 2.5, 0.4, 0.3, 3.0, 0.6, 0.2, 1.0, 4.0};
  return s;
}

SessionScript jitter_script(const SessionScript& script, double jitter, Rng& rng) {
  SessionScript out = script;
  std::uniform_real_distribution<double> scale(1.0 - jitter, 1.0 + jitter);
  auto apply = [&](std::uint32_t v) {
    const double s = std::round(static_cast<double>(v) * scale(rng));
    return static_cast<std::uint32_t>(std::clamp(s, 1.0, static_cast<double>(kMaxCommandBody)));
  };
  for (auto& c : out.commands) {
    c.request_size = apply(c.request_size);
    c.response_size = apply(c.response_size);
  }
  return out;
}

SessionScript ScriptGenerator::generate(Rng& rng) const {
  if (catalogue.empty()) throw Error(ErrorCode::kConfig, "empty command catalogue");
  SessionScript s;
  std::vector<CommandSpec> pool;
  CommandSpec exit_cmd{"exit", 430, 100};
  for (const auto& c : catalogue) {
    if (c.name == "exit")
      exit_cmd = c;
    else
      pool.push_back(c);
  }
  if (pool.empty()) pool.push_back(exit_cmd);
  const auto n = std::uniform_int_distribution<std::uint32_t>(min_commands, std::max(min_commands, max_commands))(rng);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_real_distribution<double> gap(min_gap, std::max(min_gap, max_gap));
  for (std::uint32_t i = 0; i + 1 < std::max<std::uint32_t>(n, 1); ++i) s.commands.push_back(pool[pick(rng)]);
  s.commands.push_back(exit_cmd);
  for (std::size_t i = 0; i < s.commands.size(); ++i) s.inter_command_gaps.push_back(std::round(gap(rng) * 1e3) / 1e3);
  return jitter_script(s, size_jitter, rng);
}

SimulationResult simulate_c2_corpus(const SimConfig& config, const ScriptGenerator& scripts, std::size_t target_flows,
                                    std::span<const StuffingPlan> plan_library) {
  SimulationResult all;
  Rng script_rng = substream(config.seed, "scripts");
  SessionContext ctx;
  while (all.connections.size() < target_flows) {
    const SessionScript script = scripts.generate(script_rng);
    SimulationResult one = simulate_session(script, config, plan_library, ctx);
    const std::int64_t end_us = one.connections.empty() ? ctx.start_us : one.connections.back().close_us;
    ctx.first_connection_id += one.connections.size();
    ++ctx.session_index;
    ctx.start_us = end_us + 60'000'000;  // one idle minute between sessions
    all.append(std::move(one));
  }
  if (all.connections.size() > target_flows) {
    all.connections.resize(target_flows);
    all.traces.resize(target_flows);
    const std::uint64_t last_id = all.connections.back().id;
    std::erase_if(all.events, [&](const ExchangeEvent& e) { return e.connection_id > last_id; });
  }
  return all;
}

SimulationResult simulate_web(const WebConfig& cfg, std::size_t flows) {
  if (cfg.min_records < 1 || cfg.max_records < cfg.min_records) throw Error(ErrorCode::kConfig, "bad web record range");
  if (cfg.client_min_size < 1 || cfg.client_max_size < cfg.client_min_size)
    throw Error(ErrorCode::kConfig, "bad web request size range");
  if (cfg.api_request_min < 1 || cfg.api_request_max < cfg.api_request_min || cfg.api_response_min < 1 ||
      cfg.api_response_max < cfg.api_response_min || !(cfg.api_flow_fraction >= 0.0 && cfg.api_flow_fraction <= 1.0))
    throw Error(ErrorCode::kConfig, "bad web API flow settings");
  Rng rng = substream(cfg.seed, "web");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return static_cast<std::uint32_t>(std::llround(std::exp(std::log(lo) + unit(rng) * (std::log(hi) - std::log(lo)))));
  };
  static constexpr std::uint32_t kSmallSizes[] = {32, 512, 528, 560, 1280};
  auto small = [&]() { return kSmallSizes[std::uniform_int_distribution<std::size_t>(0, 4)(rng)]; };
  auto client_size = [&]() { return unit(rng) < cfg.small_record_probability ? std::uint32_t{32} : log_uniform(cfg.client_min_size, cfg.client_max_size); };
  std::exponential_distribution<double> think(1.0 / std::max(cfg.mean_think_time, 1e-6));

  const std::uint32_t short_hi = std::min<std::uint32_t>(std::max(cfg.min_records, 4u), cfg.max_records);
  const std::uint32_t long_lo = std::min(short_hi + 1, cfg.max_records);

  SimulationResult out;
  std::int64_t t = cfg.wire.connect_latency_us;
  const std::int64_t rtt = to_us(cfg.rtt);
  for (std::size_t f = 0; f < flows; ++f) {
    const bool is_api = unit(rng) < cfg.api_flow_fraction;
    const bool is_short = unit(rng) < cfg.short_flow_fraction;
    const std::uint32_t n = is_api || is_short
                                ? std::uniform_int_distribution<std::uint32_t>(cfg.min_records, short_hi)(rng)
                                : std::uniform_int_distribution<std::uint32_t>(long_lo, cfg.max_records)(rng);
    SimConnection c = open_connection(f, cfg.wire.client_ip_base + static_cast<std::uint32_t>(f / 16384),
                                      static_cast<std::uint32_t>(f));
    std::int64_t now = t;
    while (is_api && c.records.size() < n) {
      c.records.push_back({Direction::PayloadToFramework, now, log_uniform(cfg.api_request_min, cfg.api_request_max)});
      now += rtt;
      if (c.records.size() < n)
        c.records.push_back({Direction::FrameworkToPayload, now, log_uniform(cfg.api_response_min, cfg.api_response_max)});
      now += std::max<std::int64_t>(1000, to_us(think(rng)));
    }
    while (c.records.size() < n) {
      c.records.push_back({Direction::PayloadToFramework, now, client_size()});
      now += rtt;
      std::vector<std::uint32_t> burst;
      if (unit(rng) < cfg.full_burst_probability) {
        const auto k = std::uniform_int_distribution<std::uint32_t>(1, std::max(1u, cfg.max_full_records))(rng);
        burst.assign(k, cfg.full_record_size);
        burst.push_back(log_uniform(100, cfg.full_record_size));
      } else {
        burst.push_back(unit(rng) < cfg.small_record_probability ? small() : log_uniform(32, 16000));
      }
      for (std::uint32_t len : burst) {
        if (c.records.size() >= n) break;
        c.records.push_back({Direction::FrameworkToPayload, now, len});
        now += 500;
      }
      now += std::max<std::int64_t>(1000, to_us(think(rng)));
    }
    finish_connection(c, cfg.wire);
    out.traces.push_back(trace_of(c, cfg.wire));
    t = c.close_us + std::max<std::int64_t>(1000, to_us(think(rng))) + cfg.wire.connect_latency_us;
    out.connections.push_back(std::move(c));
  }
  return out;
}

namespace {

struct StreamRecord {
  std::uint8_t type = 0;
  std::uint32_t length = 0;
};

struct WireFrame {
  std::int64_t time_us = 0;
  bool from_client = true;
  std::uint8_t flags = 0;
  std::uint32_t offset = 0;  // payload offset in the sender's stream
  std::uint32_t length = 0;  // payload bytes
};

struct ConnectionLayout {
  std::vector<WireFrame> frames;
  std::vector<StreamRecord> client_stream, server_stream;
};

ConnectionLayout layout_connection(const SimConnection& c, const WireConfig& wire) {
  namespace f = pcap::tcp_flags;
  ConnectionLayout out;
  std::uint32_t client_off = 0, server_off = 0;
  auto push_record = [&](bool from_client, std::int64_t time_us, std::uint8_t type, std::uint32_t length) {
    auto& stream = from_client ? out.client_stream : out.server_stream;
    std::uint32_t& off = from_client ? client_off : server_off;
    stream.push_back({type, length});
    std::uint32_t left = length + kTlsHeaderBytes;
    while (left > 0) {
      const std::uint32_t seg = std::min(left, wire.mss);
      out.frames.push_back({time_us, from_client, static_cast<std::uint8_t>(f::kAck | f::kPsh), off, seg});
      off += seg;
      left -= seg;
    }
  };

  const std::int64_t step = wire.connect_latency_us / 5;
  out.frames.push_back({c.open_us, true, f::kSyn, 0, 0});
  out.frames.push_back({c.open_us + step, false, static_cast<std::uint8_t>(f::kSyn | f::kAck), 0, 0});
  out.frames.push_back({c.open_us + 2 * step, true, f::kAck, 0, 0});
  push_record(true, c.open_us + 3 * step, tls::content_type::kHandshake, wire.client_handshake_bytes - kTlsHeaderBytes);
  std::uint32_t server_left = wire.handshake_wire_bytes - wire.client_handshake_bytes;
  while (server_left > kTlsHeaderBytes) {
    const std::uint32_t len = std::min(server_left - kTlsHeaderBytes, kTlsMaxPlaintext);
    push_record(false, c.open_us + 4 * step, tls::content_type::kHandshake, len);
    server_left -= len + kTlsHeaderBytes;
  }
  for (const auto& r : c.records)
    push_record(r.direction == Direction::PayloadToFramework, r.time_us, tls::content_type::kApplicationData, r.length);
  const std::int64_t last = c.records.empty() ? c.open_us + 4 * step : c.records.back().time_us;
  out.frames.push_back({last + (c.close_us - last) / 2, true, static_cast<std::uint8_t>(f::kFin | f::kAck), client_off, 0});
  out.frames.push_back({c.close_us, false, static_cast<std::uint8_t>(f::kFin | f::kAck), server_off, 0});
  out.frames.push_back({c.close_us, true, f::kAck, client_off + 1, 0});
  return out;
}

std::vector<std::uint8_t> materialize(const std::vector<StreamRecord>& records, Rng& rng) {
  std::vector<std::uint8_t> bytes;
  std::uniform_int_distribution<int> byte(0, 255);
  for (const auto& r : records) {
    bytes.push_back(r.type);
    bytes.push_back(0x03);
    bytes.push_back(0x03);
    bytes.push_back(static_cast<std::uint8_t>(r.length >> 8));
    bytes.push_back(static_cast<std::uint8_t>(r.length));
    for (std::uint32_t i = 0; i < r.length; ++i) bytes.push_back(static_cast<std::uint8_t>(byte(rng)));
  }
  return bytes;
}

}  // namespace

std::uint64_t connection_wire_bytes(const SimConnection& conn, const WireConfig& wire) {
  std::uint64_t total = 0;
  for (const auto& fr : layout_connection(conn, wire).frames) total += pcap::kFrameOverhead + fr.length;
  return total;
}

void emit_pcap(const SimulationResult& result, const WireConfig& wire, const std::string& path,
               std::uint64_t payload_seed) {
  struct Pending {
    std::int64_t time_us;
    std::size_t order;
    std::vector<std::uint8_t> frame;
  };
  std::vector<Pending> frames;
  std::size_t order = 0;
  std::uint16_t ip_id = 0;
  for (const auto& c : result.connections) {
    const ConnectionLayout layout = layout_connection(c, wire);
    Rng rng = substream(payload_seed, "ciphertext/" + std::to_string(c.id));
    const auto client_bytes = materialize(layout.client_stream, rng);
    const auto server_bytes = materialize(layout.server_stream, rng);
    const auto client_isn = static_cast<std::uint32_t>(substream_seed(payload_seed, "isn/c/" + std::to_string(c.id)));
    const auto server_isn = static_cast<std::uint32_t>(substream_seed(payload_seed, "isn/s/" + std::to_string(c.id)));
    const std::uint32_t server_ip = wire.server_ip;
    for (const auto& fr : layout.frames) {
      const bool syn = fr.flags & pcap::tcp_flags::kSyn;
      pcap::TcpFrameSpec spec;
      if (fr.from_client) {
        spec = {c.client_ip, server_ip, c.client_port, wire.server_port, 0, 0, fr.flags, ip_id++};
        spec.seq = syn ? client_isn : client_isn + 1 + fr.offset;
        spec.ack = server_isn + 1;
      } else {
        spec = {server_ip, c.client_ip, wire.server_port, c.client_port, 0, 0, fr.flags, ip_id++};
        spec.seq = syn ? server_isn : server_isn + 1 + fr.offset;
        spec.ack = client_isn + 1;
      }
      const auto& stream = fr.from_client ? client_bytes : server_bytes;
      const std::span<const std::uint8_t> payload =
          fr.length == 0 ? std::span<const std::uint8_t>{} : std::span(stream).subspan(fr.offset, fr.length);
      frames.push_back({fr.time_us, order++, pcap::build_tcp_frame(spec, payload)});
    }
  }
  std::stable_sort(frames.begin(), frames.end(), [](const Pending& a, const Pending& b) { return a.time_us < b.time_us; });
  pcap::Writer writer(path);
  for (const auto& p : frames) writer.write(to_seconds(p.time_us), p.frame);
  writer.close();
}

std::string event_log_json(const SimulationResult& result) {
  using nlohmann::json;
  auto message = [](const MessageEvent& m) {
    return json{{"time", m.time},
                {"direction", to_string(m.direction)},
                {"plaintext", m.plaintext},
                {"stuffing", m.stuffing},
                {"framed", m.framed}};
  };
  json arr = json::array();
  for (const auto& e : result.events) {
    arr.push_back({{"connection_id", e.connection_id},
                   {"kind", to_string(e.kind)},
                   {"command", e.command},
                   {"request", message(e.request)},
                   {"response", message(e.response)}});
  }
  return arr.dump(1) + "\n";
}

void write_event_log(const SimulationResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << event_log_json(result);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace c2lab::sim
