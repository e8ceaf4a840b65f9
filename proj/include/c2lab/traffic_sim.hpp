#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "c2lab/model.hpp"
#include "c2lab/plan.hpp"
#include "c2lab/rng.hpp"
#include "c2lab/stuffing_protocol.hpp"
#include "c2lab/tls_size.hpp"

namespace c2lab::sim {

struct CommandSpec {
  std::string name;
  std::uint32_t request_size = 1;   // command bytes, framework -> payload
  std::uint32_t response_size = 1;  // result bytes, payload -> framework

  bool operator==(const CommandSpec&) const = default;
};

/// Largest command body a message may carry; keeps every message in one record
/// even with maximal random stuffing.
inline constexpr std::uint32_t kMaxCommandBody = 12000;

/// Commands executed by one session. `inter_command_gaps[i]` is the idle time
/// before command i is queued (measured from the previous result's acknowledgement,
/// or from session start for i = 0). Missing gaps count as 0.
struct SessionScript {
  std::vector<CommandSpec> commands;
  std::vector<double> inter_command_gaps;

  void validate() const;
};

enum class SimMode : std::uint8_t { Regular, StuffFixed, StuffRandom, FixedReqPerConn, RandReqPerConn, Adversarial };

std::string_view to_string(SimMode m);

enum class HttpMethod : std::uint8_t { Get, Post, Response };

/// Plaintext composition of one HTTP message.
struct HttpMessageModel {
  HttpMethod method = HttpMethod::Get;
  std::uint32_t base_header_size = 0;
  std::uint32_t body_size = 0;
  std::uint32_t stuffing_size = 0;  // padding line plus protocol headers

  std::uint32_t plaintext() const { return base_header_size + stuffing_size + body_size; }
  std::uint32_t record_length(const TlsSizeModel& m) const { return m.record_length(plaintext()); }
};

struct HttpSizes {
  std::uint32_t get_header = 268;       // empty poll: 288-byte record
  std::uint32_t response_header = 152;  // empty framework answer: 176-byte record
  std::uint32_t post_header = 280;
};

struct WireConfig {
  std::uint32_t mss = 1460;
  std::uint32_t handshake_wire_bytes = 3500;    // TLS handshake bytes, both directions
  std::uint32_t client_handshake_bytes = 517;   // client share of the above
  std::int64_t connect_latency_us = 3000;       // SYN to first AppData record
  std::int64_t close_delay_us = 500;            // last AppData record to final FIN/ACK
  std::uint32_t server_ip = 0xc6336464;         // 198.51.100.100
  std::uint16_t server_port = 443;
  std::uint32_t client_ip_base = 0x0a000001;    // 10.0.0.1, incremented per session
};

struct SimConfig {
  SimMode mode = SimMode::Regular;
  StuffingSide side = StuffingSide::TwoSide;
  std::uint32_t stuff_fixed_bytes = 50;
  std::uint32_t stuff_random_min = 1;
  std::uint32_t stuff_random_max = 1400;
  std::uint32_t fixed_req_per_conn = 3;
  std::uint32_t rand_req_min = 2;
  std::uint32_t rand_req_max = 10;
  double poll_initial = 1.0;
  double poll_max = 10.0;
  double rtt = 0.02;
  double command_exec_time = 0.05;
  TlsSizeModel tls;
  HttpSizes http;
  WireConfig wire;
  proto::HeaderNames header_names;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MessageEvent {
  double time = 0.0;
  Direction direction = Direction::PayloadToFramework;
  std::uint32_t plaintext = 0;
  std::uint32_t stuffing = 0;
  std::uint32_t framed = 0;
};

enum class ExchangeKind : std::uint8_t { Poll, Command, Result };

std::string_view to_string(ExchangeKind k);

/// One HTTP request/response pair, as logged by the simulator.
struct ExchangeEvent {
  std::uint64_t connection_id = 0;
  ExchangeKind kind = ExchangeKind::Poll;
  std::string command;
  MessageEvent request;
  MessageEvent response;
};

struct SimRecord {
  Direction direction = Direction::PayloadToFramework;
  std::int64_t time_us = 0;
  std::uint32_t length = 0;
};

/// Wire-level description of one simulated TCP connection.
struct SimConnection {
  std::uint64_t id = 0;
  std::int64_t open_us = 0;
  std::int64_t close_us = 0;
  std::uint32_t client_ip = 0;
  std::uint16_t client_port = 0;
  std::vector<SimRecord> records;
};

struct SimulationResult {
  std::vector<SimConnection> connections;
  std::vector<FlowTrace> traces;      // ground truth, aligned with `connections`
  std::vector<ExchangeEvent> events;
  double runtime = 0.0;               // first request to last response, summed over sessions
  std::size_t plans_consumed = 0;
  std::size_t closes_sent = 0;
  std::size_t missing_next_size = 0;

  void append(SimulationResult&& other);
  std::vector<FeatureVector> features() const;
};

/// Where a session sits in a larger capture.
struct SessionContext {
  std::int64_t start_us = 0;
  std::uint32_t session_index = 0;
  std::uint64_t first_connection_id = 0;
};

/// Runs one C2 session. Adversarial mode draws a plan per connection from
/// `plan_library`; it is a configuration error to omit it.
SimulationResult simulate_session(const SessionScript& script, const SimConfig& config,
                                  std::span<const StuffingPlan> plan_library = {}, const SessionContext& ctx = {});

/// Command catalogue echoing a typical post-exploitation sequence.
std::vector<CommandSpec> default_command_catalogue();
/// The 12-command sequence used for overhead runs.
SessionScript default_overhead_script();

struct ScriptGenerator {
  std::vector<CommandSpec> catalogue = default_command_catalogue();
  std::uint32_t min_commands = 4;
  std::uint32_t max_commands = 12;
  double min_gap = 0.0;
  double max_gap = 30.0;
  double size_jitter = 0.3;  // relative, uniform

  /// Random script ending with `exit`; sizes jittered per invocation.
  SessionScript generate(Rng& rng) const;
};

/// Applies per-invocation size jitter to a fixed script.
SessionScript jitter_script(const SessionScript& script, double jitter, Rng& rng);

/// Runs consecutive sessions until `target_flows` connections exist (surplus dropped).
SimulationResult simulate_c2_corpus(const SimConfig& config, const ScriptGenerator& scripts, std::size_t target_flows,
                                    std::span<const StuffingPlan> plan_library = {});

struct WebConfig {
  std::uint32_t min_records = 2;
  std::uint32_t max_records = 40;
  double short_flow_fraction = 0.3;     // flows with 2..4 records
  double full_burst_probability = 0.3;  // response carries full-size records
  std::uint32_t full_record_size = 16408;
  std::uint32_t max_full_records = 6;
  double small_record_probability = 0.3;
  std::uint32_t client_min_size = 60;   // request records, log-uniform
  std::uint32_t client_max_size = 2500;
  // Short API/beacon-style connections: 2..4 records, small messages both ways.
  double api_flow_fraction = 0.0;
  std::uint32_t api_request_min = 200;
  std::uint32_t api_request_max = 1500;
  std::uint32_t api_response_min = 100;
  std::uint32_t api_response_max = 1500;
  double mean_think_time = 0.2;
  double rtt = 0.03;
  WireConfig wire;
  std::uint64_t seed = 1;
};

/// Synthetic web-like (NonC2) connections.
SimulationResult simulate_web(const WebConfig& config, std::size_t flows);

/// Total bytes of every frame the connection puts on the wire.
std::uint64_t connection_wire_bytes(const SimConnection& conn, const WireConfig& wire);

/// Writes all connections as Ethernet/IPv4/TCP frames, time ordered.
void emit_pcap(const SimulationResult& result, const WireConfig& wire, const std::string& path,
               std::uint64_t payload_seed = 0);

/// JSON event log: one object per HTTP exchange.
std::string event_log_json(const SimulationResult& result);
void write_event_log(const SimulationResult& result, const std::string& path);

}  // namespace c2lab::sim
