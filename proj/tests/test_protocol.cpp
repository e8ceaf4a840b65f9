#include <cmath>
#include <random>

#include "doctest.h"
#include "c2lab/plan.hpp"
#include "c2lab/stuffing_protocol.hpp"

using namespace c2lab;
using namespace c2lab::proto;

TEST_CASE("padding header of 50 bytes adds exactly 50 bytes") {
  const auto h = StuffHeader::padding_of_length(50);
  CHECK(encode_header(h).size() == 50);
  CHECK(encode_header(h).rfind("X-Pad: ", 0) == 0);
  CHECK(encode_header(h).substr(48) == "\r\n");
  CHECK(min_padding_line() == 9);
  CHECK(encode_header(StuffHeader::padding_of_length(9)) == "X-Pad: \r\n");
  CHECK_THROWS_AS(StuffHeader::padding_of_length(8), Error);
}

TEST_CASE("NextSize 1072 round-trips") {
  const auto line = encode_header(StuffHeader::make_next_size(1072));
  CHECK(line == "X-Token: 1072\r\n");
  CHECK(decode_header(line).next_size == 1072);
}

TEST_CASE("connection state uses Keep-alive and close") {
  CHECK(encode_header(StuffHeader::make_conn_state(ConnState::KeepAlive)) == "Connection: Keep-alive\r\n");
  CHECK(encode_header(StuffHeader::make_conn_state(ConnState::Close)) == "Connection: close\r\n");
  CHECK(decode_header("connection: KEEP-ALIVE\r\n").conn_state == ConnState::KeepAlive);
}

TEST_CASE("malformed header lines are rejected") {
  for (const char* bad : {"X-Token: 1072", "X-Token: 1072\n", "X-Token:1072\r\n", "X-Token: 01\r\n", "X-Token: \r\n",
                          "X-Token: 12a\r\n", "X-Token: -1\r\n", "X-Token: 16777217\r\n", "Connection: maybe\r\n",
                          "Other: 1\r\n", ": 1\r\n", "X-Pad: a\rb\r\n", "X-Token: 1\r\nX-Pad: \r\n"}) {
    CAPTURE(bad);
    try {
      decode_header(bad);
      FAIL("accepted a malformed line");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParse);
    }
  }
  CHECK(decode_header("X-Token: 16777216\r\n").next_size == 16777216);
  CHECK(decode_header("X-Token: 0\r\n").next_size == 0);
  std::string bin = "X-Pad: ab";
  bin += '\x01';
  bin += "\r\n";
  CHECK_THROWS_AS(decode_header(bin), Error);
}

TEST_CASE("codec round-trip over generated headers") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> kind(0, 2), printable(0x20, 0x7e);
  std::size_t checked = 0;
  for (int i = 0; i < 12000; ++i) {
    StuffHeader h;
    switch (kind(rng)) {
      case 0: {
        std::string v(rng() % 300, ' ');
        for (auto& c : v) c = static_cast<char>(printable(rng));
        h = StuffHeader::make_padding(v);
        break;
      }
      case 1: h = StuffHeader::make_next_size(static_cast<std::uint32_t>(rng() % (kMaxHeaderValue + 1))); break;
      default: h = StuffHeader::make_conn_state(rng() % 2 ? ConnState::Close : ConnState::KeepAlive);
    }
    const std::string line = encode_header(h);
    CHECK(line.size() >= 4);
    CHECK(line.substr(line.size() - 2) == "\r\n");
    if (decode_header(line) != h) FAIL("round-trip mismatch: " << line);
    ++checked;
  }
  CHECK(checked >= 10000);
}

TEST_CASE("stuff amount follows the difference rule") {
  CHECK(stuff_amount(800, 300) == 500);
  CHECK(stuff_amount(300, 800) == 0);
  CHECK(stuff_amount(544, 544) == 0);
}

TEST_CASE("stuffing plaintext reaches the target record exactly") {
  TlsSizeModel m;
  // Framework target 1072 over 544 framed content: 528 bytes of framed growth.
  const std::uint32_t content = 520;  // 544-byte record
  REQUIRE(m.record_length(content) == 544);
  const auto s = stuffing_plaintext(m, 1072, content);
  CHECK(m.record_length(content + s) == 1072);
  CHECK(m.record_length(content + s) - m.record_length(content) == 528);
  CHECK(stuffing_plaintext(m, 300, 780) == 0);
  CHECK(stuffing_plaintext(m, 16400, 0) == 16384);
  // Oracle: exhaustive over grid targets and contents below them.
  for (std::uint32_t target = 32; target <= 4096; target += 16) {
    for (std::uint32_t c = 0; m.record_length(c) < target; c += 7) {
      const auto st = padding_line_bytes(stuffing_plaintext(m, target, c));
      if (m.record_length(c + st) != target) FAIL("target " << target << " content " << c);
    }
  }
}

TEST_CASE("framework plan of two records closes on its first step") {
  StuffingPlan p;
  p.connection_records = 2;
  int draws = 0;
  FrameworkProtocol fw(StuffingSide::TwoSide, {}, [&] {
    ++draws;
    return p;
  });
  const auto s1 = fw.step(152);
  CHECK(s1.close);
  const auto s2 = fw.step(152);
  CHECK(s2.close);
  CHECK(fw.closes_sent() == 2);
  CHECK(fw.plans_started() == 2);
}

TEST_CASE("plan of four records: keep-alive then close") {
  StuffingPlan p;
  p.connection_records = 4;
  p.targets = {{0, Direction::PayloadToFramework, 800}, {1, Direction::FrameworkToPayload, 1072},
               {2, Direction::PayloadToFramework, 640}, {3, Direction::FrameworkToPayload, 320}};
  FrameworkProtocol fw(StuffingSide::TwoSide, {}, [&] { return p; });
  const auto s1 = fw.step(152);
  CHECK_FALSE(s1.close);
  REQUIRE(s1.headers.size() == 2);
  CHECK(s1.headers[0].kind == HeaderKind::NextSize);
  CHECK(s1.headers[0].next_size == 640);
  CHECK(s1.headers[1].conn_state == ConnState::KeepAlive);
  TlsSizeModel m;
  CHECK(m.record_length(152 + s1.protocol_bytes + s1.stuffing_bytes) == 1072);
  const auto s2 = fw.step(152);
  CHECK(s2.close);
  // Close carries the next plan's first payload target.
  CHECK(s2.headers[0].next_size == 800);
  CHECK(s2.headers[1].conn_state == ConnState::Close);
  CHECK(fw.current_plan().first_size_next_conn == 800u);
}

TEST_CASE("payload applies NextSize and honours close") {
  PayloadProtocol pl(StuffingSide::TwoSide, {});
  CHECK(pl.request_stuffing(268) == 0);  // very first request: nothing announced yet
  const std::vector<StuffHeader> hs = {StuffHeader::make_next_size(800), StuffHeader::make_conn_state(ConnState::Close)};
  const auto [stuff, reuse] = pl.step(hs, 280);
  CHECK_FALSE(reuse);
  CHECK(TlsSizeModel{}.record_length(280 + stuff) == 800);
  // Next request has no NextSize: falls back to zero and is counted.
  CHECK(pl.request_stuffing(280) == 0);
  CHECK(pl.missing_next_size() == 1);
  // Framed content already above the target: no stuffing.
  pl.on_response({StuffHeader::make_next_size(300)});
  CHECK(pl.request_stuffing(800) == 0);
}

TEST_CASE("framework-only side never tells the payload a size") {
  StuffingPlan p;
  p.connection_records = 4;
  p.targets = {{1, Direction::FrameworkToPayload, 1072}, {3, Direction::FrameworkToPayload, 2000}};
  FrameworkProtocol fw(StuffingSide::FrameworkOnly, {}, [&] { return p; });
  PayloadProtocol pl(StuffingSide::FrameworkOnly, {});
  for (int i = 0; i < 10; ++i) {
    CHECK(pl.request_stuffing(268) == 0);
    const auto st = fw.step(152);
    for (const auto& h : st.headers) CHECK(h.kind != HeaderKind::NextSize);
    pl.on_response(st.headers);
  }
  CHECK(pl.missing_next_size() == 0);
}

TEST_CASE("framework without a plan source is a configuration error") {
  CHECK_THROWS_AS(FrameworkProtocol(StuffingSide::TwoSide, {}, PlanSource{}), Error);
}

TEST_CASE("lockstep: realized sizes equal targets wherever the target covers the content") {
  TlsSizeModel m;
  std::mt19937_64 rng(99);
  std::vector<StuffingPlan> plans;
  for (int i = 0; i < 1500; ++i) {
    StuffingPlan p;
    p.connection_records = 2 * (1 + rng() % 10);
    for (std::size_t pos = 0; pos < p.connection_records; ++pos) {
      if (rng() % 5 == 0) continue;
      const auto dir = pos % 2 == 0 ? Direction::PayloadToFramework : Direction::FrameworkToPayload;
      p.targets.push_back({pos, dir, static_cast<std::uint32_t>(16 * (1 + rng() % 1025))});
    }
    p.validate(m);
    plans.push_back(std::move(p));
  }

  for (StuffingSide side : {StuffingSide::TwoSide, StuffingSide::FrameworkOnly, StuffingSide::PayloadOnly}) {
    CAPTURE(to_string(side));
    std::size_t next = 0;
    FrameworkProtocol fw(side, m, [&] { return plans[next++ % plans.size()]; });
    PayloadProtocol pl(side, m);
    std::size_t checked = 0, mismatches = 0, closes = 0;
    std::uniform_int_distribution<std::uint32_t> content(0, 12000);
    for (std::size_t pi = 0; pi < plans.size(); ++pi) {
      const StuffingPlan& plan = plans[pi];
      for (std::size_t ex = 0; 2 * ex < plan.connection_records; ++ex) {
        const std::uint32_t req = content(rng), resp = content(rng);
        const std::uint32_t req_record = m.record_length(req + pl.request_stuffing(req));
        const auto st = fw.step(resp);
        const std::uint32_t resp_record = m.record_length(resp + st.protocol_bytes + st.stuffing_bytes);
        const bool reuse = pl.on_response(st.headers);
        CHECK(st.close == (2 * ex + 2 == plan.connection_records));
        CHECK(reuse == !st.close);
        closes += st.close;

        const auto req_target = plan.target_at(2 * ex, Direction::PayloadToFramework);
        // The session's very first request cannot be stuffed.
        if (stuffs_payload(side) && req_target && *req_target >= m.record_length(req) && !(pi == 0 && ex == 0)) {
          ++checked;
          mismatches += req_record != *req_target;
        }
        if (!stuffs_payload(side)) CHECK(req_record == m.record_length(req));
        const auto resp_target = plan.target_at(2 * ex + 1, Direction::FrameworkToPayload);
        const std::uint32_t resp_content = m.record_length(resp + st.protocol_bytes);
        if (stuffs_framework(side) && resp_target && *resp_target >= resp_content) {
          ++checked;
          mismatches += resp_record != *resp_target;
        }
        if (!stuffs_framework(side)) CHECK(resp_record == resp_content);
        // Stuffing never shrinks a record.
        CHECK(req_record >= m.record_length(req));
        CHECK(resp_record >= resp_content);
      }
    }
    CHECK(mismatches == 0);
    CHECK(checked > 1000);
    CHECK(closes == plans.size());
    CHECK(fw.closes_sent() == plans.size());
  }
}

TEST_CASE("sample_plan is uniform and seeded") {
  std::vector<StuffingPlan> lib(10);
  for (std::size_t i = 0; i < lib.size(); ++i) {
    lib[i].connection_records = 2;
    lib[i].source_sample = static_cast<std::int64_t>(i);
  }
  Rng a(5), b(5);
  CHECK(sample_plan(lib, a).source_sample == sample_plan(lib, b).source_sample);
  std::vector<std::size_t> counts(lib.size(), 0);
  Rng rng(17);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_plan(lib, rng).source_sample)];
  const double expected = n / 10.0, sigma = std::sqrt(n * 0.1 * 0.9);
  double chi2 = 0.0;
  for (auto c : counts) {
    CHECK(std::abs(static_cast<double>(c) - expected) <= 3 * sigma);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  CHECK(chi2 < 27.88);  // chi-square, 9 degrees of freedom, p = 0.001
  std::vector<StuffingPlan> one(1, lib[3]);
  CHECK(sample_plan(one, rng).source_sample == 3);
  CHECK_THROWS_AS(sample_plan({}, rng), Error);
}

TEST_CASE("plan library JSON round-trips") {
  StuffingPlan p;
  p.connection_records = 6;
  p.targets = {{0, Direction::PayloadToFramework, 800}, {3, Direction::FrameworkToPayload, 1072}};
  p.first_size_next_conn = 320;
  p.source_sample = 42;
  p.epsilon = 0.05;
  StuffingPlan q = p;
  q.first_size_next_conn.reset();
  const std::vector<StuffingPlan> lib = {p, q};
  CHECK(plans_from_json(plans_to_json(lib)) == lib);
  CHECK_THROWS_AS(plans_from_json("{"), Error);
  CHECK_THROWS_AS(plans_from_json("[{\"connection_records\": 0, \"targets\": []}]"), Error);
}

TEST_CASE("plan validation") {
  TlsSizeModel m;
  StuffingPlan p;
  CHECK_THROWS_AS(p.validate(m), Error);
  p.connection_records = 4;
  p.targets = {{2, Direction::PayloadToFramework, 800}, {1, Direction::FrameworkToPayload, 800}};
  CHECK_THROWS_AS(p.validate(m), Error);
  p.targets = {{5, Direction::PayloadToFramework, 800}};
  CHECK_THROWS_AS(p.validate(m), Error);
  p.targets = {{1, Direction::PayloadToFramework, 8}};
  CHECK_THROWS_AS(p.validate(m), Error);
}
