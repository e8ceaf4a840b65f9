#include "c2lab/plan.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace c2lab {

using nlohmann::json;

std::string_view to_string(StuffingSide s) {
  switch (s) {
    case StuffingSide::FrameworkOnly: return "framework";
    case StuffingSide::PayloadOnly: return "payload";
    case StuffingSide::TwoSide: return "two_side";
  }
  return "unknown";
}

StuffingSide stuffing_side_from_string(std::string_view s) {
  if (s == "framework") return StuffingSide::FrameworkOnly;
  if (s == "payload") return StuffingSide::PayloadOnly;
  if (s == "two_side") return StuffingSide::TwoSide;
  throw Error(ErrorCode::kParse, "unknown stuffing side '" + std::string(s) + "'");
}

std::optional<std::uint32_t> StuffingPlan::target_at(std::size_t position, Direction direction) const {
  auto it = std::lower_bound(targets.begin(), targets.end(), position,
                             [](const PlanTarget& t, std::size_t p) { return t.position < p; });
  if (it == targets.end() || it->position != position || it->direction != direction) return std::nullopt;
  return it->size;
}

void StuffingPlan::validate(const TlsSizeModel& model) const {
  if (connection_records == 0) throw Error(ErrorCode::kInvalidArgument, "plan spans no records");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (i > 0 && targets[i].position <= targets[i - 1].position)
      throw Error(ErrorCode::kInvalidArgument, "plan positions must be strictly increasing");
    if (targets[i].position >= connection_records)
      throw Error(ErrorCode::kInvalidArgument, "plan position beyond connection length");
    if (targets[i].size < model.min_record_length())
      throw Error(ErrorCode::kInvalidArgument, "plan target below the minimum record length");
  }
  if (first_size_next_conn && *first_size_next_conn < model.min_record_length())
    throw Error(ErrorCode::kInvalidArgument, "carry-over size below the minimum record length");
}

std::uint32_t stuff_amount(std::uint32_t target, std::uint32_t content) { return target > content ? target - content : 0; }

std::uint32_t stuffing_plaintext(const TlsSizeModel& model, std::uint32_t target, std::uint32_t content_plaintext) {
  if (stuff_amount(target, model.record_length(content_plaintext)) == 0) return 0;
  const std::uint32_t fill = std::min(model.max_plaintext_for(target), kTlsMaxPlaintext);
  return fill > content_plaintext ? fill - content_plaintext : 0;
}

const StuffingPlan& sample_plan(std::span<const StuffingPlan> library, Rng& rng) {
  if (library.empty()) throw Error(ErrorCode::kInvalidArgument, "empty plan library");
  std::uniform_int_distribution<std::size_t> pick(0, library.size() - 1);
  return library[pick(rng)];
}

namespace {

json plan_to_json(const StuffingPlan& p) {
  json targets = json::array();
  for (const auto& t : p.targets)
    targets.push_back({{"position", t.position}, {"direction", to_string(t.direction)}, {"size", t.size}});
  json j = {{"connection_records", p.connection_records},
            {"targets", std::move(targets)},
            {"source_sample", p.source_sample},
            {"epsilon", p.epsilon}};
  j["first_size_next_conn"] = p.first_size_next_conn ? json(*p.first_size_next_conn) : json(nullptr);
  return j;
}

Direction direction_from_string(const std::string& s) {
  if (s == "payload_to_framework") return Direction::PayloadToFramework;
  if (s == "framework_to_payload") return Direction::FrameworkToPayload;
  throw Error(ErrorCode::kParse, "unknown direction '" + s + "'");
}

}  // namespace

std::string plans_to_json(std::span<const StuffingPlan> plans) {
  json arr = json::array();
  for (const auto& p : plans) arr.push_back(plan_to_json(p));
  return arr.dump(1) + "\n";
}

std::vector<StuffingPlan> plans_from_json(const std::string& text) {
  std::vector<StuffingPlan> out;
  try {
    const json arr = json::parse(text);
    if (!arr.is_array()) throw Error(ErrorCode::kParse, "plan library must be a JSON array");
    for (const auto& j : arr) {
      StuffingPlan p;
      p.connection_records = j.at("connection_records").get<std::size_t>();
      for (const auto& t : j.at("targets"))
        p.targets.push_back({t.at("position").get<std::size_t>(),
                             direction_from_string(t.at("direction").get<std::string>()),
                             t.at("size").get<std::uint32_t>()});
      if (j.contains("first_size_next_conn") && !j["first_size_next_conn"].is_null())
        p.first_size_next_conn = j["first_size_next_conn"].get<std::uint32_t>();
      p.source_sample = j.value("source_sample", std::int64_t{-1});
      p.epsilon = j.value("epsilon", 0.0);
      // Size limits depend on the TLS model and are checked where the plan is used.
      if (p.connection_records == 0) throw Error(ErrorCode::kParse, "plan spans no records");
      for (std::size_t i = 0; i < p.targets.size(); ++i)
        if (p.targets[i].position >= p.connection_records || (i > 0 && p.targets[i].position <= p.targets[i - 1].position))
          throw Error(ErrorCode::kParse, "plan target positions out of order or range");
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("plan library: ") + e.what());
  }
  return out;
}

void write_plan_library(const std::string& path, std::span<const StuffingPlan> plans) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << plans_to_json(plans);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

std::vector<StuffingPlan> read_plan_library(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return plans_from_json(ss.str());
}

}  // namespace c2lab
