// Runs the full default experiment (twice) plus the property checks and prints
// one PASS/FAIL line per acceptance criterion. Exit status counts outcomes that
// differ from expectation (all PASS unless listed with --expect-fail).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "c2lab/adversarial.hpp"
#include "c2lab/experiment.hpp"
#include "c2lab/stuffing_protocol.hpp"
#include "c2lab/tls_extract.hpp"

using namespace c2lab;
namespace fs = std::filesystem;

namespace {

int unexpected = 0;
std::set<int> expected_failures;

// A criterion listed with --expect-fail still prints FAIL; only a change of outcome counts.
void verdict(int id, bool ok, const std::string& detail) {
  const bool known = expected_failures.count(id) > 0;
  std::printf("%s %d: %s%s\n", ok ? "PASS" : "FAIL", id, detail.c_str(),
              known ? (ok ? " (listed as expected to fail)" : " (known failure)") : "");
  std::fflush(stdout);
  unexpected += ok == known;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double rate(const harness::Report& r, const char* det, const char* prov) {
  const auto* row = r.find_evasion(det, prov);
  return row ? row->rate : std::nan("");
}

struct Run {
  harness::Report report;
  std::map<std::string, double> seconds;
  std::vector<StuffingPlan> best_plans;
  detector::DetectorParams aware;
};

Run full_run(const harness::ExperimentConfig& cfg, const fs::path& dir) {
  fs::remove_all(dir);
  harness::Experiment exp(cfg, dir.string());
  Run out;
  out.report = exp.run();
  harness::export_report(out.report, (dir / "report").string());
  out.seconds = exp.stage_seconds();
  out.best_plans = exp.best_plans();
  out.aware = *exp.aware();
  return out;
}

void check_gradient(const detector::DetectorParams& aware) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> size(16, 16400);
  double worst = 0.0;
  std::size_t cases = 0;
  for (; cases < 120; ++cases) {
    const std::size_t len = 1 + rng() % kFeatureLength;
    Eigen::VectorXd x(kFeatureLength);
    for (std::size_t i = 0; i < kFeatureLength; ++i) x(i) = (i < len ? size(rng) : kPadValue) / detector::kNormalizationScale;
    const Label y = cases % 2 ? Label::C2 : Label::NonC2;
    const Eigen::VectorXd g = detector::input_gradient(aware, x, y);
    Eigen::VectorXd fd(x.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      fd(i) = (detector::loss(aware, xp, y) - detector::loss(aware, xm, y)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max({g.norm(), fd.norm(), 1e-12}));
  }

  // Linear-softmax model: FGSM equals x + eps * sign(W^T (p - e_y)) with rounding off.
  std::size_t linear_mismatch = 0;
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 200; ++t) {
    auto p = detector::DetectorParams::zeros(std::vector<std::size_t>{20, 2});
    for (Eigen::Index r = 0; r < 2; ++r) {
      for (Eigen::Index c = 0; c < 20; ++c) p.layers[0].weight(r, c) = n(rng);
      p.layers[0].bias(r) = n(rng);
    }
    std::vector<double> raw(kFeatureLength);
    for (auto& v : raw) v = 16.0 * static_cast<double>(1 + rng() % 1025);
    const auto fv = FeatureVector::from_values(raw);
    const Label y = t % 2 ? Label::C2 : Label::NonC2;
    const Eigen::VectorXd xn = p.normalizer.apply(fv);
    const Eigen::Vector2d z = p.layers[0].weight * xn + p.layers[0].bias;
    const Eigen::Vector2d e = (z.array() - z.maxCoeff()).exp();
    Eigen::Vector2d delta = e / e.sum();
    delta(static_cast<Eigen::Index>(y)) -= 1.0;
    const Eigen::VectorXd grad = p.layers[0].weight.transpose() * delta;
    adv::FgsmConfig fc;
    fc.epsilon = 0.05;
    fc.project = false;
    const auto got = adv::fgsm(p, fv, y, fc);
    for (Eigen::Index i = 0; i < 20; ++i) {
      const double s = grad(i) > 0 ? 1.0 : grad(i) < 0 ? -1.0 : 0.0;
      linear_mismatch += got[static_cast<std::size_t>(i)] != std::max(p.normalizer.invert(xn(i) + fc.epsilon * s), 1.0);
    }
  }
  verdict(6, cases >= 100 && worst < 1e-4 && linear_mismatch == 0,
          fmt("max relative gradient error %.3g over %zu cases on the aware detector; linear FGSM mismatches %zu",
              worst, cases, linear_mismatch));
}

void check_pcap(const harness::ExperimentConfig& cfg, const std::vector<StuffingPlan>& plans, const fs::path& dir) {
  fs::create_directories(dir);
  std::size_t worst_mismatch = 0, min_conns = SIZE_MAX, split_records = 0;
  for (Provenance p : {Provenance::Regular, Provenance::Stuff50, Provenance::StuffRand, Provenance::Fixed3Req,
                       Provenance::RandReq, Provenance::AdvTwoSide}) {
    const auto result = harness::simulate_provenance(cfg, p, "eval", 1200, plans);
    const auto path = (dir / (std::string(to_string(p)) + ".pcap")).string();
    sim::emit_pcap(result, cfg.sim.wire, path, harness::named_seed(cfg, "pcap/eval"));
    std::vector<std::array<double, kFeatureLength>> a, b;
    for (const auto& t : tls::traces_from_pcap(path)) a.push_back(features_from_trace(t).values());
    for (const auto& f : result.features()) b.push_back(f.values());
    for (const auto& c : result.connections)
      for (const auto& r : c.records) split_records += r.length + 5 > cfg.sim.wire.mss;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t miss = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) miss += a[i] != b[i];
    worst_mismatch = std::max(worst_mismatch, miss);
    min_conns = std::min(min_conns, b.size());
  }
  fs::remove_all(dir);
  verdict(7, worst_mismatch == 0 && min_conns >= 1000 && split_records > 0,
          fmt("%zu feature mismatches; >= %zu connections per mode; %zu records spanning several segments",
              worst_mismatch, min_conns, split_records));
}

void check_lockstep() {
  TlsSizeModel m;
  std::mt19937_64 rng(8);
  std::vector<StuffingPlan> plans;
  for (int i = 0; i < 2000; ++i) {
    StuffingPlan p;
    p.connection_records = 2 * (1 + rng() % 10);
    for (std::size_t pos = 0; pos < p.connection_records; ++pos)
      if (rng() % 4)
        p.targets.push_back({pos, pos % 2 ? Direction::FrameworkToPayload : Direction::PayloadToFramework,
                             static_cast<std::uint32_t>(16 * (1 + rng() % 1025))});
    plans.push_back(std::move(p));
  }
  std::size_t next = 0, checked = 0, mismatch = 0, closes = 0;
  proto::FrameworkProtocol fw(StuffingSide::TwoSide, m, [&] { return plans[next++ % plans.size()]; });
  proto::PayloadProtocol pl(StuffingSide::TwoSide, m);
  std::uniform_int_distribution<std::uint32_t> content(0, 12000);
  for (std::size_t pi = 0; pi < plans.size(); ++pi) {
    for (std::size_t ex = 0; 2 * ex < plans[pi].connection_records; ++ex) {
      const std::uint32_t req = content(rng), resp = content(rng);
      const std::uint32_t req_rec = m.record_length(req + pl.request_stuffing(req));
      const auto st = fw.step(resp);
      const std::uint32_t resp_rec = m.record_length(resp + st.protocol_bytes + st.stuffing_bytes);
      pl.on_response(st.headers);
      closes += st.close;
      const auto rt = plans[pi].target_at(2 * ex, Direction::PayloadToFramework);
      if (rt && *rt >= m.record_length(req) && (pi || ex)) {
        ++checked;
        mismatch += req_rec != *rt;
      }
      const auto ft = plans[pi].target_at(2 * ex + 1, Direction::FrameworkToPayload);
      if (ft && *ft >= m.record_length(resp + st.protocol_bytes)) {
        ++checked;
        mismatch += resp_rec != *ft;
      }
    }
  }
  std::size_t codec_ok = 0;
  const int headers = 10000;
  for (int i = 0; i < headers; ++i) {
    proto::StuffHeader h;
    switch (rng() % 3) {
      case 0: h = proto::StuffHeader::make_padding(std::string(rng() % 400, static_cast<char>('!' + rng() % 90))); break;
      case 1: h = proto::StuffHeader::make_next_size(static_cast<std::uint32_t>(rng() % 16777217)); break;
      default: h = proto::StuffHeader::make_conn_state(rng() % 2 ? proto::ConnState::Close : proto::ConnState::KeepAlive);
    }
    codec_ok += proto::decode_header(proto::encode_header(h)) == h;
  }
  verdict(8, mismatch == 0 && closes == plans.size() && codec_ok == headers,
          fmt("%zu plans, %zu sized records checked, %zu mismatches, %zu closes; codec %zu/%d round-trips",
              plans.size(), checked, mismatch, closes, codec_ok, headers));
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  bool same = true;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    same = same && fs::exists(b / rel) && slurp(e.path()) == slurp(b / rel);
    ++files;
  }
  return same;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "c2lab_acceptance";
  harness::ExperimentConfig cfg;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--expect-fail" && i + 1 < argc)
      expected_failures.insert(std::stoi(argv[++i]));
    else if (a == "--config" && i + 1 < argc)
      cfg = harness::ExperimentConfig::load(argv[++i]);
    else if (a == "--work" && i + 1 < argc)
      work = argv[++i];
    else {
      std::fprintf(stderr, "usage: c2lab_acceptance [--work DIR] [--config FILE] [--expect-fail N]...\n");
      return 2;
    }
  }

  const Run run = full_run(cfg, work / "run_a");
  const auto& r = run.report;

  const auto* base_acc = r.find_accuracy("baseline");
  const double tm1_s = run.seconds.count("threat_model_1") ? run.seconds.at("threat_model_1") : 1e9;
  verdict(1, base_acc && base_acc->accuracy >= 0.97 && cfg.train_per_mode >= 5000 && tm1_s <= 900,
          fmt("baseline held-out accuracy %.4f on %zu flows, trained on %zu balanced flows in %.0f s",
              base_acc ? base_acc->accuracy : 0.0, base_acc ? base_acc->total : 0, 2 * cfg.train_per_mode, tm1_s));

  const double s50 = rate(r, "baseline", "stuff50"), srand = rate(r, "baseline", "stuffRand");
  verdict(2, s50 <= 0.20 && srand >= 0.90, fmt("evasion stuff50 %.4f, stuffRand %.4f", s50, srand));

  const double f3 = rate(r, "baseline", "fixed3Req"), rr = rate(r, "baseline", "randReq");
  verdict(3, f3 >= 0.95 && rr >= 0.95, fmt("evasion fixed3Req %.4f, randReq %.4f", f3, rr));

  const auto* aware_acc = r.find_accuracy("aware");
  const double rr2 = rate(r, "aware", "randReq");
  verdict(4, aware_acc && aware_acc->accuracy >= 0.95 && rr2 <= 0.10,
          fmt("aware held-out accuracy %.4f, randReq evasion %.4f", aware_acc ? aware_acc->accuracy : 0.0, rr2));

  {
    const harness::EpsilonRow* best = nullptr;
    for (const auto& row : r.epsilon_sweep)
      if (r.best_epsilon && row.epsilon == *r.best_epsilon) best = &row;
    const bool ok = best && best->two_side >= best->framework && best->framework >= best->payload + 0.20 &&
                    best->framework >= 0.70;
    verdict(5, ok,
            best ? fmt("best eps %g: two-side %.4f, framework-only %.4f, payload-only %.4f", best->epsilon,
                       best->two_side, best->framework, best->payload)
                 : std::string("no epsilon sweep"));
  }

  check_gradient(run.aware);
  check_pcap(cfg, run.best_plans, work / "pcap");
  check_lockstep();

  {
    const auto& o = r.overhead;
    const double appdata = static_cast<double>(o.adversarial.appdata_bytes) / std::max<double>(1, o.regular.appdata_bytes);
    // Adversarial runs need several times fewer connections: regular / adversarial.
    const double conns = static_cast<double>(o.regular.connections) / std::max<double>(1, o.adversarial.connections);
    const double dt = std::abs(o.adversarial.runtime - o.regular.runtime);
    const bool ok = !o.empty() && appdata >= 2.0 && o.adversarial.wire_bytes < o.regular.wire_bytes && conns >= 2.5 &&
                    conns <= 6.0 && dt <= 1.0;
    verdict(9, ok,
            fmt("appdata ratio %.3f, wire bytes %llu vs %llu, regular/adversarial connections %.3f, runtime %.3f s vs %.3f s", appdata,
                static_cast<unsigned long long>(o.adversarial.wire_bytes),
                static_cast<unsigned long long>(o.regular.wire_bytes), conns, o.adversarial.runtime, o.regular.runtime));
  }

  {
    const Run again = full_run(cfg, work / "run_b");
    std::size_t files = 0;
    const bool same = again.report.to_json() == r.to_json() && same_tree(work / "run_a" / "report", work / "run_b" / "report", files) &&
                      same_tree(work / "run_a" / "datasets", work / "run_b" / "datasets", files);
    verdict(10, same && files > 0, fmt("%zu report and dataset files compared across two runs with seed %llu", files,
                                       static_cast<unsigned long long>(cfg.seed)));
  }
  return unexpected;
}
