// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtsecom/classifier.h"
#include "mtsecom/harness.h"
#include "mtsecom/rcm.h"
#include "mtsecom/telemetry.h"
#include "mtsecom/threat.h"
#include "mtsecom/trust.h"
#include "oracles.h"

namespace fs = std::filesystem;
using namespace mtsecom;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

Outcome trust_properties() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int trials = 100000;
  long violations = 0;
  for (int i = 0; i < trials; ++i) {
    trust::TrustParams p;
    p.lambda_decay = 0.1 + 4.0 * unit(rng);
    p.kappa1 = unit(rng);
    p.kappa2 = 1.0 - p.kappa1;
    p.eta = unit(rng);
    p.aggregator = rng() % 2 ? trust::Aggregator::median()
                             : trust::Aggregator::trimmed_mean(0.05 + 0.4 * unit(rng));
    std::vector<double> prev(4), curr(4);
    for (auto& x : prev) x = unit(rng);
    for (auto& x : curr) x = unit(rng);
    trust::ContextFactors f;
    f.err_rate = unit(rng);
    f.report_delay = 10.0 * unit(rng);
    f.quota = 0.1 + unit(rng);
    f.usage = 2.0 * f.quota * unit(rng);
    f.pdr = unit(rng);
    f.jitter = unit(rng);
    f.leakage = unit(rng);
    std::vector<trust::PeerFeedback> fb(rng() % 10);
    for (auto& r : fb) r = {0, unit(rng), 5.0 * unit(rng), unit(rng)};

    const double t = trust::temporal_trust(prev, curr, p);
    const double c = trust::contextual_trust(f);
    const double fed = trust::federated_trust(fb, t, c, p);
    trust::TrustState s;
    s.temporal = t;
    s.contextual = c;
    s.federated = fed;
    s.gammas = trust::adapt_weights({unit(rng), unit(rng), unit(rng)}, {0.4, 0.3, 0.3},
                                    p.controller_gain);
    const double fused = trust::fuse_trust(s);
    const double lo = std::min({t, c, fed}), hi = std::max({t, c, fed});
    const bool ok = t > 0.0 && t <= 1.0 && c > 0.0 && c <= trust::logistic(1.0) &&
                    fed >= 0.0 && fed <= p.kappa1 * t + p.kappa2 * c &&
                    fused >= lo - 1e-12 && fused <= hi + 1e-12;
    if (!ok) ++violations;
  }
  const double elapsed = seconds_since(start);
  return {violations == 0 && elapsed < 30.0,
          fmt("%.0f inputs, %.0f violations, %.2f s", trials, static_cast<double>(violations),
              elapsed)};
}

Outcome aggregation_oracle() {
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  long byzantine_violations = 0;
  const int lists = 10000;
  for (int i = 0; i < lists; ++i) {
    std::vector<double> v(1 + rng() % 25);
    for (auto& x : v) x = unit(rng);
    worst = std::max(worst, std::abs(trust::robust_aggregate(v, trust::Aggregator::median()) -
                                     oracle::median(v)));
    for (int pct : {10, 20, 30}) {
      const double got = trust::robust_aggregate(v, trust::Aggregator::trimmed_mean(pct / 100.0));
      worst = std::max(worst, std::abs(got - oracle::trimmed_mean(v, pct)));
    }
    // Honest values plus fewer colluders at the extremes.
    const std::size_t n = v.size();
    const std::size_t k = rng() % n;
    auto all = v;
    for (std::size_t j = 0; j < k; ++j) all.push_back(rng() % 2 ? 1.0 : 0.0);
    const double m = trust::robust_aggregate(all, trust::Aggregator::median());
    if (m < *std::min_element(v.begin(), v.end()) || m > *std::max_element(v.begin(), v.end())) {
      ++byzantine_violations;
    }
  }
  return {worst <= 1e-12 && byzantine_violations == 0,
          fmt("max |diff| %.3g over %.0f lists, %.0f byzantine violations", worst, lists,
              static_cast<double>(byzantine_violations))};
}

Outcome mad_exactness() {
  std::mt19937_64 rng(1003);
  std::exponential_distribution<double> score(2.0);
  double worst = 0.0;
  const int lists = 10000;
  for (int i = 0; i < lists; ++i) {
    std::vector<double> v(1 + rng() % 50);
    for (auto& x : v) x = score(rng);
    worst = std::max(worst, std::abs(classifier::mad_threshold(v) - oracle::mad_threshold(v)));
  }
  // MAD = 0: constant lists, singletons and majority-constant lists.
  const std::vector<std::vector<double>> degenerate = {
      {0.3}, {2.0, 2.0, 2.0, 2.0}, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 5.0, 9.0}};
  for (const auto& v : degenerate) {
    worst = std::max(worst, std::abs(classifier::mad_threshold(v) - oracle::mad_threshold(v)));
  }
  const std::vector<double> hand = {1, 2, 3, 4, 100};
  worst = std::max(worst, std::abs(classifier::mad_threshold(hand) - 6.0));
  return {worst <= 1e-12, fmt("max |diff| %.3g over %.0f lists + 5 fixtures", worst, lists)};
}

Outcome gradient_check() {
  const auto start = Clock::now();
  classifier::ClassifierConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.seq_len = 10;
  c.n_features = 12;
  std::mt19937_64 rng(1004);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  const int draws = 100;
  for (int draw = 0; draw < draws; ++draw) {
    classifier::EncoderModel model(c);
    model.init(rng());
    std::vector<classifier::LabeledWindow> batch;
    for (int i = 0; i < 4; ++i) {
      classifier::Matrix x(c.seq_len, c.n_features);
      for (int r = 0; r < x.rows(); ++r) {
        for (int k = 0; k < x.cols(); ++k) x(r, k) = normal(rng);
      }
      batch.push_back({i, x, static_cast<int>(rng() % 2)});
    }
    std::vector<double> grad;
    model.loss(batch, &grad);
    auto& p = model.parameters();
    std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
    const double h = 1e-5;
    for (int k = 0; k < 50; ++k) {
      const std::size_t i = pick(rng);
      const double saved = p[i];
      p[i] = saved + h;
      const double up = model.loss(batch);
      p[i] = saved - h;
      const double down = model.loss(batch);
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max(std::abs(numeric), std::abs(grad[i]));
      if (scale < 1e-7) continue;
      worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-4 && elapsed < 120.0,
          fmt("max relative error %.3g over %.0f draws, %.2f s", worst, draws, elapsed)};
}

Outcome desk_classification() {
  const auto start = Clock::now();
  const harness::RunConfig config;
  const auto report = harness::run_simulation(config);
  const double elapsed = seconds_since(start);
  return {report.metrics.accuracy >= 0.85 && report.metrics.hamming_loss <= 0.15 &&
              elapsed < 300.0,
          fmt("acc %.4f, hl %.4f over %.0f held-out windows, %.1f s", report.metrics.accuracy,
              report.metrics.hamming_loss, static_cast<double>(report.evaluated), elapsed)};
}

Outcome sweep_robustness() {
  const harness::RunConfig config;
  const std::vector<double> rates = {0.05, 0.25, 0.5};
  const auto reports = harness::sweep(config, rates);
  const double a05 = reports[0].metrics.accuracy;
  const double a25 = reports[1].metrics.accuracy;
  const double a50 = reports[2].metrics.accuracy;
  const double drop_pp = 100.0 * (a05 - a50);
  return {drop_pp <= 15.0,
          fmt("acc %.4f / %.4f / %.4f, drop %.2f pp", a05, a25, a50, drop_pp)};
}

Outcome rcm_oracle_gap() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1007);
  std::uniform_real_distribution<double> rel(0.3, 1.0), lat(5.0, 250.0);
  const rcm::RcmParams params;
  int graphs = 0, drawn = 0, infeasible_outputs = 0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  while (graphs < 50) {
    ++drawn;
    rcm::CommGraph g;
    const int n = 3 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) g.nodes.push_back(i);
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const std::size_t m = std::min<std::size_t>(pairs.size(), 3 + rng() % 10);
    for (std::size_t k = 0; k < m; ++k) {
      g.edges.push_back(rcm::make_edge(pairs[k].first, pairs[k].second, rel(rng), lat(rng)));
    }
    std::map<int, int> decisions;
    for (int v : g.nodes) decisions[v] = rng() % 6 == 0 ? 0 : 1;
    const auto pruned = rcm::prune_untrusted(g, decisions);
    if (pruned.nodes.size() < 2) continue;
    // Instances without any feasible subset admit no compliant answer.
    const auto best = oracle::best_feasible_subset(pruned, params);
    if (!best.any_feasible) continue;
    ++graphs;

    std::map<int, double> trust;
    for (int v : pruned.nodes) trust[v] = rel(rng);
    const auto greedy = rcm::greedy_select(pruned, params);
    const auto policy = rcm::policy_improve(pruned, greedy.edges, params, trust, 50, rng());
    const auto check = rcm::feasible(policy.edges, pruned.nodes, pruned.malicious, params);
    bool incident = false;
    for (const auto& e : policy.edges) {
      incident |= pruned.malicious.contains(e.a) || pruned.malicious.contains(e.b);
    }
    if (!check.ok || incident || check.mean_latency > params.l_max ||
        check.resilience_value < params.tau_res) {
      ++infeasible_outputs;
    }
    const double obj = rcm::link_objective(policy.edges, params);
    // Shortfall relative to the optimum's magnitude; equals obj / best when
    // the optimum is positive.
    const double ratio = best.objective != 0.0
                             ? 1.0 - (best.objective - obj) / std::abs(best.objective)
                             : (obj >= 0.0 ? 1.0 : 0.0);
    worst_ratio = std::min(worst_ratio, ratio);
  }
  const double elapsed = seconds_since(start);
  return {worst_ratio >= 0.9 && infeasible_outputs == 0 && elapsed < 60.0,
          fmt("worst objective ratio %.4f, %.0f infeasible outputs, %.0f graphs drawn, %.2f s",
              worst_ratio, static_cast<double>(infeasible_outputs), drawn, elapsed)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism() {
  const auto dir = fs::temp_directory_path();
  const auto a = dir / "mtsecom_accept_a.csv", b = dir / "mtsecom_accept_b.csv";
  fs::remove(a);
  fs::remove(b);
  const std::string cli = MTSECOM_CLI_PATH;
  const int s1 = std::system((cli + " run --out " + a.string() + " --format csv").c_str());
  const int s2 = std::system((cli + " run --out " + b.string() + " --format csv").c_str());
  const bool exited = WIFEXITED(s1) && WEXITSTATUS(s1) == 0 && WIFEXITED(s2) &&
                      WEXITSTATUS(s2) == 0;
  const std::string ta = slurp(a), tb = slurp(b);
  return {exited && !ta.empty() && ta == tb,
          fmt("exit codes %.0f/%.0f, %.0f bytes, identical=%.0f",
              WIFEXITED(s1) ? WEXITSTATUS(s1) : -1.0, WIFEXITED(s2) ? WEXITSTATUS(s2) : -1.0,
              static_cast<double>(ta.size()), ta == tb ? 1.0 : 0.0)};
}

Outcome injection_statistics() {
  const int vns = 100, steps = 1000;
  const auto topo = telemetry::build_fleet(telemetry::synthesize_traces(vns, 12, 42), 30, 42);
  std::vector<int> eligible(vns);
  std::iota(eligible.begin(), eligible.end(), 0);
  const auto r = threat::inject_attacks(steps, 0.05, 1, 42, topo, eligible, {});
  const double events = static_cast<double>(r.events.size());
  const double band = 3.0 * std::sqrt(1e5 * 0.05 * 0.95);
  return {std::abs(events - 5000.0) <= band,
          fmt("%.0f events over 1e5 VN-timesteps (band 5000 +/- %.1f)", events, band)};
}

Outcome complexity_probes() {
  // Trust update: touches against monitored-factor count.
  std::vector<double> ms, touches;
  for (int m = 4; m <= 32; m += 4) {
    trust::TrustParams p;
    p.signal_weights.assign(m, 1.0 / m);
    const std::vector<double> prev(m, 0.8), curr(m, 0.6);
    const std::vector<trust::PeerFeedback> fb = {{1, 0.7, 0.5, 0.01}, {2, 0.6, 1.0, 0.02}};
    trust::TrustState s;
    OpCounter counter;
    trust::update_trust(s, {prev, curr, {}, fb, {0.1, 0.1, 0.1}}, p, &counter);
    ms.push_back(m);
    touches.push_back(static_cast<double>(counter.touches));
  }
  const double n = static_cast<double>(ms.size());
  const double mx = std::accumulate(ms.begin(), ms.end(), 0.0) / n;
  const double my = std::accumulate(touches.begin(), touches.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    sxy += (ms[i] - mx) * (touches[i] - my);
    sxx += (ms[i] - mx) * (ms[i] - mx);
    syy += (touches[i] - my) * (touches[i] - my);
  }
  const double slope = sxy / sxx;
  const double r2 = sxy * sxy / (sxx * syy);

  // Greedy: touches against |E'| log |V'| on pruned complete graphs.
  std::vector<double> ratios;
  for (int v : {10, 50, 100, 200}) {
    std::mt19937_64 rng(2000 + v);
    std::uniform_real_distribution<double> rel(0.3, 1.0), lat(5.0, 250.0);
    rcm::CommGraph g;
    const int total = v + v / 5;
    for (int i = 0; i < total; ++i) g.nodes.push_back(i);
    for (int i = 0; i < total; ++i) {
      for (int j = i + 1; j < total; ++j) g.edges.push_back(rcm::make_edge(i, j, rel(rng), lat(rng)));
    }
    std::map<int, int> decisions;
    for (int i = 0; i < total; ++i) decisions[i] = i < v ? 1 : 0;
    const auto pruned = rcm::prune_untrusted(g, decisions);
    OpCounter counter;
    rcm::greedy_select(pruned, rcm::RcmParams{}, &counter);
    const double e = static_cast<double>(pruned.edges.size());
    ratios.push_back(static_cast<double>(counter.touches) /
                     (e * std::log2(static_cast<double>(pruned.nodes.size()))));
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  const double spread = *hi / *lo;
  return {r2 > 0.999999 && slope > 0.0 && spread <= 3.0,
          fmt("trust touches slope %.3f (r2 %.7f); greedy touches/(E log V) in [%.3f, %.3f]",
              slope, r2, *lo, *hi)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "trust property suite", trust_properties},
      {2, "robust aggregation oracle", aggregation_oracle},
      {3, "MAD threshold exactness", mad_exactness},
      {4, "gradient check", gradient_check},
      {5, "desk-scale classification", desk_classification},
      {6, "attack sweep robustness", sweep_robustness},
      {7, "RCM oracle gap", rcm_oracle_gap},
      {8, "CLI determinism", cli_determinism},
      {9, "injection statistics", injection_statistics},
      {10, "complexity probes", complexity_probes},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %2d %-28s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
