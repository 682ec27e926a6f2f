#include "mtsecom/trust.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.h"

using namespace mtsecom;
using namespace mtsecom::trust;

namespace {

ContextFactors worst_case() {
  ContextFactors f;
  f.err_rate = 1.0;
  f.report_delay = 1e9;
  f.usage = 2.0;
  f.quota = 1.0;
  f.pdr = 0.0;
  f.leakage = 1.0;
  return f;
}

ContextFactors best_case() {
  ContextFactors f;
  f.err_rate = 0.0;
  f.report_delay = 0.0;
  f.usage = 0.5;
  f.pdr = 1.0;
  f.jitter = 0.0;
  f.leakage = 0.0;
  return f;
}

}  // namespace

TEST(TemporalTrust, UnchangedSignalsGiveFullTrust) {
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.6};
  EXPECT_EQ(temporal_trust(s, s, TrustParams{}), 1.0);
}

TEST(TemporalTrust, DecayExamples) {
  TrustParams p;
  p.lambda_decay = 1.0;
  const double ln2 = std::numbers::ln2;
  const std::vector<double> prev = {1.0, 1.0, 1.0, 1.0};
  std::vector<double> curr(4, 1.0 - ln2);
  EXPECT_NEAR(temporal_trust(prev, curr, p), 0.5, 1e-12);

  p.lambda_decay = 0.5;
  p.signal_weights = {1.0, 0.0, 0.0, 0.0};
  const std::vector<double> a = {2.0, 0.0, 0.0, 0.0}, b = {0.0, 0.0, 0.0, 0.0};
  EXPECT_NEAR(temporal_trust(a, b, p), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(temporal_trust(a, b, p), 0.36788, 1e-5);
}

TEST(TemporalTrust, ImprovementIsClippedToOne) {
  const std::vector<double> prev = {0.2, 0.2, 0.2, 0.2}, curr = {0.9, 0.9, 0.9, 0.9};
  EXPECT_EQ(temporal_trust(prev, curr, TrustParams{}), 1.0);
}

TEST(TemporalTrust, StrictlyDecreasingInDecline) {
  const TrustParams p;
  const std::vector<double> prev = {1.0, 1.0, 1.0, 1.0};
  double last = 2.0;
  for (double drop = 0.0; drop <= 1.0; drop += 0.05) {
    const std::vector<double> curr(4, 1.0 - drop);
    const double t = temporal_trust(prev, curr, p);
    EXPECT_LT(t, last);
    EXPECT_GT(t, 0.0);
    last = t;
  }
}

TEST(TemporalTrust, RejectsWidthMismatch) {
  const std::vector<double> a = {1.0, 1.0}, b = {1.0, 1.0, 1.0, 1.0};
  EXPECT_THROW(temporal_trust(a, b, TrustParams{}), std::invalid_argument);
}

TEST(ContextualTrust, Examples) {
  EXPECT_NEAR(contextual_trust(worst_case()), 0.5, 1e-12);
  EXPECT_NEAR(contextual_trust(best_case()), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(contextual_trust(best_case()), 0.73106, 1e-5);
  auto f = best_case();
  f.err_rate = 1.0;
  EXPECT_EQ(context_factor_values(f)[0], 0.0);
}

TEST(ContextualTrust, NonDecreasingInEachFactor) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    ContextFactors f;
    f.err_rate = unit(rng);
    f.report_delay = 3.0 * unit(rng);
    f.usage = 2.0 * unit(rng);
    f.pdr = unit(rng);
    f.jitter = unit(rng);
    f.leakage = unit(rng);
    const double base = contextual_trust(f);
    EXPECT_GT(base, 0.0);
    EXPECT_LE(base, logistic(1.0) + 1e-15);
    // Each change improves exactly one factor.
    auto g = f;
    g.err_rate *= 0.5;
    EXPECT_GE(contextual_trust(g), base);
    g = f;
    g.report_delay *= 0.5;
    EXPECT_GE(contextual_trust(g), base);
    g = f;
    g.usage *= 0.5;
    EXPECT_GE(contextual_trust(g), base);
    g = f;
    g.pdr = std::min(1.0, f.pdr + 0.1);
    EXPECT_GE(contextual_trust(g), base);
    g = f;
    g.leakage *= 0.5;
    EXPECT_GE(contextual_trust(g), base);
  }
}

TEST(Credibility, Examples) {
  TrustParams p;
  p.eta = 1.0;
  EXPECT_DOUBLE_EQ(credibility_weight({0, 0.5, 0.0, 3.0}, p), 1.0);
  p.eta = 0.0;
  EXPECT_DOUBLE_EQ(credibility_weight({0, 0.5, 7.0, 0.0}, p), 1.0);
  p.eta = 0.5;
  p.rho = 1.0;
  EXPECT_NEAR(credibility_weight({0, 0.5, std::numbers::ln2, 1.0}, p), 0.5, 1e-12);
}

TEST(RobustAggregate, Examples) {
  const std::vector<double> single = {0.37};
  EXPECT_EQ(robust_aggregate(single, Aggregator::median()), 0.37);
  EXPECT_EQ(robust_aggregate(single, Aggregator::trimmed_mean(0.2)), 0.37);
  const std::vector<double> five = {0.1, 0.7, 0.7, 0.7, 1.0};
  EXPECT_NEAR(robust_aggregate(five, Aggregator::trimmed_mean(0.2)), 0.7, 1e-12);
  const std::vector<double> three = {0.2, 0.9, 0.9};
  EXPECT_EQ(robust_aggregate(three, Aggregator::median()), 0.9);
}

TEST(RobustAggregate, Errors) {
  const std::vector<double> none, some = {0.1, 0.2};
  EXPECT_THROW(robust_aggregate(none, Aggregator::median()), std::invalid_argument);
  EXPECT_THROW(robust_aggregate(some, Aggregator::trimmed_mean(0.5)), std::invalid_argument);
  EXPECT_THROW(robust_aggregate(some, Aggregator::trimmed_mean(0.0)), std::invalid_argument);
}

TEST(RobustAggregate, MatchesBruteForce) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(1 + rng() % 25);
    for (auto& x : v) x = unit(rng);
    EXPECT_NEAR(robust_aggregate(v, Aggregator::median()), oracle::median(v), 1e-12);
    for (int pct : {10, 20, 30}) {
      EXPECT_NEAR(robust_aggregate(v, Aggregator::trimmed_mean(pct / 100.0)),
                  oracle::trimmed_mean(v, pct), 1e-12);
    }
  }
}

TEST(RobustAggregate, ByzantineMedian) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    const std::size_t k = rng() % n;
    std::vector<double> honest(n);
    for (auto& x : honest) x = unit(rng);
    auto all = honest;
    for (std::size_t i = 0; i < k; ++i) all.push_back(rng() % 2 ? 1.0 : 0.0);
    const double m = robust_aggregate(all, Aggregator::median());
    EXPECT_GE(m, *std::min_element(honest.begin(), honest.end()) - 1e-12);
    EXPECT_LE(m, *std::max_element(honest.begin(), honest.end()) + 1e-12);
  }
}

TEST(FederatedTrust, CapExamples) {
  TrustParams p;
  p.aggregator = Aggregator::median();
  p.eta = 1.0;
  const std::vector<PeerFeedback> high = {{1, 0.95, 0.0, 0.0}};
  EXPECT_NEAR(federated_trust(high, 0.6, 0.4, p), 0.5, 1e-12);
  const std::vector<PeerFeedback> low = {{1, 0.3, 0.0, 0.0}};
  EXPECT_NEAR(federated_trust(low, 0.6, 0.4, p), 0.3, 1e-12);
  EXPECT_NEAR(federated_trust({}, 0.6, 0.4, p), 0.5, 1e-12);
}

TEST(FederatedTrust, FivePeerFixtureMatchesOracle) {
  TrustParams p;
  p.aggregator = Aggregator::trimmed_mean(0.2);
  const std::vector<PeerFeedback> fb = {{1, 0.9, 0.1, 0.01},
                                        {2, 0.8, 0.5, 0.02},
                                        {3, 0.2, 2.0, 0.30},
                                        {4, 0.85, 0.0, 0.00},
                                        {5, 1.0, 1.0, 0.05}};
  std::vector<double> weighted;
  for (const auto& f : fb) {
    const double w = 0.5 * std::exp(-0.5 * f.age) + 0.5 / (1.0 + f.reporter_variance);
    weighted.push_back(w * f.score);
  }
  const double temporal = 0.95, contextual = 0.7;
  const double expected =
      std::min(oracle::trimmed_mean(weighted, 20), 0.5 * temporal + 0.5 * contextual);
  EXPECT_NEAR(federated_trust(fb, temporal, contextual, p), expected, 1e-12);
}

TEST(FederatedTrust, CapDominance) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TrustParams p;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<PeerFeedback> fb(rng() % 8);
    for (auto& f : fb) f = {0, unit(rng), 5.0 * unit(rng), unit(rng)};
    const double t = unit(rng), c = 0.5 + 0.23 * unit(rng);
    const double out = federated_trust(fb, t, c, p);
    EXPECT_GE(out, 0.0);
    EXPECT_LE(out, 0.5 * t + 0.5 * c + 1e-15);
  }
}

TEST(Fuse, Examples) {
  TrustState s;
  s.temporal = 0.9;
  s.contextual = 0.6;
  s.federated = 0.3;
  s.gammas = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  EXPECT_NEAR(fuse_trust(s), 0.6, 1e-12);
  s.gammas = {1.0, 0.0, 0.0};
  EXPECT_EQ(fuse_trust(s), 0.9);
  s.temporal = 0.8;
  s.contextual = 0.6;
  s.federated = 0.4;
  s.gammas = {0.5, 0.3, 0.2};
  EXPECT_NEAR(fuse_trust(s), 0.66, 1e-12);
  s.gammas = {0.5, 0.5, 0.5};
  EXPECT_THROW(fuse_trust(s), std::invalid_argument);
}

TEST(Fuse, Convexity) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    TrustState s;
    s.temporal = unit(rng);
    s.contextual = unit(rng);
    s.federated = unit(rng);
    const double a = unit(rng), b = unit(rng), c = unit(rng);
    s.gammas = {a / (a + b + c), b / (a + b + c), 0.0};
    s.gammas.g3 = 1.0 - s.gammas.g1 - s.gammas.g2;
    const double f = fuse_trust(s);
    EXPECT_GE(f, std::min({s.temporal, s.contextual, s.federated}) - 1e-12);
    EXPECT_LE(f, std::max({s.temporal, s.contextual, s.federated}) + 1e-12);
  }
}

TEST(AdaptWeights, ZeroSignalsReturnDefaults) {
  const Gammas d{0.4, 0.3, 0.3};
  const Gammas g = adapt_weights({}, d, 2.0);
  EXPECT_EQ(g.g1, 0.4);
  EXPECT_EQ(g.g2, 0.3);
  EXPECT_EQ(g.g3, 0.3);
}

TEST(AdaptWeights, AnomaliesFavourFederated) {
  const Gammas g = adapt_weights({0.0, 0.0, 1.0}, {0.4, 0.3, 0.3}, 2.0);
  EXPECT_GT(g.g3, g.g1);
  EXPECT_GT(g.g3, g.g2);
}

TEST(AdaptWeights, AlwaysOnSimplex) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const Gammas g = adapt_weights({unit(rng), unit(rng), unit(rng)}, {0.4, 0.3, 0.3}, 2.0);
    EXPECT_NEAR(g.sum(), 1.0, 1e-9);
    EXPECT_GT(g.g1, 0.0);
    EXPECT_GT(g.g2, 0.0);
    EXPECT_GT(g.g3, 0.0);
  }
}

TEST(History, SlidingWindowVariance) {
  TrustHistory h(3);
  EXPECT_EQ(h.variance(), 0.0);
  for (double x : {10.0, 1.0, 2.0, 3.0}) h.push(x);
  EXPECT_EQ(h.size(), 3u);
  // Population variance of {1, 2, 3}.
  EXPECT_NEAR(h.variance(), 2.0 / 3.0, 1e-12);
}

TEST(UpdateTrust, ComponentsStayInRange) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const TrustParams p;
  TrustState s;
  for (int step = 0; step < 500; ++step) {
    const std::vector<double> prev = {unit(rng), unit(rng), unit(rng), unit(rng)};
    const std::vector<double> curr = {unit(rng), unit(rng), unit(rng), unit(rng)};
    std::vector<PeerFeedback> fb(rng() % 6);
    for (auto& f : fb) f = {1, unit(rng), unit(rng), unit(rng)};
    ClientInputs in{prev, curr, best_case(), fb, {unit(rng), unit(rng), unit(rng)}};
    update_trust(s, in, p);
    EXPECT_GT(s.temporal, 0.0);
    EXPECT_LE(s.temporal, 1.0);
    EXPECT_LE(s.federated, 0.5 * s.temporal + 0.5 * s.contextual + 1e-15);
    EXPECT_GE(s.fused, 0.0);
    EXPECT_LE(s.fused, 1.0);
    EXPECT_NEAR(s.gammas.sum(), 1.0, 1e-9);
  }
  EXPECT_EQ(s.history.size(), p.history_window);
}

TEST(UpdateTrust, CostLinearInMonitoredFactors) {
  const TrustParams base;
  std::vector<double> per_factor;
  for (int m : {4, 8, 16, 32}) {
    TrustParams p = base;
    p.signal_weights.assign(m, 1.0 / m);
    const std::vector<double> prev(m, 0.8), curr(m, 0.7);
    const std::vector<PeerFeedback> fb = {{1, 0.5, 0.0, 0.0}};
    TrustState s;
    OpCounter counter;
    update_trust(s, {prev, curr, {}, fb, {}}, p, &counter);
    per_factor.push_back(static_cast<double>(counter.touches) / m);
  }
  for (double r : per_factor) EXPECT_LE(r, per_factor.front() + 1e-12);
  EXPECT_GE(per_factor.back(), 1.0);
}
