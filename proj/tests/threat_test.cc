#include "mtsecom/threat.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>

#include "oracles.h"

using namespace mtsecom;
using namespace mtsecom::threat;

namespace {

ThreatFactors unit_factors() {
  return {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
}

telemetry::FleetTopology small_fleet(int vns, int pns, std::uint64_t seed = 42) {
  return telemetry::build_fleet(telemetry::synthesize_traces(vns, 12, seed), pns, seed);
}

}  // namespace

TEST(PoisoningImpact, Examples) {
  EXPECT_DOUBLE_EQ(poisoning_impact(unit_factors(), 1.0), 1.0);
  auto f = unit_factors();
  f.vuln_mp = 0.0;
  EXPECT_EQ(poisoning_impact(f, 1.0), 0.0);
  EXPECT_EQ(poisoning_impact(unit_factors(), 0.0), 0.0);
  f = unit_factors();
  f.omega = 0.8;
  f.host_exposure = 0.9;
  f.vuln_mp = 0.5;
  EXPECT_NEAR(poisoning_impact(f, 0.5), 0.8 * 0.5 * 0.9 * 0.5, 1e-15);
  EXPECT_NEAR(poisoning_impact(f, 0.5), 0.18, 1e-12);
}

TEST(PoisoningImpact, RejectsOutOfRange) {
  auto f = unit_factors();
  f.omega = 1.2;
  EXPECT_THROW(poisoning_impact(f, 0.5), std::invalid_argument);
  EXPECT_THROW(poisoning_impact(unit_factors(), -0.1), std::invalid_argument);
}

TEST(SyncDisruptionImpact, Examples) {
  auto f = unit_factors();
  f.delta_t = 0.0;
  EXPECT_EQ(sync_disruption_impact(f, 1.0), 0.0);
  f.delta_t = 2.5;
  EXPECT_DOUBLE_EQ(sync_disruption_impact(f, 1.0), 2.5);
  f.omega = 1.0;
  f.delta_t = 4.0;
  f.vuln_sd = 0.25;
  EXPECT_NEAR(sync_disruption_impact(f, 0.5), 0.5, 1e-12);
  f.delta_t = -1.0;
  EXPECT_THROW(sync_disruption_impact(f, 1.0), std::invalid_argument);
}

TEST(SyncDisruptionImpact, BoundedVariantClips) {
  auto f = unit_factors();
  f.delta_t = 50.0;
  EXPECT_DOUBLE_EQ(sync_disruption_impact_bounded(f, 1.0, 5.0), 1.0);
  f.delta_t = 2.5;
  EXPECT_DOUBLE_EQ(sync_disruption_impact_bounded(f, 1.0, 5.0), 0.5);
  EXPECT_DOUBLE_EQ(sync_disruption_impact(f, 1.0), 2.5);
}

TEST(ResourceAbuseImpact, Examples) {
  EXPECT_DOUBLE_EQ(resource_abuse_impact(unit_factors(), 1.0), 1.0);
  auto f = unit_factors();
  f.contention = 0.0;
  EXPECT_EQ(resource_abuse_impact(f, 1.0), 0.0);
  f.omega = 0.9;
  f.contention = 0.5;
  f.vuln_ra = 0.5;
  EXPECT_NEAR(resource_abuse_impact(f, 0.9), 0.9 * 0.9 * 0.5 * 0.5, 1e-15);
  EXPECT_NEAR(resource_abuse_impact(f, 0.9), 0.2025, 1e-12);
}

TEST(PropagationImpact, Examples) {
  const auto zeros = std::map<ThreatKind, double>{{ThreatKind::kModelPoisoning, 0.0},
                                                  {ThreatKind::kSyncDisruption, 0.0},
                                                  {ThreatKind::kResourceAbuse, 0.0}};
  EXPECT_EQ(propagation_impact(zeros, unit_factors()), 0.0);
  const auto ones = std::map<ThreatKind, double>{{ThreatKind::kModelPoisoning, 1.0},
                                                 {ThreatKind::kSyncDisruption, 1.0},
                                                 {ThreatKind::kResourceAbuse, 1.0}};
  EXPECT_DOUBLE_EQ(propagation_impact(ones, unit_factors()), 3.0);
  auto f = unit_factors();
  f.omega = 0.5;
  f.vuln_abp = 0.4;
  const auto mixed = std::map<ThreatKind, double>{{ThreatKind::kModelPoisoning, 0.18},
                                                  {ThreatKind::kSyncDisruption, 0.5},
                                                  {ThreatKind::kResourceAbuse, 0.2025}};
  EXPECT_NEAR(propagation_impact(mixed, f), (0.18 + 0.5 + 0.2025) * 0.5 * 0.4, 1e-15);
  EXPECT_NEAR(propagation_impact(mixed, f), 0.1765, 1e-12);
}

TEST(PropagationImpact, MissingPrimaryThrows) {
  const std::map<ThreatKind, double> partial = {{ThreatKind::kModelPoisoning, 0.5}};
  EXPECT_THROW(propagation_impact(partial, unit_factors()), std::invalid_argument);
}

TEST(CollusionManipulation, ColludersAtHonestMedian) {
  CollusionScenario s{0, {4, 5}, 0.0, trust::Aggregator::median()};
  const std::vector<double> honest = {0.2, 0.5, 0.9}, colluders = {0.5, 0.5};
  EXPECT_EQ(collusion_manipulation(s, honest, colluders), 0.0);
}

TEST(CollusionManipulation, MedianAbsorbsSingleColluder) {
  CollusionScenario s{0, {3}, 0.0, trust::Aggregator::median()};
  const std::vector<double> honest = {0.8, 0.8, 0.8}, colluders = {0.0};
  EXPECT_EQ(collusion_manipulation(s, honest, colluders), 0.0);
}

TEST(CollusionManipulation, TrimmedMeanOnSevenValues) {
  CollusionScenario s{0, {5, 6, 7}, 0.0, trust::Aggregator::trimmed_mean(0.25)};
  const std::vector<double> honest = {0.7, 0.7, 0.7, 0.7}, colluders = {1.0, 1.0, 1.0};
  std::vector<double> all = honest;
  all.insert(all.end(), colluders.begin(), colluders.end());
  const double expected =
      std::abs(oracle::trimmed_mean(all, 25) - oracle::trimmed_mean(honest, 25));
  EXPECT_NEAR(collusion_manipulation(s, honest, colluders), expected, 1e-12);
}

TEST(CollusionManipulation, Errors) {
  CollusionScenario s{0, {1}, 0.0, trust::Aggregator::median()};
  const std::vector<double> none, one = {0.5};
  EXPECT_THROW(collusion_manipulation(s, none, one), std::invalid_argument);
  CollusionScenario bad{1, {1}, 0.0, trust::Aggregator::median()};
  EXPECT_THROW(collusion_manipulation(bad, one, one), std::invalid_argument);
}

TEST(CollusionManipulation, MedianResilienceProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CollusionScenario s{0, {}, 0.0, trust::Aggregator::median()};
  for (int trial = 0; trial < 2000; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 12);
    const int c = static_cast<int>(rng() % h);
    std::vector<double> honest(h), colluders(c);
    for (auto& x : honest) x = unit(rng);
    for (auto& x : colluders) x = unit(rng) < 0.5 ? 0.0 : 1.0;
    const auto [lo, hi] = std::minmax_element(honest.begin(), honest.end());
    EXPECT_LE(collusion_manipulation(s, honest, colluders), *hi - *lo + 1e-12);
  }
}

TEST(Impacts, BoundedAndMonotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    ThreatFactors f{unit(rng), unit(rng), unit(rng), unit(rng),
                    unit(rng), unit(rng), 5.0 * unit(rng), unit(rng)};
    const double src = unit(rng);
    const double mp = poisoning_impact(f, src);
    const double ra = resource_abuse_impact(f, src);
    EXPECT_GE(mp, 0.0);
    EXPECT_LE(mp, 1.0);
    EXPECT_GE(ra, 0.0);
    EXPECT_LE(ra, 1.0);
    const std::map<ThreatKind, double> prim = {
        {ThreatKind::kModelPoisoning, mp},
        {ThreatKind::kSyncDisruption, sync_disruption_impact_bounded(f, src, 5.0)},
        {ThreatKind::kResourceAbuse, ra}};
    EXPECT_LE(propagation_impact(prim, f), 3.0);

    // Raise one factor at a time.
    ThreatFactors g = f;
    g.omega = std::min(1.0, f.omega + 0.1);
    EXPECT_GE(poisoning_impact(g, src), mp);
    EXPECT_GE(resource_abuse_impact(g, src), ra);
    g = f;
    g.host_exposure = std::min(1.0, f.host_exposure + 0.1);
    EXPECT_GE(poisoning_impact(g, src), mp);
    g = f;
    g.contention = std::min(1.0, f.contention + 0.1);
    EXPECT_GE(resource_abuse_impact(g, src), ra);
    g = f;
    g.delta_t = f.delta_t + 0.5;
    EXPECT_GE(sync_disruption_impact(g, src), sync_disruption_impact(f, src));
    EXPECT_GE(poisoning_impact(f, std::min(1.0, src + 0.1)), mp);
  }
}

TEST(Injection, RateZeroHasNoEvents) {
  const auto topo = small_fleet(10, 3);
  const std::vector<int> all = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto r = inject_attacks(50, 0.0, 3, 42, topo, all, {});
  EXPECT_TRUE(r.events.empty());
  for (int v = 0; v < 10; ++v) {
    for (int t = 0; t < 50; ++t) EXPECT_FALSE(r.overlay.affected(v, t));
  }
}

TEST(Injection, RateOneFiresEveryStep) {
  const auto topo = small_fleet(1, 1);
  const std::vector<int> one = {0};
  const auto r = inject_attacks(5, 1.0, 1, 42, topo, one, {});
  ASSERT_EQ(r.events.size(), 5u);
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(r.events[t].start, t);
    EXPECT_EQ(r.events[t].duration, 1);
  }
}

TEST(Injection, EventsAreWellFormed) {
  const auto topo = small_fleet(30, 9);
  const auto r = inject_attacks(40, 0.2, 3, 7, topo);
  ASSERT_FALSE(r.events.empty());
  for (const auto& e : r.events) {
    EXPECT_GE(e.magnitude, 0.0);
    EXPECT_LE(e.magnitude, 1.0);
    EXPECT_GE(e.duration, 1);
    EXPECT_GE(e.target.vn, 0);
    EXPECT_LT(e.target.vn, 30);
    EXPECT_EQ(topo.vns[e.target.vn].pn, e.target.pn);
    // Default eligibility: VNs of malicious clients.
    EXPECT_EQ(topo.clients[topo.vns[e.source_vn].owner].role,
              telemetry::ClientRole::kMalicious);
  }
}

TEST(Injection, RejectsBadArguments) {
  const auto topo = small_fleet(2, 1);
  EXPECT_THROW(inject_attacks(5, 1.5, 1, 1, topo), std::invalid_argument);
  EXPECT_THROW(inject_attacks(5, 0.5, 0, 1, topo), std::invalid_argument);
}

TEST(Injection, DeterministicPerSeed) {
  const auto topo = small_fleet(20, 6);
  EXPECT_EQ(inject_attacks(30, 0.3, 2, 9, topo).events,
            inject_attacks(30, 0.3, 2, 9, topo).events);
}

TEST(Overlay, RemovingEventsRestoresBaseline) {
  const auto traces = telemetry::synthesize_traces(12, 20, 5);
  const auto topo = telemetry::build_fleet(traces, 4, 5);
  std::vector<int> all(12);
  std::iota(all.begin(), all.end(), 0);
  const InjectionParams params;
  const auto r = inject_attacks(20, 0.3, 2, 5, topo, all, params);
  ASSERT_FALSE(r.events.empty());
  const auto empty = build_overlay({}, topo, 20, params);
  for (int v = 0; v < 12; ++v) {
    for (int t = 0; t < 20; ++t) {
      EXPECT_FALSE(empty.affected(v, t));
      EXPECT_EQ(empty.apply(v, traces[v].samples[t]), traces[v].samples[t]);
    }
  }
  // The overlay is rebuilt identically from its own events.
  const auto rebuilt = build_overlay(r.events, topo, 20, params);
  for (int v = 0; v < 12; ++v) {
    for (int t = 0; t < 20; ++t) EXPECT_EQ(rebuilt.at(v, t), r.overlay.at(v, t));
  }
}

TEST(Overlay, CollusionLeavesTelemetryBenign) {
  const auto topo = small_fleet(6, 2);
  ThreatEvent e;
  e.kind = ThreatKind::kCollusion;
  e.source_vn = 1;
  e.target = {topo.vns[1].pn, 1, 1};
  e.start = 2;
  e.duration = 3;
  e.magnitude = 0.8;
  const std::vector<ThreatEvent> events = {e};
  const auto overlay = build_overlay(events, topo, 10, {});
  const auto& p = overlay.at(1, 3);
  EXPECT_EQ(p.cpu, 0.0);
  EXPECT_EQ(p.pac, 0.0);
  EXPECT_EQ(p.delay, 0.0);
  EXPECT_GT(p.feedback_bias, 0.0);
  EXPECT_TRUE(overlay.at(1, 5).empty());
}

TEST(EventLog, RoundTrip) {
  const auto topo = small_fleet(20, 6);
  const auto r = inject_attacks(30, 0.3, 2, 9, topo);
  const auto path = (std::filesystem::temp_directory_path() / "mtsecom_events.jsonl").string();
  write_event_log(path, r.events);
  const auto back = read_event_log(path);
  ASSERT_EQ(back.size(), r.events.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].kind, r.events[i].kind);
    EXPECT_EQ(back[i].target, r.events[i].target);
    EXPECT_EQ(back[i].start, r.events[i].start);
    EXPECT_DOUBLE_EQ(back[i].magnitude, r.events[i].magnitude);
  }
  EXPECT_EQ(kind_from_string("ABP"), ThreatKind::kPropagation);
  EXPECT_THROW(kind_from_string("XYZ"), std::invalid_argument);
}
