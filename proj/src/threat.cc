#include "mtsecom/threat.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "mtsecom/common.h"

namespace mtsecom::threat {

namespace {

void check_unit(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  }
}

Perturbation footprint(ThreatKind kind, double m, double dt_max) {
  Perturbation p;
  switch (kind) {
    case ThreatKind::kModelPoisoning:
      p.pac = 0.5 * m;
      p.err = 0.4 * m;
      p.drift = 0.5 * m;
      break;
    case ThreatKind::kSyncDisruption:
      p.delay = m * dt_max;
      p.jitter = 0.5 * m;
      break;
    case ThreatKind::kResourceAbuse:
      p.cpu = 0.5 * m;
      p.mem = 0.4 * m;
      p.usage_excess = m;
      break;
    case ThreatKind::kPropagation:
      p.cpu = 0.3 * m;
      p.pac = 0.3 * m;
      p.err = 0.2 * m;
      p.jitter = 0.2 * m;
      break;
    case ThreatKind::kCollusion:
      p.feedback_bias = m;
      break;
  }
  return p;
}

Perturbation scaled(Perturbation p, double s) {
  p.cpu *= s;
  p.mem *= s;
  p.pac *= s;
  p.err *= s;
  p.delay *= s;
  p.jitter *= s;
  p.usage_excess *= s;
  p.drift *= s;
  p.feedback_bias *= s;
  return p;
}

}  // namespace

std::string to_string(ThreatKind kind) {
  switch (kind) {
    case ThreatKind::kModelPoisoning: return "MP";
    case ThreatKind::kSyncDisruption: return "SD";
    case ThreatKind::kResourceAbuse: return "RA";
    case ThreatKind::kPropagation: return "ABP";
    case ThreatKind::kCollusion: return "APT";
  }
  return "?";
}

ThreatKind kind_from_string(const std::string& code) {
  for (ThreatKind k : kAllKinds) {
    if (to_string(k) == code) return k;
  }
  throw std::invalid_argument("unknown threat kind '" + code + "'");
}

void ThreatFactors::validate() const {
  check_unit(omega, "omega");
  check_unit(host_exposure, "host_exposure");
  check_unit(vuln_mp, "vuln_mp");
  check_unit(vuln_sd, "vuln_sd");
  check_unit(vuln_ra, "vuln_ra");
  check_unit(vuln_abp, "vuln_abp");
  check_unit(contention, "contention");
  if (!(delta_t >= 0.0)) throw std::invalid_argument("delta_t must be >= 0");
}

double poisoning_impact(const ThreatFactors& f, double omega_src) {
  f.validate();
  check_unit(omega_src, "omega_src");
  return f.omega * omega_src * f.host_exposure * f.vuln_mp;
}

double sync_disruption_impact(const ThreatFactors& f, double omega_src) {
  f.validate();
  check_unit(omega_src, "omega_src");
  return f.omega * omega_src * f.delta_t * f.vuln_sd;
}

double sync_disruption_impact_bounded(const ThreatFactors& f, double omega_src,
                                      double dt_max) {
  if (!(dt_max > 0.0)) throw std::invalid_argument("dt_max must be > 0");
  ThreatFactors clipped = f;
  clipped.validate();
  clipped.delta_t = std::min(f.delta_t, dt_max) / dt_max;
  return sync_disruption_impact(clipped, omega_src);
}

double resource_abuse_impact(const ThreatFactors& f, double omega_src) {
  f.validate();
  check_unit(omega_src, "omega_src");
  return f.omega * omega_src * f.contention * f.vuln_ra;
}

double propagation_impact(const std::map<ThreatKind, double>& primaries,
                          const ThreatFactors& downstream) {
  downstream.validate();
  double sum = 0.0;
  for (ThreatKind k : {ThreatKind::kModelPoisoning, ThreatKind::kSyncDisruption,
                       ThreatKind::kResourceAbuse}) {
    const auto it = primaries.find(k);
    if (it == primaries.end()) {
      throw std::invalid_argument("missing primary score for " + to_string(k));
    }
    sum += it->second;
  }
  return sum * downstream.omega * downstream.host_exposure * downstream.vuln_abp;
}

double collusion_manipulation(const CollusionScenario& scenario,
                              std::span<const double> honest_feedback,
                              std::span<const double> colluder_feedback) {
  if (honest_feedback.empty()) {
    throw std::invalid_argument("collusion_manipulation: empty honest set");
  }
  for (int c : scenario.colluders) {
    if (c == scenario.target_client) {
      throw std::invalid_argument("colluders must exclude the target client");
    }
  }
  std::vector<double> all(honest_feedback.begin(), honest_feedback.end());
  all.insert(all.end(), colluder_feedback.begin(), colluder_feedback.end());
  for (double x : all) check_unit(x, "feedback");
  const double with = trust::robust_aggregate(all, scenario.aggregator);
  const double without = trust::robust_aggregate(honest_feedback, scenario.aggregator);
  return std::abs(with - without);
}

bool Perturbation::empty() const { return *this == Perturbation{}; }

Perturbation& Perturbation::operator+=(const Perturbation& o) {
  cpu += o.cpu;
  mem += o.mem;
  pac += o.pac;
  err += o.err;
  delay += o.delay;
  jitter += o.jitter;
  usage_excess += o.usage_excess;
  drift += o.drift;
  feedback_bias += o.feedback_bias;
  return *this;
}

TelemetryOverlay::TelemetryOverlay(int vn_count, int timeline_length)
    : vn_count_(vn_count),
      length_(timeline_length),
      cells_(static_cast<std::size_t>(vn_count) * timeline_length) {}

const Perturbation& TelemetryOverlay::at(int vn, std::int64_t t) const {
  static const Perturbation kNone{};
  if (vn < 0 || vn >= vn_count_ || t < 0 || t >= length_) return kNone;
  return cells_[static_cast<std::size_t>(vn) * length_ + t];
}

Perturbation& TelemetryOverlay::at(int vn, std::int64_t t) {
  if (vn < 0 || vn >= vn_count_ || t < 0 || t >= length_) {
    throw std::out_of_range("overlay cell out of range");
  }
  return cells_[static_cast<std::size_t>(vn) * length_ + t];
}

telemetry::TraceSample TelemetryOverlay::apply(int vn,
                                               const telemetry::TraceSample& s) const {
  const auto& p = at(vn, s.timestep);
  if (p.empty()) return s;
  return {s.timestep, clamp01(s.cpu + p.cpu), clamp01(s.mem + p.mem)};
}

ThreatFactors factors_for(const telemetry::FleetTopology& topology, int vn,
                          std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x7000 + static_cast<std::uint64_t>(vn)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& node = topology.vns.at(vn);
  ThreatFactors f;
  f.omega = clamp01(node.intensity);
  f.host_exposure = topology.pns.at(node.pn).exposure;
  f.vuln_mp = unit(rng);
  f.vuln_sd = unit(rng);
  f.vuln_ra = unit(rng);
  f.vuln_abp = unit(rng);
  return f;
}

TelemetryOverlay build_overlay(std::span<const ThreatEvent> events,
                               const telemetry::FleetTopology& topology,
                               int timeline_length, const InjectionParams& params) {
  TelemetryOverlay overlay(static_cast<int>(topology.vns.size()), timeline_length);
  for (const auto& e : events) {
    const Perturbation own = footprint(e.kind, e.magnitude, params.dt_max);
    std::vector<int> cascade;
    if (e.kind == ThreatKind::kPropagation) {
      for (int vn : topology.vns_on_pn(topology.vns.at(e.source_vn).pn)) {
        if (vn != e.source_vn) cascade.push_back(vn);
      }
    }
    const Perturbation downstream = scaled(own, params.cascade_scale);
    const std::int64_t end = std::min<std::int64_t>(e.start + e.duration, timeline_length);
    for (std::int64_t t = std::max<std::int64_t>(e.start, 0); t < end; ++t) {
      overlay.at(e.source_vn, t) += own;
      for (int vn : cascade) overlay.at(vn, t) += downstream;
    }
  }
  return overlay;
}

InjectionResult inject_attacks(int timeline_length, double attack_rate, int duration,
                               std::uint64_t seed,
                               const telemetry::FleetTopology& topology,
                               const InjectionParams& params) {
  const auto eligible = topology.malicious_vns();
  return inject_attacks(timeline_length, attack_rate, duration, seed, topology,
                        eligible, params);
}

InjectionResult inject_attacks(int timeline_length, double attack_rate, int duration,
                               std::uint64_t seed,
                               const telemetry::FleetTopology& topology,
                               std::span<const int> eligible_vns,
                               const InjectionParams& params) {
  if (!(attack_rate >= 0.0 && attack_rate <= 1.0)) {
    throw std::invalid_argument("attack_rate must lie in [0, 1]");
  }
  if (duration < 1) throw std::invalid_argument("attack duration must be >= 1");
  if (timeline_length < 0) throw std::invalid_argument("negative timeline length");

  std::mt19937_64 rng(derive_seed(seed, 0xa77ac));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::discrete_distribution<int> kind_dist(params.kind_weights.begin(),
                                            params.kind_weights.end());

  InjectionResult result;
  for (int t = 0; t < timeline_length; ++t) {
    for (int vn : eligible_vns) {
      if (!(unit(rng) < attack_rate)) continue;
      ThreatEvent e;
      e.kind = static_cast<ThreatKind>(kind_dist(rng));
      e.source_vn = vn;
      e.start = t;
      e.duration = duration;
      e.magnitude =
          params.magnitude_min + (params.magnitude_max - params.magnitude_min) * unit(rng);

      const int pn = topology.vns.at(vn).pn;
      auto peers = topology.vns_on_pn(pn);
      std::erase(peers, vn);
      int target_vn = vn;
      if (!peers.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, peers.size() - 1);
        target_vn = peers[pick(rng)];
      }
      e.target = {pn, target_vn, target_vn};

      ThreatFactors tf = factors_for(topology, target_vn, seed);
      const double omega_src = clamp01(topology.vns.at(vn).intensity);
      switch (e.kind) {
        case ThreatKind::kModelPoisoning:
          e.impact = poisoning_impact(tf, omega_src);
          break;
        case ThreatKind::kSyncDisruption:
          tf.delta_t = e.magnitude * params.dt_max;
          e.impact = sync_disruption_impact_bounded(tf, omega_src, params.dt_max);
          break;
        case ThreatKind::kResourceAbuse:
          tf.contention = e.magnitude;
          e.impact = resource_abuse_impact(tf, omega_src);
          break;
        case ThreatKind::kPropagation: {
          ThreatFactors src = factors_for(topology, vn, seed);
          src.delta_t = e.magnitude * params.dt_max;
          src.contention = e.magnitude;
          const std::map<ThreatKind, double> primaries = {
              {ThreatKind::kModelPoisoning, poisoning_impact(src, omega_src)},
              {ThreatKind::kSyncDisruption,
               sync_disruption_impact_bounded(src, omega_src, params.dt_max)},
              {ThreatKind::kResourceAbuse, resource_abuse_impact(src, omega_src)}};
          e.impact = propagation_impact(primaries, tf);
          break;
        }
        case ThreatKind::kCollusion:
          // Realized displacement depends on peer feedback; the requested
          // bias is logged here.
          e.impact = e.magnitude;
          break;
      }
      result.events.push_back(e);
    }
  }
  result.overlay = build_overlay(result.events, topology, timeline_length, params);
  return result;
}

std::string event_to_json(const ThreatEvent& e) {
  nlohmann::json j = {
      {"kind", to_string(e.kind)},
      {"source_vn", e.source_vn},
      {"target", {{"pn", e.target.pn}, {"vn", e.target.vn}, {"app", e.target.app}}},
      {"start", e.start},
      {"duration", e.duration},
      {"magnitude", e.magnitude},
      {"impact", e.impact},
  };
  return j.dump();
}

ThreatEvent event_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  ThreatEvent e;
  e.kind = kind_from_string(j.at("kind").get<std::string>());
  e.source_vn = j.at("source_vn").get<int>();
  e.target = {j.at("target").at("pn").get<int>(), j.at("target").at("vn").get<int>(),
              j.at("target").at("app").get<int>()};
  e.start = j.at("start").get<std::int64_t>();
  e.duration = j.at("duration").get<int>();
  e.magnitude = j.at("magnitude").get<double>();
  e.impact = j.at("impact").get<double>();
  return e;
}

void write_event_log(const std::string& path, std::span<const ThreatEvent> events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event log: " + path);
  for (const auto& e : events) out << event_to_json(e) << '\n';
}

std::vector<ThreatEvent> read_event_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read event log: " + path);
  std::vector<ThreatEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(event_from_json(line));
  }
  return out;
}

}  // namespace mtsecom::threat
