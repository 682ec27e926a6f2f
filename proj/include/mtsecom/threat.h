#ifndef MTSECOM_THREAT_H_
#define MTSECOM_THREAT_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtsecom/telemetry.h"
#include "mtsecom/trust.h"

namespace mtsecom::threat {

enum class ThreatKind {
  kModelPoisoning,   // MP
  kSyncDisruption,   // SD
  kResourceAbuse,    // RA
  kPropagation,      // ABP
  kCollusion,        // APT
};

inline constexpr std::array<ThreatKind, 5> kAllKinds = {
    ThreatKind::kModelPoisoning, ThreatKind::kSyncDisruption,
    ThreatKind::kResourceAbuse, ThreatKind::kPropagation, ThreatKind::kCollusion};

std::string to_string(ThreatKind kind);
ThreatKind kind_from_string(const std::string& code);

struct ExecutionTarget {
  int pn = 0;
  int vn = 0;
  int app = 0;

  bool operator==(const ExecutionTarget&) const = default;
};

struct ThreatEvent {
  ThreatKind kind = ThreatKind::kModelPoisoning;
  int source_vn = 0;
  ExecutionTarget target;
  std::int64_t start = 0;
  int duration = 1;
  double magnitude = 0.0;
  double impact = 0.0;  // kind-specific impact score at injection time

  bool active_at(std::int64_t t) const { return t >= start && t < start + duration; }
  bool operator==(const ThreatEvent&) const = default;
};

// Factors of one execution instance (pn, vn, app).
struct ThreatFactors {
  double omega = 0.0;          // normalized workload intensity
  double host_exposure = 0.0;  // normalized host-risk coefficient
  double vuln_mp = 0.0;
  double vuln_sd = 0.0;
  double vuln_ra = 0.0;
  double vuln_abp = 0.0;
  double delta_t = 0.0;     // seconds
  double contention = 0.0;  // normalized

  // Throws std::invalid_argument if a bounded factor leaves [0, 1] or
  // delta_t is negative.
  void validate() const;
};

struct CollusionScenario {
  int target_client = 0;
  std::vector<int> colluders;
  double gamma_state = 0.0;  // carried, no dynamics
  trust::Aggregator aggregator;
};

double poisoning_impact(const ThreatFactors& f, double omega_src);

// Unbounded in delta_t.
double sync_disruption_impact(const ThreatFactors& f, double omega_src);

// Bounded variant with delta_t clipped to dt_max and rescaled to [0, 1].
double sync_disruption_impact_bounded(const ThreatFactors& f, double omega_src,
                                      double dt_max);

double resource_abuse_impact(const ThreatFactors& f, double omega_src);

// Sum over MP, SD and RA of primary score * downstream exposure. Throws if a
// primary score is missing.
double propagation_impact(const std::map<ThreatKind, double>& primaries,
                          const ThreatFactors& downstream);

// |aggregate(all feedback) - aggregate(honest feedback)|.
double collusion_manipulation(const CollusionScenario& scenario,
                              std::span<const double> honest_feedback,
                              std::span<const double> colluder_feedback);

// Additive telemetry perturbation of one VN at one timestep.
struct Perturbation {
  double cpu = 0.0;
  double mem = 0.0;
  double pac = 0.0;           // subtracted from prediction accuracy
  double err = 0.0;
  double delay = 0.0;         // seconds of reporting delay
  double jitter = 0.0;
  double usage_excess = 0.0;  // fraction of quota consumed above the quota
  double drift = 0.0;
  double feedback_bias = 0.0; // strength of dishonest peer reports

  bool empty() const;
  Perturbation& operator+=(const Perturbation& other);
  bool operator==(const Perturbation&) const = default;
};

// Per-VN, per-timestep perturbations; the benign traces are never modified.
class TelemetryOverlay {
 public:
  TelemetryOverlay() = default;
  TelemetryOverlay(int vn_count, int timeline_length);

  const Perturbation& at(int vn, std::int64_t t) const;
  Perturbation& at(int vn, std::int64_t t);
  bool affected(int vn, std::int64_t t) const { return !at(vn, t).empty(); }
  int vn_count() const { return vn_count_; }
  int timeline_length() const { return length_; }

  // Sample with cpu/mem perturbations applied and clamped to [0, 1].
  telemetry::TraceSample apply(int vn, const telemetry::TraceSample& s) const;

 private:
  int vn_count_ = 0;
  int length_ = 0;
  std::vector<Perturbation> cells_;
};

struct InjectionParams {
  std::array<double, 5> kind_weights = {1.0, 1.0, 1.0, 1.0, 1.0};
  double magnitude_min = 0.4;
  double magnitude_max = 1.0;
  double dt_max = 5.0;         // seconds
  double cascade_scale = 0.5;  // ABP strength on co-hosted VNs
};

struct InjectionResult {
  std::vector<ThreatEvent> events;
  TelemetryOverlay overlay;
};

// One Bernoulli(attack_rate) trial per eligible VN per timestep; eligible VNs
// are those owned by malicious clients.
InjectionResult inject_attacks(int timeline_length, double attack_rate, int duration,
                               std::uint64_t seed,
                               const telemetry::FleetTopology& topology,
                               const InjectionParams& params = {});

// Same, with an explicit eligible set.
InjectionResult inject_attacks(int timeline_length, double attack_rate, int duration,
                               std::uint64_t seed,
                               const telemetry::FleetTopology& topology,
                               std::span<const int> eligible_vns,
                               const InjectionParams& params);

// Rebuilds the overlay from an event list.
TelemetryOverlay build_overlay(std::span<const ThreatEvent> events,
                               const telemetry::FleetTopology& topology,
                               int timeline_length, const InjectionParams& params);

// Threat factors of a VN drawn deterministically from the seed.
ThreatFactors factors_for(const telemetry::FleetTopology& topology, int vn,
                          std::uint64_t seed);

std::string event_to_json(const ThreatEvent& event);
ThreatEvent event_from_json(const std::string& line);
void write_event_log(const std::string& path, std::span<const ThreatEvent> events);
std::vector<ThreatEvent> read_event_log(const std::string& path);

}  // namespace mtsecom::threat

#endif  // MTSECOM_THREAT_H_
