#ifndef MTSECOM_HARNESS_H_
#define MTSECOM_HARNESS_H_

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtsecom/classifier.h"
#include "mtsecom/rcm.h"
#include "mtsecom/telemetry.h"
#include "mtsecom/threat.h"
#include "mtsecom/trust.h"

namespace mtsecom::harness {

inline constexpr int kFeatureCount = 12;
inline constexpr const char* kCsvHeader =
    "vn,apn,acc,me,hl,ru,trust_improvement,latency_reduction";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  int vn_count = 100;
  int pm_count = 30;
  int seq_len = 10;
  double attack_rate = 0.05;
  int attack_duration = 3;
  std::uint64_t seed = 42;
  int timesteps = 100;
  int peers_per_client = 6;
  int policy_iterations = 50;
  int log_retention = 32;  // per-timestep logs kept in the report
  trust::TrustParams trust;
  classifier::ClassifierConfig classifier;
  rcm::RcmParams rcm;

  // Throws ConfigError.
  void validate() const;
};

// JSON keys match the field names; trust, classifier and rcm are nested
// objects. Unknown keys and type mismatches raise ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& config);

// Monitored state of one client at one timestep.
struct Observation {
  telemetry::SignalVector signals;
  trust::ContextFactors context;
  std::array<double, 5> factors{};
  double feedback_consistency = 1.0;
  bool violation = false;
  double link_instability = 0.0;
  std::array<double, kFeatureCount> features{};
};

struct PeerReport {
  int from = 0;
  double score = 0.0;
  double age = 0.0;
};

// Everything the loop consumes, derived deterministically from the config
// and the traces: fleet, injected threats, per-step observations, peer
// reports and labeled windows.
struct Scenario {
  RunConfig config;
  std::vector<telemetry::TraceSeries> traces;
  telemetry::FleetTopology topology;
  threat::InjectionResult injection;
  std::vector<std::vector<Observation>> observations;          // [client][t]
  std::vector<std::vector<std::vector<PeerReport>>> reports;   // [t][target]
  std::vector<classifier::LabeledWindow> windows;
  std::vector<int> window_end;  // end timestep of each window

  int timesteps() const;
};

Scenario prepare_scenario(const RunConfig& config);
Scenario prepare_scenario(const RunConfig& config,
                          std::vector<telemetry::TraceSeries> traces);

// Window label: 0 if the VN is perturbed at any step of the window.
int window_label(const threat::TelemetryOverlay& overlay, int vn, int end, int seq_len);

struct TrustRecord {
  int client = 0;
  double temporal = 0.0;
  double contextual = 0.0;
  double federated = 0.0;
  double fused = 0.0;
  trust::Gammas gammas;
};

struct StepLog {
  int t = 0;
  std::vector<TrustRecord> trust;
  std::vector<classifier::Decision> decisions;
  std::vector<int> nodes;  // survivors of pruning
  std::vector<rcm::Edge> topology;
  double objective = 0.0;
  double reward = 0.0;
  bool feasible = false;
  double trust_improvement = 0.0;
  double mean_latency = 0.0;
  double collusion_manipulation = 0.0;
};

struct Metrics {
  int vn = 0;
  int apn = 0;
  double accuracy = 0.0;
  double mean_error = 0.0;
  double hamming_loss = 0.0;
  double resource_utilization = 0.0;
  double trust_improvement = 0.0;
  double latency_reduction = 0.0;

  bool operator==(const Metrics&) const = default;
};

struct MetricsReport {
  RunConfig config;
  Metrics metrics;
  std::size_t evaluated = 0;       // held-out windows scored
  double client_accuracy = 0.0;    // majority vote per held-out client
  double collusion_manipulation = 0.0;
  std::deque<StepLog> logs;
};

struct EvaluatedDecision {
  int y = 0;
  double probability = 0.0;
};

// Accuracy, Hamming loss and mean absolute probability error; topology,
// trust and latency metrics are passed through. Throws on length mismatch.
Metrics compute_metrics(std::span<const EvaluatedDecision> decisions,
                        std::span<const int> labels,
                        const telemetry::FleetTopology& topology,
                        std::span<const double> trust_improvements,
                        double optimized_latency, double all_links_latency);

// Full monitor -> evaluate -> classify -> manage loop.
MetricsReport run_simulation(const RunConfig& config);

// One independent run per rate; throws ConfigError for rates outside [0, 1].
std::vector<MetricsReport> sweep(const RunConfig& config, std::span<const double> rates);

enum class ReportFormat { kCsv, kJson };
ReportFormat format_from_string(const std::string& name);

std::string report_to_csv(std::span<const MetricsReport> reports);
std::string report_to_json(const MetricsReport& report);

void emit_report(const MetricsReport& report, const std::filesystem::path& path,
                 ReportFormat format);
void emit_reports(std::span<const MetricsReport> reports, const std::filesystem::path& path,
                  ReportFormat format);

// Parses the metrics (and for JSON the config echo) back.
std::vector<MetricsReport> parse_report(const std::filesystem::path& path,
                                        ReportFormat format);

// t,client_id,temporal,contextual,federated,fused,g1,g2,g3
void write_trust_log(const MetricsReport& report, const std::filesystem::path& path);
// One JSON object per line with t, nodes, edges as [a, b, reliability,
// latency_ms], objective, reward and feasible.
void write_topology_log(const MetricsReport& report, const std::filesystem::path& path);

// Trains a classifier on the windows of a scenario built from the traces.
classifier::TrainResult train_on_traces(const RunConfig& config,
                                        std::vector<telemetry::TraceSeries> traces);

}  // namespace mtsecom::harness

#endif  // MTSECOM_HARNESS_H_
