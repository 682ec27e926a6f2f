#ifndef MTSECOM_TELEMETRY_H_
#define MTSECOM_TELEMETRY_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsecom::telemetry {

inline constexpr int kDefaultSeqLen = 10;

struct TraceSample {
  std::int64_t timestep = 0;
  double cpu = 0.0;
  double mem = 0.0;

  bool operator==(const TraceSample&) const = default;
};

struct TraceSeries {
  int vn_id = 0;
  std::vector<TraceSample> samples;

  std::size_t size() const { return samples.size(); }
  bool operator==(const TraceSeries&) const = default;
};

// Normalized performance signals of one client at one timestep. Every field
// is oriented so that larger means better.
struct SignalVector {
  double pac = 1.0;      // prediction accuracy
  double mcr = 1.0;      // mission completion rate
  double arc = 1.0;      // resource consumption, inverted
  double pvc_inv = 1.0;  // violation count, inverted

  // Builds a vector from raw indicators; consumption and violation fraction
  // are negative indicators and get inverted here.
  static SignalVector from_raw(double pac, double mcr, double consumption,
                               double violation_fraction);

  std::array<double, 4> as_array() const { return {pac, mcr, arc, pvc_inv}; }
};

struct NodeMetadata {
  double model_drift = 0.0;
  double pdr = 1.0;
  double cpu_cap = 1.0;
  double quota = 1.0;
};

enum class ClientRole { kBenign, kMalicious };

struct Client {
  int id = 0;
  ClientRole role = ClientRole::kBenign;
};

struct SubApp {
  int id = 0;
  int owner = 0;
  int vn = 0;
};

struct VirtualNode {
  int id = 0;
  int pn = 0;
  int owner = 0;
  NodeMetadata meta;
  double intensity = 0.5;  // mean normalized cpu of the hosted workload
};

struct PhysicalNode {
  int id = 0;
  double capacity = 1.0;
  double exposure = 0.0;  // normalized host-risk coefficient
};

struct Link {
  int a = 0;  // a < b
  int b = 0;
  double reliability = 1.0;
  double latency_ms = 1.0;
};

// Clients, sub-applications, virtual and physical nodes, placement and the
// candidate communication links. Client i owns VN i and sub-app i.
struct FleetTopology {
  std::vector<Client> clients;
  std::vector<SubApp> sub_apps;
  std::vector<VirtualNode> vns;
  std::vector<PhysicalNode> pns;
  std::vector<Link> links;

  std::vector<int> vns_on_pn(int pn) const;
  std::vector<int> malicious_vns() const;
  // Throws std::logic_error if an invariant is broken.
  void validate() const;
};

// Parameters of the synthetic fleet. Defaults spread the VNs over the whole
// fleet at ~60-70% utilization on active physical nodes.
struct FleetParams {
  double malicious_fraction = 0.3;
  std::vector<double> quota_choices = {1.0, 2.0, 4.0};
  std::vector<double> capacity_choices = {24.0, 32.0, 48.0};
  double placement_headroom = 0.7;
  double placement_slack = 1.15;  // usable capacity / total quota
  double pdr_mean = 0.95;
  double pdr_spread = 0.05;  // pdr ~ U[mean - spread, mean + spread]
  double drift_max = 0.1;
  double intra_pn_latency_min = 1.0;
  double intra_pn_latency_max = 20.0;
  double inter_pn_latency_min = 20.0;
  double inter_pn_latency_max = 250.0;
};

struct SynthParams {
  double mean_min = 0.2;
  double mean_max = 0.6;
  double phi = 0.8;          // AR(1) coefficient
  double noise_sd = 0.04;
  double season_amp = 0.08;  // slow sinusoidal component
  double season_period = 48.0;
  double mem_coupling = 0.5;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TraceSchema {
  std::string vn_id = "vn_id";
  std::string timestep = "timestep";
  std::string cpu = "cpu";
  std::string mem = "mem";
};

struct LoadResult {
  std::vector<TraceSeries> series;
  std::vector<std::string> warnings;
};

// Per-series min-max normalization of cpu and mem. A constant column maps to
// 0.5.
void normalize(TraceSeries& series);

LoadResult load_traces(const std::filesystem::path& path,
                       const TraceSchema& schema = {},
                       int seq_len = kDefaultSeqLen);

void write_traces(const std::filesystem::path& path,
                  std::span<const TraceSeries> series);

std::vector<TraceSeries> synthesize_traces(int vn_count, int length,
                                           std::uint64_t seed,
                                           const SynthParams& params = {},
                                           int seq_len = kDefaultSeqLen);

std::size_t window_count(std::size_t length, std::size_t seq_len);

// Stride-1 sliding windows over any contiguous sequence.
template <typename T>
std::vector<std::span<const T>> sliding_windows(std::span<const T> items,
                                                std::size_t seq_len) {
  const std::size_t n = window_count(items.size(), seq_len);
  std::vector<std::span<const T>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(items.subspan(i, seq_len));
  return out;
}

std::vector<std::span<const TraceSample>> window_sequences(
    const TraceSeries& series, int seq_len);

struct CapacityPlan {
  std::vector<double> quotas;
  std::vector<double> capacities;
};

CapacityPlan draw_capacity_plan(int vn_count, int pn_count, std::uint64_t seed,
                                const FleetParams& params = {});

// First-fit-decreasing by quota; ties are shuffled with the seed. Each PN
// accepts load up to headroom * capacity.
std::vector<int> allocate_vns(std::span<const double> quotas,
                              std::span<const double> capacities,
                              std::uint64_t seed, double headroom = 1.0);

std::vector<int> allocate_vns(int vn_count, int pn_count, std::uint64_t seed,
                              const FleetParams& params = {});

std::vector<NodeMetadata> generate_metadata(const FleetTopology& topology,
                                            std::uint64_t seed,
                                            const FleetParams& params = {});

// Builds the full fleet: capacity plan, placement, metadata, roles and the
// candidate link set over all client pairs.
FleetTopology build_fleet(std::span<const TraceSeries> traces, int pn_count,
                          std::uint64_t seed, const FleetParams& params = {});

// Mean over PNs hosting at least one VN of hosted quota / capacity.
double resource_utilization(const FleetTopology& topology);
int active_pn_count(const FleetTopology& topology);

}  // namespace mtsecom::telemetry

#endif  // MTSECOM_TELEMETRY_H_
