#ifndef MTSECOM_RCM_H_
#define MTSECOM_RCM_H_

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mtsecom/common.h"

namespace mtsecom::rcm {

struct Edge {
  int a = 0;  // a < b
  int b = 0;
  double reliability = 1.0;
  double latency_ms = 1.0;

  bool operator==(const Edge&) const = default;
};

Edge make_edge(int u, int v, double reliability, double latency_ms);

struct CommGraph {
  std::vector<int> nodes;
  std::vector<Edge> edges;
  std::set<int> malicious;
};

struct RcmParams {
  double beta_tradeoff = 0.01;  // per ms
  double l_max = 150.0;         // ms
  double tau_res = 0.1;
  double l_min = 0.5;           // reliability floor
  double alpha1 = 1.0;
  double alpha2 = 1.0 / 150.0;  // per ms
  double alpha3 = 1.0;
  double low_trust = 0.5;
  int policy_window = 20;
  double policy_tolerance = 1e-4;

  void validate() const;
};

// Diagnostic routing state; backlogs are synthesized and do not steer the
// policy.
struct RoutingState {
  std::map<int, double> trust;
  std::vector<double> link_reliability;
  std::map<int, double> queue_backlog;
  double mean_path_delay = 0.0;
};

// Drops nodes with y = 0 and every incident edge; dropped nodes join the
// malicious set. Throws std::invalid_argument if a node has no decision.
CommGraph prune_untrusted(const CommGraph& graph, const std::map<int, int>& decisions);

double link_objective(std::span<const Edge> edges, const RcmParams& params);

// Mean edge latency; 0 for an empty set.
double mean_latency(std::span<const Edge> edges);

// Fraction of unordered node pairs joined by at least two edge-disjoint
// paths, i.e. lying in the same 2-edge-connected component. A single node
// gives 1. Throws on an empty node set.
double resilience(std::span<const Edge> edges, std::span<const int> nodes,
                  OpCounter* counter = nullptr);

struct Feasibility {
  bool ok = true;
  bool malicious_incidence = false;
  bool latency = false;
  bool resilience = false;
  bool reliability = false;
  double resilience_value = 0.0;
  double mean_latency = 0.0;
  std::vector<std::string> violations;
};

Feasibility feasible(std::span<const Edge> edges, std::span<const int> nodes,
                     const std::set<int>& malicious, const RcmParams& params);

// Per-edge marginal contribution to the link objective.
double marginal_score(const Edge& e, const RcmParams& params);

struct GreedyResult {
  std::vector<Edge> edges;
  bool feasible = false;
};

// Greedy link selection over the candidate edges of a (pruned) graph.
GreedyResult greedy_select(const CommGraph& graph, const RcmParams& params,
                           OpCounter* counter = nullptr);

// alpha1 * Res - alpha2 * mean latency - alpha3 * low-trust penalty.
double low_trust_penalty(std::span<const Edge> edges, const std::map<int, double>& trust,
                         double threshold);
double reward(std::span<const Edge> edges, std::span<const int> nodes,
              const RcmParams& params, const std::map<int, double>& trust);

struct PolicyResult {
  std::vector<Edge> edges;
  int iterations_run = 0;
  int accepted = 0;
  double reward = 0.0;
};

// Seeded local search over single-edge toggles of the candidate set,
// starting from `start`. A toggle is kept when the result stays feasible and
// neither the reward nor the link objective decreases. Stops when the moving
// average reward over consecutive windows moves by less than the tolerance or
// at the iteration cap.
PolicyResult policy_improve(const CommGraph& graph, std::span<const Edge> start,
                            const RcmParams& params, const std::map<int, double>& trust,
                            int iterations, std::uint64_t rng_seed);

}  // namespace mtsecom::rcm

#endif  // MTSECOM_RCM_H_
