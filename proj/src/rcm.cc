#include "mtsecom/rcm.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace mtsecom::rcm {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }
  std::size_t size_of(std::size_t x) { return size_[find(x)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

std::unordered_map<int, std::size_t> index_nodes(std::span<const int> nodes) {
  std::unordered_map<int, std::size_t> index;
  index.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) index.emplace(nodes[i], i);
  return index;
}

bool edge_less(const Edge& x, const Edge& y) {
  return std::tie(x.a, x.b) < std::tie(y.a, y.b);
}

// Candidate edges that can ever be selected: both endpoints present and
// trusted, reliability at or above the floor.
std::vector<Edge> eligible_edges(const CommGraph& graph, const RcmParams& params,
                                 OpCounter* counter) {
  const auto index = index_nodes(graph.nodes);
  std::vector<Edge> out;
  out.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    count(counter);
    if (graph.malicious.contains(e.a) || graph.malicious.contains(e.b)) continue;
    if (!index.contains(e.a) || !index.contains(e.b)) continue;
    if (e.reliability < params.l_min) continue;
    out.push_back(e);
  }
  return out;
}

// Cheapest u-v path over the candidates under `weight`, where chosen edges
// are free and `skip` is left out. `ends` holds the node indices of each
// candidate. Returns candidate indices along the path, empty if v is
// unreachable.
std::vector<std::size_t> cheapest_path(
    const std::vector<std::vector<std::size_t>>& adjacency,
    const std::vector<std::pair<std::size_t, std::size_t>>& ends,
    std::span<const double> weight, const std::vector<bool>& chosen, std::size_t u,
    std::size_t v, std::size_t skip, OpCounter* counter) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> dist(adjacency.size(), kInf);
  std::vector<std::size_t> via(adjacency.size(), kNone);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[u] = 0.0;
  queue.emplace(0.0, u);
  while (!queue.empty()) {
    const auto [d, x] = queue.top();
    queue.pop();
    if (d > dist[x]) continue;
    if (x == v) break;
    for (std::size_t i : adjacency[x]) {
      count(counter);
      if (i == skip) continue;
      const std::size_t y = ends[i].first == x ? ends[i].second : ends[i].first;
      const double nd = d + (chosen[i] ? 0.0 : weight[i]);
      if (nd < dist[y]) {
        dist[y] = nd;
        via[y] = i;
        queue.emplace(nd, y);
      }
    }
  }
  if (dist[v] == kInf) return {};
  std::vector<std::size_t> path;
  for (std::size_t x = v; x != u;) {
    const std::size_t i = via[x];
    path.push_back(i);
    x = ends[i].first == x ? ends[i].second : ends[i].first;
  }
  return path;
}

}  // namespace

Edge make_edge(int u, int v, double reliability, double latency_ms) {
  if (u == v) throw std::invalid_argument("self-loops are not allowed");
  return {std::min(u, v), std::max(u, v), reliability, latency_ms};
}

void RcmParams::validate() const {
  if (beta_tradeoff < 0.0 || l_max < 0.0 || alpha1 < 0.0 || alpha2 < 0.0 ||
      alpha3 < 0.0) {
    throw std::invalid_argument("rcm parameters must be non-negative");
  }
  if (tau_res < 0.0 || tau_res > 1.0 || l_min < 0.0 || l_min > 1.0) {
    throw std::invalid_argument("tau_res and l_min must lie in [0, 1]");
  }
  if (policy_window <= 0) throw std::invalid_argument("policy_window must be > 0");
}

CommGraph prune_untrusted(const CommGraph& graph, const std::map<int, int>& decisions) {
  CommGraph out;
  out.malicious = graph.malicious;
  for (int node : graph.nodes) {
    const auto it = decisions.find(node);
    if (it == decisions.end()) {
      throw std::invalid_argument("no decision for node " + std::to_string(node));
    }
    if (it->second == 1 && !graph.malicious.contains(node)) {
      out.nodes.push_back(node);
    } else {
      out.malicious.insert(node);
    }
  }
  for (const auto& e : graph.edges) {
    if (!out.malicious.contains(e.a) && !out.malicious.contains(e.b)) {
      out.edges.push_back(e);
    }
  }
  return out;
}

double link_objective(std::span<const Edge> edges, const RcmParams& params) {
  double rel = 0.0;
  double lat = 0.0;
  for (const auto& e : edges) {
    rel += e.reliability;
    lat += e.latency_ms;
  }
  return rel - params.beta_tradeoff * lat;
}

double mean_latency(std::span<const Edge> edges) {
  if (edges.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : edges) sum += e.latency_ms;
  return sum / static_cast<double>(edges.size());
}

double resilience(std::span<const Edge> edges, std::span<const int> nodes,
                  OpCounter* counter) {
  if (nodes.empty()) throw std::invalid_argument("resilience of an empty node set");
  const std::size_t n = nodes.size();
  if (n == 1) return 1.0;
  const auto index = index_nodes(nodes);

  struct Arc {
    std::size_t to;
    std::size_t id;
  };
  std::vector<std::vector<Arc>> adj(n);
  std::vector<std::pair<std::size_t, std::size_t>> ends;
  ends.reserve(edges.size());
  for (const auto& e : edges) {
    const auto ia = index.find(e.a);
    const auto ib = index.find(e.b);
    if (ia == index.end() || ib == index.end() || ia->second == ib->second) continue;
    const std::size_t id = ends.size();
    ends.emplace_back(ia->second, ib->second);
    adj[ia->second].push_back({ib->second, id});
    adj[ib->second].push_back({ia->second, id});
  }
  count(counter, n + edges.size());

  // Iterative bridge search.
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> tin(n, kNone), low(n, 0);
  std::vector<bool> bridge(ends.size(), false);
  std::size_t timer = 0;
  struct Frame {
    std::size_t v;
    std::size_t parent_edge;
    std::size_t next;
  };
  std::vector<Frame> stack;
  for (std::size_t root = 0; root < n; ++root) {
    if (tin[root] != kNone) continue;
    tin[root] = low[root] = timer++;
    stack.push_back({root, kNone, 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < adj[f.v].size()) {
        const Arc arc = adj[f.v][f.next++];
        if (arc.id == f.parent_edge) continue;
        if (tin[arc.to] == kNone) {
          tin[arc.to] = low[arc.to] = timer++;
          stack.push_back({arc.to, arc.id, 0});
        } else {
          low[f.v] = std::min(low[f.v], tin[arc.to]);
        }
      } else {
        const Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          const std::size_t parent = stack.back().v;
          low[parent] = std::min(low[parent], low[done.v]);
          if (low[done.v] > tin[parent]) bridge[done.parent_edge] = true;
        }
      }
    }
  }

  DisjointSets sets(n);
  for (std::size_t id = 0; id < ends.size(); ++id) {
    if (!bridge[id]) sets.unite(ends[id].first, ends[id].second);
  }
  double pairs = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    if (sets.find(v) == v) {
      const double s = static_cast<double>(sets.size_of(v));
      pairs += s * (s - 1.0) / 2.0;
    }
  }
  return pairs / (static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0);
}

Feasibility feasible(std::span<const Edge> edges, std::span<const int> nodes,
                     const std::set<int>& malicious, const RcmParams& params) {
  Feasibility f;
  for (const auto& e : edges) {
    if (malicious.contains(e.a) || malicious.contains(e.b)) f.malicious_incidence = true;
    if (e.reliability < params.l_min) f.reliability = true;
  }
  f.mean_latency = mean_latency(edges);
  f.latency = f.mean_latency > params.l_max;
  f.resilience_value = nodes.empty() ? 0.0 : resilience(edges, nodes);
  f.resilience = f.resilience_value < params.tau_res;
  if (f.malicious_incidence) f.violations.emplace_back("malicious");
  if (f.latency) f.violations.emplace_back("latency");
  if (f.resilience) f.violations.emplace_back("resilience");
  if (f.reliability) f.violations.emplace_back("reliability");
  f.ok = f.violations.empty();
  return f;
}

double marginal_score(const Edge& e, const RcmParams& params) {
  return e.reliability - params.beta_tradeoff * e.latency_ms;
}

GreedyResult greedy_select(const CommGraph& graph, const RcmParams& params,
                           OpCounter* counter) {
  GreedyResult result;
  if (graph.nodes.empty()) return result;
  std::vector<Edge> cand = eligible_edges(graph, params, counter);
  std::sort(cand.begin(), cand.end(), [&](const Edge& x, const Edge& y) {
    count(counter);
    const double sx = marginal_score(x, params);
    const double sy = marginal_score(y, params);
    if (sx != sy) return sx > sy;
    return edge_less(x, y);
  });

  std::vector<bool> chosen(cand.size(), false);
  double latency_sum = 0.0;
  std::size_t k = 0;
  auto fits = [&](const Edge& e) {
    return (latency_sum + e.latency_ms) / static_cast<double>(k + 1) <= params.l_max;
  };
  auto take = [&](std::size_t i) {
    chosen[i] = true;
    latency_sum += cand[i].latency_ms;
    ++k;
  };

  std::vector<std::size_t> deferred;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    count(counter);
    if (marginal_score(cand[i], params) <= 0.0) break;
    if (fits(cand[i])) {
      take(i);
    } else {
      deferred.push_back(i);
    }
  }
  // Earlier low-latency picks may have made room for deferred edges.
  for (std::size_t i : deferred) {
    count(counter);
    if (fits(cand[i])) take(i);
  }

  auto current = [&] {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (chosen[i]) edges.push_back(cand[i]);
    }
    return edges;
  };

  double res = resilience(current(), graph.nodes, counter);
  if (res < params.tau_res) {
    // Repair: close cycles, each a candidate edge plus its cheapest path.
    const auto index = index_nodes(graph.nodes);
    std::vector<std::pair<std::size_t, std::size_t>> ends(cand.size());
    std::vector<std::vector<std::size_t>> adjacency(graph.nodes.size());
    for (std::size_t i = 0; i < cand.size(); ++i) {
      ends[i] = {index.at(cand[i].a), index.at(cand[i].b)};
      adjacency[ends[i].first].push_back(i);
      adjacency[ends[i].second].push_back(i);
    }
    // Cycle cost is measured two ways: objective lost and latency spent.
    std::vector<double> loss(cand.size()), latency(cand.size());
    std::vector<std::size_t> by_latency(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) {
      loss[i] = std::max(0.0, -marginal_score(cand[i], params));
      latency[i] = cand[i].latency_ms;
      by_latency[i] = i;
    }
    std::stable_sort(by_latency.begin(), by_latency.end(), [&](std::size_t x, std::size_t y) {
      return cand[x].latency_ms < cand[y].latency_ms;
    });

    struct Closure {
      double delta;
      std::vector<std::size_t> add;
    };
    // Completes `add` with the fastest unchosen edges while the mean latency
    // is over the bound; false if it cannot be brought under.
    auto pad = [&](std::vector<std::size_t>& add) {
      double lat = latency_sum;
      for (std::size_t j : add) lat += cand[j].latency_ms;
      for (std::size_t j : by_latency) {
        if (lat <= params.l_max * static_cast<double>(k + add.size())) return true;
        count(counter);
        if (chosen[j] || std::find(add.begin(), add.end(), j) != add.end()) continue;
        if (cand[j].latency_ms >= params.l_max) return false;
        add.push_back(j);
        lat += cand[j].latency_ms;
      }
      return lat <= params.l_max * static_cast<double>(k + add.size());
    };

    bool progress = true;
    bool bounded = true;
    while (res < params.tau_res && (progress || bounded)) {
      if (!progress) bounded = false;
      progress = false;
      std::vector<Closure> closures;
      // No closure gains more than its own edge plus every unchosen positive
      // edge, so the marginal-ordered scan stops once that falls behind.
      double slack = 0.0;
      for (std::size_t i = 0; i < cand.size(); ++i) {
        if (!chosen[i]) slack += std::max(0.0, marginal_score(cand[i], params));
      }
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < cand.size(); ++i) {
        count(counter);
        if (chosen[i]) continue;
        if (bounded && marginal_score(cand[i], params) + slack < best) break;
        for (const auto* weight : {&loss, &latency}) {
          auto add = cheapest_path(adjacency, ends, *weight, chosen, ends[i].first,
                                   ends[i].second, i, counter);
          if (add.empty()) continue;
          std::erase_if(add, [&](std::size_t j) { return chosen[j]; });
          add.push_back(i);
          if (!pad(add)) continue;
          double delta = 0.0;
          for (std::size_t j : add) delta += marginal_score(cand[j], params);
          best = std::max(best, delta);
          closures.push_back({delta, std::move(add)});
        }
      }
      std::stable_sort(closures.begin(), closures.end(),
                       [](const Closure& x, const Closure& y) { return x.delta > y.delta; });
      // Best objective first; the first closure that raises resilience is kept.
      for (const auto& c : closures) {
        count(counter);
        auto trial = current();
        for (std::size_t j : c.add) trial.push_back(cand[j]);
        const double r = resilience(trial, graph.nodes, counter);
        if (r <= res) continue;
        for (std::size_t j : c.add) take(j);
        res = r;
        progress = true;
        break;
      }
    }
  }

  result.edges = current();
  std::sort(result.edges.begin(), result.edges.end(), edge_less);
  result.feasible = feasible(result.edges, graph.nodes, graph.malicious, params).ok;
  return result;
}

double low_trust_penalty(std::span<const Edge> edges, const std::map<int, double>& trust,
                         double threshold) {
  double penalty = 0.0;
  for (const auto& e : edges) {
    const double lo = std::min(trust.at(e.a), trust.at(e.b));
    if (lo < threshold) penalty += 1.0 - lo;
  }
  return penalty;
}

double reward(std::span<const Edge> edges, std::span<const int> nodes,
              const RcmParams& params, const std::map<int, double>& trust) {
  return params.alpha1 * resilience(edges, nodes) -
         params.alpha2 * mean_latency(edges) -
         params.alpha3 * low_trust_penalty(edges, trust, params.low_trust);
}

PolicyResult policy_improve(const CommGraph& graph, std::span<const Edge> start,
                            const RcmParams& params, const std::map<int, double>& trust,
                            int iterations, std::uint64_t rng_seed) {
  PolicyResult result;
  result.edges.assign(start.begin(), start.end());
  if (graph.nodes.empty()) return result;
  result.reward = reward(result.edges, graph.nodes, params, trust);
  if (iterations <= 0) return result;

  std::vector<Edge> cand = eligible_edges(graph, params, nullptr);
  std::sort(cand.begin(), cand.end(), edge_less);
  std::vector<bool> in_set(cand.size(), false);
  std::vector<Edge> fixed;  // start edges outside the candidate set stay as-is
  for (const auto& e : start) {
    const auto it = std::lower_bound(cand.begin(), cand.end(), e, edge_less);
    if (it != cand.end() && it->a == e.a && it->b == e.b) {
      in_set[static_cast<std::size_t>(it - cand.begin())] = true;
    } else {
      fixed.push_back(e);
    }
  }
  if (cand.empty()) return result;

  auto assemble = [&] {
    std::vector<Edge> edges = fixed;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (in_set[i]) edges.push_back(cand[i]);
    }
    std::sort(edges.begin(), edges.end(), edge_less);
    return edges;
  };

  double cur_reward = result.reward;
  double cur_objective = link_objective(result.edges, params);
  bool cur_feasible = feasible(result.edges, graph.nodes, graph.malicious, params).ok;

  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
  double window_sum = 0.0;
  bool have_previous = false;
  double previous_average = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const std::size_t i = pick(rng);
    in_set[i] = !in_set[i];
    auto edges = assemble();
    const auto fz = feasible(edges, graph.nodes, graph.malicious, params);
    const double r = reward(edges, graph.nodes, params, trust);
    const double obj = link_objective(edges, params);
    if ((fz.ok || !cur_feasible) && r >= cur_reward && obj >= cur_objective) {
      cur_reward = r;
      cur_objective = obj;
      cur_feasible = fz.ok;
      result.edges = std::move(edges);
      ++result.accepted;
    } else {
      in_set[i] = !in_set[i];
    }
    result.iterations_run = it + 1;
    window_sum += cur_reward;
    if ((it + 1) % params.policy_window == 0) {
      const double average = window_sum / params.policy_window;
      window_sum = 0.0;
      if (have_previous && std::abs(average - previous_average) < params.policy_tolerance) {
        break;
      }
      have_previous = true;
      previous_average = average;
    }
  }
  result.reward = cur_reward;
  return result;
}

}  // namespace mtsecom::rcm
