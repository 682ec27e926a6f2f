#include "mtsecom/telemetry.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "mtsecom/common.h"

namespace mtsecom::telemetry {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_int(const std::string& s, std::int64_t& out) {
  try {
    std::size_t pos = 0;
    out = std::stoll(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

void minmax_normalize(std::vector<TraceSample>& samples, double TraceSample::*field) {
  double lo = samples.front().*field;
  double hi = lo;
  for (const auto& s : samples) {
    lo = std::min(lo, s.*field);
    hi = std::max(hi, s.*field);
  }
  const double range = hi - lo;
  for (auto& s : samples) {
    s.*field = range > 0.0 ? (s.*field - lo) / range : 0.5;
  }
}

template <typename T, typename Rng>
T pick(const std::vector<T>& choices, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, choices.size() - 1);
  return choices[dist(rng)];
}

}  // namespace

SignalVector SignalVector::from_raw(double pac, double mcr, double consumption,
                                    double violation_fraction) {
  return {clamp01(pac), clamp01(mcr), 1.0 - clamp01(consumption),
          1.0 - clamp01(violation_fraction)};
}

std::vector<int> FleetTopology::vns_on_pn(int pn) const {
  std::vector<int> out;
  for (const auto& vn : vns) {
    if (vn.pn == pn) out.push_back(vn.id);
  }
  return out;
}

std::vector<int> FleetTopology::malicious_vns() const {
  std::vector<int> out;
  for (const auto& vn : vns) {
    if (clients.at(vn.owner).role == ClientRole::kMalicious) out.push_back(vn.id);
  }
  return out;
}

void FleetTopology::validate() const {
  std::vector<double> load(pns.size(), 0.0);
  for (const auto& vn : vns) {
    if (vn.pn < 0 || vn.pn >= static_cast<int>(pns.size())) {
      throw std::logic_error("vn " + std::to_string(vn.id) + " has no host");
    }
    if (vn.meta.quota <= 0.0 || vn.meta.cpu_cap <= 0.0) {
      throw std::logic_error("vn " + std::to_string(vn.id) +
                             " has non-positive capacity");
    }
    load[vn.pn] += vn.meta.quota;
  }
  for (std::size_t p = 0; p < pns.size(); ++p) {
    if (load[p] > pns[p].capacity + 1e-9) {
      throw std::logic_error("pn " + std::to_string(p) + " over capacity");
    }
  }
  for (const auto& l : links) {
    if (l.a >= l.b) throw std::logic_error("link endpoints must satisfy a < b");
  }
}

void normalize(TraceSeries& series) {
  if (series.samples.empty()) return;
  minmax_normalize(series.samples, &TraceSample::cpu);
  minmax_normalize(series.samples, &TraceSample::mem);
}

LoadResult load_traces(const std::filesystem::path& path,
                       const TraceSchema& schema, int seq_len) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw TraceError("no series in " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw TraceError("missing column '" + name + "' in header");
  };
  const std::size_t c_vn = column(schema.vn_id);
  const std::size_t c_t = column(schema.timestep);
  const std::size_t c_cpu = column(schema.cpu);
  const std::size_t c_mem = column(schema.mem);
  const std::size_t needed = std::max({c_vn, c_t, c_cpu, c_mem}) + 1;

  std::map<std::int64_t, std::vector<TraceSample>> by_vn;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    std::int64_t vn = 0;
    TraceSample s;
    if (cells.size() < needed || !parse_int(trim(cells[c_vn]), vn) ||
        !parse_int(trim(cells[c_t]), s.timestep) ||
        !parse_double(trim(cells[c_cpu]), s.cpu) ||
        !parse_double(trim(cells[c_mem]), s.mem)) {
      throw TraceError("malformed row at line " + std::to_string(line_no) +
                       ": '" + line + "'");
    }
    by_vn[vn].push_back(s);
  }

  LoadResult result;
  for (auto& [vn, samples] : by_vn) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const auto& x, const auto& y) { return x.timestep < y.timestep; });
    for (std::size_t i = 1; i < samples.size(); ++i) {
      if (samples[i].timestep == samples[i - 1].timestep) {
        throw TraceError("duplicate timestep " +
                         std::to_string(samples[i].timestep) + " for vn " +
                         std::to_string(vn));
      }
    }
    if (static_cast<int>(samples.size()) < seq_len) {
      result.warnings.push_back("skipping vn " + std::to_string(vn) + ": " +
                                std::to_string(samples.size()) +
                                " samples < seq_len " + std::to_string(seq_len));
      continue;
    }
    TraceSeries series{static_cast<int>(vn), std::move(samples)};
    normalize(series);
    result.series.push_back(std::move(series));
  }
  if (result.series.empty()) throw TraceError("no series in " + path.string());
  return result;
}

void write_traces(const std::filesystem::path& path,
                  std::span<const TraceSeries> series) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write trace file: " + path.string());
  out << "vn_id,timestep,cpu,mem\n";
  out.precision(17);
  for (const auto& s : series) {
    for (const auto& x : s.samples) {
      out << s.vn_id << ',' << x.timestep << ',' << x.cpu << ',' << x.mem << '\n';
    }
  }
}

std::vector<TraceSeries> synthesize_traces(int vn_count, int length,
                                           std::uint64_t seed,
                                           const SynthParams& p, int seq_len) {
  if (vn_count < 1) throw std::invalid_argument("vn_count must be >= 1");
  if (length < seq_len) {
    throw TraceError("trace length " + std::to_string(length) +
                     " < seq_len " + std::to_string(seq_len));
  }
  std::vector<TraceSeries> out;
  out.reserve(vn_count);
  for (int v = 0; v < vn_count; ++v) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(v)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, p.noise_sd);
    const double mu = p.mean_min + (p.mean_max - p.mean_min) * unit(rng);
    const double mem_mu = p.mean_min + (p.mean_max - p.mean_min) * unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);

    TraceSeries series;
    series.vn_id = v;
    series.samples.reserve(length);
    double dev = 0.0;
    for (int t = 0; t < length; ++t) {
      dev = p.phi * dev + noise(rng);
      const double season =
          p.season_amp * std::sin(2.0 * std::numbers::pi * t / p.season_period + phase);
      const double cpu = clamp01(mu + season + dev);
      const double mem =
          clamp01(mem_mu + p.mem_coupling * (cpu - mu) + 0.5 * noise(rng));
      series.samples.push_back({t, cpu, mem});
    }
    out.push_back(std::move(series));
  }
  return out;
}

std::size_t window_count(std::size_t length, std::size_t seq_len) {
  if (seq_len == 0) throw std::invalid_argument("seq_len must be positive");
  if (length < seq_len) {
    throw TraceError("series of length " + std::to_string(length) +
                     " is shorter than seq_len " + std::to_string(seq_len));
  }
  return length - seq_len + 1;
}

std::vector<std::span<const TraceSample>> window_sequences(
    const TraceSeries& series, int seq_len) {
  if (seq_len <= 0) throw std::invalid_argument("seq_len must be positive");
  return sliding_windows(std::span<const TraceSample>(series.samples),
                         static_cast<std::size_t>(seq_len));
}

CapacityPlan draw_capacity_plan(int vn_count, int pn_count, std::uint64_t seed,
                                const FleetParams& params) {
  if (pn_count < 1 || vn_count < pn_count) {
    throw std::invalid_argument("need vn_count >= pn_count >= 1");
  }
  std::mt19937_64 rng(derive_seed(seed, 0x51a7));
  CapacityPlan plan;
  plan.quotas.reserve(vn_count);
  for (int i = 0; i < vn_count; ++i) plan.quotas.push_back(pick(params.quota_choices, rng));
  plan.capacities.reserve(pn_count);
  for (int i = 0; i < pn_count; ++i) {
    plan.capacities.push_back(pick(params.capacity_choices, rng));
  }
  // Capacity choices set relative host sizes; the fleet is scaled so usable
  // capacity covers the demand plus slack for bin-packing loss.
  const double demand = std::accumulate(plan.quotas.begin(), plan.quotas.end(), 0.0);
  const double usable = params.placement_headroom *
                        std::accumulate(plan.capacities.begin(), plan.capacities.end(), 0.0);
  const double scale = params.placement_slack * demand / usable;
  for (auto& c : plan.capacities) c *= scale;
  return plan;
}

std::vector<int> allocate_vns(std::span<const double> quotas,
                              std::span<const double> capacities,
                              std::uint64_t seed, double headroom) {
  if (capacities.empty()) throw std::invalid_argument("no physical nodes");
  if (headroom <= 0.0 || headroom > 1.0) {
    throw std::invalid_argument("headroom must lie in (0, 1]");
  }
  std::vector<int> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0xffd));
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return quotas[x] > quotas[y]; });

  std::vector<double> load(capacities.size(), 0.0);
  std::vector<int> placement(quotas.size(), -1);
  for (int vn : order) {
    if (quotas[vn] <= 0.0) {
      throw std::invalid_argument("vn " + std::to_string(vn) + " has non-positive quota");
    }
    for (std::size_t p = 0; p < capacities.size(); ++p) {
      if (load[p] + quotas[vn] <= headroom * capacities[p] + 1e-12) {
        load[p] += quotas[vn];
        placement[vn] = static_cast<int>(p);
        break;
      }
    }
    if (placement[vn] < 0) {
      throw std::runtime_error("vn " + std::to_string(vn) +
                               " cannot be placed: no physical node has " +
                               std::to_string(quotas[vn]) + " units free");
    }
  }
  return placement;
}

std::vector<int> allocate_vns(int vn_count, int pn_count, std::uint64_t seed,
                              const FleetParams& params) {
  const auto plan = draw_capacity_plan(vn_count, pn_count, seed, params);
  return allocate_vns(plan.quotas, plan.capacities, seed, params.placement_headroom);
}

std::vector<NodeMetadata> generate_metadata(const FleetTopology& topology,
                                            std::uint64_t seed,
                                            const FleetParams& params) {
  std::mt19937_64 rng(derive_seed(seed, 0x3e7a));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<NodeMetadata> out;
  out.reserve(topology.vns.size());
  for (const auto& vn : topology.vns) {
    NodeMetadata m;
    m.model_drift = params.drift_max * unit(rng);
    m.pdr = clamp01(params.pdr_mean + params.pdr_spread * (2.0 * unit(rng) - 1.0));
    m.quota = vn.meta.quota;
    m.cpu_cap = m.quota * (1.0 + 0.5 * unit(rng));
    out.push_back(m);
  }
  return out;
}

FleetTopology build_fleet(std::span<const TraceSeries> traces, int pn_count,
                          std::uint64_t seed, const FleetParams& params) {
  const int n = static_cast<int>(traces.size());
  const auto plan = draw_capacity_plan(n, pn_count, seed, params);
  const auto placement =
      allocate_vns(plan.quotas, plan.capacities, seed, params.placement_headroom);

  FleetTopology topo;
  std::mt19937_64 rng(derive_seed(seed, 0xf1ee7));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int p = 0; p < pn_count; ++p) {
    topo.pns.push_back({p, plan.capacities[p], 0.2 + 0.8 * unit(rng)});
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int malicious =
      static_cast<int>(std::lround(params.malicious_fraction * n));
  topo.clients.resize(n);
  for (int i = 0; i < n; ++i) topo.clients[i].id = i;
  for (int i = 0; i < malicious; ++i) {
    topo.clients[order[i]].role = ClientRole::kMalicious;
  }

  for (int v = 0; v < n; ++v) {
    VirtualNode vn;
    vn.id = v;
    vn.pn = placement[v];
    vn.owner = v;
    vn.meta.quota = plan.quotas[v];
    double mean_cpu = 0.0;
    for (const auto& s : traces[v].samples) mean_cpu += s.cpu;
    vn.intensity = traces[v].samples.empty() ? 0.5 : mean_cpu / traces[v].samples.size();
    topo.vns.push_back(vn);
    topo.sub_apps.push_back({v, v, v});
  }
  const auto meta = generate_metadata(topo, seed, params);
  for (int v = 0; v < n; ++v) topo.vns[v].meta = meta[v];

  std::mt19937_64 link_rng(derive_seed(seed, 0x11a4));
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const bool same_host = topo.vns[a].pn == topo.vns[b].pn;
      const double lo = same_host ? params.intra_pn_latency_min : params.inter_pn_latency_min;
      const double hi = same_host ? params.intra_pn_latency_max : params.inter_pn_latency_max;
      const double latency = lo + (hi - lo) * unit(link_rng);
      topo.links.push_back(
          {a, b, std::min(meta[a].pdr, meta[b].pdr), latency});
    }
  }
  topo.validate();
  return topo;
}

double resource_utilization(const FleetTopology& topology) {
  std::vector<double> load(topology.pns.size(), 0.0);
  std::vector<bool> active(topology.pns.size(), false);
  for (const auto& vn : topology.vns) {
    load[vn.pn] += vn.meta.quota;
    active[vn.pn] = true;
  }
  double sum = 0.0;
  int count = 0;
  for (std::size_t p = 0; p < load.size(); ++p) {
    if (!active[p]) continue;
    sum += load[p] / topology.pns[p].capacity;
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

int active_pn_count(const FleetTopology& topology) {
  std::vector<bool> active(topology.pns.size(), false);
  for (const auto& vn : topology.vns) active[vn.pn] = true;
  return static_cast<int>(std::count(active.begin(), active.end(), true));
}

}  // namespace mtsecom::telemetry
