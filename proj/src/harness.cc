#include "mtsecom/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mtsecom::harness {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t {
  kTraces = 1,
  kFleet = 2,
  kInjection = 3,
  kMonitor = 4,
  kPeers = 5,
  kSplit = 6,
  kPolicy = 7,
};

// ---- config (de)serialization ----

using Setter = std::function<void(const json&)>;

void require(bool ok, const std::string& key, const char* what) {
  if (!ok) throw ConfigError("config key '" + key + "' must be " + what);
}

Setter int_field(const std::string& key, int& out) {
  return [&out, key](const json& v) {
    require(v.is_number_integer(), key, "an integer");
    out = v.get<int>();
  };
}

Setter u64_field(const std::string& key, std::uint64_t& out) {
  return [&out, key](const json& v) {
    require(v.is_number_unsigned(), key, "a non-negative integer");
    out = v.get<std::uint64_t>();
  };
}

Setter size_field(const std::string& key, std::size_t& out) {
  return [&out, key](const json& v) {
    require(v.is_number_unsigned(), key, "a non-negative integer");
    out = v.get<std::size_t>();
  };
}

Setter double_field(const std::string& key, double& out) {
  return [&out, key](const json& v) {
    require(v.is_number(), key, "a number");
    out = v.get<double>();
  };
}

Setter bool_field(const std::string& key, bool& out) {
  return [&out, key](const json& v) {
    require(v.is_boolean(), key, "a boolean");
    out = v.get<bool>();
  };
}

void apply_object(const json& obj, const std::string& where,
                  const std::map<std::string, Setter>& setters) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("unknown config key '" + where + "." + key + "'");
    }
    it->second(value);
  }
}

void apply_trust(const json& obj, trust::TrustParams& p) {
  std::map<std::string, Setter> s;
  s["lambda_decay"] = double_field("lambda_decay", p.lambda_decay);
  s["eta"] = double_field("eta", p.eta);
  s["rho"] = double_field("rho", p.rho);
  s["kappa1"] = double_field("kappa1", p.kappa1);
  s["kappa2"] = double_field("kappa2", p.kappa2);
  s["history_window"] = size_field("history_window", p.history_window);
  s["controller_gain"] = double_field("controller_gain", p.controller_gain);
  s["signal_weights"] = [&p](const json& v) {
    require(v.is_array() && !v.empty(), "signal_weights", "a non-empty array");
    p.signal_weights.clear();
    for (const auto& w : v) {
      require(w.is_number(), "signal_weights", "an array of numbers");
      p.signal_weights.push_back(w.get<double>());
    }
  };
  s["default_gammas"] = [&p](const json& v) {
    require(v.is_array() && v.size() == 3, "default_gammas", "an array of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) {
      require(v[i].is_number(), "default_gammas", "an array of 3 numbers");
      p.default_gammas[i] = v[i].get<double>();
    }
  };
  s["aggregator"] = [&p](const json& v) {
    std::map<std::string, Setter> a;
    a["kind"] = [&p](const json& k) {
      require(k.is_string(), "aggregator.kind", "a string");
      try {
        p.aggregator.kind = trust::aggregator_from_string(k.get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    };
    a["trim"] = double_field("trim", p.aggregator.trim);
    apply_object(v, "trust.aggregator", a);
  };
  apply_object(obj, "trust", s);
}

void apply_classifier(const json& obj, classifier::ClassifierConfig& c) {
  std::map<std::string, Setter> s;
  s["d_model"] = int_field("d_model", c.d_model);
  s["n_heads"] = int_field("n_heads", c.n_heads);
  s["n_layers"] = int_field("n_layers", c.n_layers);
  s["d_ff"] = int_field("d_ff", c.d_ff);
  s["batch_size"] = int_field("batch_size", c.batch_size);
  s["epochs"] = int_field("epochs", c.epochs);
  s["learning_rate"] = double_field("learning_rate", c.learning_rate);
  s["patience"] = int_field("patience", c.patience);
  s["seq_len"] = int_field("seq_len", c.seq_len);
  s["n_features"] = int_field("n_features", c.n_features);
  s["positional_encoding"] = bool_field("positional_encoding", c.positional_encoding);
  s["recon_weight"] = double_field("recon_weight", c.recon_weight);
  s["grad_clip"] = double_field("grad_clip", c.grad_clip);
  s["seed"] = u64_field("seed", c.seed);
  apply_object(obj, "classifier", s);
}

void apply_rcm(const json& obj, rcm::RcmParams& p) {
  std::map<std::string, Setter> s;
  s["beta_tradeoff"] = double_field("beta_tradeoff", p.beta_tradeoff);
  s["l_max"] = double_field("l_max", p.l_max);
  s["tau_res"] = double_field("tau_res", p.tau_res);
  s["l_min"] = double_field("l_min", p.l_min);
  s["alpha1"] = double_field("alpha1", p.alpha1);
  s["alpha2"] = double_field("alpha2", p.alpha2);
  s["alpha3"] = double_field("alpha3", p.alpha3);
  s["low_trust"] = double_field("low_trust", p.low_trust);
  s["policy_window"] = int_field("policy_window", p.policy_window);
  s["policy_tolerance"] = double_field("policy_tolerance", p.policy_tolerance);
  apply_object(obj, "rcm", s);
}

json config_json(const RunConfig& c) {
  const auto& t = c.trust;
  const auto& k = c.classifier;
  const auto& r = c.rcm;
  return {
      {"vn_count", c.vn_count},
      {"pm_count", c.pm_count},
      {"seq_len", c.seq_len},
      {"attack_rate", c.attack_rate},
      {"attack_duration", c.attack_duration},
      {"seed", c.seed},
      {"timesteps", c.timesteps},
      {"peers_per_client", c.peers_per_client},
      {"policy_iterations", c.policy_iterations},
      {"log_retention", c.log_retention},
      {"trust",
       {{"lambda_decay", t.lambda_decay},
        {"signal_weights", t.signal_weights},
        {"eta", t.eta},
        {"rho", t.rho},
        {"kappa1", t.kappa1},
        {"kappa2", t.kappa2},
        {"aggregator",
         {{"kind", trust::to_string(t.aggregator.kind)}, {"trim", t.aggregator.trim}}},
        {"history_window", t.history_window},
        {"default_gammas", t.default_gammas},
        {"controller_gain", t.controller_gain}}},
      {"classifier",
       {{"d_model", k.d_model},
        {"n_heads", k.n_heads},
        {"n_layers", k.n_layers},
        {"d_ff", k.d_ff},
        {"batch_size", k.batch_size},
        {"epochs", k.epochs},
        {"learning_rate", k.learning_rate},
        {"patience", k.patience},
        {"seq_len", k.seq_len},
        {"n_features", k.n_features},
        {"positional_encoding", k.positional_encoding},
        {"recon_weight", k.recon_weight},
        {"grad_clip", k.grad_clip},
        {"seed", k.seed}}},
      {"rcm",
       {{"beta_tradeoff", r.beta_tradeoff},
        {"l_max", r.l_max},
        {"tau_res", r.tau_res},
        {"l_min", r.l_min},
        {"alpha1", r.alpha1},
        {"alpha2", r.alpha2},
        {"alpha3", r.alpha3},
        {"low_trust", r.low_trust},
        {"policy_window", r.policy_window},
        {"policy_tolerance", r.policy_tolerance}}},
  };
}

RunConfig config_from(const json& obj) {
  RunConfig c;
  std::map<std::string, Setter> s;
  s["vn_count"] = int_field("vn_count", c.vn_count);
  s["pm_count"] = int_field("pm_count", c.pm_count);
  s["seq_len"] = int_field("seq_len", c.seq_len);
  s["attack_rate"] = double_field("attack_rate", c.attack_rate);
  s["attack_duration"] = int_field("attack_duration", c.attack_duration);
  s["seed"] = u64_field("seed", c.seed);
  s["timesteps"] = int_field("timesteps", c.timesteps);
  s["peers_per_client"] = int_field("peers_per_client", c.peers_per_client);
  s["policy_iterations"] = int_field("policy_iterations", c.policy_iterations);
  s["log_retention"] = int_field("log_retention", c.log_retention);
  s["trust"] = [&c](const json& v) { apply_trust(v, c.trust); };
  s["classifier"] = [&c](const json& v) { apply_classifier(v, c.classifier); };
  s["rcm"] = [&c](const json& v) { apply_rcm(v, c.rcm); };
  apply_object(obj, "config", s);
  // A top-level seq_len also drives the classifier unless it was set there.
  if (obj.contains("seq_len") &&
      !(obj.contains("classifier") && obj["classifier"].contains("seq_len"))) {
    c.classifier.seq_len = c.seq_len;
  }
  c.validate();
  return c;
}

// ---- monitoring ----

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Peers of each client: ring neighbours in a seeded permutation, so every
// client both observes and is observed by the same number of peers.
std::vector<std::vector<int>> draw_peers(int n, int per_client, std::uint64_t seed) {
  std::vector<int> ring(n);
  std::iota(ring.begin(), ring.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ring.begin(), ring.end(), rng);
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[ring[i]] = i;

  std::vector<std::vector<int>> peers(n);
  const int reach = std::min(per_client, n - 1);
  for (int j = 0; j < n; ++j) {
    for (int d = 1; static_cast<int>(peers[j].size()) < reach; ++d) {
      for (int sign : {1, -1}) {
        if (static_cast<int>(peers[j].size()) >= reach) break;
        const int k = ring[((pos[j] + sign * d) % n + n) % n];
        if (k != j && std::find(peers[j].begin(), peers[j].end(), k) == peers[j].end()) {
          peers[j].push_back(k);
        }
      }
    }
  }
  return peers;
}

void monitor(Scenario& sc) {
  const auto& cfg = sc.config;
  const int n = static_cast<int>(sc.traces.size());
  const int T = sc.timesteps();
  const int L = cfg.seq_len;
  const auto& overlay = sc.injection.overlay;
  std::mt19937_64 rng(derive_seed(cfg.seed, kMonitor));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  sc.observations.assign(n, std::vector<Observation>(T));
  for (int i = 0; i < n; ++i) {
    const auto& meta = sc.topology.vns[i].meta;
    int violations_in_window = 0;
    for (int t = 0; t < T; ++t) {
      const auto& p = overlay.at(i, t);
      const auto s = overlay.apply(i, sc.traces[i].samples[t]);
      const double pac =
          clamp01(0.96 - 0.5 * meta.model_drift - p.pac - 0.3 * p.drift +
                  0.015 * gauss(rng));
      const double err = clamp01(0.01 + 0.01 * std::abs(gauss(rng)) + p.err);
      const double delay = 0.1 * std::abs(gauss(rng)) + p.delay;
      const double jitter = 0.02 * std::abs(gauss(rng)) + p.jitter;
      const double leakage = clamp01(0.01 * std::abs(gauss(rng)));
      const double usage = meta.quota * (0.5 + 0.3 * s.cpu + p.usage_excess);
      const double mcr = clamp01((1.0 - err) * std::exp(-0.2 * delay));
      const double consumption = clamp01(usage / (2.0 * meta.quota));

      Observation& ob = sc.observations[i][t];
      ob.violation = err > 0.1 || delay > 1.0 || usage > meta.quota;
      violations_in_window += ob.violation ? 1 : 0;
      if (t >= L && sc.observations[i][t - L].violation) --violations_in_window;
      const int span = std::min(t + 1, L);
      ob.signals = telemetry::SignalVector::from_raw(
          pac, mcr, consumption, static_cast<double>(violations_in_window) / span);
      ob.link_instability = clamp01(jitter + (1.0 - meta.pdr));
      ob.context.err_rate = err;
      ob.context.report_delay = delay;
      ob.context.usage = usage;
      ob.context.quota = meta.quota;
      ob.context.pdr = meta.pdr;
      ob.context.jitter = jitter;
      ob.context.leakage = leakage;
      ob.factors = trust::context_factor_values(ob.context);
      ob.features = {ob.signals.pac, ob.signals.mcr, ob.signals.arc, ob.signals.pvc_inv,
                     s.cpu,          s.mem,          ob.factors[0],  ob.factors[1],
                     ob.factors[2],  ob.factors[3],  ob.factors[4],  1.0};
    }
  }

  // Peer reports and the consistency of each reporter against the median.
  const auto peers = draw_peers(n, cfg.peers_per_client, derive_seed(cfg.seed, kPeers));
  std::set<int> colluders;
  for (const auto& c : sc.topology.clients) {
    if (c.role == telemetry::ClientRole::kMalicious) colluders.insert(c.id);
  }
  sc.reports.assign(T, std::vector<std::vector<PeerReport>>(n));
  for (int t = 0; t < T; ++t) {
    std::vector<double> deviation(n, 0.0);
    std::vector<int> reports_made(n, 0);
    for (int j = 0; j < n; ++j) {
      const auto& f = sc.observations[j][t].factors;
      auto& out = sc.reports[t][j];
      for (int k : peers[j]) {
        const double honest = clamp01(mean_of(f) + 0.02 * gauss(rng));
        const double bias = overlay.at(k, t).feedback_bias;
        double score = honest;
        if (bias > 0.0) {
          score = colluders.contains(j) ? honest + std::min(bias, 1.0) * (1.0 - honest)
                                        : (1.0 - std::min(bias, 1.0)) * honest;
        }
        out.push_back({k, clamp01(score), 5.0 * unit(rng)});
      }
      if (out.empty()) continue;
      std::vector<double> scores;
      for (const auto& r : out) scores.push_back(r.score);
      const double med = median_of(scores);
      for (const auto& r : out) {
        deviation[r.from] += std::abs(r.score - med);
        ++reports_made[r.from];
      }
    }
    for (int k = 0; k < n; ++k) {
      const double c = reports_made[k] == 0 ? 1.0 : 1.0 - deviation[k] / reports_made[k];
      sc.observations[k][t].feedback_consistency = c;
      sc.observations[k][t].features[kFeatureCount - 1] = c;
    }
  }
}

void build_windows(Scenario& sc) {
  const int n = static_cast<int>(sc.traces.size());
  const int T = sc.timesteps();
  const int L = sc.config.seq_len;
  sc.windows.clear();
  sc.window_end.clear();
  for (int i = 0; i < n; ++i) {
    for (int end = L - 1; end < T; ++end) {
      classifier::LabeledWindow w;
      w.vn_id = i;
      w.x.resize(L, kFeatureCount);
      for (int r = 0; r < L; ++r) {
        const auto& f = sc.observations[i][end - L + 1 + r].features;
        for (int c = 0; c < kFeatureCount; ++c) w.x(r, c) = f[c];
      }
      w.label = window_label(sc.injection.overlay, i, end, L);
      sc.windows.push_back(std::move(w));
      sc.window_end.push_back(end);
    }
  }
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

json metrics_json(const Metrics& m) {
  return {{"vn", m.vn},
          {"apn", m.apn},
          {"acc", m.accuracy},
          {"me", m.mean_error},
          {"hl", m.hamming_loss},
          {"ru", m.resource_utilization},
          {"trust_improvement", m.trust_improvement},
          {"latency_reduction", m.latency_reduction}};
}

json report_json(const MetricsReport& r) {
  return {{"config", config_json(r.config)},
          {"metrics", metrics_json(r.metrics)},
          {"evaluated", r.evaluated},
          {"client_accuracy", r.client_accuracy},
          {"collusion_manipulation", r.collusion_manipulation}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.config = config_from(j.at("config"));
  const auto& m = j.at("metrics");
  r.metrics.vn = m.at("vn").get<int>();
  r.metrics.apn = m.at("apn").get<int>();
  r.metrics.accuracy = m.at("acc").get<double>();
  r.metrics.mean_error = m.at("me").get<double>();
  r.metrics.hamming_loss = m.at("hl").get<double>();
  r.metrics.resource_utilization = m.at("ru").get<double>();
  r.metrics.trust_improvement = m.at("trust_improvement").get<double>();
  r.metrics.latency_reduction = m.at("latency_reduction").get<double>();
  r.evaluated = j.at("evaluated").get<std::size_t>();
  r.client_accuracy = j.at("client_accuracy").get<double>();
  r.collusion_manipulation = j.at("collusion_manipulation").get<double>();
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---- config ----

void RunConfig::validate() const {
  if (vn_count < 2) throw ConfigError("vn_count must be >= 2");
  if (pm_count < 1) throw ConfigError("pm_count must be >= 1");
  if (seq_len < 1) throw ConfigError("seq_len must be >= 1");
  if (!(attack_rate >= 0.0 && attack_rate <= 1.0)) {
    throw ConfigError("attack_rate must lie in [0, 1]");
  }
  if (attack_duration < 1) throw ConfigError("attack_duration must be >= 1");
  if (timesteps < 0) throw ConfigError("timesteps must be >= 0");
  if (timesteps > 0 && timesteps < seq_len) {
    throw ConfigError("timesteps must be 0 or at least seq_len");
  }
  if (peers_per_client < 0) throw ConfigError("peers_per_client must be >= 0");
  if (policy_iterations < 0) throw ConfigError("policy_iterations must be >= 0");
  if (log_retention < 0) throw ConfigError("log_retention must be >= 0");
  if (classifier.seq_len != seq_len) {
    throw ConfigError("classifier.seq_len must equal seq_len");
  }
  if (classifier.n_features != kFeatureCount) {
    throw ConfigError("classifier.n_features must be " + std::to_string(kFeatureCount));
  }
  try {
    trust.validate();
    classifier.validate();
    rcm.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return config_from(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& config) { return config_json(config).dump(2); }

// ---- scenario ----

int Scenario::timesteps() const {
  return traces.empty() ? 0 : static_cast<int>(traces.front().size());
}

int window_label(const threat::TelemetryOverlay& overlay, int vn, int end, int seq_len) {
  for (int t = end - seq_len + 1; t <= end; ++t) {
    if (overlay.affected(vn, t)) return 0;
  }
  return 1;
}

Scenario prepare_scenario(const RunConfig& config) {
  config.validate();
  return prepare_scenario(
      config, telemetry::synthesize_traces(config.vn_count, config.timesteps,
                                           derive_seed(config.seed, kTraces), {},
                                           config.seq_len));
}

Scenario prepare_scenario(const RunConfig& config,
                          std::vector<telemetry::TraceSeries> traces) {
  Scenario sc;
  sc.config = config;
  if (traces.size() < 2) throw std::invalid_argument("at least two trace series required");
  std::size_t length = traces.front().size();
  for (const auto& s : traces) length = std::min(length, s.size());
  // Re-stamp to a shared 0-based timeline.
  for (std::size_t v = 0; v < traces.size(); ++v) {
    traces[v].vn_id = static_cast<int>(v);
    traces[v].samples.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
      traces[v].samples[t].timestep = static_cast<std::int64_t>(t);
    }
  }
  sc.config.vn_count = static_cast<int>(traces.size());
  sc.config.timesteps = static_cast<int>(length);
  sc.config.validate();
  sc.traces = std::move(traces);

  sc.topology = telemetry::build_fleet(sc.traces, sc.config.pm_count,
                                       derive_seed(sc.config.seed, kFleet));
  sc.injection = threat::inject_attacks(sc.timesteps(), sc.config.attack_rate,
                                        sc.config.attack_duration,
                                        derive_seed(sc.config.seed, kInjection),
                                        sc.topology);
  monitor(sc);
  build_windows(sc);
  return sc;
}

// ---- metrics ----

Metrics compute_metrics(std::span<const EvaluatedDecision> decisions,
                        std::span<const int> labels,
                        const telemetry::FleetTopology& topology,
                        std::span<const double> trust_improvements,
                        double optimized_latency, double all_links_latency) {
  if (decisions.size() != labels.size()) {
    throw std::invalid_argument("decisions and labels differ in length");
  }
  Metrics m;
  m.vn = static_cast<int>(topology.vns.size());
  m.apn = telemetry::active_pn_count(topology);
  m.resource_utilization = topology.vns.empty() ? 0.0 : telemetry::resource_utilization(topology);
  if (!decisions.empty()) {
    std::size_t correct = 0;
    double abs_err = 0.0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
      if (decisions[i].y == labels[i]) ++correct;
      abs_err += std::abs(decisions[i].probability - labels[i]);
    }
    const double total = static_cast<double>(decisions.size());
    m.accuracy = static_cast<double>(correct) / total;
    m.hamming_loss = 1.0 - m.accuracy;
    m.mean_error = abs_err / total;
  }
  m.trust_improvement = mean_of(trust_improvements);
  m.latency_reduction =
      all_links_latency > 0.0 ? 1.0 - optimized_latency / all_links_latency : 0.0;
  return m;
}

// ---- simulation ----

MetricsReport run_simulation(const RunConfig& config) {
  config.validate();
  MetricsReport report;
  report.config = config;
  if (config.timesteps == 0) return report;

  Scenario sc = prepare_scenario(config);
  const int n = config.vn_count;
  const int T = sc.timesteps();
  const int L = config.seq_len;
  const int per_client = T - L + 1;
  auto window_index = [&](int client, int end) {
    return static_cast<std::size_t>(client) * per_client + (end - L + 1);
  };

  const auto split = classifier::split_by_vn(sc.windows, derive_seed(config.seed, kSplit));
  classifier::TrainResult trained = [&] {
    try {
      return classifier::train(sc.windows, split, config.classifier);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("training failed: ") + e.what());
    }
  }();
  const auto& model = trained.model;

  rcm::CommGraph full;
  full.nodes.resize(n);
  std::iota(full.nodes.begin(), full.nodes.end(), 0);
  for (const auto& l : sc.topology.links) {
    full.edges.push_back(rcm::make_edge(l.a, l.b, l.reliability, l.latency_ms));
  }
  const double all_links_latency = rcm::mean_latency(full.edges);

  std::vector<trust::TrustState> states(n);
  for (auto& s : states) s.history = trust::TrustHistory(config.trust.history_window);
  std::vector<std::deque<int>> recent_decisions(n);
  std::vector<classifier::Decision> decisions(sc.windows.size());
  std::vector<double> improvements;
  std::vector<double> manipulation;
  double latency_sum = 0.0;
  int latency_steps = 0;

  for (int t = 0; t < T; ++t) {
    StepLog log;
    log.t = t;
    try {
      // Evaluate: reporter variances are read from the previous step.
      std::vector<double> prev_variance(n);
      for (int k = 0; k < n; ++k) prev_variance[k] = states[k].history.variance();
      for (int i = 0; i < n; ++i) {
        const auto& ob = sc.observations[i][t];
        const auto curr = ob.signals.as_array();
        const auto prev = sc.observations[i][std::max(t - 1, 0)].signals.as_array();
        std::vector<trust::PeerFeedback> feedback;
        for (const auto& r : sc.reports[t][i]) {
          feedback.push_back({r.from, r.score, r.age, prev_variance[r.from]});
        }
        trust::ClientInputs in;
        in.prev_signals = prev;
        in.curr_signals = curr;
        in.context = ob.context;
        in.feedback = feedback;
        in.control.violation_rate = 1.0 - ob.signals.pvc_inv;
        in.control.link_instability = ob.link_instability;
        const auto& hist = recent_decisions[i];
        in.control.anomaly_frequency =
            hist.empty() ? 0.0
                         : static_cast<double>(std::count(hist.begin(), hist.end(), 0)) /
                               static_cast<double>(hist.size());
        try {
          trust::update_trust(states[i], in, config.trust);
        } catch (const std::exception& e) {
          throw std::runtime_error("client " + std::to_string(i) + ": " + e.what());
        }
        const auto& s = states[i];
        log.trust.push_back({i, s.temporal, s.contextual, s.federated, s.fused, s.gammas});
      }

      // Collusion manipulation against each target with active colluders.
      std::vector<double> step_manip;
      for (int j = 0; j < n; ++j) {
        std::vector<double> honest, dishonest;
        threat::CollusionScenario cs;
        cs.target_client = j;
        cs.aggregator = config.trust.aggregator;
        for (const auto& r : sc.reports[t][j]) {
          if (sc.injection.overlay.at(r.from, t).feedback_bias > 0.0) {
            dishonest.push_back(r.score);
            cs.colluders.push_back(r.from);
          } else {
            honest.push_back(r.score);
          }
        }
        if (!dishonest.empty() && !honest.empty()) {
          step_manip.push_back(threat::collusion_manipulation(cs, honest, dishonest));
        }
      }
      log.collusion_manipulation = mean_of(step_manip);
      manipulation.push_back(log.collusion_manipulation);

      if (t >= L - 1) {
        // Classify.
        std::map<int, int> y;
        for (int i = 0; i < n; ++i) {
          const std::size_t w = window_index(i, t);
          auto d = classifier::classify(sc.windows[w].x, model, i);
          decisions[w] = d;
          y[i] = d.y;
          recent_decisions[i].push_back(d.y);
          if (static_cast<int>(recent_decisions[i].size()) > L) {
            recent_decisions[i].pop_front();
          }
          log.decisions.push_back(d);
        }

        // Manage.
        const auto pruned = rcm::prune_untrusted(full, y);
        std::map<int, double> fused;
        for (int i = 0; i < n; ++i) fused[i] = states[i].fused;
        const auto greedy = rcm::greedy_select(pruned, config.rcm);
        const auto policy = rcm::policy_improve(
            pruned, greedy.edges, config.rcm, fused, config.policy_iterations,
            derive_seed(derive_seed(config.seed, kPolicy), static_cast<std::uint64_t>(t)));
        log.nodes = pruned.nodes;
        log.topology = policy.edges;
        log.objective = rcm::link_objective(policy.edges, config.rcm);
        log.reward = policy.reward;
        log.feasible =
            !pruned.nodes.empty() &&
            rcm::feasible(policy.edges, pruned.nodes, pruned.malicious, config.rcm).ok;
        log.mean_latency = rcm::mean_latency(policy.edges);
        if (!policy.edges.empty()) {
          latency_sum += log.mean_latency;
          ++latency_steps;
        }
        double all = 0.0, survivors = 0.0;
        for (int i = 0; i < n; ++i) all += states[i].fused;
        for (int i : pruned.nodes) survivors += states[i].fused;
        if (!pruned.nodes.empty()) {
          log.trust_improvement = survivors / static_cast<double>(pruned.nodes.size()) -
                                  all / static_cast<double>(n);
        }
        improvements.push_back(log.trust_improvement);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("timestep " + std::to_string(t) + ": " + e.what());
    }
    if (config.log_retention > 0) {
      report.logs.push_back(std::move(log));
      while (static_cast<int>(report.logs.size()) > config.log_retention) {
        report.logs.pop_front();
      }
    }
  }

  // Held-out evaluation.
  std::vector<EvaluatedDecision> evaluated;
  std::vector<int> labels;
  std::map<int, std::pair<int, int>> votes;   // client -> (predicted trusted, total)
  std::map<int, std::pair<int, int>> truths;  // client -> (labeled trusted, total)
  for (std::size_t w : split.test) {
    const auto& d = decisions[w];
    evaluated.push_back({d.y, d.probability});
    labels.push_back(sc.windows[w].label);
    const int c = sc.windows[w].vn_id;
    votes[c].first += d.y;
    ++votes[c].second;
    truths[c].first += sc.windows[w].label;
    ++truths[c].second;
  }
  report.metrics = compute_metrics(
      evaluated, labels, sc.topology, improvements,
      latency_steps > 0 ? latency_sum / latency_steps : all_links_latency, all_links_latency);
  report.evaluated = evaluated.size();
  if (!votes.empty()) {
    int agree = 0;
    for (const auto& [c, v] : votes) {
      const auto& tr = truths[c];
      const int predicted = 2 * v.first > v.second ? 1 : 0;
      const int actual = 2 * tr.first > tr.second ? 1 : 0;
      agree += predicted == actual ? 1 : 0;
    }
    report.client_accuracy = static_cast<double>(agree) / static_cast<double>(votes.size());
  }
  report.collusion_manipulation = mean_of(manipulation);
  return report;
}

std::vector<MetricsReport> sweep(const RunConfig& config, std::span<const double> rates) {
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("attack rates must lie in [0, 1]");
  }
  std::vector<MetricsReport> out;
  for (double r : rates) {
    RunConfig c = config;
    c.attack_rate = r;
    out.push_back(run_simulation(c));
  }
  return out;
}

// ---- reports ----

ReportFormat format_from_string(const std::string& name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  throw ConfigError("unknown report format '" + name + "'");
}

std::string report_to_csv(std::span<const MetricsReport> reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : reports) {
    const auto& m = r.metrics;
    out += std::to_string(m.vn) + "," + std::to_string(m.apn) + "," + fmt(m.accuracy) + "," +
           fmt(m.mean_error) + "," + fmt(m.hamming_loss) + "," +
           fmt(m.resource_utilization) + "," + fmt(m.trust_improvement) + "," +
           fmt(m.latency_reduction) + "\n";
  }
  return out;
}

std::string report_to_json(const MetricsReport& report) {
  return report_json(report).dump(2) + "\n";
}

void emit_report(const MetricsReport& report, const std::filesystem::path& path,
                 ReportFormat format) {
  emit_reports(std::span<const MetricsReport>(&report, 1), path, format);
}

void emit_reports(std::span<const MetricsReport> reports, const std::filesystem::path& path,
                  ReportFormat format) {
  if (format == ReportFormat::kCsv) {
    write_text(path, report_to_csv(reports));
  } else if (reports.size() == 1) {
    write_text(path, report_to_json(reports.front()));
  } else {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(report_json(r));
    write_text(path, arr.dump(2) + "\n");
  }
}

std::vector<MetricsReport> parse_report(const std::filesystem::path& path,
                                        ReportFormat format) {
  const std::string text = read_text(path);
  std::vector<MetricsReport> out;
  if (format == ReportFormat::kJson) {
    try {
      const json j = json::parse(text);
      if (j.is_array()) {
        for (const auto& item : j) out.push_back(report_from_json(item));
      } else {
        out.push_back(report_from_json(j));
      }
    } catch (const json::exception& e) {
      throw std::runtime_error(std::string("malformed report: ") + e.what());
    }
    return out;
  }
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("unexpected report header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw std::runtime_error("malformed report row: " + line);
    MetricsReport r;
    auto& m = r.metrics;
    m.vn = std::stoi(cells[0]);
    m.apn = std::stoi(cells[1]);
    m.accuracy = std::stod(cells[2]);
    m.mean_error = std::stod(cells[3]);
    m.hamming_loss = std::stod(cells[4]);
    m.resource_utilization = std::stod(cells[5]);
    m.trust_improvement = std::stod(cells[6]);
    m.latency_reduction = std::stod(cells[7]);
    out.push_back(r);
  }
  return out;
}

void write_trust_log(const MetricsReport& report, const std::filesystem::path& path) {
  std::string out = "t,client_id,temporal,contextual,federated,fused,g1,g2,g3\n";
  for (const auto& step : report.logs) {
    for (const auto& r : step.trust) {
      out += std::to_string(step.t) + "," + std::to_string(r.client) + "," +
             fmt(r.temporal) + "," + fmt(r.contextual) + "," + fmt(r.federated) + "," +
             fmt(r.fused) + "," + fmt(r.gammas.g1) + "," + fmt(r.gammas.g2) + "," +
             fmt(r.gammas.g3) + "\n";
    }
  }
  write_text(path, out);
}

void write_topology_log(const MetricsReport& report, const std::filesystem::path& path) {
  std::string out;
  for (const auto& step : report.logs) {
    json edges = json::array();
    for (const auto& e : step.topology) {
      edges.push_back({e.a, e.b, e.reliability, e.latency_ms});
    }
    out += json{{"t", step.t},
                {"nodes", step.nodes},
                {"edges", edges},
                {"objective", step.objective},
                {"reward", step.reward},
                {"feasible", step.feasible}}
               .dump() +
           "\n";
  }
  write_text(path, out);
}

classifier::TrainResult train_on_traces(const RunConfig& config,
                                        std::vector<telemetry::TraceSeries> traces) {
  const Scenario sc = prepare_scenario(config, std::move(traces));
  const auto split = classifier::split_by_vn(sc.windows, derive_seed(sc.config.seed, kSplit));
  return classifier::train(sc.windows, split, sc.config.classifier);
}

}  // namespace mtsecom::harness
