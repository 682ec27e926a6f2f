#include "mtsecom/trust.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mtsecom::trust {

std::string to_string(AggregatorKind kind) {
  return kind == AggregatorKind::kMedian ? "median" : "trimmed_mean";
}

AggregatorKind aggregator_from_string(const std::string& name) {
  if (name == "median") return AggregatorKind::kMedian;
  if (name == "trimmed_mean") return AggregatorKind::kTrimmedMean;
  throw std::invalid_argument("unknown aggregator '" + name + "'");
}

std::size_t trim_count(std::size_t n, double delta) {
  if (n == 0) return 0;
  // The epsilon keeps exact products such as 0.3 * 10 from rounding up.
  const auto k = static_cast<std::size_t>(
      std::ceil(delta * static_cast<double>(n) - 1e-9));
  return std::min(k, (n - 1) / 2);
}

double robust_aggregate(std::span<const double> values, const Aggregator& aggregator) {
  if (values.empty()) throw std::invalid_argument("robust_aggregate: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (aggregator.kind == AggregatorKind::kMedian) {
    return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  if (!(aggregator.trim > 0.0 && aggregator.trim < 0.5)) {
    throw std::invalid_argument("trim fraction must lie in (0, 0.5)");
  }
  const std::size_t k = trim_count(n, aggregator.trim);
  double sum = 0.0;
  for (std::size_t i = k; i < n - k; ++i) sum += sorted[i];
  return sum / static_cast<double>(n - 2 * k);
}

std::array<double, 5> context_factor_values(const ContextFactors& f) {
  if (f.quota <= 0.0) throw std::invalid_argument("quota must be positive");
  const double overuse = std::clamp((f.usage - f.quota) / f.quota, 0.0, 1.0);
  return {1.0 - f.err_rate, std::exp(-f.beta_time * f.report_delay), 1.0 - overuse,
          f.pdr / (1.0 + f.jitter), 1.0 - f.leakage};
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double contextual_trust(const ContextFactors& f) {
  const auto factors = context_factor_values(f);
  double z = 0.0;
  for (std::size_t r = 0; r < factors.size(); ++r) z += f.alphas[r] * factors[r];
  return logistic(z);
}

void TrustParams::validate() const {
  if (lambda_decay <= 0.0) throw std::invalid_argument("lambda_decay must be > 0");
  double w_sum = 0.0;
  for (double w : signal_weights) {
    if (w < 0.0) throw std::invalid_argument("signal weights must be non-negative");
    w_sum += w;
  }
  if (std::abs(w_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("signal weights must sum to 1");
  }
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta must lie in [0, 1]");
  if (rho <= 0.0) throw std::invalid_argument("rho must be > 0");
  if (kappa1 < 0.0 || kappa2 < 0.0 || std::abs(kappa1 + kappa2 - 1.0) > 1e-9) {
    throw std::invalid_argument("kappa1 + kappa2 must equal 1");
  }
  if (aggregator.kind == AggregatorKind::kTrimmedMean &&
      !(aggregator.trim > 0.0 && aggregator.trim < 0.5)) {
    throw std::invalid_argument("trim fraction must lie in (0, 0.5)");
  }
  if (history_window == 0) throw std::invalid_argument("history_window must be > 0");
  const double g_sum = default_gammas[0] + default_gammas[1] + default_gammas[2];
  if (std::abs(g_sum - 1.0) > 1e-9 ||
      *std::min_element(default_gammas.begin(), default_gammas.end()) < 0.0) {
    throw std::invalid_argument("default gammas must form a simplex point");
  }
}

double temporal_trust(std::span<const double> prev, std::span<const double> curr,
                      const TrustParams& params, OpCounter* counter) {
  const auto& w = params.signal_weights;
  if (prev.size() != curr.size() || curr.size() != w.size()) {
    throw std::invalid_argument("signal and weight dimensions differ");
  }
  double w_sum = 0.0;
  double decline = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w_sum += w[k];
    decline += w[k] * (prev[k] - curr[k]);
  }
  count(counter, w.size());
  if (std::abs(w_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("signal weights must sum to 1");
  }
  return std::min(1.0, std::exp(-params.lambda_decay * decline));
}

double temporal_trust(const telemetry::SignalVector& prev,
                      const telemetry::SignalVector& curr, const TrustParams& params) {
  const auto p = prev.as_array();
  const auto c = curr.as_array();
  return temporal_trust(p, c, params);
}

double credibility_weight(const PeerFeedback& fb, const TrustParams& params) {
  return params.eta * std::exp(-params.rho * fb.age) +
         (1.0 - params.eta) / (1.0 + fb.reporter_variance);
}

double federated_trust(std::span<const PeerFeedback> feedback, double temporal,
                       double contextual, const TrustParams& params,
                       OpCounter* counter) {
  if (std::abs(params.kappa1 + params.kappa2 - 1.0) > 1e-9) {
    throw std::invalid_argument("kappa1 + kappa2 must equal 1");
  }
  const double cap = params.kappa1 * temporal + params.kappa2 * contextual;
  if (feedback.empty()) return cap;
  std::vector<double> weighted;
  weighted.reserve(feedback.size());
  for (const auto& fb : feedback) {
    weighted.push_back(credibility_weight(fb, params) * fb.score);
  }
  count(counter, feedback.size());
  return std::min(robust_aggregate(weighted, params.aggregator), cap);
}

Gammas adapt_weights(const ControlSignals& s, const Gammas& defaults, double gain) {
  if (s.violation_rate == 0.0 && s.link_instability == 0.0 &&
      s.anomaly_frequency == 0.0) {
    return defaults;
  }
  const double r1 = defaults.g1 * std::exp(-gain * s.violation_rate);
  const double r2 = defaults.g2 * std::exp(gain * s.link_instability);
  const double r3 = defaults.g3 * std::exp(gain * s.anomaly_frequency);
  const double total = r1 + r2 + r3;
  Gammas out{r1 / total, r2 / total, 0.0};
  out.g3 = 1.0 - out.g1 - out.g2;
  return out;
}

void TrustHistory::push(double value) {
  values_.push_back(value);
  sum_ += value;
  sum_sq_ += value * value;
  if (values_.size() > window_) {
    const double old = values_.front();
    values_.pop_front();
    sum_ -= old;
    sum_sq_ -= old * old;
  }
}

double TrustHistory::variance() const {
  if (values_.empty()) return 0.0;
  const double n = static_cast<double>(values_.size());
  const double mean = sum_ / n;
  return std::max(0.0, sum_sq_ / n - mean * mean);
}

double fuse_trust(const TrustState& state) {
  const auto& g = state.gammas;
  if (g.g1 < 0.0 || g.g2 < 0.0 || g.g3 < 0.0 || std::abs(g.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("gammas must form a simplex point");
  }
  return clamp01(g.g1 * state.temporal + g.g2 * state.contextual +
                 g.g3 * state.federated);
}

void update_trust(TrustState& state, const ClientInputs& inputs,
                  const TrustParams& params, OpCounter* counter) {
  state.temporal = inputs.prev_signals.empty()
                       ? 1.0
                       : temporal_trust(inputs.prev_signals, inputs.curr_signals,
                                        params, counter);
  state.contextual = contextual_trust(inputs.context);
  count(counter, 5);
  state.federated = federated_trust(inputs.feedback, state.temporal,
                                    state.contextual, params, counter);
  const Gammas defaults{params.default_gammas[0], params.default_gammas[1],
                        params.default_gammas[2]};
  state.gammas = adapt_weights(inputs.control, defaults, params.controller_gain);
  state.fused = fuse_trust(state);
  count(counter, 6);
  state.history.push(state.fused);
  count(counter);
}

}  // namespace mtsecom::trust
