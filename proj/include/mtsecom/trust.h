#ifndef MTSECOM_TRUST_H_
#define MTSECOM_TRUST_H_

#include <array>
#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "mtsecom/common.h"
#include "mtsecom/telemetry.h"

namespace mtsecom::trust {

enum class AggregatorKind { kTrimmedMean, kMedian };

struct Aggregator {
  AggregatorKind kind = AggregatorKind::kTrimmedMean;
  double trim = 0.2;  // fraction trimmed from each end, in (0, 0.5)

  static Aggregator median() { return {AggregatorKind::kMedian, 0.0}; }
  static Aggregator trimmed_mean(double delta) {
    return {AggregatorKind::kTrimmedMean, delta};
  }
};

std::string to_string(AggregatorKind kind);
AggregatorKind aggregator_from_string(const std::string& name);

// Number of values dropped from each end of a sorted list of n values:
// ceil(delta * n), capped so that at least one value survives.
std::size_t trim_count(std::size_t n, double delta);

// Trimmed mean or median. Throws std::invalid_argument on an empty list or a
// trim fraction outside (0, 0.5).
double robust_aggregate(std::span<const double> values, const Aggregator& aggregator);

struct ContextFactors {
  double err_rate = 0.0;
  double report_delay = 0.0;  // seconds
  double usage = 0.0;
  double quota = 1.0;
  double pdr = 1.0;
  double jitter = 0.0;
  double leakage = 0.0;
  std::array<double, 5> alphas = {0.2, 0.2, 0.2, 0.2, 0.2};
  double beta_time = 1.0;
};

// Output integrity, timeliness, resource usage, reliability and privacy
// compliance, each in [0, 1].
std::array<double, 5> context_factor_values(const ContextFactors& f);

double logistic(double x);

// Logistic of the alpha-weighted factor sum. Since the factors live in
// [0, 1] the result is confined to [0.5, logistic(1)].
double contextual_trust(const ContextFactors& f);

struct PeerFeedback {
  int from = 0;
  double score = 0.0;
  double age = 0.0;  // seconds since the report
  double reporter_variance = 0.0;
};

struct TrustParams {
  double lambda_decay = 2.0;
  std::vector<double> signal_weights = {0.25, 0.25, 0.25, 0.25};
  double eta = 0.5;
  double rho = 0.5;
  double kappa1 = 0.5;
  double kappa2 = 0.5;
  Aggregator aggregator;
  std::size_t history_window = 20;
  std::array<double, 3> default_gammas = {0.4, 0.3, 0.3};
  double controller_gain = 2.0;

  void validate() const;
};

// exp(-lambda * decline), decline = (prev - curr) . w, clipped to (0, 1].
// Improvements (negative decline) saturate at full trust.
double temporal_trust(std::span<const double> prev, std::span<const double> curr,
                      const TrustParams& params, OpCounter* counter = nullptr);
double temporal_trust(const telemetry::SignalVector& prev,
                      const telemetry::SignalVector& curr, const TrustParams& params);

double credibility_weight(const PeerFeedback& fb, const TrustParams& params);

// Robust aggregate of credibility-weighted peer scores, capped by direct
// evidence kappa1 * temporal + kappa2 * contextual. No feedback yields the cap.
double federated_trust(std::span<const PeerFeedback> feedback, double temporal,
                       double contextual, const TrustParams& params,
                       OpCounter* counter = nullptr);

struct Gammas {
  double g1 = 0.4;
  double g2 = 0.3;
  double g3 = 0.3;

  double sum() const { return g1 + g2 + g3; }
};

struct ControlSignals {
  double violation_rate = 0.0;
  double link_instability = 0.0;
  double anomaly_frequency = 0.0;
};

// Multiplicative re-weighting of the defaults: link instability favours the
// contextual weight, anomalies the federated weight and violations push
// weight away from the temporal channel. Zero signals return the defaults.
Gammas adapt_weights(const ControlSignals& signals, const Gammas& defaults,
                     double gain);

// Bounded window of fused trust values with O(1) variance.
class TrustHistory {
 public:
  explicit TrustHistory(std::size_t window = 20) : window_(window) {}

  void push(double value);
  double variance() const;
  std::size_t size() const { return values_.size(); }
  std::size_t window() const { return window_; }

 private:
  std::size_t window_;
  std::deque<double> values_;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
};

struct TrustState {
  double temporal = 1.0;
  double contextual = 0.5;
  double federated = 0.5;
  double fused = 0.5;
  Gammas gammas;
  TrustHistory history;
};

double fuse_trust(const TrustState& state);

struct ClientInputs {
  std::span<const double> prev_signals;
  std::span<const double> curr_signals;
  ContextFactors context;
  std::span<const PeerFeedback> feedback;
  ControlSignals control;
};

// One incremental update for a single client: temporal, contextual and
// federated trust, weight adaptation, fusion and history push.
void update_trust(TrustState& state, const ClientInputs& inputs,
                  const TrustParams& params, OpCounter* counter = nullptr);

}  // namespace mtsecom::trust

#endif  // MTSECOM_TRUST_H_
