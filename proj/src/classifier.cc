#include "mtsecom/classifier.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mtsecom/common.h"

namespace mtsecom::classifier {

namespace {

using CMap = Eigen::Map<const Matrix>;
using MMap = Eigen::Map<Matrix>;
using CVec = Eigen::Map<const Vector>;
using MVec = Eigen::Map<Vector>;

constexpr double kLnEps = 1e-5;
constexpr double kMinFeatureSpread = 1e-2;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Matrix layer_norm(const Matrix& x, const CVec& gain, const CVec& bias, Matrix& xhat,
                  Vector& inv_std) {
  const Eigen::Index rows = x.rows();
  const double d = static_cast<double>(x.cols());
  xhat.resize(x.rows(), x.cols());
  inv_std.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mean).square().sum() / d;
    inv_std(r) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gain.transpose().array();
  y.rowwise() += bias.transpose();
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const CVec& gain, const Matrix& xhat,
                           const Vector& inv_std, double* d_gain, double* d_bias) {
  const Eigen::Index d = dy.cols();
  MVec(d_gain, d) += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
  MVec(d_bias, d) += dy.colwise().sum().transpose();
  const Matrix dxhat = dy.array().rowwise() * gain.transpose().array();
  Matrix dx(dy.rows(), d);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
    dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
  }
  return dx;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

Matrix gelu(const Matrix& u) {
  return u.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
}

Matrix gelu_grad(const Matrix& u) {
  return u.unaryExpr([](double v) {
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    return 0.5 * (1.0 + t) +
           0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
  });
}

Matrix sinusoidal_positions(int length, int d) {
  Matrix pe(length, d);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / d);
      pe(pos, i) = i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void ClassifierConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ff <= 0 || batch_size <= 0 ||
      epochs <= 0 || patience <= 0 || seq_len <= 0 || n_features <= 0) {
    throw std::invalid_argument("classifier sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("d_model must be divisible by n_heads");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (recon_weight < 0.0) throw std::invalid_argument("recon_weight must be >= 0");
}

struct EncoderModel::Cache {
  Matrix xs;  // standardized input
  struct Layer {
    Matrix h_in, a, ln1_xhat, qkv, o, h_mid, b, ln2_xhat, u, g;
    Vector ln1_inv, ln2_inv;
    std::vector<Matrix> probs;
  };
  std::vector<Layer> layers;
  Matrix h_out, z, lnf_xhat;
  Vector lnf_inv, h, rec;
  double logit = 0.0;
  double probability = 0.5;
};

EncoderModel::EncoderModel(const ClassifierConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  const std::size_t f = config_.n_features;
  const std::size_t ff = config_.d_ff;
  const std::size_t lf = static_cast<std::size_t>(config_.seq_len) * f;
  std::size_t off = 0;
  auto take = [&off](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  layout_.w_in = take(f * d);
  layout_.b_in = take(d);
  for (int l = 0; l < config_.n_layers; ++l) {
    LayerOffsets lo{};
    lo.ln1_g = take(d);
    lo.ln1_b = take(d);
    lo.wqkv = take(d * 3 * d);
    lo.bqkv = take(3 * d);
    lo.wo = take(d * d);
    lo.bo = take(d);
    lo.ln2_g = take(d);
    lo.ln2_b = take(d);
    lo.w1 = take(d * ff);
    lo.b1 = take(ff);
    lo.w2 = take(ff * d);
    lo.b2 = take(d);
    layout_.layers.push_back(lo);
  }
  layout_.lnf_g = take(d);
  layout_.lnf_b = take(d);
  layout_.sup_w = take(d);
  layout_.sup_b = take(1);
  layout_.rec_w = take(d * lf);
  layout_.rec_b = take(lf);
  layout_.total = off;
  params_.assign(layout_.total, 0.0);
  input_shift_ = Vector::Zero(f);
  input_scale_ = Vector::Ones(f);
  positions_ = config_.positional_encoding
                   ? sinusoidal_positions(config_.seq_len, config_.d_model)
                   : Matrix::Zero(config_.seq_len, config_.d_model);
  init(config_.seed);
}

void EncoderModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xe2c0));
  auto xavier = [&](std::size_t at, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) params_[at + i] = dist(rng);
  };
  auto fill = [&](std::size_t at, std::size_t n, double v) {
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(at), n, v);
  };
  std::fill(params_.begin(), params_.end(), 0.0);
  const std::size_t d = config_.d_model;
  const std::size_t ff = config_.d_ff;
  const std::size_t lf = static_cast<std::size_t>(config_.seq_len) * config_.n_features;
  xavier(layout_.w_in, config_.n_features, d);
  for (const auto& lo : layout_.layers) {
    fill(lo.ln1_g, d, 1.0);
    fill(lo.ln2_g, d, 1.0);
    xavier(lo.wqkv, d, 3 * d);
    xavier(lo.wo, d, d);
    xavier(lo.w1, d, ff);
    xavier(lo.w2, ff, d);
  }
  fill(layout_.lnf_g, d, 1.0);
  xavier(layout_.sup_w, d, 1);
  xavier(layout_.rec_w, d, lf);
  trained_ = false;
  tau_ = 0.0;
}

void EncoderModel::set_input_scaling(const Vector& shift, const Vector& scale) {
  if (shift.size() != config_.n_features || scale.size() != config_.n_features) {
    throw std::invalid_argument("input scaling width mismatch");
  }
  if (!shift.allFinite() || !scale.allFinite() || (scale.array() <= 0.0).any()) {
    throw std::invalid_argument("input scaling must be finite with positive scale");
  }
  input_shift_ = shift;
  input_scale_ = scale;
}

Matrix EncoderModel::standardize(const Matrix& x) const {
  check_shape(x);
  return (x.rowwise() - input_shift_.transpose()).array().rowwise() *
         input_scale_.transpose().array();
}

void EncoderModel::set_tau(double tau) {
  if (!std::isfinite(tau)) throw std::invalid_argument("tau must be finite");
  tau_ = tau;
}

double EncoderModel::supervised_logit(const Vector& embedding) const {
  if (embedding.size() != config_.d_model) {
    throw std::invalid_argument("embedding width mismatch");
  }
  return CVec(params_.data() + layout_.sup_w, config_.d_model).dot(embedding) +
         params_[layout_.sup_b];
}

void EncoderModel::check_shape(const Matrix& x) const {
  if (x.rows() != config_.seq_len || x.cols() != config_.n_features) {
    throw std::invalid_argument(
        "window shape " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
        " does not match " + std::to_string(config_.seq_len) + "x" +
        std::to_string(config_.n_features));
  }
}

EncoderModel::Output EncoderModel::forward(const Matrix& x, bool keep_attention) const {
  Cache cache;
  return run(x, &cache, keep_attention);
}

EncoderModel::Output EncoderModel::run(const Matrix& x, Cache* cache,
                                       bool keep_attention) const {
  cache->xs = standardize(x);
  const int L = config_.seq_len;
  const int F = config_.n_features;
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int dk = d / H;
  const int ff = config_.d_ff;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const double* p = params_.data();

  Output out;
  Matrix h = cache->xs * CMap(p + layout_.w_in, F, d);
  h.rowwise() += CVec(p + layout_.b_in, d).transpose();
  h += positions_;

  cache->layers.resize(layout_.layers.size());
  for (std::size_t l = 0; l < layout_.layers.size(); ++l) {
    const auto& lo = layout_.layers[l];
    auto& c = cache->layers[l];
    c.h_in = h;
    c.a = layer_norm(h, CVec(p + lo.ln1_g, d), CVec(p + lo.ln1_b, d), c.ln1_xhat,
                     c.ln1_inv);
    c.qkv = c.a * CMap(p + lo.wqkv, d, 3 * d);
    c.qkv.rowwise() += CVec(p + lo.bqkv, 3 * d).transpose();
    c.o.resize(L, d);
    c.probs.resize(H);
    for (int hd = 0; hd < H; ++hd) {
      const auto q = c.qkv.middleCols(hd * dk, dk);
      const auto k = c.qkv.middleCols(d + hd * dk, dk);
      const auto v = c.qkv.middleCols(2 * d + hd * dk, dk);
      Matrix s = (q * k.transpose()) * scale;
      softmax_rows(s);
      c.o.middleCols(hd * dk, dk).noalias() = s * v;
      if (keep_attention) out.attention.push_back(s);
      c.probs[hd] = std::move(s);
    }
    h.noalias() += c.o * CMap(p + lo.wo, d, d);
    h.rowwise() += CVec(p + lo.bo, d).transpose();
    c.h_mid = h;
    c.b = layer_norm(h, CVec(p + lo.ln2_g, d), CVec(p + lo.ln2_b, d), c.ln2_xhat,
                     c.ln2_inv);
    c.u = c.b * CMap(p + lo.w1, d, ff);
    c.u.rowwise() += CVec(p + lo.b1, ff).transpose();
    c.g = gelu(c.u);
    h.noalias() += c.g * CMap(p + lo.w2, ff, d);
    h.rowwise() += CVec(p + lo.b2, d).transpose();
  }
  cache->h_out = h;
  cache->z = layer_norm(h, CVec(p + layout_.lnf_g, d), CVec(p + layout_.lnf_b, d),
                        cache->lnf_xhat, cache->lnf_inv);
  cache->h = cache->z.colwise().mean().transpose();
  cache->logit = CVec(p + layout_.sup_w, d).dot(cache->h) + p[layout_.sup_b];
  cache->probability = sigmoid(cache->logit);
  const int lf = L * F;
  cache->rec = CMap(p + layout_.rec_w, d, lf).transpose() * cache->h +
               CVec(p + layout_.rec_b, lf);

  out.embedding = cache->h;
  out.logit = cache->logit;
  out.probability = cache->probability;
  out.reconstruction.resize(L, F);
  for (int r = 0; r < L; ++r) {
    for (int f = 0; f < F; ++f) out.reconstruction(r, f) = cache->rec(r * F + f);
  }
  out.anomaly_score = reconstruction_mse(cache->xs, out.reconstruction);
  return out;
}

void EncoderModel::backward(const Matrix& x, const Cache& cache, const Vector& d_embedding,
                            double* grad) const {
  const int L = config_.seq_len;
  const int F = config_.n_features;
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int dk = d / H;
  const int ff = config_.d_ff;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const double* p = params_.data();

  Matrix dz = (Vector::Ones(L) * d_embedding.transpose()) / static_cast<double>(L);
  Matrix dh = layer_norm_backward(dz, CVec(p + layout_.lnf_g, d), cache.lnf_xhat,
                                  cache.lnf_inv, grad + layout_.lnf_g,
                                  grad + layout_.lnf_b);

  for (std::size_t li = layout_.layers.size(); li-- > 0;) {
    const auto& lo = layout_.layers[li];
    const auto& c = cache.layers[li];

    // Feed-forward block.
    MMap(grad + lo.w2, ff, d).noalias() += c.g.transpose() * dh;
    MVec(grad + lo.b2, d) += dh.colwise().sum().transpose();
    Matrix du = (dh * CMap(p + lo.w2, ff, d).transpose()).cwiseProduct(gelu_grad(c.u));
    MMap(grad + lo.w1, d, ff).noalias() += c.b.transpose() * du;
    MVec(grad + lo.b1, ff) += du.colwise().sum().transpose();
    const Matrix db = du * CMap(p + lo.w1, d, ff).transpose();
    dh += layer_norm_backward(db, CVec(p + lo.ln2_g, d), c.ln2_xhat, c.ln2_inv,
                              grad + lo.ln2_g, grad + lo.ln2_b);

    // Attention block.
    MMap(grad + lo.wo, d, d).noalias() += c.o.transpose() * dh;
    MVec(grad + lo.bo, d) += dh.colwise().sum().transpose();
    const Matrix d_o = dh * CMap(p + lo.wo, d, d).transpose();
    Matrix dqkv(L, 3 * d);
    for (int hd = 0; hd < H; ++hd) {
      const auto q = c.qkv.middleCols(hd * dk, dk);
      const auto k = c.qkv.middleCols(d + hd * dk, dk);
      const auto v = c.qkv.middleCols(2 * d + hd * dk, dk);
      const Matrix& prob = c.probs[hd];
      const auto d_oh = d_o.middleCols(hd * dk, dk);
      const Matrix dp = d_oh * v.transpose();
      dqkv.middleCols(2 * d + hd * dk, dk).noalias() = prob.transpose() * d_oh;
      const Vector row_dot = (dp.cwiseProduct(prob)).rowwise().sum();
      Matrix ds = prob.cwiseProduct(dp.colwise() - row_dot) * scale;
      dqkv.middleCols(hd * dk, dk).noalias() = ds * k;
      dqkv.middleCols(d + hd * dk, dk).noalias() = ds.transpose() * q;
    }
    MMap(grad + lo.wqkv, d, 3 * d).noalias() += c.a.transpose() * dqkv;
    MVec(grad + lo.bqkv, 3 * d) += dqkv.colwise().sum().transpose();
    const Matrix da = dqkv * CMap(p + lo.wqkv, d, 3 * d).transpose();
    dh += layer_norm_backward(da, CVec(p + lo.ln1_g, d), c.ln1_xhat, c.ln1_inv,
                              grad + lo.ln1_g, grad + lo.ln1_b);
  }
  MMap(grad + layout_.w_in, F, d).noalias() += x.transpose() * dh;
  MVec(grad + layout_.b_in, d) += dh.colwise().sum().transpose();
}

double EncoderModel::loss(std::span<const LabeledWindow> batch,
                          std::vector<double>* grad) const {
  std::vector<const LabeledWindow*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& w : batch) ptrs.push_back(&w);
  return loss(std::span<const LabeledWindow* const>(ptrs), grad);
}

double EncoderModel::loss(std::span<const LabeledWindow* const> batch,
                          std::vector<double>* grad) const {
  if (batch.empty()) throw std::invalid_argument("loss over an empty batch");
  if (grad != nullptr && grad->size() != params_.size()) grad->assign(params_.size(), 0.0);
  const int L = config_.seq_len;
  const int F = config_.n_features;
  const int d = config_.d_model;
  const int lf = L * F;
  const double n = static_cast<double>(batch.size());
  const double n_benign = static_cast<double>(
      std::count_if(batch.begin(), batch.end(), [](const auto* w) { return w->label == 1; }));
  const double* p = params_.data();

  Cache cache;
  double total = 0.0;
  Vector drec(lf);
  for (const LabeledWindow* w : batch) {
    run(w->x, &cache, false);
    const double y = w->label == 1 ? 1.0 : 0.0;
    total += (softplus(cache.logit) - y * cache.logit) / n;
    const double dlogit = (cache.probability - y) / n;

    bool with_rec = false;
    if (w->label == 1 && config_.recon_weight > 0.0) {
      double sq = 0.0;
      for (int r = 0; r < L; ++r) {
        for (int f = 0; f < F; ++f) {
          const double diff = cache.rec(r * F + f) - cache.xs(r, f);
          sq += diff * diff;
          drec(r * F + f) = config_.recon_weight * 2.0 * diff / (lf * n_benign);
        }
      }
      total += config_.recon_weight * sq / lf / n_benign;
      with_rec = true;
    }
    if (grad == nullptr) continue;

    double* g = grad->data();
    MVec(g + layout_.sup_w, d) += dlogit * cache.h;
    g[layout_.sup_b] += dlogit;
    Vector dh = dlogit * CVec(p + layout_.sup_w, d);
    if (with_rec) {
      MMap(g + layout_.rec_w, d, lf).noalias() += cache.h * drec.transpose();
      MVec(g + layout_.rec_b, lf) += drec;
      dh.noalias() += CMap(p + layout_.rec_w, d, lf) * drec;
    }
    backward(cache.xs, cache, dh, g);
  }
  return total;
}

int decide(double anomaly_score, double tau, int supervised_label) {
  return (anomaly_score < tau && supervised_label == 1) ? 1 : 0;
}

double reconstruction_mse(const Matrix& x, const Matrix& reconstruction) {
  if (x.rows() != reconstruction.rows() || x.cols() != reconstruction.cols()) {
    throw std::invalid_argument("reconstruction shape mismatch");
  }
  if (x.size() == 0) return 0.0;
  return (x - reconstruction).squaredNorm() / static_cast<double>(x.size());
}

double mad_threshold(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("mad_threshold: no scores");
  std::vector<double> v(scores.begin(), scores.end());
  const double med = median_of(v);
  for (auto& s : v) s = std::abs(s - med);
  const double mad = median_of(std::move(v));
  return med + 3.0 * (mad > 0.0 ? mad : 1e-6);
}

int label_from_probability(double probability) { return probability > 0.5 ? 1 : 0; }

Vector encode(const Matrix& window, const EncoderModel& model) {
  return model.forward(window).embedding;
}

double anomaly_score(const Matrix& window, const EncoderModel& model) {
  if (!model.trained()) throw UntrainedModelError("anomaly_score on an untrained model");
  return model.forward(window).anomaly_score;
}

SupervisedOutput supervised_predict(const Vector& embedding, const EncoderModel& model) {
  if (!model.trained()) {
    throw UntrainedModelError("supervised_predict on an untrained model");
  }
  const double logit = model.supervised_logit(embedding);
  const double prob = sigmoid(logit);
  return {label_from_probability(prob), prob};
}

Decision classify(const Matrix& window, const EncoderModel& model, int client) {
  if (!model.trained()) throw UntrainedModelError("classify on an untrained model");
  const auto out = model.forward(window);
  Decision dec;
  dec.client = client;
  dec.anomaly_score = out.anomaly_score;
  dec.probability = out.probability;
  dec.supervised_label = label_from_probability(out.probability);
  dec.y = decide(dec.anomaly_score, model.tau(), dec.supervised_label);
  return dec;
}

Split split_by_vn(std::span<const LabeledWindow> dataset, std::uint64_t seed,
                  double train_fraction, double val_fraction) {
  std::set<int> ids;
  for (const auto& w : dataset) ids.insert(w.vn_id);
  std::vector<int> order(ids.begin(), ids.end());
  std::mt19937_64 rng(derive_seed(seed, 0x5e11));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * n));
  std::map<int, int> part;
  for (std::size_t i = 0; i < order.size(); ++i) {
    part[order[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  }
  Split split;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    switch (part[dataset[i].vn_id]) {
      case 0: split.train.push_back(i); break;
      case 1: split.val.push_back(i); break;
      default: split.test.push_back(i); break;
    }
  }
  return split;
}

void check_split_hygiene(std::span<const LabeledWindow> dataset, const Split& split) {
  std::map<int, int> owner;
  auto visit = [&](const std::vector<std::size_t>& idx, int part) {
    for (std::size_t i : idx) {
      const int vn = dataset[i].vn_id;
      const auto [it, inserted] = owner.emplace(vn, part);
      if (!inserted && it->second != part) {
        throw SplitLeakageError("vn " + std::to_string(vn) +
                                " appears in more than one split");
      }
    }
  };
  visit(split.train, 0);
  visit(split.val, 1);
  visit(split.test, 2);
}

TrainResult train(std::span<const LabeledWindow> dataset, const ClassifierConfig& config) {
  return train(dataset, split_by_vn(dataset, config.seed), config);
}

TrainResult train(std::span<const LabeledWindow> dataset, const Split& split,
                  const ClassifierConfig& config) {
  config.validate();
  check_split_hygiene(dataset, split);
  if (split.train.empty()) throw std::invalid_argument("empty training split");
  std::vector<const LabeledWindow*> train_set;
  std::vector<const LabeledWindow*> val_set;
  for (std::size_t i : split.train) train_set.push_back(&dataset[i]);
  for (std::size_t i : split.val) val_set.push_back(&dataset[i]);
  const auto positives = std::count_if(train_set.begin(), train_set.end(),
                                       [](const auto* w) { return w->label == 1; });
  if (positives == 0 || positives == static_cast<long>(train_set.size())) {
    throw std::invalid_argument("single-class training data: both labels are required");
  }

  TrainResult result{EncoderModel(config), {}};
  EncoderModel& model = result.model;
  {
    // Per-feature scaling from the trusted training windows.
    const int F = config.n_features;
    Vector sum = Vector::Zero(F), sum_sq = Vector::Zero(F);
    double rows = 0.0;
    for (const auto* w : train_set) {
      if (w->label != 1) continue;
      sum += w->x.colwise().sum().transpose();
      sum_sq += w->x.array().square().matrix().colwise().sum().transpose();
      rows += static_cast<double>(w->x.rows());
    }
    const Vector mean = sum / rows;
    const Vector var = (sum_sq / rows - mean.cwiseProduct(mean)).cwiseMax(0.0);
    const Vector scale = var.cwiseSqrt().cwiseMax(kMinFeatureSpread).cwiseInverse();
    model.set_input_scaling(mean, scale);
  }
  auto& params = model.parameters();
  const std::size_t n_params = params.size();

  result.report.initial_loss = model.loss(train_set);
  std::vector<double> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad(n_params, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  int since_best = 0;
  std::mt19937_64 rng(derive_seed(config.seed, 0xba7c));
  std::vector<const LabeledWindow*> order = train_set;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min<std::size_t>(config.batch_size, order.size() - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      epoch_loss += model.loss(
          std::span<const LabeledWindow* const>(order.data() + start, len), &grad);
      ++batches;
      if (config.grad_clip > 0.0) {
        double norm = 0.0;
        for (double g : grad) norm += g * g;
        norm = std::sqrt(norm);
        if (norm > config.grad_clip) {
          for (double& g : grad) g *= config.grad_clip / norm;
        }
      }
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < n_params; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
    result.report.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    const double val = val_set.empty() ? result.report.train_loss.back() : model.loss(val_set);
    result.report.val_loss.push_back(val);
    result.report.epochs_run = epoch + 1;
    if (val < best_val) {
      best_val = val;
      best = params;
      result.report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  params = best;

  std::vector<double> benign_scores;
  for (const auto* w : train_set) {
    if (w->label == 1) benign_scores.push_back(model.forward(w->x).anomaly_score);
  }
  model.set_tau(mad_threshold(benign_scores));
  model.mark_trained();
  return result;
}

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path) {
  const auto& c = model.config();
  nlohmann::json j;
  j["config"] = {{"d_model", c.d_model},
                 {"n_heads", c.n_heads},
                 {"n_layers", c.n_layers},
                 {"d_ff", c.d_ff},
                 {"batch_size", c.batch_size},
                 {"epochs", c.epochs},
                 {"learning_rate", c.learning_rate},
                 {"patience", c.patience},
                 {"seq_len", c.seq_len},
                 {"n_features", c.n_features},
                 {"positional_encoding", c.positional_encoding},
                 {"recon_weight", c.recon_weight},
                 {"grad_clip", c.grad_clip},
                 {"seed", c.seed}};
  j["input_shift"] = std::vector<double>(model.input_shift().begin(), model.input_shift().end());
  j["input_scale"] = std::vector<double>(model.input_scale().begin(), model.input_scale().end());
  j["tau"] = model.tau();
  j["trained"] = model.trained();
  j["parameters"] = model.parameters();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << kCheckpointMagic << '\n' << j.dump() << '\n';
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw std::runtime_error("not a checkpoint (bad magic): " + path.string());
  }
  std::stringstream body;
  body << in.rdbuf();
  const auto j = nlohmann::json::parse(body.str());
  const auto& jc = j.at("config");
  ClassifierConfig c;
  c.d_model = jc.at("d_model");
  c.n_heads = jc.at("n_heads");
  c.n_layers = jc.at("n_layers");
  c.d_ff = jc.at("d_ff");
  c.batch_size = jc.at("batch_size");
  c.epochs = jc.at("epochs");
  c.learning_rate = jc.at("learning_rate");
  c.patience = jc.at("patience");
  c.seq_len = jc.at("seq_len");
  c.n_features = jc.at("n_features");
  c.positional_encoding = jc.at("positional_encoding");
  c.recon_weight = jc.at("recon_weight");
  c.grad_clip = jc.at("grad_clip");
  c.seed = jc.at("seed");
  EncoderModel model(c);
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != model.parameters().size()) {
    throw std::runtime_error("checkpoint parameter count does not match its config");
  }
  model.parameters() = params;
  const auto shift = j.at("input_shift").get<std::vector<double>>();
  const auto scale = j.at("input_scale").get<std::vector<double>>();
  if (shift.size() != static_cast<std::size_t>(c.n_features) ||
      scale.size() != static_cast<std::size_t>(c.n_features)) {
    throw std::runtime_error("checkpoint input scaling does not match its config");
  }
  model.set_input_scaling(Eigen::Map<const Vector>(shift.data(), c.n_features),
                          Eigen::Map<const Vector>(scale.data(), c.n_features));
  model.set_tau(j.at("tau").get<double>());
  if (j.at("trained").get<bool>()) model.mark_trained();
  return model;
}

}  // namespace mtsecom::classifier
