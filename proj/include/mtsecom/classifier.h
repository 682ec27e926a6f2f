#ifndef MTSECOM_CLASSIFIER_H_
#define MTSECOM_CLASSIFIER_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mtsecom::classifier {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr const char* kCheckpointMagic = "MTSECOM-CKPT-v1";

struct ClassifierConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 128;
  int batch_size = 128;
  int epochs = 5;
  double learning_rate = 1e-3;
  int patience = 5;
  int seq_len = 10;
  int n_features = 12;
  bool positional_encoding = true;
  double recon_weight = 1.0;
  double grad_clip = 1.0;  // global gradient norm; <= 0 disables clipping
  std::uint64_t seed = 42;

  void validate() const;
};

// One labeled seq_len x n_features window. label 1 = trusted, 0 = malicious.
struct LabeledWindow {
  int vn_id = 0;
  Matrix x;
  int label = 1;
};

class UntrainedModelError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class SplitLeakageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Self-attention encoder (pre-norm blocks, sinusoidal positions, mean
// pooling) with a logistic supervised head and a window reconstruction head.
// All parameters live in one flat vector.
class EncoderModel {
 public:
  struct Output {
    Vector embedding;
    double logit = 0.0;
    double probability = 0.5;
    Matrix reconstruction;
    double anomaly_score = 0.0;
    std::vector<Matrix> attention;  // layer-major, one matrix per head
  };

  explicit EncoderModel(const ClassifierConfig& config);

  void init(std::uint64_t seed);

  Output forward(const Matrix& x, bool keep_attention = false) const;

  // Batch loss: mean BCE over all windows plus recon_weight times the mean
  // reconstruction MSE over trusted windows. Gradients are accumulated into
  // grad (resized if needed) when non-null.
  double loss(std::span<const LabeledWindow* const> batch,
              std::vector<double>* grad = nullptr) const;
  double loss(std::span<const LabeledWindow> batch,
              std::vector<double>* grad = nullptr) const;

  // Inputs are standardized per feature as (x - shift) * scale before the
  // encoder; reconstruction and anomaly score live in that space. Training
  // fits the scaling on trusted windows.
  void set_input_scaling(const Vector& shift, const Vector& scale);
  const Vector& input_shift() const { return input_shift_; }
  const Vector& input_scale() const { return input_scale_; }
  Matrix standardize(const Matrix& x) const;

  // Logit of the supervised head for a given embedding.
  double supervised_logit(const Vector& embedding) const;

  const ClassifierConfig& config() const { return config_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  double tau() const { return tau_; }
  void set_tau(double tau);
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  struct LayerOffsets {
    std::size_t ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct Layout {
    std::size_t w_in = 0, b_in = 0;
    std::vector<LayerOffsets> layers;
    std::size_t lnf_g = 0, lnf_b = 0, sup_w = 0, sup_b = 0, rec_w = 0, rec_b = 0;
    std::size_t total = 0;
  };
  struct Cache;

  void check_shape(const Matrix& x) const;
  Output run(const Matrix& x, Cache* cache, bool keep_attention) const;
  void backward(const Matrix& x, const Cache& cache, const Vector& d_embedding,
                double* grad) const;

  ClassifierConfig config_;
  Layout layout_;
  Matrix positions_;
  Vector input_shift_;
  Vector input_scale_;
  std::vector<double> params_;
  double tau_ = 0.0;
  bool trained_ = false;
};

struct Decision {
  int client = 0;
  double anomaly_score = 0.0;
  double probability = 0.0;
  int supervised_label = 0;
  int y = 0;
};

// Trusted iff the anomaly score is below tau and the supervised head says 1.
int decide(double anomaly_score, double tau, int supervised_label);

double reconstruction_mse(const Matrix& x, const Matrix& reconstruction);

// median + 3 * MAD; when MAD is 0 the spread falls back to 1e-6.
double mad_threshold(std::span<const double> scores);

int label_from_probability(double probability);

struct SupervisedOutput {
  int label = 0;
  double probability = 0.5;
};

Vector encode(const Matrix& window, const EncoderModel& model);
double anomaly_score(const Matrix& window, const EncoderModel& model);
SupervisedOutput supervised_predict(const Vector& embedding, const EncoderModel& model);
Decision classify(const Matrix& window, const EncoderModel& model, int client = 0);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// VN-disjoint split; VN ids are shuffled with the seed and assigned to the
// three partitions by the given fractions.
Split split_by_vn(std::span<const LabeledWindow> dataset, std::uint64_t seed,
                  double train_fraction = 0.7, double val_fraction = 0.15);

// Throws SplitLeakageError when a VN id appears in two partitions.
void check_split_hygiene(std::span<const LabeledWindow> dataset, const Split& split);

struct TrainReport {
  double initial_loss = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  int epochs_run = 0;
};

struct TrainResult {
  EncoderModel model;
  TrainReport report;
};

TrainResult train(std::span<const LabeledWindow> dataset, const Split& split,
                  const ClassifierConfig& config);
TrainResult train(std::span<const LabeledWindow> dataset, const ClassifierConfig& config);

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mtsecom::classifier

#endif  // MTSECOM_CLASSIFIER_H_
