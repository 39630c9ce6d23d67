#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace btclf {

struct MLPConfig {
  size_t input_dim = 1024;
  // 0 means "same as input_dim".
  size_t hidden_dim = 0;
  size_t num_classes = 2;
  uint64_t seed = 0;
  double learning_rate = 1e-3;
  size_t batch_size = 32;
  size_t max_epochs = 100;
  size_t patience = 5;
  // L2-normalize each feature vector before the first layer.
  bool normalize_features = false;

  size_t hidden() const { return hidden_dim == 0 ? input_dim : hidden_dim; }
  void Validate() const;
};

// Two-layer perceptron: softmax(W2 tanh(W1 x + b1) + b2).
struct MLPModel {
  MLPConfig config;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // classes x hidden
  Eigen::VectorXd b2;

  size_t ParameterCount() const;
  bool AllFinite() const;
  std::vector<double> Flatten() const;
  void Unflatten(std::span<const double> params);
};

size_t ParameterCount(const MLPConfig& cfg);

// Weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)) from cfg.seed, zero biases.
MLPModel InitMLP(const MLPConfig& cfg);

// Row-per-example features and class indices.
struct LabeledFeatures {
  Eigen::MatrixXd features;
  std::vector<size_t> labels;

  size_t size() const { return labels.size(); }
};

Eigen::MatrixXd ForwardBatch(const MLPModel& model, const Eigen::MatrixXd& x);
std::vector<double> Forward(const MLPModel& model,
                            std::span<const double> feature);

// -(1/N) sum_i y_i . log p_i, with p clamped at 1e-12.
double CrossEntropy(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& one_hot);
double CrossEntropy(const Eigen::MatrixXd& probs,
                    std::span<const size_t> labels);

struct MLPGradients {
  double loss = 0.0;
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

MLPGradients ComputeGradients(const MLPModel& model, const Eigen::MatrixXd& x,
                              std::span<const size_t> labels);

size_t Predict(const MLPModel& model, std::span<const double> feature);
std::vector<size_t> PredictBatch(const MLPModel& model,
                                 const Eigen::MatrixXd& x);
double Accuracy(const MLPModel& model, const LabeledFeatures& data);

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> dev_accuracy;
  // 1-based epochs.
  size_t best_epoch = 0;
  size_t stopped_epoch = 0;
};

// Tracks the best dev score; an epoch counts as an improvement only when it
// strictly beats the best so far, so ties keep the earlier epoch.
class EarlyStopper {
 public:
  explicit EarlyStopper(size_t patience) : patience_(patience) {}

  // Returns true when `dev_accuracy` is a new best.
  bool Update(double dev_accuracy);
  bool ShouldStop() const { return stale_epochs_ >= patience_; }
  size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }

 private:
  size_t patience_;
  size_t epoch_ = 0;
  size_t best_epoch_ = 0;
  size_t stale_epochs_ = 0;
  double best_score_ = -1.0;
};

using DevEvaluator = std::function<double(const MLPModel&, size_t epoch)>;

// Adam on mini-batches with a seeded shuffle per epoch. Returns the
// parameters of the best dev epoch.
std::pair<MLPModel, TrainHistory> TrainMLP(MLPModel model,
                                           const LabeledFeatures& train,
                                           const DevEvaluator& evaluate_dev);
std::pair<MLPModel, TrainHistory> TrainMLP(MLPModel model,
                                           const LabeledFeatures& train,
                                           const LabeledFeatures& dev);

// Versioned binary artifact with a SHA-256 trailer over the payload.
void SaveMLP(const MLPModel& model, const std::string& path);
MLPModel LoadMLP(const std::string& path);

}  // namespace btclf
