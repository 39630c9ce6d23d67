#include "btclf/classifier.h"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "btclf/errors.h"
#include "btclf/hashing.h"

namespace btclf {

namespace {

constexpr double kLogEpsilon = 1e-12;
constexpr char kMagic[8] = {'B', 'T', 'C', 'L', 'F', 'M', 'L', 'P'};
constexpr uint32_t kFormatVersion = 1;

Eigen::MatrixXd Prepare(const MLPModel& model, const Eigen::MatrixXd& x) {
  if (static_cast<size_t>(x.cols()) != model.config.input_dim) {
    throw ContractError("feature dimension " + std::to_string(x.cols()) +
                        " does not match model input " +
                        std::to_string(model.config.input_dim));
  }
  if (!model.config.normalize_features) return x;
  Eigen::MatrixXd out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

Eigen::MatrixXd RowSoftmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct Activations {
  Eigen::MatrixXd hidden;  // n x h, after tanh
  Eigen::MatrixXd probs;   // n x C
};

Activations Run(const MLPModel& m, const Eigen::MatrixXd& x) {
  Activations a;
  a.hidden = ((x * m.w1.transpose()).rowwise() + m.b1.transpose())
                 .array()
                 .tanh()
                 .matrix();
  a.probs = RowSoftmax((a.hidden * m.w2.transpose()).rowwise() +
                       m.b2.transpose());
  return a;
}

template <typename T>
void WritePod(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T ReadPod(const std::string& buf, size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw ContractError("truncated MLP artifact");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

// Adam moments for one parameter block.
struct AdamSlot {
  Eigen::MatrixXd m, v;
  explicit AdamSlot(Eigen::Index rows, Eigen::Index cols)
      : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}

  template <typename Param, typename Grad>
  void Step(Param& p, const Grad& g, double lr, double bc1, double bc2) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
  }
};

}  // namespace

void MLPConfig::Validate() const {
  if (input_dim == 0 || hidden() == 0) {
    throw ValidationError("MLP dimensions must be positive");
  }
  if (num_classes < 2) throw ValidationError("MLP needs at least two classes");
  if (batch_size == 0) throw ValidationError("MLP batch_size must be positive");
  if (!(learning_rate > 0.0)) {
    throw ValidationError("MLP learning_rate must be positive");
  }
}

size_t ParameterCount(const MLPConfig& cfg) {
  const size_t h = cfg.hidden();
  return h * cfg.input_dim + h + cfg.num_classes * h + cfg.num_classes;
}

size_t MLPModel::ParameterCount() const {
  return static_cast<size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

bool MLPModel::AllFinite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

std::vector<double> MLPModel::Flatten() const {
  std::vector<double> out;
  out.reserve(ParameterCount());
  // row-major for the weight matrices
  for (Eigen::Index r = 0; r < w1.rows(); ++r)
    for (Eigen::Index c = 0; c < w1.cols(); ++c) out.push_back(w1(r, c));
  out.insert(out.end(), b1.data(), b1.data() + b1.size());
  for (Eigen::Index r = 0; r < w2.rows(); ++r)
    for (Eigen::Index c = 0; c < w2.cols(); ++c) out.push_back(w2(r, c));
  out.insert(out.end(), b2.data(), b2.data() + b2.size());
  return out;
}

void MLPModel::Unflatten(std::span<const double> params) {
  if (params.size() != btclf::ParameterCount(config)) {
    throw ContractError("parameter count " + std::to_string(params.size()) +
                        " does not match config (" +
                        std::to_string(btclf::ParameterCount(config)) + ")");
  }
  const auto d = static_cast<Eigen::Index>(config.input_dim);
  const auto h = static_cast<Eigen::Index>(config.hidden());
  const auto c = static_cast<Eigen::Index>(config.num_classes);
  size_t pos = 0;
  w1.resize(h, d);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index k = 0; k < d; ++k) w1(r, k) = params[pos++];
  b1.resize(h);
  for (Eigen::Index r = 0; r < h; ++r) b1(r) = params[pos++];
  w2.resize(c, h);
  for (Eigen::Index r = 0; r < c; ++r)
    for (Eigen::Index k = 0; k < h; ++k) w2(r, k) = params[pos++];
  b2.resize(c);
  for (Eigen::Index r = 0; r < c; ++r) b2(r) = params[pos++];
}

MLPModel InitMLP(const MLPConfig& cfg) {
  cfg.Validate();
  MLPModel m;
  m.config = cfg;
  const auto d = static_cast<Eigen::Index>(cfg.input_dim);
  const auto h = static_cast<Eigen::Index>(cfg.hidden());
  const auto c = static_cast<Eigen::Index>(cfg.num_classes);
  std::mt19937_64 rng(DeriveSeed(cfg.seed, "mlp-init"));
  auto fill = [&rng](Eigen::MatrixXd& w, Eigen::Index rows, Eigen::Index cols) {
    const double s = std::sqrt(1.0 / static_cast<double>(cols));
    std::uniform_real_distribution<double> u(-s, s);
    w.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index k = 0; k < cols; ++k) w(r, k) = u(rng);
  };
  fill(m.w1, h, d);
  fill(m.w2, c, h);
  m.b1 = Eigen::VectorXd::Zero(h);
  m.b2 = Eigen::VectorXd::Zero(c);
  return m;
}

Eigen::MatrixXd ForwardBatch(const MLPModel& model, const Eigen::MatrixXd& x) {
  return Run(model, Prepare(model, x)).probs;
}

std::vector<double> Forward(const MLPModel& model,
                            std::span<const double> feature) {
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(feature.size()));
  for (size_t j = 0; j < feature.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = feature[j];
  Eigen::MatrixXd p = ForwardBatch(model, x);
  return {p.data(), p.data() + p.size()};
}

double CrossEntropy(const Eigen::MatrixXd& probs,
                    const Eigen::MatrixXd& one_hot) {
  if (probs.rows() == 0) throw ContractError("cross-entropy of an empty batch");
  if (probs.rows() != one_hot.rows() || probs.cols() != one_hot.cols()) {
    throw ContractError("probability and label shapes differ");
  }
  double total = 0.0;
  bool clamped = false;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      if (one_hot(i, k) == 0.0) continue;
      double p = probs(i, k);
      if (p < kLogEpsilon) {
        p = kLogEpsilon;
        clamped = true;
      }
      total -= one_hot(i, k) * std::log(p);
    }
  }
  if (clamped) spdlog::warn("cross-entropy: gold probability clamped to 1e-12");
  return total / static_cast<double>(probs.rows());
}

double CrossEntropy(const Eigen::MatrixXd& probs,
                    std::span<const size_t> labels) {
  if (static_cast<size_t>(probs.rows()) != labels.size()) {
    throw ContractError("probability and label counts differ");
  }
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= static_cast<size_t>(probs.cols())) {
      throw ContractError("label index out of range");
    }
    y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
  }
  return CrossEntropy(probs, y);
}

MLPGradients ComputeGradients(const MLPModel& model, const Eigen::MatrixXd& x,
                              std::span<const size_t> labels) {
  const Eigen::MatrixXd input = Prepare(model, x);
  const Activations a = Run(model, input);
  const double n = static_cast<double>(labels.size());

  MLPGradients g;
  g.loss = CrossEntropy(a.probs, labels);
  Eigen::MatrixXd dz = a.probs;
  for (size_t i = 0; i < labels.size(); ++i) {
    dz(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) -= 1.0;
  }
  dz /= n;
  g.w2 = dz.transpose() * a.hidden;
  g.b2 = dz.colwise().sum().transpose();
  const Eigen::MatrixXd da =
      ((dz * model.w2).array() * (1.0 - a.hidden.array().square())).matrix();
  g.w1 = da.transpose() * input;
  g.b1 = da.colwise().sum().transpose();
  return g;
}

std::vector<size_t> PredictBatch(const MLPModel& model,
                                 const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd p = ForwardBatch(model, x);
  std::vector<size_t> out(static_cast<size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < p.cols(); ++k) {
      if (p(i, k) > p(i, best)) best = k;
    }
    out[static_cast<size_t>(i)] = static_cast<size_t>(best);
  }
  return out;
}

size_t Predict(const MLPModel& model, std::span<const double> feature) {
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(feature.size()));
  for (size_t j = 0; j < feature.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = feature[j];
  return PredictBatch(model, x).front();
}

double Accuracy(const MLPModel& model, const LabeledFeatures& data) {
  if (data.size() == 0) return 0.0;
  const auto pred = PredictBatch(model, data.features);
  size_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

bool EarlyStopper::Update(double dev_accuracy) {
  ++epoch_;
  if (dev_accuracy > best_score_) {
    best_score_ = dev_accuracy;
    best_epoch_ = epoch_;
    stale_epochs_ = 0;
    return true;
  }
  ++stale_epochs_;
  return false;
}

std::pair<MLPModel, TrainHistory> TrainMLP(MLPModel model,
                                           const LabeledFeatures& train,
                                           const DevEvaluator& evaluate_dev) {
  const MLPConfig& cfg = model.config;
  cfg.Validate();
  if (train.size() == 0) throw ValidationError("MLP training set is empty");
  if (static_cast<size_t>(train.features.rows()) != train.size()) {
    throw ContractError("feature rows and labels differ in count");
  }

  std::mt19937_64 rng(DeriveSeed(cfg.seed, "mlp-shuffle"));
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  AdamSlot s_w1(model.w1.rows(), model.w1.cols());
  AdamSlot s_b1(model.b1.rows(), 1);
  AdamSlot s_w2(model.w2.rows(), model.w2.cols());
  AdamSlot s_b2(model.b2.rows(), 1);
  size_t t = 0;

  TrainHistory history;
  EarlyStopper stopper(cfg.patience);
  MLPModel best = model;

  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(end - start),
                         train.features.cols());
      std::vector<size_t> yb;
      yb.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) =
            train.features.row(static_cast<Eigen::Index>(order[i]));
        yb.push_back(train.labels[order[i]]);
      }
      const MLPGradients g = ComputeGradients(model, xb, yb);
      if (!std::isfinite(g.loss)) {
        throw DivergenceError(static_cast<int>(epoch), cfg.learning_rate);
      }
      epoch_loss += g.loss * static_cast<double>(end - start);

      ++t;
      const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(t));
      s_w1.Step(model.w1, g.w1, cfg.learning_rate, bc1, bc2);
      s_b1.Step(model.b1, g.b1, cfg.learning_rate, bc1, bc2);
      s_w2.Step(model.w2, g.w2, cfg.learning_rate, bc1, bc2);
      s_b2.Step(model.b2, g.b2, cfg.learning_rate, bc1, bc2);
    }
    epoch_loss /= static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss) || !model.AllFinite()) {
      throw DivergenceError(static_cast<int>(epoch), cfg.learning_rate);
    }

    const double dev_acc = evaluate_dev(model, epoch);
    history.train_loss.push_back(epoch_loss);
    history.dev_accuracy.push_back(dev_acc);
    history.stopped_epoch = epoch;
    if (stopper.Update(dev_acc)) best = model;
    if (stopper.ShouldStop()) break;
  }
  history.best_epoch = stopper.best_epoch();
  return {std::move(best), std::move(history)};
}

std::pair<MLPModel, TrainHistory> TrainMLP(MLPModel model,
                                           const LabeledFeatures& train,
                                           const LabeledFeatures& dev) {
  if (dev.size() == 0) throw ValidationError("MLP dev set is empty");
  return TrainMLP(std::move(model), train,
                  [&dev](const MLPModel& m, size_t) { return Accuracy(m, dev); });
}

void SaveMLP(const MLPModel& model, const std::string& path) {
  std::string payload(kMagic, sizeof(kMagic));
  WritePod(payload, kFormatVersion);
  const MLPConfig& c = model.config;
  WritePod<uint64_t>(payload, c.input_dim);
  WritePod<uint64_t>(payload, c.hidden());
  WritePod<uint64_t>(payload, c.num_classes);
  WritePod<uint64_t>(payload, c.seed);
  WritePod<double>(payload, c.learning_rate);
  WritePod<uint64_t>(payload, c.batch_size);
  WritePod<uint64_t>(payload, c.max_epochs);
  WritePod<uint64_t>(payload, c.patience);
  WritePod<uint8_t>(payload, c.normalize_features ? 1 : 0);
  const auto params = model.Flatten();
  WritePod<uint64_t>(payload, params.size());
  payload.append(reinterpret_cast<const char*>(params.data()),
                 params.size() * sizeof(double));
  const std::string checksum = Sha256Hex(payload);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << payload << checksum;
  if (!out) throw IoError("write failed for " + path);
}

MLPModel LoadMLP(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) + 64 ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ContractError(path + " is not an MLP artifact");
  }
  const std::string payload = buf.substr(0, buf.size() - 64);
  if (Sha256Hex(payload) != buf.substr(buf.size() - 64)) {
    throw ContractError(path + ": checksum mismatch");
  }
  size_t pos = sizeof(kMagic);
  if (ReadPod<uint32_t>(payload, pos) != kFormatVersion) {
    throw ContractError(path + ": unsupported format version");
  }
  MLPModel m;
  MLPConfig& c = m.config;
  c.input_dim = ReadPod<uint64_t>(payload, pos);
  c.hidden_dim = ReadPod<uint64_t>(payload, pos);
  c.num_classes = ReadPod<uint64_t>(payload, pos);
  c.seed = ReadPod<uint64_t>(payload, pos);
  c.learning_rate = ReadPod<double>(payload, pos);
  c.batch_size = ReadPod<uint64_t>(payload, pos);
  c.max_epochs = ReadPod<uint64_t>(payload, pos);
  c.patience = ReadPod<uint64_t>(payload, pos);
  c.normalize_features = ReadPod<uint8_t>(payload, pos) != 0;
  c.Validate();
  const auto count = ReadPod<uint64_t>(payload, pos);
  if (count != ParameterCount(c) || pos + count * sizeof(double) != payload.size()) {
    throw ContractError(path + ": parameter count does not match dimensions");
  }
  std::vector<double> params(count);
  std::memcpy(params.data(), payload.data() + pos, count * sizeof(double));
  m.Unflatten(params);
  return m;
}

}  // namespace btclf
