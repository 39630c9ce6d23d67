#include "btclf/mock_backends.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "btclf/errors.h"
#include "btclf/hashing.h"
#include "btclf/math_util.h"

namespace btclf {

MockEncoder::MockEncoder(MockEncoderConfig config) : config_(std::move(config)) {
  if (config_.d == 0 || config_.num_layers == 0) {
    throw ContractError("mock encoder needs d > 0 and at least one layer");
  }
  for (const auto& label : config_.labels) {
    std::mt19937_64 rng(DeriveSeed(config_.seed, "direction:" + label));
    std::normal_distribution<double> gauss;
    std::vector<double> u(config_.d);
    double norm = 0.0;
    for (auto& x : u) {
      x = gauss(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : u) x /= norm;
    directions_.emplace(label, std::move(u));
  }
  std::unordered_map<std::string, std::string> normalized;
  for (auto& [text, label] : config_.oracle) {
    normalized.emplace(NormalizeWhitespace(text), label);
  }
  config_.oracle = std::move(normalized);
}

EncoderMeta MockEncoder::Meta() {
  return {config_.d, config_.num_layers, config_.model_id};
}

const std::vector<double>& MockEncoder::Direction(
    const std::string& label) const {
  auto it = directions_.find(label);
  if (it == directions_.end()) {
    throw ValidationError("no planted direction for label '" + label + "'");
  }
  return it->second;
}

void MockEncoder::AddOracle(const std::string& rendered_text,
                            const std::string& label) {
  Direction(label);
  config_.oracle[NormalizeWhitespace(rendered_text)] = label;
}

std::vector<double> MockEncoder::LayerVector(const std::string& text,
                                             Position position,
                                             size_t layer) const {
  std::string tag = std::string(ToString(position)) + "/" +
                    std::to_string(layer) + "/" + text;
  std::mt19937_64 rng(DeriveSeed(config_.seed, tag));
  std::normal_distribution<double> gauss;
  std::vector<double> v(config_.d);

  const std::vector<double>* direction = nullptr;
  if (config_.planted) {
    auto it = config_.oracle.find(text);
    if (it != config_.oracle.end()) direction = &Direction(it->second);
  }
  if (direction == nullptr) {
    for (auto& x : v) x = gauss(rng);
    return v;
  }
  const double scale =
      position == Position::kMask ? 1.0 : config_.cls_signal_scale;
  for (size_t j = 0; j < v.size(); ++j) {
    double noise = gauss(rng);
    v[j] = scale * (*direction)[j] + config_.noise * noise;
  }
  return v;
}

LayerHiddenStates MockEncoder::Encode(const EncoderRequest& request) {
  ValidateRequest(request);
  const size_t count = LayerCount(request.layer_mode);
  if (count > config_.num_layers) {
    throw RequestError("requested more layers than the model has");
  }
  const std::string text = NormalizeWhitespace(request.rendered_text);
  LayerHiddenStates out;
  out.d = config_.d;
  out.model_id = config_.model_id;
  for (size_t l = config_.num_layers - count; l < config_.num_layers; ++l) {
    out.vectors.push_back(LayerVector(text, request.position, l));
  }
  return out;
}

MockTeacher::MockTeacher(MockTeacherConfig config) : config_(std::move(config)) {
  if (config_.buckets == 0) throw ContractError("mock teacher needs buckets");
  for (const auto& w : config_.vocabulary) WordIndex(w);
}

size_t MockTeacher::WordIndex(const std::string& word) {
  auto it = word_index_.find(word);
  if (it != word_index_.end()) return it->second;
  const size_t idx = words_.size();
  words_.push_back(word);
  word_index_.emplace(word, idx);
  weights_.emplace_back(config_.buckets + 1, 0.0);
  grad_.emplace_back(config_.buckets + 1, 0.0);
  return idx;
}

MockTeacher::SparseFeatures MockTeacher::Featurize(
    const std::string& text) const {
  std::istringstream in(text);
  std::map<size_t, double> counts;
  size_t n = 0;
  for (std::string tok; in >> tok; ++n) {
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    counts[Fnv1a64(tok) % config_.buckets] += 1.0;
  }
  SparseFeatures x(counts.begin(), counts.end());
  if (n > 0) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& [_, v] : x) v *= scale;
  }
  return x;
}

double MockTeacher::Logit(size_t word, const SparseFeatures& x) const {
  const auto& w = weights_[word];
  double z = w[config_.buckets];
  for (const auto& [j, v] : x) z += w[j] * v;
  return z;
}

double MockTeacher::Loss(const std::vector<std::string>& texts,
                         const std::vector<std::string>& gold_words) const {
  if (texts.size() != gold_words.size() || texts.empty()) {
    throw ContractError("texts and gold_words must be non-empty and aligned");
  }
  double total = 0.0;
  for (size_t i = 0; i < texts.size(); ++i) {
    auto it = word_index_.find(gold_words[i]);
    if (it == word_index_.end()) {
      throw ContractError("gold word '" + gold_words[i] + "' not in vocabulary");
    }
    auto x = Featurize(texts[i]);
    std::vector<double> z(words_.size());
    for (size_t k = 0; k < words_.size(); ++k) z[k] = Logit(k, x);
    total += -LogSoftmax(z)[it->second];
  }
  return total / static_cast<double>(texts.size());
}

double MockTeacher::TrainBatch(const std::vector<std::string>& texts,
                               const std::vector<std::string>& gold_words,
                               double learning_rate, bool apply_update) {
  if (texts.size() != gold_words.size() || texts.empty()) {
    throw ContractError("texts and gold_words must be non-empty and aligned");
  }
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be > 0");
  for (const auto& w : gold_words) WordIndex(w);

  ++step_count_;
  lrs_seen_.push_back(learning_rate);
  const double inv_n = 1.0 / static_cast<double>(texts.size());
  double loss = 0.0;
  for (size_t i = 0; i < texts.size(); ++i) {
    auto x = Featurize(texts[i]);
    std::vector<double> z(words_.size());
    for (size_t k = 0; k < words_.size(); ++k) z[k] = Logit(k, x);
    auto p = Softmax(z);
    const size_t gold = word_index_.at(gold_words[i]);
    loss += -std::log(std::max(p[gold], 1e-300));
    for (size_t k = 0; k < words_.size(); ++k) {
      const double err = (p[k] - (k == gold ? 1.0 : 0.0)) * inv_n;
      for (const auto& [j, v] : x) grad_[k][j] += err * v;
      grad_[k][config_.buckets] += err;
    }
  }
  ++pending_micro_batches_;

  if (apply_update) {
    const double step = learning_rate * config_.lr_scale /
                        static_cast<double>(pending_micro_batches_);
    for (size_t k = 0; k < words_.size(); ++k) {
      for (size_t j = 0; j <= config_.buckets; ++j) {
        weights_[k][j] -= step * grad_[k][j];
        grad_[k][j] = 0.0;
      }
    }
    pending_micro_batches_ = 0;
    ++update_count_;
  }
  return loss * inv_n;
}

std::vector<std::vector<double>> MockTeacher::Predict(
    const std::vector<std::string>& texts,
    const std::vector<std::string>& candidate_words) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    auto x = Featurize(text);
    std::vector<double> row;
    row.reserve(candidate_words.size());
    for (const auto& w : candidate_words) {
      auto it = word_index_.find(w);
      row.push_back(it == word_index_.end() ? 0.0 : Logit(it->second, x));
    }
    out.push_back(std::move(row));
  }
  return out;
}

nlohmann::json MockTeacher::ToJson() const {
  return {{"buckets", config_.buckets},
          {"words", words_},
          {"weights", weights_},
          {"step_count", step_count_},
          {"update_count", update_count_}};
}

void MockTeacher::FromJson(const nlohmann::json& j) {
  if (j.at("buckets").get<size_t>() != config_.buckets) {
    throw ContractError("mock teacher artifact has a different bucket count");
  }
  words_ = j.at("words").get<std::vector<std::string>>();
  weights_ = j.at("weights").get<std::vector<std::vector<double>>>();
  word_index_.clear();
  for (size_t i = 0; i < words_.size(); ++i) word_index_[words_[i]] = i;
  grad_.assign(words_.size(), std::vector<double>(config_.buckets + 1, 0.0));
  pending_micro_batches_ = 0;
  step_count_ = j.at("step_count").get<size_t>();
  update_count_ = j.at("update_count").get<size_t>();
}

std::string MockTeacher::Save() {
  auto j = ToJson();
  const std::string dump = j.dump();
  const std::string id = "mock-teacher-" + Sha256Hex(dump).substr(0, 16);
  if (config_.artifact_dir.empty()) {
    snapshots_[id] = std::move(j);
    return id;
  }
  std::filesystem::create_directories(config_.artifact_dir);
  const auto path =
      std::filesystem::path(config_.artifact_dir) / (id + ".json");
  std::ofstream out(path, std::ios::trunc);
  out << dump;
  if (!out) throw IoError("cannot write teacher artifact " + path.string());
  return id;
}

void MockTeacher::Load(const std::string& artifact_id) {
  if (config_.artifact_dir.empty()) {
    auto it = snapshots_.find(artifact_id);
    if (it == snapshots_.end()) {
      throw BackendError("unknown teacher artifact " + artifact_id, false);
    }
    FromJson(it->second);
    return;
  }
  const auto path =
      std::filesystem::path(config_.artifact_dir) / (artifact_id + ".json");
  std::ifstream in(path);
  if (!in) throw BackendError("unknown teacher artifact " + artifact_id, false);
  FromJson(nlohmann::json::parse(in));
}

}  // namespace btclf
