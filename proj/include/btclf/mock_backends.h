#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "btclf/backends.h"

namespace btclf {

struct MockEncoderConfig {
  size_t d = 16;
  size_t num_layers = 6;
  std::string model_id = "mock-encoder";
  uint64_t seed = 0;

  // Planted mode: texts found in `oracle` get the unit direction of their
  // hidden label plus Gaussian noise; anything else is pure hash noise.
  bool planted = false;
  std::vector<std::string> labels;
  double noise = 0.1;
  // Fraction of the label direction visible at the CLS position.
  double cls_signal_scale = 0.5;
  // Whitespace-normalized rendered text -> hidden label.
  std::unordered_map<std::string, std::string> oracle;
};

// Deterministic in-process encoder. Every layer vector is a pure function of
// (config, text, position, layer index).
class MockEncoder : public Encoder {
 public:
  explicit MockEncoder(MockEncoderConfig config);

  EncoderMeta Meta() override;
  LayerHiddenStates Encode(const EncoderRequest& request) override;

  const std::vector<double>& Direction(const std::string& label) const;
  void AddOracle(const std::string& rendered_text, const std::string& label);

 private:
  std::vector<double> LayerVector(const std::string& text, Position position,
                                  size_t layer) const;

  MockEncoderConfig config_;
  std::map<std::string, std::vector<double>> directions_;
};

struct MockTeacherConfig {
  size_t buckets = 2048;
  // Multiplies incoming learning rates so transformer-scale rates (1e-5)
  // move the linear model a useful amount.
  double lr_scale = 1e5;
  // Output words of the softmax; gold words outside it are added on demand.
  std::vector<std::string> vocabulary;
  // Where Save() writes artifacts. Empty keeps snapshots in memory.
  std::string artifact_dir;
};

// Multinomial linear model over hashed bag-of-token features of the whole
// input, with a softmax over its output vocabulary.
class MockTeacher : public TeacherBackend {
 public:
  explicit MockTeacher(MockTeacherConfig config);

  double TrainBatch(const std::vector<std::string>& texts,
                    const std::vector<std::string>& gold_words,
                    double learning_rate, bool apply_update) override;
  std::vector<std::vector<double>> Predict(
      const std::vector<std::string>& texts,
      const std::vector<std::string>& candidate_words) override;
  std::string Save() override;
  void Load(const std::string& artifact_id) override;

  // Mean cross-entropy over the vocabulary; no side effects.
  double Loss(const std::vector<std::string>& texts,
              const std::vector<std::string>& gold_words) const;

  size_t step_count() const { return step_count_; }
  size_t update_count() const { return update_count_; }
  const std::vector<double>& learning_rates_seen() const { return lrs_seen_; }

  nlohmann::json ToJson() const;
  void FromJson(const nlohmann::json& j);

 private:
  using SparseFeatures = std::vector<std::pair<size_t, double>>;

  SparseFeatures Featurize(const std::string& text) const;
  size_t WordIndex(const std::string& word);
  double Logit(size_t word, const SparseFeatures& x) const;

  MockTeacherConfig config_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, size_t> word_index_;
  // per word: buckets weights followed by one bias
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> grad_;
  size_t pending_micro_batches_ = 0;
  size_t step_count_ = 0;
  size_t update_count_ = 0;
  std::vector<double> lrs_seen_;
  std::map<std::string, nlohmann::json> snapshots_;
};

}  // namespace btclf
