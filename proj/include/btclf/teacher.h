#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "btclf/backends.h"
#include "btclf/corpus.h"
#include "btclf/prompt.h"

namespace btclf {

struct TeacherTrainConfig {
  size_t batch_size = 2;
  // Token budget for input plus demonstrations.
  size_t max_seq_len = 128;
  // Micro-batches; an update is applied every grad_accum_steps of them.
  size_t max_steps = 2000;
  double learning_rate = 1e-5;
  size_t grad_accum_steps = 1;
  uint64_t seed = 0;

  void Validate() const;
};

struct GridSpace {
  std::vector<double> learning_rates = {1e-5, 2e-5};
  std::vector<size_t> grad_accum = {1, 2};

  void Validate() const;
  size_t size() const { return learning_rates.size() * grad_accum.size(); }
};

struct TeacherModel {
  std::shared_ptr<TeacherBackend> backend;
  double dev_accuracy = 0.0;
  TeacherTrainConfig config;
  std::string artifact_id;
  DemonstrationSet demos;
  PromptOptions prompt_options;
};

struct TeacherInput {
  std::string text;
  size_t demonstrations_kept = 0;
};

// Template plus demonstrations. Demonstrations are dropped from the right
// until the whole input fits `max_seq_len` tokens; the input itself and its
// mask slot are never cut.
TeacherInput RenderTeacherInput(const TaskSpec& spec, const TextSegments& input,
                                const DemonstrationSet& demos,
                                const PromptOptions& options,
                                size_t max_seq_len,
                                const TeacherBackend& tokenizer);

TeacherModel Finetune(std::shared_ptr<TeacherBackend> backend,
                      const FewShotSplit& split, const TaskSpec& spec,
                      const DemonstrationSet& demos,
                      const TeacherTrainConfig& cfg,
                      const PromptOptions& options = {});

// Label-word softmax, one row per input in label_space order.
std::vector<std::vector<double>> PredictLabelDistributions(
    const TeacherModel& model, const TaskSpec& spec,
    const std::vector<TextSegments>& inputs);
std::vector<double> PredictLabelDistribution(const TeacherModel& model,
                                             const TaskSpec& spec,
                                             const TextSegments& input);
std::map<std::string, double> AsLabelMap(const TaskSpec& spec,
                                         const std::vector<double>& probs);

// Argmax accuracy on labeled examples (ties go to label_space order).
double TeacherAccuracy(const TeacherModel& model, const TaskSpec& spec,
                       const std::vector<LabeledExample>& examples);

using TeacherFactory = std::function<std::shared_ptr<TeacherBackend>()>;

struct VariantResult {
  double learning_rate = 0.0;
  size_t grad_accum = 0;
  std::optional<double> dev_accuracy;
  std::string error;
};

struct GridSearchResult {
  TeacherModel best;
  // In (learning_rate, grad_accum) ascending order.
  std::vector<VariantResult> variants;
};

struct GridSearchOptions {
  bool parallel = false;
};

// Trains one variant per grid point, each on a fresh backend, and keeps the
// best on dev. Ties go to the lower learning rate, then lower accumulation.
GridSearchResult GridSearch(const TeacherFactory& factory,
                            const FewShotSplit& split, const TaskSpec& spec,
                            const DemonstrationSet& demos,
                            const GridSpace& grid,
                            const TeacherTrainConfig& base,
                            const PromptOptions& prompt_options = {},
                            const GridSearchOptions& options = {});

}  // namespace btclf
