#include "btclf/teacher.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <random>

#include "btclf/errors.h"
#include "btclf/hashing.h"
#include "btclf/math_util.h"

namespace btclf {

void TeacherTrainConfig::Validate() const {
  if (batch_size == 0 || max_seq_len == 0 || grad_accum_steps == 0) {
    throw ValidationError("teacher batch_size, max_seq_len and "
                          "grad_accum_steps must be positive");
  }
  if (!(learning_rate > 0.0)) {
    throw ValidationError("teacher learning_rate must be positive");
  }
}

void GridSpace::Validate() const {
  if (learning_rates.empty() || grad_accum.empty()) {
    throw ValidationError("grid search space is empty");
  }
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw ValidationError("grid learning rates must be > 0");
  }
  for (size_t a : grad_accum) {
    if (a == 0) throw ValidationError("grid accumulation steps must be > 0");
  }
}

TeacherInput RenderTeacherInput(const TaskSpec& spec, const TextSegments& input,
                                const DemonstrationSet& demos,
                                const PromptOptions& options,
                                size_t max_seq_len,
                                const TeacherBackend& tokenizer) {
  const PromptText base = ApplyTemplate(spec, input);
  std::vector<std::string> segments;
  for (const auto& label : spec.label_space) {
    auto it = demos.per_label.find(label);
    if (it == demos.per_label.end()) {
      throw InsufficientDataError("no demonstration for label '" + label + "'",
                                  label);
    }
    segments.push_back(RenderDemonstration(spec, it->second));
  }

  const std::string joiner = options.Joiner();
  for (size_t kept = segments.size() + 1; kept-- > 0;) {
    std::string text = base.rendered;
    for (size_t i = 0; i < kept; ++i) text += joiner + segments[i];
    if (kept == 0 || tokenizer.CountTokens(text) <= max_seq_len) {
      if (kept == 0 && tokenizer.CountTokens(text) > max_seq_len) {
        spdlog::warn("teacher input exceeds {} tokens without demonstrations",
                     max_seq_len);
      }
      return {std::move(text), kept};
    }
  }
  return {base.rendered, 0};  // unreachable
}

namespace {

struct RenderedSet {
  std::vector<std::string> texts;
  std::vector<size_t> labels;
};

RenderedSet Render(const std::vector<LabeledExample>& examples,
                   const TaskSpec& spec, const DemonstrationSet& demos,
                   const PromptOptions& options, size_t max_seq_len,
                   const TeacherBackend& backend) {
  RenderedSet out;
  for (const auto& ex : examples) {
    out.texts.push_back(RenderTeacherInput(spec, ex.segments(), demos, options,
                                           max_seq_len, backend)
                            .text);
    out.labels.push_back(spec.LabelIndex(ex.label));
  }
  return out;
}

double Accuracy(TeacherBackend& backend, const TaskSpec& spec,
                const RenderedSet& set) {
  if (set.texts.empty()) return 0.0;
  auto logits = backend.Predict(set.texts, spec.LabelWords());
  size_t correct = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (ArgMax(logits[i]) == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.texts.size());
}

}  // namespace

TeacherModel Finetune(std::shared_ptr<TeacherBackend> backend,
                      const FewShotSplit& split, const TaskSpec& spec,
                      const DemonstrationSet& demos,
                      const TeacherTrainConfig& cfg,
                      const PromptOptions& options) {
  cfg.Validate();
  if (split.train.empty() || split.dev.empty()) {
    throw ValidationError("teacher needs non-empty train and dev splits");
  }
  const RenderedSet train =
      Render(split.train, spec, demos, options, cfg.max_seq_len, *backend);
  const RenderedSet dev =
      Render(split.dev, spec, demos, options, cfg.max_seq_len, *backend);
  const auto words = spec.LabelWords();

  std::mt19937_64 rng(DeriveSeed(cfg.seed, "teacher-batches"));
  std::vector<size_t> order(train.texts.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();

  try {
    for (size_t step = 0; step < cfg.max_steps; ++step) {
      std::vector<std::string> texts;
      std::vector<std::string> gold;
      for (size_t b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const size_t i = order[cursor++];
        texts.push_back(train.texts[i]);
        gold.push_back(words[train.labels[i]]);
      }
      const bool apply = (step + 1) % cfg.grad_accum_steps == 0 ||
                         step + 1 == cfg.max_steps;
      const double loss = backend->TrainBatch(texts, gold, cfg.learning_rate,
                                              apply);
      if (!std::isfinite(loss)) {
        throw TrainingError("teacher loss is not finite at step " +
                            std::to_string(step));
      }
    }
  } catch (const TrainingError&) {
    throw;
  } catch (const Error& e) {
    throw TrainingError(std::string("teacher training failed: ") + e.what());
  }

  TeacherModel model;
  model.backend = backend;
  model.config = cfg;
  model.demos = demos;
  model.prompt_options = options;
  model.dev_accuracy = Accuracy(*backend, spec, dev);
  if (std::isnan(model.dev_accuracy)) {
    throw ContractError("teacher dev accuracy is NaN");
  }
  model.artifact_id = backend->Save();
  return model;
}

std::vector<std::vector<double>> PredictLabelDistributions(
    const TeacherModel& model, const TaskSpec& spec,
    const std::vector<TextSegments>& inputs) {
  std::vector<std::string> texts;
  texts.reserve(inputs.size());
  for (const auto& in : inputs) {
    texts.push_back(RenderTeacherInput(spec, in, model.demos,
                                       model.prompt_options,
                                       model.config.max_seq_len, *model.backend)
                        .text);
  }
  auto logits = model.backend->Predict(texts, spec.LabelWords());
  if (logits.size() != inputs.size()) {
    throw ContractError("teacher returned a wrong number of rows");
  }
  std::vector<std::vector<double>> out;
  out.reserve(logits.size());
  for (const auto& row : logits) {
    if (row.size() != spec.label_space.size()) {
      throw ContractError("teacher returned a wrong number of label logits");
    }
    out.push_back(Softmax(row));
  }
  return out;
}

std::vector<double> PredictLabelDistribution(const TeacherModel& model,
                                             const TaskSpec& spec,
                                             const TextSegments& input) {
  return PredictLabelDistributions(model, spec, {input}).front();
}

std::map<std::string, double> AsLabelMap(const TaskSpec& spec,
                                         const std::vector<double>& probs) {
  std::map<std::string, double> out;
  for (size_t i = 0; i < spec.label_space.size() && i < probs.size(); ++i) {
    out[spec.label_space[i]] = probs[i];
  }
  return out;
}

double TeacherAccuracy(const TeacherModel& model, const TaskSpec& spec,
                       const std::vector<LabeledExample>& examples) {
  const RenderedSet set =
      Render(examples, spec, model.demos, model.prompt_options,
             model.config.max_seq_len, *model.backend);
  return Accuracy(*model.backend, spec, set);
}

GridSearchResult GridSearch(const TeacherFactory& factory,
                            const FewShotSplit& split, const TaskSpec& spec,
                            const DemonstrationSet& demos,
                            const GridSpace& grid,
                            const TeacherTrainConfig& base,
                            const PromptOptions& prompt_options,
                            const GridSearchOptions& options) {
  grid.Validate();
  auto lrs = grid.learning_rates;
  auto accums = grid.grad_accum;
  std::sort(lrs.begin(), lrs.end());
  std::sort(accums.begin(), accums.end());

  std::vector<TeacherTrainConfig> configs;
  for (double lr : lrs) {
    for (size_t accum : accums) {
      TeacherTrainConfig cfg = base;
      cfg.learning_rate = lr;
      cfg.grad_accum_steps = accum;
      configs.push_back(cfg);
    }
  }

  auto train_one = [&](const TeacherTrainConfig& cfg) {
    return Finetune(factory(), split, spec, demos, cfg, prompt_options);
  };

  std::vector<std::optional<TeacherModel>> models(configs.size());
  GridSearchResult result;
  std::vector<std::future<TeacherModel>> futures;
  if (options.parallel) {
    for (const auto& cfg : configs) {
      futures.push_back(std::async(std::launch::async, train_one, cfg));
    }
  }
  for (size_t i = 0; i < configs.size(); ++i) {
    VariantResult v{configs[i].learning_rate, configs[i].grad_accum_steps, {}, {}};
    try {
      models[i] = options.parallel ? futures[i].get() : train_one(configs[i]);
      v.dev_accuracy = models[i]->dev_accuracy;
      spdlog::info("teacher variant lr={} accum={} dev_accuracy={:.4f}",
                   v.learning_rate, v.grad_accum, *v.dev_accuracy);
    } catch (const std::exception& e) {
      v.error = e.what();
      spdlog::warn("teacher variant lr={} accum={} failed: {}",
                   v.learning_rate, v.grad_accum, e.what());
    }
    result.variants.push_back(std::move(v));
  }

  std::optional<size_t> best;
  for (size_t i = 0; i < models.size(); ++i) {
    if (!models[i]) continue;
    if (!best || models[i]->dev_accuracy > models[*best]->dev_accuracy) best = i;
  }
  if (!best) {
    std::string all = "all " + std::to_string(configs.size()) +
                      " teacher variants failed:";
    for (const auto& v : result.variants) all += " [" + v.error + "]";
    throw TrainingError(all);
  }
  result.best = std::move(*models[*best]);
  return result;
}

}  // namespace btclf
