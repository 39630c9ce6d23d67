#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "btclf/types.h"

namespace btclf {

inline constexpr std::string_view kMaskToken = "[MASK]";

// A classification task: label space, cloze template and verbalizer.
//
// The template holds <X> (single-sentence) or <X1>/<X2> (pair) placeholders
// and exactly one [MASK] slot. label_space order is the tie-break order for
// every argmax downstream.
struct TaskSpec {
  std::string name;
  std::vector<std::string> label_space;
  std::string pattern;
  std::map<std::string, std::string> verbalizer;
  bool is_pair = false;
  // Upper bound on the unlabeled pool drawn for augmentation.
  size_t aug_budget = 0;

  // Throws ValidationError / TemplateError when an invariant is broken.
  void Validate() const;

  size_t LabelIndex(std::string_view label) const;
  bool HasLabel(std::string_view label) const;
  const std::string& Verbalize(std::string_view label) const;
  const std::string& LabelForWord(std::string_view word) const;
  // Label words in label_space order.
  std::vector<std::string> LabelWords() const;
};

class TaskRegistry {
 public:
  // The eight benchmark tasks with their manual templates and label words.
  static TaskRegistry Defaults();
  static TaskRegistry FromJson(const nlohmann::json& j);
  static TaskRegistry FromFile(const std::string& path);

  void Add(TaskSpec spec);
  const TaskSpec& Get(std::string_view name) const;
  bool Contains(std::string_view name) const;
  std::vector<std::string> Names() const;
  nlohmann::json ToJson() const;

 private:
  std::map<std::string, TaskSpec, std::less<>> tasks_;
};

struct PromptText {
  std::string rendered;
  size_t mask_slot_index = 0;
  bool demonstrations_appended = false;
};

struct DemonstrationSet {
  // label -> train example, one entry per label
  std::map<std::string, LabeledExample> per_label;
  uint64_t seed = 0;
};

struct PromptOptions {
  std::string sep_token = "[SEP]";

  // Text placed between the input and each demonstration.
  std::string Joiner() const {
    return sep_token.empty() ? std::string(" ") : " " + sep_token + " ";
  }
};

size_t CountOccurrences(std::string_view haystack, std::string_view needle);

PromptText ApplyTemplate(const TaskSpec& spec, const TextSegments& input);
inline PromptText ApplyTemplate(const TaskSpec& spec,
                                const LabeledExample& example) {
  return ApplyTemplate(spec, example.segments());
}

// Template for a demonstration: the mask slot is filled with the label word.
std::string RenderDemonstration(const TaskSpec& spec,
                                const LabeledExample& demo);

const std::string& Verbalize(const TaskSpec& spec, std::string_view label);

struct FewShotSplit;
DemonstrationSet SampleDemonstrations(const FewShotSplit& split,
                                      const TaskSpec& spec, uint64_t seed);

PromptText AppendDemonstrations(const PromptText& prompt,
                                const DemonstrationSet& demos,
                                const TaskSpec& spec,
                                const PromptOptions& options = {});

void to_json(nlohmann::json& j, const TaskSpec& spec);
void from_json(const nlohmann::json& j, TaskSpec& spec);

}  // namespace btclf
