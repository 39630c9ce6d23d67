#include "btclf/prompt.h"

#include <fstream>
#include <random>
#include <set>

#include "btclf/corpus.h"
#include "btclf/errors.h"
#include "btclf/hashing.h"

namespace btclf {

namespace {

constexpr std::string_view kSingle = "<X>";
constexpr std::string_view kFirst = "<X1>";
constexpr std::string_view kSecond = "<X2>";

TaskSpec MakeTask(std::string name, std::vector<std::string> labels,
                  std::string pattern,
                  std::map<std::string, std::string> verbalizer, bool is_pair,
                  size_t budget) {
  TaskSpec spec{std::move(name), std::move(labels), std::move(pattern),
                std::move(verbalizer), is_pair, budget};
  spec.Validate();
  return spec;
}

std::map<std::string, std::string> Identity(
    const std::vector<std::string>& labels) {
  std::map<std::string, std::string> out;
  for (const auto& l : labels) out[l] = l;
  return out;
}

}  // namespace

size_t CountOccurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  size_t count = 0;
  for (size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

void TaskSpec::Validate() const {
  if (name.empty()) throw ValidationError("task name is empty");
  if (label_space.size() < 2) {
    throw ValidationError("task '" + name + "' needs at least two labels");
  }
  std::set<std::string> labels(label_space.begin(), label_space.end());
  if (labels.size() != label_space.size()) {
    throw ValidationError("task '" + name + "' has duplicate labels");
  }
  if (CountOccurrences(pattern, kMaskToken) != 1) {
    throw TemplateError("template of task '" + name +
                        "' must contain exactly one [MASK]");
  }
  if (is_pair) {
    if (CountOccurrences(pattern, kFirst) != 1 ||
        CountOccurrences(pattern, kSecond) != 1 ||
        CountOccurrences(pattern, kSingle) != 0) {
      throw TemplateError("pair template of task '" + name +
                          "' needs one <X1> and one <X2>");
    }
  } else if (CountOccurrences(pattern, kSingle) != 1 ||
             CountOccurrences(pattern, kFirst) != 0 ||
             CountOccurrences(pattern, kSecond) != 0) {
    throw TemplateError("single template of task '" + name +
                        "' needs exactly one <X>");
  }
  if (verbalizer.size() != label_space.size()) {
    throw ValidationError("verbalizer of task '" + name +
                          "' must cover exactly the label space");
  }
  std::set<std::string> words;
  for (const auto& label : label_space) {
    auto it = verbalizer.find(label);
    if (it == verbalizer.end()) {
      throw ValidationError("verbalizer of task '" + name +
                            "' has no entry for label '" + label + "'");
    }
    if (it->second.empty() || !words.insert(it->second).second) {
      throw ValidationError("verbalizer of task '" + name +
                            "' is not injective");
    }
  }
}

bool TaskSpec::HasLabel(std::string_view label) const {
  return std::find(label_space.begin(), label_space.end(), label) !=
         label_space.end();
}

size_t TaskSpec::LabelIndex(std::string_view label) const {
  auto it = std::find(label_space.begin(), label_space.end(), label);
  if (it == label_space.end()) {
    throw ValidationError("unknown label '" + std::string(label) +
                          "' for task '" + name + "'");
  }
  return static_cast<size_t>(it - label_space.begin());
}

const std::string& TaskSpec::Verbalize(std::string_view label) const {
  auto it = verbalizer.find(std::string(label));
  if (it == verbalizer.end()) {
    throw ValidationError("unknown label '" + std::string(label) +
                          "' for task '" + name + "'");
  }
  return it->second;
}

const std::string& TaskSpec::LabelForWord(std::string_view word) const {
  for (const auto& [label, w] : verbalizer) {
    if (w == word) return label;
  }
  throw ValidationError("'" + std::string(word) +
                        "' is not a label word of task '" + name + "'");
}

std::vector<std::string> TaskSpec::LabelWords() const {
  std::vector<std::string> words;
  words.reserve(label_space.size());
  for (const auto& label : label_space) words.push_back(Verbalize(label));
  return words;
}

TaskRegistry TaskRegistry::Defaults() {
  TaskRegistry r;
  const std::vector<std::string> trec = {"abbreviation", "entity",
                                         "description",  "human",
                                         "location",     "number"};
  const std::vector<std::string> agnews = {"World", "Sports", "Business",
                                           "Tech"};
  const std::map<std::string, std::string> sentiment = {
      {"negative", "bad"}, {"positive", "great"}};
  const std::map<std::string, std::string> paraphrase = {
      {"not_Equivalent", "no"}, {"equivalent", "yes"}};

  r.Add(MakeTask("trec", trec, "[MASK] question: <X>", Identity(trec), false,
                 4600));
  r.Add(MakeTask("agnews", agnews, "[MASK] News: <X>", Identity(agnews), false,
                 8900));
  r.Add(MakeTask("yelp", {"negative", "positive"}, "<X> . It was [MASK] .",
                 sentiment, false, 8900));
  r.Add(MakeTask("sst2", {"negative", "positive"}, "<X> . It was [MASK] .",
                 sentiment, false, 4000));
  r.Add(MakeTask("mrpc", {"not_Equivalent", "equivalent"},
                 "<X1> ? [MASK] , <X2>", paraphrase, true, 3100));
  r.Add(MakeTask("qqp", {"not_Equivalent", "equivalent"},
                 "<X1> ? [MASK] , <X2>", paraphrase, true, 3000));
  r.Add(MakeTask("qnli", {"entailment", "not_entailment"},
                 "<X1> ? [MASK] , <X2>",
                 {{"entailment", "yes"}, {"not_entailment", "no"}}, true,
                 3000));
  r.Add(MakeTask("snli", {"entailment", "neutral", "contradiction"},
                 "<X1> ? [MASK] , <X2>",
                 {{"entailment", "yes"},
                  {"neutral", "maybe"},
                  {"contradiction", "no"}},
                 true, 6000));
  return r;
}

void to_json(nlohmann::json& j, const TaskSpec& spec) {
  j = nlohmann::json{{"template", spec.pattern},
                     {"verbalizer", spec.verbalizer},
                     {"is_pair", spec.is_pair},
                     {"label_space", spec.label_space},
                     {"aug_budget", spec.aug_budget}};
}

void from_json(const nlohmann::json& j, TaskSpec& spec) {
  j.at("template").get_to(spec.pattern);
  j.at("verbalizer").get_to(spec.verbalizer);
  j.at("is_pair").get_to(spec.is_pair);
  j.at("label_space").get_to(spec.label_space);
  spec.aug_budget = j.value("aug_budget", size_t{0});
}

TaskRegistry TaskRegistry::FromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("task registry must be an object");
  TaskRegistry r;
  for (const auto& [name, body] : j.items()) {
    TaskSpec spec;
    try {
      body.get_to(spec);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("task '" + name + "': " + e.what());
    }
    spec.name = name;
    r.Add(std::move(spec));
  }
  return r;
}

TaskRegistry TaskRegistry::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open task registry " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 1);
  }
  return FromJson(j);
}

void TaskRegistry::Add(TaskSpec spec) {
  spec.Validate();
  std::string name = spec.name;
  tasks_.insert_or_assign(std::move(name), std::move(spec));
}

const TaskSpec& TaskRegistry::Get(std::string_view name) const {
  auto it = tasks_.find(name);
  if (it == tasks_.end()) {
    throw ValidationError("unknown task '" + std::string(name) + "'");
  }
  return it->second;
}

bool TaskRegistry::Contains(std::string_view name) const {
  return tasks_.find(name) != tasks_.end();
}

std::vector<std::string> TaskRegistry::Names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : tasks_) names.push_back(name);
  return names;
}

nlohmann::json TaskRegistry::ToJson() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, spec] : tasks_) j[name] = spec;
  return j;
}

PromptText ApplyTemplate(const TaskSpec& spec, const TextSegments& input) {
  if (input.text_b.has_value() != spec.is_pair) {
    throw TemplateError("task '" + spec.name + "' expects " +
                        (spec.is_pair ? "two segments" : "one segment"));
  }
  if (CountOccurrences(input.text_a, kMaskToken) != 0 ||
      (input.text_b && CountOccurrences(*input.text_b, kMaskToken) != 0)) {
    throw TemplateError("input text contains a literal [MASK]");
  }

  // Single left-to-right scan so that placeholder-like text inside the
  // inputs is never substituted a second time.
  PromptText out;
  const std::string_view pattern = spec.pattern;
  size_t i = 0;
  while (i < pattern.size()) {
    std::string_view rest = pattern.substr(i);
    if (rest.starts_with(kMaskToken)) {
      out.mask_slot_index = out.rendered.size();
      out.rendered.append(kMaskToken);
      i += kMaskToken.size();
    } else if (!spec.is_pair && rest.starts_with(kSingle)) {
      out.rendered += input.text_a;
      i += kSingle.size();
    } else if (spec.is_pair && rest.starts_with(kFirst)) {
      out.rendered += input.text_a;
      i += kFirst.size();
    } else if (spec.is_pair && rest.starts_with(kSecond)) {
      out.rendered += *input.text_b;
      i += kSecond.size();
    } else {
      out.rendered.push_back(pattern[i]);
      ++i;
    }
  }
  return out;
}

std::string RenderDemonstration(const TaskSpec& spec,
                                const LabeledExample& demo) {
  PromptText p = ApplyTemplate(spec, demo.segments());
  std::string filled = p.rendered;
  filled.replace(p.mask_slot_index, kMaskToken.size(),
                 spec.Verbalize(demo.label));
  return filled;
}

const std::string& Verbalize(const TaskSpec& spec, std::string_view label) {
  return spec.Verbalize(label);
}

DemonstrationSet SampleDemonstrations(const FewShotSplit& split,
                                      const TaskSpec& spec, uint64_t seed) {
  DemonstrationSet demos;
  demos.seed = seed;
  for (const auto& label : spec.label_space) {
    std::vector<const LabeledExample*> candidates;
    for (const auto& ex : split.train) {
      if (ex.label == label) candidates.push_back(&ex);
    }
    if (candidates.empty()) {
      throw InsufficientDataError(
          "no train example for label '" + label + "' to use as demonstration",
          label);
    }
    std::mt19937_64 rng(DeriveSeed(seed, "demo:" + label));
    std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
    demos.per_label.emplace(label, *candidates[pick(rng)]);
  }
  return demos;
}

PromptText AppendDemonstrations(const PromptText& prompt,
                                const DemonstrationSet& demos,
                                const TaskSpec& spec,
                                const PromptOptions& options) {
  if (prompt.demonstrations_appended) {
    throw StateError("demonstrations already appended");
  }
  PromptText out = prompt;
  const std::string joiner = options.Joiner();
  for (const auto& label : spec.label_space) {
    auto it = demos.per_label.find(label);
    if (it == demos.per_label.end()) {
      throw InsufficientDataError("no demonstration for label '" + label + "'",
                                  label);
    }
    out.rendered += joiner;
    out.rendered += RenderDemonstration(spec, it->second);
  }
  out.demonstrations_appended = true;
  return out;
}

}  // namespace btclf
