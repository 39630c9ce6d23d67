#include "btclf/augment.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <future>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "btclf/errors.h"
#include "btclf/hashing.h"
#include "btclf/math_util.h"

namespace btclf {

std::vector<PseudoLabeledExample> FilterByConfidence(
    const std::vector<TextSegments>& texts,
    const std::vector<std::vector<double>>& distributions,
    const TaskSpec& spec, double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw ValidationError("confidence threshold must be in [0, 1)");
  }
  if (texts.size() != distributions.size()) {
    throw ContractError("one distribution per text expected");
  }
  std::vector<PseudoLabeledExample> out;
  for (size_t i = 0; i < texts.size(); ++i) {
    const auto& p = distributions[i];
    if (p.size() != spec.label_space.size()) {
      throw ContractError("distribution width does not match label space");
    }
    const size_t best = ArgMax(p);
    if (p[best] > threshold) {
      out.push_back({texts[i].text_a, texts[i].text_b, spec.label_space[best],
                     p[best]});
    }
  }
  return out;
}

std::vector<PseudoLabeledExample> PseudoLabel(const TeacherModel& teacher,
                                              const UnlabeledPool& pool,
                                              const TaskSpec& spec,
                                              const PseudoLabelOptions& options) {
  if (!(options.threshold >= 0.0 && options.threshold < 1.0)) {
    throw ValidationError("confidence threshold must be in [0, 1)");
  }
  // canonical order first, so batching and parallelism cannot change output
  std::vector<std::pair<std::string, const TextSegments*>> keyed;
  keyed.reserve(pool.texts.size());
  for (const auto& t : pool.texts) keyed.emplace_back(ContentKey(t), &t);
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<TextSegments> ordered;
  ordered.reserve(keyed.size());
  for (const auto& [_, t] : keyed) ordered.push_back(*t);

  const size_t batch = std::max<size_t>(options.batch_size, 1);
  std::vector<std::vector<double>> dists(ordered.size());
  auto run_batch = [&](size_t start) {
    const size_t end = std::min(ordered.size(), start + batch);
    std::vector<TextSegments> chunk(ordered.begin() + start,
                                    ordered.begin() + end);
    auto probs = PredictLabelDistributions(teacher, spec, chunk);
    for (size_t i = start; i < end; ++i) dists[i] = std::move(probs[i - start]);
  };

  const size_t workers = std::max<size_t>(options.workers, 1);
  std::vector<size_t> starts;
  for (size_t s = 0; s < ordered.size(); s += batch) starts.push_back(s);
  for (size_t w = 0; w < starts.size(); w += workers) {
    std::vector<std::future<void>> inflight;
    for (size_t k = w; k < std::min(starts.size(), w + workers); ++k) {
      if (workers == 1) {
        run_batch(starts[k]);
      } else {
        inflight.push_back(std::async(std::launch::async, run_batch, starts[k]));
      }
    }
    for (auto& f : inflight) f.get();
  }
  return FilterByConfidence(ordered, dists, spec, options.threshold);
}

AugmentedSet BalanceClasses(const std::vector<PseudoLabeledExample>& items,
                            const TaskSpec& spec, BalanceStrategy strategy,
                            uint64_t seed, double threshold) {
  (void)strategy;  // MIN_CAP is the only strategy
  AugmentedSet out;
  out.threshold = threshold;

  std::map<std::string, std::vector<PseudoLabeledExample>> by_label;
  for (const auto& item : items) {
    spec.LabelIndex(item.pseudo_label);
    by_label[item.pseudo_label].push_back(item);
  }
  if (by_label.empty()) {
    out.warnings.push_back("no pseudo-labeled items: augmentation is empty");
    spdlog::warn("{}", out.warnings.back());
    return out;
  }

  size_t n_min = items.size();
  for (const auto& [_, members] : by_label) n_min = std::min(n_min, members.size());

  for (const auto& label : spec.label_space) {
    auto it = by_label.find(label);
    if (it == by_label.end()) {
      out.warnings.push_back("no pseudo-labeled items for class '" + label + "'");
      spdlog::warn("{}", out.warnings.back());
      continue;
    }
    auto members = std::move(it->second);
    // content order, then a seeded shuffle, then confidence: the shuffle
    // only decides among equal confidences
    std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
      return ContentKey(a.segments()) < ContentKey(b.segments());
    });
    std::mt19937_64 rng(DeriveSeed(seed, "balance:" + label));
    std::shuffle(members.begin(), members.end(), rng);
    std::stable_sort(members.begin(), members.end(),
                     [](const auto& a, const auto& b) {
                       return a.confidence > b.confidence;
                     });
    members.resize(n_min);
    out.per_class_counts[label] = members.size();
    for (auto& m : members) out.examples.push_back(std::move(m));
  }
  return out;
}

std::vector<TrainItem> MergeTrain(const AugmentedSet& aug,
                                  const FewShotSplit& split) {
  std::vector<TrainItem> out;
  out.reserve(split.train.size() + aug.examples.size());
  std::unordered_set<std::string> seen;
  for (const auto& ex : split.train) {
    if (!seen.insert(ContentKey(ex.segments())).second) continue;
    out.push_back({ex.text_a, ex.text_b, ex.label, 1.0, true});
  }
  for (const auto& ex : aug.examples) {
    if (!seen.insert(ContentKey(ex.segments())).second) continue;
    out.push_back({ex.text_a, ex.text_b, ex.pseudo_label, 1.0, false});
  }
  return out;
}

void WriteAugmented(const std::string& path, const AugmentedSet& aug) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& ex : aug.examples) {
    nlohmann::json j{{"text_a", ex.text_a},
                     {"text_b", ex.text_b ? nlohmann::json(*ex.text_b)
                                          : nlohmann::json()},
                     {"pseudo_label", ex.pseudo_label},
                     {"confidence", ex.confidence}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

AugmentedSet ReadAugmented(const std::string& path, const TaskSpec& spec,
                           double threshold) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  AugmentedSet aug;
  aug.threshold = threshold;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PseudoLabeledExample ex;
      ex.text_a = j.at("text_a").get<std::string>();
      if (!j.at("text_b").is_null()) ex.text_b = j["text_b"].get<std::string>();
      ex.pseudo_label = j.at("pseudo_label").get<std::string>();
      ex.confidence = j.at("confidence").get<double>();
      spec.LabelIndex(ex.pseudo_label);
      ++aug.per_class_counts[ex.pseudo_label];
      aug.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
  }
  return aug;
}

}  // namespace btclf
