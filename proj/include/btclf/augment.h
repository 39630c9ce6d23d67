#pragma once

#include <map>
#include <string>
#include <vector>

#include "btclf/corpus.h"
#include "btclf/teacher.h"

namespace btclf {

inline constexpr double kDefaultConfidenceThreshold = 0.9;

struct PseudoLabeledExample {
  std::string text_a;
  std::optional<std::string> text_b;
  std::string pseudo_label;
  double confidence = 0.0;

  TextSegments segments() const { return {text_a, text_b}; }
  bool operator==(const PseudoLabeledExample&) const = default;
};

enum class BalanceStrategy { kMinCap };

struct AugmentedSet {
  std::vector<PseudoLabeledExample> examples;
  std::map<std::string, size_t> per_class_counts;
  double threshold = kDefaultConfidenceThreshold;
  std::vector<std::string> warnings;
};

struct PseudoLabelOptions {
  double threshold = kDefaultConfidenceThreshold;
  size_t batch_size = 64;
  size_t workers = 1;
};

// Keeps pool items whose top label-word probability is strictly above the
// threshold. Output is sorted by content hash regardless of worker count.
std::vector<PseudoLabeledExample> PseudoLabel(
    const TeacherModel& teacher, const UnlabeledPool& pool,
    const TaskSpec& spec, const PseudoLabelOptions& options = {});

// Filter step on its own, for distributions computed elsewhere.
std::vector<PseudoLabeledExample> FilterByConfidence(
    const std::vector<TextSegments>& texts,
    const std::vector<std::vector<double>>& distributions,
    const TaskSpec& spec, double threshold);

// MIN_CAP: every present class is cut to the smallest present class count,
// keeping the most confident items (seeded random order among equal
// confidences). Classes with no items stay absent and produce a warning.
AugmentedSet BalanceClasses(const std::vector<PseudoLabeledExample>& items,
                            const TaskSpec& spec, BalanceStrategy strategy,
                            uint64_t seed,
                            double threshold = kDefaultConfidenceThreshold);

struct TrainItem {
  std::string text_a;
  std::optional<std::string> text_b;
  std::string label;
  double weight = 1.0;
  bool gold = false;

  TextSegments segments() const { return {text_a, text_b}; }
};

// Gold examples first, then pseudo-labeled ones whose content is not
// already present. Every item has weight 1.
std::vector<TrainItem> MergeTrain(const AugmentedSet& aug,
                                  const FewShotSplit& split);

void WriteAugmented(const std::string& path, const AugmentedSet& aug);
AugmentedSet ReadAugmented(const std::string& path, const TaskSpec& spec,
                           double threshold);

}  // namespace btclf
