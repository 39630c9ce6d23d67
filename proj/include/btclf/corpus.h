#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btclf/prompt.h"
#include "btclf/types.h"

namespace btclf {

struct FewShotSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> dev;
  uint64_t seed = 0;
  size_t k = 0;
};

struct UnlabeledPool {
  std::vector<TextSegments> texts;
  std::string source;
};

// Throws ValidationError when `example` breaks a LabeledExample invariant.
void ValidateExample(const LabeledExample& example, const TaskSpec& spec);

// Reads JSONL records {"text_a", "text_b", "label"}. Blank lines are skipped.
std::vector<LabeledExample> LoadDataset(const std::string& path,
                                        const TaskSpec& spec);
// Same schema with "label": null (any label present is ignored).
UnlabeledPool LoadUnlabeled(const std::string& path, const TaskSpec& spec);

void WriteDataset(const std::string& path,
                  const std::vector<LabeledExample>& examples);
void WriteUnlabeled(const std::string& path, const UnlabeledPool& pool);

// Per-class seeded shuffle: first K of each class to train, next K to dev.
// Input is deduplicated by identity and sorted by identity hash first, so
// the result does not depend on the order of `data`.
FewShotSplit SampleFewShot(const std::vector<LabeledExample>& data,
                           const TaskSpec& spec, size_t k, uint64_t seed);

// Everything in `data` not in the split (train or dev), by text content,
// deduplicated, in data order and truncated to `cap`.
UnlabeledPool BuildUnlabeledPool(const std::vector<LabeledExample>& data,
                                 const FewShotSplit& split, size_t cap);

}  // namespace btclf
