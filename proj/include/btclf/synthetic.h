#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "btclf/prompt.h"
#include "btclf/types.h"

namespace btclf {

// Toy corpus for mock runs: each text mixes neutral filler words with cue
// words of its class (and occasionally one cue of another class). The class
// that produced a text is its label and its oracle tag.
struct SyntheticConfig {
  size_t per_class_source = 532;
  size_t per_class_test = 200;
  size_t neutral_vocab = 400;
  size_t cue_vocab = 10;
  size_t neutral_words = 8;
  size_t cue_words = 2;
  double cross_cue_prob = 0.2;
  uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<LabeledExample> source;
  std::vector<LabeledExample> test;
};

SyntheticCorpus GenerateSynthetic(const TaskSpec& spec,
                                  const SyntheticConfig& cfg);

// JSONL with an extra "oracle" field holding the generating class.
void WriteWithOracle(const std::string& path,
                     const std::vector<LabeledExample>& examples);

// Oracle tags of a JSONL file: the "oracle" field when present, else a
// string "label". Records without either are skipped.
std::vector<std::pair<TextSegments, std::string>> ReadOracleTags(
    const std::string& path);

}  // namespace btclf
