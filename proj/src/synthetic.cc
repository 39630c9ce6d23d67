#include "btclf/synthetic.h"

#include <algorithm>
#include <fstream>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "btclf/errors.h"
#include "btclf/hashing.h"

namespace btclf {

namespace {

std::string MakeText(size_t label_idx, size_t num_labels,
                     const SyntheticConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> neutral(0, cfg.neutral_vocab - 1);
  std::uniform_int_distribution<size_t> cue(0, cfg.cue_vocab - 1);
  std::uniform_int_distribution<size_t> other(0, num_labels - 2);
  std::bernoulli_distribution cross(cfg.cross_cue_prob);

  std::vector<std::string> words;
  for (size_t i = 0; i < cfg.neutral_words; ++i) {
    words.push_back("w" + std::to_string(neutral(rng)));
  }
  for (size_t i = 0; i < cfg.cue_words; ++i) {
    words.push_back("k" + std::to_string(label_idx) + "x" +
                    std::to_string(cue(rng)));
  }
  if (cfg.cue_words > 1 && cross(rng)) {
    size_t o = other(rng);
    if (o >= label_idx) ++o;
    words.push_back("k" + std::to_string(o) + "x" + std::to_string(cue(rng)));
  }
  std::shuffle(words.begin(), words.end(), rng);
  std::string text;
  for (const auto& w : words) {
    if (!text.empty()) text.push_back(' ');
    text += w;
  }
  return text;
}

}  // namespace

SyntheticCorpus GenerateSynthetic(const TaskSpec& spec,
                                  const SyntheticConfig& cfg) {
  if (cfg.neutral_vocab == 0 || cfg.cue_vocab == 0) {
    throw ValidationError("synthetic vocabularies must be non-empty");
  }
  std::mt19937_64 rng(DeriveSeed(cfg.seed, "synthetic:" + spec.name));
  std::unordered_set<std::string> seen;
  SyntheticCorpus corpus;

  auto fill = [&](std::vector<LabeledExample>& out, size_t per_class) {
    for (size_t li = 0; li < spec.label_space.size(); ++li) {
      for (size_t n = 0; n < per_class;) {
        LabeledExample ex;
        ex.text_a = MakeText(li, spec.label_space.size(), cfg, rng);
        if (spec.is_pair) {
          SyntheticConfig plain = cfg;
          plain.cue_words = 0;
          ex.text_b = MakeText(li, spec.label_space.size(), plain, rng);
        }
        ex.label = spec.label_space[li];
        if (!seen.insert(ContentKey(ex.segments())).second) continue;
        out.push_back(std::move(ex));
        ++n;
      }
    }
    std::shuffle(out.begin(), out.end(), rng);
  };
  fill(corpus.source, cfg.per_class_source);
  fill(corpus.test, cfg.per_class_test);
  return corpus;
}

void WriteWithOracle(const std::string& path,
                     const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& ex : examples) {
    nlohmann::json j{{"text_a", ex.text_a},
                     {"text_b", ex.text_b ? nlohmann::json(*ex.text_b)
                                          : nlohmann::json()},
                     {"label", ex.label},
                     {"oracle", ex.label}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<std::pair<TextSegments, std::string>> ReadOracleTags(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::pair<TextSegments, std::string>> tags;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("text_a")) continue;
    std::string tag;
    if (j.contains("oracle") && j["oracle"].is_string()) {
      tag = j["oracle"].get<std::string>();
    } else if (j.contains("label") && j["label"].is_string()) {
      tag = j["label"].get<std::string>();
    } else {
      continue;
    }
    TextSegments s{j["text_a"].get<std::string>(), std::nullopt};
    if (j.contains("text_b") && j["text_b"].is_string()) {
      s.text_b = j["text_b"].get<std::string>();
    }
    tags.emplace_back(std::move(s), std::move(tag));
  }
  return tags;
}

}  // namespace btclf
