#include "btclf/corpus.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "btclf/errors.h"
#include "btclf/hashing.h"

namespace btclf {

std::string ContentKey(const TextSegments& segments) {
  FieldHasher h;
  h.Add(NormalizeWhitespace(segments.text_a));
  if (segments.text_b) {
    h.AddOptional(std::optional<std::string>(NormalizeWhitespace(*segments.text_b)));
  } else {
    h.AddOptional(std::optional<std::string>());
  }
  return h.HexDigest();
}

std::string IdentityKey(const LabeledExample& example) {
  FieldHasher h;
  h.Add(ContentKey(example.segments())).Add(example.label);
  return h.HexDigest();
}

void ValidateExample(const LabeledExample& example, const TaskSpec& spec) {
  if (example.text_a.empty()) throw ValidationError("text_a is empty");
  if (example.text_b.has_value() != spec.is_pair) {
    throw ValidationError(spec.is_pair ? "text_b missing for pair task '" +
                                             spec.name + "'"
                                       : "text_b given for single-sentence "
                                         "task '" + spec.name + "'");
  }
  if (!spec.HasLabel(example.label)) {
    throw ValidationError("unknown label '" + example.label + "'");
  }
}

namespace {

template <typename Fn>
void ForEachRecord(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ": malformed record: " + e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("text_a") || !j["text_a"].is_string()) {
      throw ParseError(path + ": record needs a string \"text_a\"", line_no);
    }
    fn(j, line_no);
  }
}

std::optional<std::string> ReadTextB(const nlohmann::json& j,
                                     const std::string& path, size_t line_no) {
  if (!j.contains("text_b") || j["text_b"].is_null()) return std::nullopt;
  if (!j["text_b"].is_string()) {
    throw ParseError(path + ": \"text_b\" must be a string or null", line_no);
  }
  return j["text_b"].get<std::string>();
}

nlohmann::json SegmentsJson(const TextSegments& s) {
  return {{"text_a", s.text_a},
          {"text_b", s.text_b ? nlohmann::json(*s.text_b) : nlohmann::json()}};
}

void WriteLines(const std::string& path, const std::vector<nlohmann::json>& rs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : rs) out << r.dump() << '\n';
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace

std::vector<LabeledExample> LoadDataset(const std::string& path,
                                        const TaskSpec& spec) {
  std::vector<LabeledExample> out;
  ForEachRecord(path, [&](const nlohmann::json& j, size_t line_no) {
    if (!j.contains("label") || !j["label"].is_string()) {
      throw ParseError(path + ": record needs a string \"label\"", line_no);
    }
    LabeledExample ex{j["text_a"].get<std::string>(),
                      ReadTextB(j, path, line_no),
                      j["label"].get<std::string>()};
    try {
      ValidateExample(ex, spec);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " +
                            e.what());
    }
    out.push_back(std::move(ex));
  });
  return out;
}

UnlabeledPool LoadUnlabeled(const std::string& path, const TaskSpec& spec) {
  UnlabeledPool pool;
  pool.source = path;
  ForEachRecord(path, [&](const nlohmann::json& j, size_t line_no) {
    TextSegments s{j["text_a"].get<std::string>(), ReadTextB(j, path, line_no)};
    if (s.text_a.empty() || s.text_b.has_value() != spec.is_pair) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": segment arity does not match task '" +
                            spec.name + "'");
    }
    pool.texts.push_back(std::move(s));
  });
  return pool;
}

void WriteDataset(const std::string& path,
                  const std::vector<LabeledExample>& examples) {
  std::vector<nlohmann::json> records;
  records.reserve(examples.size());
  for (const auto& ex : examples) {
    auto j = SegmentsJson(ex.segments());
    j["label"] = ex.label;
    records.push_back(std::move(j));
  }
  WriteLines(path, records);
}

void WriteUnlabeled(const std::string& path, const UnlabeledPool& pool) {
  std::vector<nlohmann::json> records;
  records.reserve(pool.texts.size());
  for (const auto& s : pool.texts) {
    auto j = SegmentsJson(s);
    j["label"] = nullptr;
    records.push_back(std::move(j));
  }
  WriteLines(path, records);
}

FewShotSplit SampleFewShot(const std::vector<LabeledExample>& data,
                           const TaskSpec& spec, size_t k, uint64_t seed) {
  // identity hash -> example, which both dedups and order-normalizes
  std::map<std::string, const LabeledExample*> unique;
  for (const auto& ex : data) unique.emplace(IdentityKey(ex), &ex);

  std::map<std::string, std::vector<const LabeledExample*>> by_label;
  for (const auto& [_, ex] : unique) by_label[ex->label].push_back(ex);

  FewShotSplit split;
  split.seed = seed;
  split.k = k;
  std::unordered_set<std::string> taken;
  for (const auto& label : spec.label_space) {
    auto& members = by_label[label];
    if (members.size() < 2 * k) {
      throw InsufficientDataError(
          "label '" + label + "' has " + std::to_string(members.size()) +
              " examples, need " + std::to_string(2 * k),
          label);
    }
    std::mt19937_64 rng(DeriveSeed(seed, "split:" + label));
    std::shuffle(members.begin(), members.end(), rng);
    for (size_t i = 0; i < k; ++i) split.train.push_back(*members[i]);
    for (size_t i = k; i < 2 * k; ++i) split.dev.push_back(*members[i]);
  }
  for (const auto& [label, _] : by_label) {
    if (!spec.HasLabel(label)) {
      throw ValidationError("unknown label '" + label + "'");
    }
  }
  return split;
}

UnlabeledPool BuildUnlabeledPool(const std::vector<LabeledExample>& data,
                                 const FewShotSplit& split, size_t cap) {
  std::unordered_set<std::string> seen;
  for (const auto& ex : split.train) seen.insert(ContentKey(ex.segments()));
  for (const auto& ex : split.dev) seen.insert(ContentKey(ex.segments()));

  UnlabeledPool pool;
  pool.source = "train-minus-split";
  for (const auto& ex : data) {
    if (pool.texts.size() >= cap) break;
    if (!seen.insert(ContentKey(ex.segments())).second) continue;
    pool.texts.push_back(ex.segments());
  }
  return pool;
}

}  // namespace btclf
