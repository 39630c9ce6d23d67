#include "btclf/augment.h"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "btclf/errors.h"
#include "btclf/mock_backends.h"
#include "test_util.h"

namespace btclf {
namespace {

using btclf::testing::TempDir;

TaskSpec Sst2() { return TaskRegistry::Defaults().Get("sst2"); }

TEST(FilterTest, StrictThreshold) {
  const auto spec = Sst2();
  const std::vector<TextSegments> texts = {
      {"a", std::nullopt}, {"b", std::nullopt}, {"c", std::nullopt},
      {"d", std::nullopt}};
  const std::vector<std::vector<double>> dists = {
      {0.05, 0.95}, {0.85, 0.15}, {0.91, 0.09}, {0.1, 0.9}};
  const auto kept = FilterByConfidence(texts, dists, spec, 0.9);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].text_a, "a");
  EXPECT_EQ(kept[0].pseudo_label, "positive");
  EXPECT_EQ(kept[1].text_a, "c");
  EXPECT_EQ(kept[1].pseudo_label, "negative");
  EXPECT_EQ(FilterByConfidence(texts, dists, spec, 0.0).size(), 4u);
}

TEST(FilterTest, BadInputs) {
  const auto spec = Sst2();
  EXPECT_THROW(FilterByConfidence({}, {}, spec, 1.0), ValidationError);
  EXPECT_THROW(FilterByConfidence({{"a", std::nullopt}}, {{1.0}}, spec, 0.5),
               ContractError);
}

// A teacher trained on a cue-word toy task, and a 500-item pool in which
// cues appear with varying strength so confidences spread over (0.5, 1).
struct PoolFixture {
  TeacherModel teacher;
  UnlabeledPool pool;
};

// Several cue words per class, so the appended demonstrations never carry
// every cue of either class.
const std::string kSunny[] = {"sunny", "bright", "warm", "clear", "dry"};
const std::string kRainy[] = {"rainy", "dark", "cold", "foggy", "wet"};

PoolFixture MakePoolFixture() {
  const auto spec = Sst2();
  FewShotSplit split;
  for (size_t i = 0; i < 32; ++i) {
    auto& part = i < 16 ? split.train : split.dev;
    part.push_back({kSunny[i % 5] + " w" + std::to_string(i), std::nullopt, "positive"});
    part.push_back({kRainy[i % 5] + " w" + std::to_string(i + 100), std::nullopt,
                    "negative"});
  }
  MockTeacherConfig cfg;
  cfg.vocabulary = spec.LabelWords();
  TeacherTrainConfig tcfg;
  tcfg.max_steps = 2000;
  PoolFixture f;
  f.teacher = Finetune(std::make_shared<MockTeacher>(cfg), split, spec,
                       SampleDemonstrations(split, spec, 1), tcfg);
  std::mt19937_64 rng(5);
  for (size_t i = 0; i < 500; ++i) {
    std::string text;
    const size_t fillers = rng() % 12;
    for (size_t j = 0; j < fillers; ++j) text += "f" + std::to_string(rng() % 50) + " ";
    text += (rng() % 2) ? kSunny[rng() % 5] : kRainy[rng() % 5];
    text += " id" + std::to_string(i);
    f.pool.texts.push_back({text, std::nullopt});
  }
  return f;
}

// Independent scan: raw logits from the backend, softmax by hand.
std::map<std::string, std::pair<std::string, double>> BruteForce(
    const PoolFixture& f, const TaskSpec& spec, double threshold) {
  std::map<std::string, std::pair<std::string, double>> kept;
  for (const auto& t : f.pool.texts) {
    const auto input = RenderTeacherInput(spec, t, f.teacher.demos, {},
                                          f.teacher.config.max_seq_len,
                                          *f.teacher.backend);
    const auto logits = f.teacher.backend->Predict({input.text}, spec.LabelWords())[0];
    const double e0 = std::exp(logits[0]);
    const double e1 = std::exp(logits[1]);
    const double p0 = e0 / (e0 + e1);
    const double p1 = e1 / (e0 + e1);
    if (p0 >= p1 && p0 > threshold) kept[t.text_a] = {"negative", p0};
    if (p1 > p0 && p1 > threshold) kept[t.text_a] = {"positive", p1};
  }
  return kept;
}

TEST(PseudoLabelTest, MatchesBruteForceScan) {
  const auto spec = Sst2();
  const auto f = MakePoolFixture();
  const auto oracle = BruteForce(f, spec, 0.9);
  const auto kept = PseudoLabel(f.teacher, f.pool, spec);
  ASSERT_EQ(kept.size(), oracle.size());
  EXPECT_GT(kept.size(), 0u);
  EXPECT_LT(kept.size(), 500u);
  for (const auto& e : kept) {
    ASSERT_EQ(oracle.count(e.text_a), 1u);
    EXPECT_EQ(oracle.at(e.text_a).first, e.pseudo_label);
    EXPECT_NEAR(oracle.at(e.text_a).second, e.confidence, 1e-12);
    EXPECT_GT(e.confidence, 0.9);
  }
}

TEST(PseudoLabelTest, ThresholdMonotonicity) {
  const auto spec = Sst2();
  const auto f = MakePoolFixture();
  size_t prev = f.pool.texts.size() + 1;
  std::set<std::string> prev_set;
  bool first = true;
  for (double th : {0.0, 0.5, 0.9, 0.99}) {
    PseudoLabelOptions opts;
    opts.threshold = th;
    const auto kept = PseudoLabel(f.teacher, f.pool, spec, opts);
    EXPECT_LE(kept.size(), prev);
    std::set<std::string> now;
    for (const auto& e : kept) now.insert(e.text_a);
    if (!first) {
      for (const auto& t : now) EXPECT_EQ(prev_set.count(t), 1u);
    }
    prev = kept.size();
    prev_set = now;
    first = false;
  }
}

TEST(PseudoLabelTest, WorkersAndBatchingDoNotChangeOutput) {
  const auto spec = Sst2();
  const auto f = MakePoolFixture();
  const auto base = PseudoLabel(f.teacher, f.pool, spec);
  PseudoLabelOptions opts;
  opts.batch_size = 7;
  opts.workers = 3;
  EXPECT_EQ(PseudoLabel(f.teacher, f.pool, spec, opts), base);
}

std::vector<PseudoLabeledExample> Items(const std::map<std::string, size_t>& counts,
                                        uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> conf(0.9001, 1.0);
  std::vector<PseudoLabeledExample> items;
  for (const auto& [label, n] : counts) {
    for (size_t i = 0; i < n; ++i) {
      items.push_back({label + " item " + std::to_string(i), std::nullopt, label,
                       conf(rng)});
    }
  }
  return items;
}

TEST(BalanceTest, MinCapForcesEqualCounts) {
  const auto spec = Sst2();
  const auto items = Items({{"positive", 100}, {"negative", 40}}, 1);
  const auto aug = BalanceClasses(items, spec, BalanceStrategy::kMinCap, 3);
  EXPECT_EQ(aug.per_class_counts.at("positive"), 40u);
  EXPECT_EQ(aug.per_class_counts.at("negative"), 40u);
  EXPECT_EQ(aug.examples.size(), 80u);
  EXPECT_TRUE(aug.warnings.empty());

  // The 40 kept positives are the 40 most confident.
  std::vector<double> all;
  for (const auto& e : items) {
    if (e.pseudo_label == "positive") all.push_back(e.confidence);
  }
  std::sort(all.rbegin(), all.rend());
  for (const auto& e : aug.examples) {
    if (e.pseudo_label == "positive") EXPECT_GE(e.confidence, all[39]);
  }
}

TEST(BalanceTest, AlreadyBalancedUnchanged) {
  const auto spec = Sst2();
  const auto items = Items({{"positive", 40}, {"negative", 40}}, 2);
  const auto aug = BalanceClasses(items, spec, BalanceStrategy::kMinCap, 3);
  std::multiset<std::string> in, out;
  for (const auto& e : items) in.insert(e.text_a);
  for (const auto& e : aug.examples) out.insert(e.text_a);
  EXPECT_EQ(in, out);
}

TEST(BalanceTest, MissingClassWarns) {
  const auto spec = Sst2();
  const auto aug = BalanceClasses(Items({{"positive", 7}}, 2), spec,
                                  BalanceStrategy::kMinCap, 3);
  EXPECT_EQ(aug.per_class_counts.size(), 1u);
  EXPECT_EQ(aug.per_class_counts.at("positive"), 7u);
  ASSERT_EQ(aug.warnings.size(), 1u);
  EXPECT_NE(aug.warnings[0].find("negative"), std::string::npos);

  const auto empty = BalanceClasses({}, spec, BalanceStrategy::kMinCap, 3);
  EXPECT_TRUE(empty.examples.empty());
  EXPECT_FALSE(empty.warnings.empty());
}

TEST(BalanceTest, TiesResolvedBySeedDeterministically) {
  const auto spec = Sst2();
  std::vector<PseudoLabeledExample> items;
  for (int i = 0; i < 30; ++i) {
    items.push_back({"p" + std::to_string(i), std::nullopt, "positive", 0.95});
  }
  for (int i = 0; i < 10; ++i) {
    items.push_back({"n" + std::to_string(i), std::nullopt, "negative", 0.95});
  }
  const auto a = BalanceClasses(items, spec, BalanceStrategy::kMinCap, 1);
  const auto b = BalanceClasses(items, spec, BalanceStrategy::kMinCap, 1);
  EXPECT_EQ(a.examples, b.examples);
  std::reverse(items.begin(), items.end());
  EXPECT_EQ(BalanceClasses(items, spec, BalanceStrategy::kMinCap, 1).examples,
            a.examples);
  EXPECT_NE(BalanceClasses(items, spec, BalanceStrategy::kMinCap, 2).examples,
            a.examples);
}

// Property: random class counts always balance to the minimum present count.
TEST(BalanceTest, RandomCountsBalance) {
  const auto spec = TaskRegistry::Defaults().Get("snli");
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::string, size_t> counts;
    for (const auto& l : spec.label_space) {
      const size_t n = rng() % 30;
      if (n > 0) counts[l] = n;
    }
    if (counts.empty()) continue;
    size_t n_min = 1000;
    for (const auto& [_, n] : counts) n_min = std::min(n_min, n);
    const auto aug = BalanceClasses(Items(counts, trial), spec,
                                    BalanceStrategy::kMinCap, trial);
    for (const auto& [label, n] : aug.per_class_counts) EXPECT_EQ(n, n_min);
    EXPECT_EQ(aug.per_class_counts.size(), counts.size());
  }
}

FewShotSplit GoldSplit() {
  FewShotSplit split;
  for (int i = 0; i < 16; ++i) {
    split.train.push_back({"gold pos " + std::to_string(i), std::nullopt, "positive"});
    split.train.push_back({"gold neg " + std::to_string(i), std::nullopt, "negative"});
  }
  return split;
}

TEST(MergeTrainTest, DisjointUnion) {
  AugmentedSet aug;
  for (int i = 0; i < 4000; ++i) {
    aug.examples.push_back({"aug " + std::to_string(i), std::nullopt,
                            i % 2 ? "positive" : "negative", 0.95});
  }
  const auto merged = MergeTrain(aug, GoldSplit());
  EXPECT_EQ(merged.size(), 4032u);
  for (size_t i = 0; i < merged.size(); ++i) {
    EXPECT_EQ(merged[i].gold, i < 32);
    EXPECT_EQ(merged[i].weight, 1.0);
  }
}

TEST(MergeTrainTest, GoldWinsOnConflict) {
  const auto split = GoldSplit();
  AugmentedSet aug;
  for (int i = 0; i < 3997; ++i) {
    aug.examples.push_back({"aug " + std::to_string(i), std::nullopt, "positive", 0.95});
  }
  for (int i = 0; i < 3; ++i) {
    aug.examples.push_back({"gold pos  " + std::to_string(i), std::nullopt,
                            "negative", 0.99});
  }
  const auto merged = MergeTrain(aug, split);
  EXPECT_EQ(merged.size(), 4029u);
  size_t gold = 0;
  for (const auto& m : merged) {
    if (m.text_a.rfind("gold pos", 0) == 0) EXPECT_EQ(m.label, "positive");
    gold += m.gold;
  }
  EXPECT_EQ(gold, 32u);
}

TEST(MergeTrainTest, EmptyAugmentationIsGoldOnly) {
  const auto merged = MergeTrain({}, GoldSplit());
  EXPECT_EQ(merged.size(), 32u);
}

TEST(AugmentedIoTest, RoundTrip) {
  TempDir dir;
  const auto spec = TaskRegistry::Defaults().Get("mrpc");
  AugmentedSet aug;
  aug.examples.push_back({"a", "b", "equivalent", 0.93});
  aug.examples.push_back({"c", "d", "not_Equivalent", 0.9100000000000001});
  WriteAugmented(dir.File("aug.jsonl"), aug);
  const auto back = ReadAugmented(dir.File("aug.jsonl"), spec, 0.9);
  EXPECT_EQ(back.examples, aug.examples);
  EXPECT_EQ(back.per_class_counts.at("equivalent"), 1u);
}

}  // namespace
}  // namespace btclf
