#include "btclf/corpus.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "btclf/errors.h"
#include "test_util.h"

namespace btclf {
namespace {

using btclf::testing::TempDir;

std::vector<LabeledExample> Balanced(const TaskSpec& spec, size_t per_label) {
  std::vector<LabeledExample> data;
  for (size_t i = 0; i < per_label; ++i) {
    for (const auto& label : spec.label_space) {
      LabeledExample ex{label + " example " + std::to_string(i), std::nullopt,
                        label};
      if (spec.is_pair) ex.text_b = "pair " + std::to_string(i);
      data.push_back(ex);
    }
  }
  return data;
}

void WriteLines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
}

TEST(LoadDatasetTest, RoundTripAndBlankLines) {
  TempDir dir;
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  const auto data = Balanced(spec, 5);
  WriteDataset(dir.File("a.jsonl"), data);
  EXPECT_EQ(LoadDataset(dir.File("a.jsonl"), spec), data);

  WriteLines(dir.File("b.jsonl"),
             {R"({"text_a":"x","label":"positive"})", "", "  ",
              R"({"text_a":"y","text_b":null,"label":"negative"})"});
  EXPECT_EQ(LoadDataset(dir.File("b.jsonl"), spec).size(), 2u);
}

TEST(LoadDatasetTest, EmptyFile) {
  TempDir dir;
  WriteLines(dir.File("e.jsonl"), {});
  EXPECT_TRUE(
      LoadDataset(dir.File("e.jsonl"), TaskRegistry::Defaults().Get("sst2"))
          .empty());
}

TEST(LoadDatasetTest, MalformedLineReportsLineNumber) {
  TempDir dir;
  WriteLines(dir.File("m.jsonl"),
             {R"({"text_a":"x","label":"positive"})", R"({"text_a": )"});
  try {
    LoadDataset(dir.File("m.jsonl"), TaskRegistry::Defaults().Get("sst2"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadDatasetTest, UnknownLabelNamed) {
  TempDir dir;
  WriteLines(dir.File("u.jsonl"), {R"({"text_a":"x","label":"meh"})"});
  try {
    LoadDataset(dir.File("u.jsonl"), TaskRegistry::Defaults().Get("sst2"));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("meh"), std::string::npos);
  }
}

TEST(LoadDatasetTest, ArityChecked) {
  TempDir dir;
  WriteLines(dir.File("p.jsonl"), {R"({"text_a":"x","label":"equivalent"})"});
  EXPECT_THROW(
      LoadDataset(dir.File("p.jsonl"), TaskRegistry::Defaults().Get("mrpc")),
      ValidationError);
}

TEST(LoadDatasetTest, MissingFile) {
  EXPECT_THROW(LoadDataset("/nonexistent/x.jsonl",
                           TaskRegistry::Defaults().Get("sst2")),
               IoError);
}

TEST(SampleFewShotTest, SizesMatchK) {
  const auto r = TaskRegistry::Defaults();
  const auto sst2 = SampleFewShot(Balanced(r.Get("sst2"), 100), r.Get("sst2"), 16, 1);
  EXPECT_EQ(sst2.train.size(), 32u);
  EXPECT_EQ(sst2.dev.size(), 32u);
  const auto trec = SampleFewShot(Balanced(r.Get("trec"), 40), r.Get("trec"), 16, 1);
  EXPECT_EQ(trec.train.size(), 96u);
  EXPECT_EQ(trec.dev.size(), 96u);
}

std::map<std::string, size_t> Counts(const std::vector<LabeledExample>& xs) {
  std::map<std::string, size_t> c;
  for (const auto& x : xs) ++c[x.label];
  return c;
}

// Property over K and seeds: exact per-class counts, train and dev disjoint.
TEST(SampleFewShotTest, PerClassCountsExact) {
  const auto spec = TaskRegistry::Defaults().Get("snli");
  const auto data = Balanced(spec, 60);
  for (size_t k : {1u, 4u, 16u, 30u}) {
    for (uint64_t seed : {1u, 2u, 99u}) {
      const auto split = SampleFewShot(data, spec, k, seed);
      for (const auto& label : spec.label_space) {
        EXPECT_EQ(Counts(split.train)[label], k);
        EXPECT_EQ(Counts(split.dev)[label], k);
      }
      std::set<std::string> train_ids;
      for (const auto& ex : split.train) train_ids.insert(IdentityKey(ex));
      for (const auto& ex : split.dev) EXPECT_EQ(train_ids.count(IdentityKey(ex)), 0u);
    }
  }
}

TEST(SampleFewShotTest, SeedsGiveDifferentSplits) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  const auto data = Balanced(spec, 100);
  const auto a = SampleFewShot(data, spec, 16, 1);
  const auto b = SampleFewShot(data, spec, 16, 2);
  EXPECT_NE(a.train, b.train);
  EXPECT_EQ(Counts(a.train), Counts(b.train));
}

TEST(SampleFewShotTest, IndependentOfInputOrder) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  auto data = Balanced(spec, 50);
  const auto a = SampleFewShot(data, spec, 8, 7);
  std::mt19937 rng(1);
  std::shuffle(data.begin(), data.end(), rng);
  data.push_back(data.front());  // duplicates are ignored
  const auto b = SampleFewShot(data, spec, 8, 7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.dev, b.dev);
}

TEST(SampleFewShotTest, InsufficientClass) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  auto data = Balanced(spec, 40);
  data.erase(std::remove_if(data.begin(), data.end(),
                            [](const LabeledExample& e) {
                              return e.label == "negative" &&
                                     e.text_a.find(" 3") != std::string::npos;
                            }),
             data.end());
  try {
    SampleFewShot(data, spec, 20, 1);
    FAIL();
  } catch (const InsufficientDataError& e) {
    EXPECT_EQ(e.label(), "negative");
  }
}

TEST(BuildUnlabeledPoolTest, SetSubtraction) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  const auto data = Balanced(spec, 500);
  const auto split = SampleFewShot(data, spec, 16, 3);
  const auto pool = BuildUnlabeledPool(data, split, 10000);
  EXPECT_EQ(pool.texts.size(), 936u);
  std::set<std::string> split_keys;
  for (const auto* part : {&split.train, &split.dev}) {
    for (const auto& ex : *part) split_keys.insert(ContentKey(ex.segments()));
  }
  for (const auto& t : pool.texts) EXPECT_EQ(split_keys.count(ContentKey(t)), 0u);
}

TEST(BuildUnlabeledPoolTest, CapApplied) {
  const auto spec = TaskRegistry::Defaults().Get("agnews");
  const auto data = Balanced(spec, 2300);
  const auto split = SampleFewShot(data, spec, 16, 3);
  EXPECT_EQ(BuildUnlabeledPool(data, split, spec.aug_budget).texts.size(), 8900u);
  EXPECT_TRUE(BuildUnlabeledPool(data, split, 0).texts.empty());
}

TEST(BuildUnlabeledPoolTest, DedupsByNormalizedContent) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  auto data = Balanced(spec, 20);
  const auto split = SampleFewShot(data, spec, 4, 3);
  data.push_back({"extra  text", std::nullopt, "positive"});
  data.push_back({"extra text", std::nullopt, "negative"});
  data.push_back({" " + split.train[0].text_a + " ", std::nullopt, "positive"});
  EXPECT_EQ(BuildUnlabeledPool(data, split, 1000).texts.size(), 40u - 16u + 1u);
}

}  // namespace
}  // namespace btclf
