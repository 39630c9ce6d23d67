#include "btclf/prompt.h"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "btclf/corpus.h"
#include "btclf/errors.h"

namespace btclf {
namespace {

std::string ReadGolden(const std::string& task) {
  std::ifstream in(std::string(BTCLF_GOLDEN_DIR) + "/" + task + ".txt");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Same layout as the golden files: prompt, mask offset, one demonstration
// line per label.
std::string RenderForGolden(const TaskSpec& spec) {
  TextSegments input = spec.is_pair
                           ? TextSegments{"Is the museum open today",
                                          "The museum opens at nine"}
                           : TextSegments{"the food was fresh", std::nullopt};
  const PromptText p = ApplyTemplate(spec, input);
  std::string out = "prompt: " + p.rendered + "\n";
  out += "mask_offset: " + std::to_string(p.mask_slot_index) + "\n";
  for (const auto& label : spec.label_space) {
    LabeledExample ex{input.text_a, input.text_b, label};
    out += label + ": " + RenderDemonstration(spec, ex) + "\n";
  }
  return out;
}

TEST(TemplateGoldenTest, AllTasksMatchGoldenFiles) {
  const auto registry = TaskRegistry::Defaults();
  ASSERT_EQ(registry.Names().size(), 8u);
  for (const auto& name : registry.Names()) {
    SCOPED_TRACE(name);
    const std::string golden = ReadGolden(name);
    ASSERT_FALSE(golden.empty());
    EXPECT_EQ(RenderForGolden(registry.Get(name)), golden);
  }
}

TEST(TaskRegistryTest, ShippedTaskFileMatchesDefaults) {
  const auto from_file =
      TaskRegistry::FromFile(std::string(BTCLF_DATA_DIR) + "/tasks.json");
  EXPECT_EQ(from_file.ToJson(), TaskRegistry::Defaults().ToJson());
}

TEST(TaskRegistryTest, JsonRoundTrip) {
  const auto r = TaskRegistry::Defaults();
  EXPECT_EQ(TaskRegistry::FromJson(r.ToJson()).ToJson(), r.ToJson());
}

TEST(TaskRegistryTest, UnknownTask) {
  EXPECT_THROW(TaskRegistry::Defaults().Get("imdb"), ValidationError);
}

TEST(ApplyTemplateTest, SingleSentence) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  EXPECT_EQ(ApplyTemplate(spec, TextSegments{"no apparent joy", std::nullopt})
                .rendered,
            "no apparent joy . It was [MASK] .");
  const auto trec = TaskRegistry::Defaults().Get("trec");
  EXPECT_EQ(ApplyTemplate(trec, TextSegments{"q", std::nullopt}).rendered,
            "[MASK] question: q");
}

TEST(ApplyTemplateTest, Pair) {
  const auto spec = TaskRegistry::Defaults().Get("qqp");
  EXPECT_EQ(ApplyTemplate(spec, TextSegments{"q1", "q2"}).rendered,
            "q1 ? [MASK] , q2");
}

TEST(ApplyTemplateTest, ArityMismatch) {
  const auto registry = TaskRegistry::Defaults();
  EXPECT_THROW(ApplyTemplate(registry.Get("sst2"), TextSegments{"a", "b"}),
               TemplateError);
  EXPECT_THROW(
      ApplyTemplate(registry.Get("mrpc"), TextSegments{"a", std::nullopt}),
      TemplateError);
}

TEST(ApplyTemplateTest, LiteralMaskInInputRejected) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  EXPECT_THROW(ApplyTemplate(spec, TextSegments{"a [MASK] b", std::nullopt}),
               TemplateError);
}

TEST(ApplyTemplateTest, PlaceholderTextInInputIsNotSubstitutedAgain) {
  const auto spec = TaskRegistry::Defaults().Get("mrpc");
  EXPECT_EQ(ApplyTemplate(spec, TextSegments{"see <X2>", "b"}).rendered,
            "see <X2> ? [MASK] , b");
}

TEST(TaskSpecTest, ValidationErrors) {
  TaskSpec spec = TaskRegistry::Defaults().Get("sst2");
  spec.pattern = "<X> [MASK] [MASK]";
  EXPECT_THROW(spec.Validate(), TemplateError);
  spec.pattern = "<X> It was .";
  EXPECT_THROW(spec.Validate(), TemplateError);
  spec.pattern = "<X1> [MASK]";
  EXPECT_THROW(spec.Validate(), TemplateError);
  spec = TaskRegistry::Defaults().Get("sst2");
  spec.label_space = {"positive"};
  EXPECT_THROW(spec.Validate(), ValidationError);
}

TEST(VerbalizeTest, TableWords) {
  const auto r = TaskRegistry::Defaults();
  EXPECT_EQ(Verbalize(r.Get("sst2"), "positive"), "great");
  EXPECT_EQ(Verbalize(r.Get("snli"), "contradiction"), "no");
  for (const auto& label : r.Get("trec").label_space) {
    EXPECT_EQ(Verbalize(r.Get("trec"), label), label);
  }
  EXPECT_THROW(Verbalize(r.Get("sst2"), "neutral"), ValidationError);
}

TEST(VerbalizeTest, InverseIsIdentityOnLabelWords) {
  const auto r = TaskRegistry::Defaults();
  for (const auto& name : r.Names()) {
    const auto& spec = r.Get(name);
    for (const auto& word : spec.LabelWords()) {
      EXPECT_EQ(spec.Verbalize(spec.LabelForWord(word)), word);
    }
  }
}

TaskSpec ItWasSpec() {
  TaskSpec spec;
  spec.name = "sst2-itwas";
  spec.label_space = {"negative", "positive"};
  spec.pattern = "<X> It was [MASK]";
  spec.verbalizer = {{"negative", "terrible"}, {"positive", "great"}};
  spec.Validate();
  return spec;
}

TEST(DemonstrationTest, NegativeDemoSegment) {
  const auto spec = ItWasSpec();
  LabeledExample demo{"The worst film a man has made.", std::nullopt,
                      "negative"};
  EXPECT_EQ(RenderDemonstration(spec, demo),
            "The worst film a man has made. It was terrible");
}

TEST(DemonstrationTest, AppendedInLabelOrderWithOneMask) {
  const auto spec = ItWasSpec();
  DemonstrationSet demos;
  demos.per_label.emplace("positive",
                          LabeledExample{"An epic movie.", std::nullopt,
                                         "positive"});
  demos.per_label.emplace("negative",
                          LabeledExample{"The worst film a man has made.",
                                         std::nullopt, "negative"});
  const auto p = ApplyTemplate(spec, TextSegments{"A fun ride.", std::nullopt});
  const auto full = AppendDemonstrations(p, demos, spec);
  EXPECT_EQ(full.rendered,
            "A fun ride. It was [MASK] [SEP] The worst film a man has made. "
            "It was terrible [SEP] An epic movie. It was great");
  EXPECT_EQ(CountOccurrences(full.rendered, kMaskToken), 1u);
  EXPECT_EQ(full.mask_slot_index, p.mask_slot_index);
  EXPECT_TRUE(full.demonstrations_appended);
  EXPECT_THROW(AppendDemonstrations(full, demos, spec), StateError);
}

TEST(DemonstrationTest, CustomSeparator) {
  const auto spec = ItWasSpec();
  DemonstrationSet demos;
  demos.per_label.emplace("negative",
                          LabeledExample{"bad.", std::nullopt, "negative"});
  demos.per_label.emplace("positive",
                          LabeledExample{"good.", std::nullopt, "positive"});
  PromptOptions opts;
  opts.sep_token = "</s>";
  const auto p = ApplyTemplate(spec, TextSegments{"x", std::nullopt});
  EXPECT_EQ(AppendDemonstrations(p, demos, spec, opts).rendered,
            "x It was [MASK] </s> bad. It was terrible </s> good. It was great");
}

TEST(DemonstrationTest, MissingLabel) {
  const auto spec = ItWasSpec();
  DemonstrationSet demos;
  demos.per_label.emplace("negative",
                          LabeledExample{"bad.", std::nullopt, "negative"});
  const auto p = ApplyTemplate(spec, TextSegments{"x", std::nullopt});
  EXPECT_THROW(AppendDemonstrations(p, demos, spec), InsufficientDataError);
}

FewShotSplit MakeSplit(const TaskSpec& spec, size_t per_label) {
  FewShotSplit split;
  for (const auto& label : spec.label_space) {
    for (size_t i = 0; i < per_label; ++i) {
      LabeledExample ex{label + " text " + std::to_string(i), std::nullopt,
                        label};
      if (spec.is_pair) ex.text_b = "second " + std::to_string(i);
      split.train.push_back(ex);
    }
  }
  return split;
}

TEST(SampleDemonstrationsTest, OnePerLabelAndDeterministic) {
  const auto r = TaskRegistry::Defaults();
  for (const char* name : {"sst2", "snli"}) {
    const auto& spec = r.Get(name);
    const auto split = MakeSplit(spec, 16);
    const auto a = SampleDemonstrations(split, spec, 5);
    const auto b = SampleDemonstrations(split, spec, 5);
    EXPECT_EQ(a.per_label.size(), spec.label_space.size());
    EXPECT_EQ(a.per_label, b.per_label);
    for (const auto& [label, ex] : a.per_label) EXPECT_EQ(ex.label, label);
  }
}

TEST(SampleDemonstrationsTest, MissingClass) {
  const auto spec = TaskRegistry::Defaults().Get("sst2");
  FewShotSplit split;
  split.train.push_back({"only positive", std::nullopt, "positive"});
  try {
    SampleDemonstrations(split, spec, 1);
    FAIL();
  } catch (const InsufficientDataError& e) {
    EXPECT_EQ(e.label(), "negative");
  }
}

// Property: every rendered prompt, with or without demonstrations, has
// exactly one unresolved mask.
TEST(PromptPropertyTest, MaskUniqueness) {
  const auto r = TaskRegistry::Defaults();
  std::mt19937_64 rng(3);
  const std::string alphabet = "abc <>X12?,. ";
  for (const auto& name : r.Names()) {
    const auto& spec = r.Get(name);
    const auto demos = SampleDemonstrations(MakeSplit(spec, 3), spec, 9);
    for (int trial = 0; trial < 50; ++trial) {
      auto random_text = [&] {
        std::string s;
        const size_t n = 1 + rng() % 20;
        for (size_t i = 0; i < n; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
        return s;
      };
      TextSegments in{random_text(), std::nullopt};
      if (spec.is_pair) in.text_b = random_text();
      const auto p = ApplyTemplate(spec, in);
      EXPECT_EQ(CountOccurrences(p.rendered, kMaskToken), 1u);
      EXPECT_EQ(p.rendered.substr(p.mask_slot_index, kMaskToken.size()),
                kMaskToken);
      const auto full = AppendDemonstrations(p, demos, spec);
      EXPECT_EQ(CountOccurrences(full.rendered, kMaskToken), 1u);
      EXPECT_EQ(AppendDemonstrations(p, demos, spec).rendered, full.rendered);
    }
  }
}

}  // namespace
}  // namespace btclf
