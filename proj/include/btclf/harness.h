#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "btclf/augment.h"
#include "btclf/backends.h"
#include "btclf/classifier.h"
#include "btclf/corpus.h"
#include "btclf/mock_backends.h"
#include "btclf/prompt.h"
#include "btclf/synthetic.h"
#include "btclf/teacher.h"

namespace btclf {

enum class Ablation { kFull, kNoAug, kClsToken, kLastLayer, kTeacherOnly };

std::string_view ToString(Ablation a);
Ablation ParseAblation(std::string_view s);

struct MockSettings {
  bool enabled = false;
  MockEncoderConfig encoder = [] {
    MockEncoderConfig c;
    c.d = 32;
    c.planted = true;
    return c;
  }();
  MockTeacherConfig teacher;
  SyntheticConfig synthetic;
};

struct ClassifierSettings {
  size_t hidden_dim = 0;
  double learning_rate = 1e-3;
  size_t batch_size = 32;
  size_t max_epochs = 100;
  size_t patience = 5;
  bool normalize_features = false;
};

// Everything one experiment needs; mirrored 1:1 by the JSON config file.
struct RunConfig {
  std::string task = "sst2";
  size_t k = 16;
  std::vector<uint64_t> seeds = {13, 21, 42, 87, 100};
  Ablation ablation = Ablation::kFull;

  std::string encoder_url = "http://127.0.0.1:8500";
  std::string teacher_url = "http://127.0.0.1:8501";

  // Original training set (splits and unlabeled pool come from it) and the
  // evaluation set. Optional separate unlabeled file.
  std::string train_path;
  std::string test_path;
  std::string unlabeled_path;
  std::string tasks_path;

  double threshold = kDefaultConfidenceThreshold;
  // 0 means the task's augmentation budget.
  size_t unlabeled_cap = 0;

  TeacherTrainConfig teacher;
  GridSpace grid;
  ClassifierSettings classifier;
  PromptOptions prompt;
  MockSettings mock;

  size_t fanout = 4;
  size_t workers = 1;
  std::string out_dir = "runs";
  bool resume = false;

  void Validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& cfg);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& cfg);
RunConfig LoadRunConfig(const std::string& path);
// ENCODER_URL / TEACHER_URL take precedence over the config file.
void ApplyEnvironment(RunConfig& cfg);

struct RunReport {
  std::string task;
  Ablation ablation = Ablation::kFull;
  std::map<uint64_t, double> per_seed;
  double mean = 0.0;
  double std = 0.0;
  std::string fingerprint;
};

// Arithmetic mean and population standard deviation.
std::pair<double, double> Aggregate(const std::vector<double>& accuracies);

// Fails when any configured seed is missing from `per_seed`.
RunReport MakeReport(const RunConfig& cfg, const std::string& fingerprint,
                     const std::map<uint64_t, double>& per_seed);

enum class ReportFormat { kCsv, kMarkdown };

// Accuracy cell as percentages with one decimal: "88.8 (2.1)".
std::string FormatCell(double mean, double std);
std::string FormatReport(const std::vector<RunReport>& reports,
                         ReportFormat format);
void EmitReport(const std::vector<RunReport>& reports, ReportFormat format,
                const std::string& path);

struct StageResult {
  double accuracy = 0.0;
  double dev_accuracy = 0.0;
};

// Stage-by-stage execution of one configuration. Every stage reads the
// previous stage's artifact from runs/<fingerprint>/<seed>/ and writes its
// own, so stages can also be invoked one at a time.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg);
  Pipeline(RunConfig cfg, TaskRegistry registry);
  ~Pipeline();

  const RunConfig& config() const { return cfg_; }
  const TaskSpec& spec() const { return spec_; }
  const std::string& fingerprint() const { return fingerprint_; }
  std::string RunDir(uint64_t seed) const;

  void Sample(uint64_t seed);
  void Teach(uint64_t seed);
  void PseudoLabelStage(uint64_t seed);
  void Extract(uint64_t seed);
  void Train(uint64_t seed);
  StageResult Evaluate(uint64_t seed);

  // Mock encoder for this task; when planted, every text of the configured
  // data files carries its oracle label's signal.
  std::unique_ptr<MockEncoder> MakeMockEncoder() const;

  // All stages the ablation calls for; returns test accuracy.
  double RunSingle(uint64_t seed);
  // Every configured seed, then the aggregate.
  RunReport RunAll();
  // Aggregate of result.json files already on disk.
  RunReport CollectReport() const;

 private:
  struct Data;

  const Data& LoadData();
  Encoder& GetEncoder();
  TeacherFactory MakeTeacherFactory(uint64_t seed);
  TeacherModel LoadTeacher(uint64_t seed);
  UnlabeledPool BuildPool(const FewShotSplit& split);
  FewShotSplit LoadSplit(uint64_t seed) const;
  AugmentedSet LoadAugmented(uint64_t seed) const;
  std::vector<TrainItem> MergedTrainSet(uint64_t seed);
  LabeledFeatures Features(uint64_t seed, const std::vector<TextSegments>& texts,
                           const std::vector<std::string>& labels);
  void WriteManifest(uint64_t seed, const std::string& stage,
                     const nlohmann::json& entry) const;
  template <typename Fn>
  auto RunStage(const std::string& stage, Fn&& fn) -> decltype(fn());

  RunConfig cfg_;
  TaskRegistry registry_;
  TaskSpec spec_;
  std::string fingerprint_;
  std::unique_ptr<Data> data_;
  std::unique_ptr<Encoder> encoder_;
};

Position PositionFor(Ablation a);
LayerMode LayerModeFor(Ablation a);

}  // namespace btclf
