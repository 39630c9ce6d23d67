#include "btclf/harness.h"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "btclf/errors.h"
#include "btclf/feature_cache.h"
#include "btclf/feature_extractor.h"
#include "btclf/hashing.h"
#include "btclf/http_backends.h"

namespace btclf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view ToString(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoAug: return "no_aug";
    case Ablation::kClsToken: return "cls_token";
    case Ablation::kLastLayer: return "last_layer";
    case Ablation::kTeacherOnly: return "teacher_only";
  }
  return "full";
}

Ablation ParseAblation(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(c)));
  for (Ablation a : {Ablation::kFull, Ablation::kNoAug, Ablation::kClsToken,
                     Ablation::kLastLayer, Ablation::kTeacherOnly}) {
    if (lower == ToString(a)) return a;
  }
  throw ValidationError("unknown ablation '" + std::string(s) + "'");
}

Position PositionFor(Ablation a) {
  return a == Ablation::kClsToken ? Position::kCls : Position::kMask;
}

LayerMode LayerModeFor(Ablation a) {
  return a == Ablation::kLastLayer ? LayerMode::kLast1 : LayerMode::kLast4;
}

namespace {

bool UsesTeacher(Ablation a) { return a != Ablation::kNoAug; }
bool UsesAugmentation(Ablation a) {
  return a != Ablation::kNoAug && a != Ablation::kTeacherOnly;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

json ReadJson(const std::string& path) {
  try {
    return json::parse(ReadFile(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 1);
  }
}

json SegmentsJson(const TextSegments& s) {
  return {{"text_a", s.text_a},
          {"text_b", s.text_b ? json(*s.text_b) : json()}};
}

TextSegments SegmentsFromJson(const json& j) {
  TextSegments s{j.at("text_a").get<std::string>(), std::nullopt};
  if (j.contains("text_b") && !j["text_b"].is_null()) {
    s.text_b = j["text_b"].get<std::string>();
  }
  return s;
}

}  // namespace

void RunConfig::Validate() const {
  if (k == 0) throw ValidationError("K must be positive");
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  std::unordered_set<uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) {
    throw ValidationError("seeds must be distinct");
  }
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw ValidationError("threshold must be in [0, 1)");
  }
  if (!mock.enabled && (train_path.empty() || test_path.empty())) {
    throw ValidationError("train_path and test_path are required outside "
                          "mock mode");
  }
  teacher.Validate();
  grid.Validate();
}

void to_json(json& j, const RunConfig& c) {
  j = json{
      {"task", c.task},
      {"k", c.k},
      {"seeds", c.seeds},
      {"ablation", ToString(c.ablation)},
      {"encoder_url", c.encoder_url},
      {"teacher_url", c.teacher_url},
      {"train_path", c.train_path},
      {"test_path", c.test_path},
      {"unlabeled_path", c.unlabeled_path},
      {"tasks_path", c.tasks_path},
      {"threshold", c.threshold},
      {"unlabeled_cap", c.unlabeled_cap},
      {"teacher",
       {{"batch_size", c.teacher.batch_size},
        {"max_seq_len", c.teacher.max_seq_len},
        {"max_steps", c.teacher.max_steps}}},
      {"grid",
       {{"learning_rates", c.grid.learning_rates},
        {"grad_accum", c.grid.grad_accum}}},
      {"classifier",
       {{"hidden_dim", c.classifier.hidden_dim},
        {"learning_rate", c.classifier.learning_rate},
        {"batch_size", c.classifier.batch_size},
        {"max_epochs", c.classifier.max_epochs},
        {"patience", c.classifier.patience},
        {"normalize_features", c.classifier.normalize_features}}},
      {"prompt", {{"sep_token", c.prompt.sep_token}}},
      {"mock",
       {{"enabled", c.mock.enabled},
        {"encoder",
         {{"d", c.mock.encoder.d},
          {"num_layers", c.mock.encoder.num_layers},
          {"model_id", c.mock.encoder.model_id},
          {"seed", c.mock.encoder.seed},
          {"planted", c.mock.encoder.planted},
          {"noise", c.mock.encoder.noise},
          {"cls_signal_scale", c.mock.encoder.cls_signal_scale}}},
        {"teacher",
         {{"buckets", c.mock.teacher.buckets},
          {"lr_scale", c.mock.teacher.lr_scale}}},
        {"synthetic",
         {{"per_class_source", c.mock.synthetic.per_class_source},
          {"per_class_test", c.mock.synthetic.per_class_test},
          {"neutral_vocab", c.mock.synthetic.neutral_vocab},
          {"cue_vocab", c.mock.synthetic.cue_vocab},
          {"neutral_words", c.mock.synthetic.neutral_words},
          {"cue_words", c.mock.synthetic.cue_words},
          {"cross_cue_prob", c.mock.synthetic.cross_cue_prob},
          {"seed", c.mock.synthetic.seed}}}}},
      {"fanout", c.fanout},
      {"workers", c.workers},
      {"out_dir", c.out_dir},
      {"resume", c.resume}};
}

namespace {

template <typename T>
void Read(const json& j, const char* key, T& field) {
  if (j.contains(key) && !j[key].is_null()) j[key].get_to(field);
}

}  // namespace

void from_json(const json& j, RunConfig& c) {
  Read(j, "task", c.task);
  Read(j, "k", c.k);
  Read(j, "seeds", c.seeds);
  if (j.contains("ablation")) c.ablation = ParseAblation(j["ablation"].get<std::string>());
  Read(j, "encoder_url", c.encoder_url);
  Read(j, "teacher_url", c.teacher_url);
  Read(j, "train_path", c.train_path);
  Read(j, "test_path", c.test_path);
  Read(j, "unlabeled_path", c.unlabeled_path);
  Read(j, "tasks_path", c.tasks_path);
  Read(j, "threshold", c.threshold);
  Read(j, "unlabeled_cap", c.unlabeled_cap);
  if (j.contains("teacher")) {
    const auto& t = j["teacher"];
    Read(t, "batch_size", c.teacher.batch_size);
    Read(t, "max_seq_len", c.teacher.max_seq_len);
    Read(t, "max_steps", c.teacher.max_steps);
  }
  if (j.contains("grid")) {
    Read(j["grid"], "learning_rates", c.grid.learning_rates);
    Read(j["grid"], "grad_accum", c.grid.grad_accum);
  }
  if (j.contains("classifier")) {
    const auto& m = j["classifier"];
    Read(m, "hidden_dim", c.classifier.hidden_dim);
    Read(m, "learning_rate", c.classifier.learning_rate);
    Read(m, "batch_size", c.classifier.batch_size);
    Read(m, "max_epochs", c.classifier.max_epochs);
    Read(m, "patience", c.classifier.patience);
    Read(m, "normalize_features", c.classifier.normalize_features);
  }
  if (j.contains("prompt")) Read(j["prompt"], "sep_token", c.prompt.sep_token);
  if (j.contains("mock")) {
    const auto& m = j["mock"];
    Read(m, "enabled", c.mock.enabled);
    if (m.contains("encoder")) {
      const auto& e = m["encoder"];
      Read(e, "d", c.mock.encoder.d);
      Read(e, "num_layers", c.mock.encoder.num_layers);
      Read(e, "model_id", c.mock.encoder.model_id);
      Read(e, "seed", c.mock.encoder.seed);
      Read(e, "planted", c.mock.encoder.planted);
      Read(e, "noise", c.mock.encoder.noise);
      Read(e, "cls_signal_scale", c.mock.encoder.cls_signal_scale);
    }
    if (m.contains("teacher")) {
      Read(m["teacher"], "buckets", c.mock.teacher.buckets);
      Read(m["teacher"], "lr_scale", c.mock.teacher.lr_scale);
    }
    if (m.contains("synthetic")) {
      const auto& s = m["synthetic"];
      Read(s, "per_class_source", c.mock.synthetic.per_class_source);
      Read(s, "per_class_test", c.mock.synthetic.per_class_test);
      Read(s, "neutral_vocab", c.mock.synthetic.neutral_vocab);
      Read(s, "cue_vocab", c.mock.synthetic.cue_vocab);
      Read(s, "neutral_words", c.mock.synthetic.neutral_words);
      Read(s, "cue_words", c.mock.synthetic.cue_words);
      Read(s, "cross_cue_prob", c.mock.synthetic.cross_cue_prob);
      Read(s, "seed", c.mock.synthetic.seed);
    }
  }
  Read(j, "fanout", c.fanout);
  Read(j, "workers", c.workers);
  Read(j, "out_dir", c.out_dir);
  Read(j, "resume", c.resume);
}

RunConfig LoadRunConfig(const std::string& path) {
  RunConfig cfg;
  try {
    ReadJson(path).get_to(cfg);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return cfg;
}

void ApplyEnvironment(RunConfig& cfg) {
  if (const char* url = std::getenv("ENCODER_URL"); url && *url) {
    cfg.encoder_url = url;
  }
  if (const char* url = std::getenv("TEACHER_URL"); url && *url) {
    cfg.teacher_url = url;
  }
}

std::pair<double, double> Aggregate(const std::vector<double>& accuracies) {
  if (accuracies.empty()) throw ValidationError("nothing to aggregate");
  const double n = static_cast<double>(accuracies.size());
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  const double mean = sum / n;
  double sq = 0.0;
  for (double a : accuracies) sq += (a - mean) * (a - mean);
  return {mean, std::sqrt(sq / n)};
}

RunReport MakeReport(const RunConfig& cfg, const std::string& fingerprint,
                     const std::map<uint64_t, double>& per_seed) {
  RunReport report;
  report.task = cfg.task;
  report.ablation = cfg.ablation;
  report.fingerprint = fingerprint;
  std::vector<double> values;
  for (uint64_t seed : cfg.seeds) {
    auto it = per_seed.find(seed);
    if (it == per_seed.end()) {
      throw Error("no result for seed " + std::to_string(seed) +
                  "; refusing to aggregate fewer seeds");
    }
    report.per_seed[seed] = it->second;
    values.push_back(it->second);
  }
  std::tie(report.mean, report.std) = Aggregate(values);
  return report;
}

std::string FormatCell(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f (%.1f)", mean * 100.0, std * 100.0);
  return buf;
}

namespace {

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string FormatReport(const std::vector<RunReport>& reports,
                         ReportFormat format) {
  if (reports.empty()) throw ValidationError("no reports to emit");
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "task,ablation,seeds,accuracy\r\n";
    for (const auto& r : reports) {
      out += CsvField(r.task) + "," + std::string(ToString(r.ablation)) + "," +
             std::to_string(r.per_seed.size()) + "," +
             CsvField(FormatCell(r.mean, r.std)) + "\r\n";
    }
  } else {
    out = "| Task | Ablation | Seeds | Accuracy |\n|---|---|---|---|\n";
    for (const auto& r : reports) {
      out += "| " + r.task + " | " + std::string(ToString(r.ablation)) +
             " | " + std::to_string(r.per_seed.size()) + " | " +
             FormatCell(r.mean, r.std) + " |\n";
    }
  }
  return out;
}

void EmitReport(const std::vector<RunReport>& reports, ReportFormat format,
                const std::string& path) {
  WriteFile(path, FormatReport(reports, format));
}

struct Pipeline::Data {
  std::vector<LabeledExample> source;
  std::vector<LabeledExample> test;
  std::optional<UnlabeledPool> unlabeled;
  std::string train_path;
  std::string test_path;
};

Pipeline::Pipeline(RunConfig cfg) : Pipeline(std::move(cfg), TaskRegistry::Defaults()) {}

Pipeline::Pipeline(RunConfig cfg, TaskRegistry registry)
    : cfg_(std::move(cfg)), registry_(std::move(registry)) {
  if (!cfg_.tasks_path.empty()) registry_ = TaskRegistry::FromFile(cfg_.tasks_path);
  cfg_.Validate();
  spec_ = registry_.Get(cfg_.task);
  LoadData();

  // Paths and execution knobs are left out; data enters through its content.
  json fp = cfg_;
  for (const char* key : {"seeds", "out_dir", "resume", "fanout", "workers",
                          "train_path", "test_path", "unlabeled_path",
                          "tasks_path"}) {
    fp.erase(key);
  }
  if (cfg_.mock.enabled) {
    fp.erase("encoder_url");
    fp.erase("teacher_url");
  }
  fp["task_spec"] = spec_;
  fp["data"] = {{"train", Sha256Hex(ReadFile(data_->train_path))},
                {"test", Sha256Hex(ReadFile(data_->test_path))},
                {"unlabeled", cfg_.unlabeled_path.empty()
                                  ? ""
                                  : Sha256Hex(ReadFile(cfg_.unlabeled_path))}};
  fingerprint_ = Sha256Hex(fp.dump()).substr(0, 16);
}

Pipeline::~Pipeline() = default;

std::string Pipeline::RunDir(uint64_t seed) const {
  return (fs::path(cfg_.out_dir) / fingerprint_ / std::to_string(seed)).string();
}

const Pipeline::Data& Pipeline::LoadData() {
  if (data_) return *data_;
  auto data = std::make_unique<Data>();
  data->train_path = cfg_.train_path;
  data->test_path = cfg_.test_path;
  if (cfg_.mock.enabled && cfg_.train_path.empty()) {
    json syn = json(cfg_)["mock"]["synthetic"];
    syn["task"] = spec_;
    const fs::path dir = fs::path(cfg_.out_dir) / "data" /
                         (spec_.name + "-" + Sha256Hex(syn.dump()).substr(0, 12));
    fs::create_directories(dir);
    data->train_path = (dir / "train.jsonl").string();
    data->test_path = (dir / "test.jsonl").string();
    if (!fs::exists(data->train_path) || !fs::exists(data->test_path)) {
      auto corpus = GenerateSynthetic(spec_, cfg_.mock.synthetic);
      WriteWithOracle(data->train_path, corpus.source);
      WriteWithOracle(data->test_path, corpus.test);
    }
  }
  data->source = LoadDataset(data->train_path, spec_);
  data->test = LoadDataset(data->test_path, spec_);
  if (!cfg_.unlabeled_path.empty()) {
    data->unlabeled = LoadUnlabeled(cfg_.unlabeled_path, spec_);
  }
  data_ = std::move(data);
  return *data_;
}

std::unique_ptr<MockEncoder> Pipeline::MakeMockEncoder() const {
  MockEncoderConfig mc = cfg_.mock.encoder;
  mc.labels = spec_.label_space;
  auto mock = std::make_unique<MockEncoder>(mc);
  if (!mc.planted) return mock;
  std::vector<std::string> files = {data_->train_path, data_->test_path};
  if (!cfg_.unlabeled_path.empty()) files.push_back(cfg_.unlabeled_path);
  for (const auto& file : files) {
    for (const auto& [segments, tag] : ReadOracleTags(file)) {
      if (!spec_.HasLabel(tag)) continue;
      try {
        mock->AddOracle(ApplyTemplate(spec_, segments).rendered, tag);
      } catch (const TemplateError&) {
        // not renderable for this task; stays unplanted
      }
    }
  }
  return mock;
}

Encoder& Pipeline::GetEncoder() {
  if (encoder_) return *encoder_;
  if (cfg_.mock.enabled) {
    encoder_ = MakeMockEncoder();
  } else {
    encoder_ = std::make_unique<HttpEncoder>(cfg_.encoder_url);
  }
  return *encoder_;
}

TeacherFactory Pipeline::MakeTeacherFactory(uint64_t seed) {
  if (cfg_.mock.enabled) {
    MockTeacherConfig tc = cfg_.mock.teacher;
    tc.vocabulary = spec_.LabelWords();
    tc.artifact_dir = (fs::path(RunDir(seed)) / "teacher").string();
    return [tc] { return std::make_shared<MockTeacher>(tc); };
  }
  const std::string url = cfg_.teacher_url;
  return [url] {
    auto teacher = std::make_shared<HttpTeacher>(url);
    teacher->Reset();
    return teacher;
  };
}

template <typename Fn>
auto Pipeline::RunStage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void Pipeline::WriteManifest(uint64_t seed, const std::string& stage,
                             const json& entry) const {
  const std::string path = (fs::path(RunDir(seed)) / "manifest.json").string();
  json manifest = fs::exists(path) ? ReadJson(path) : json::object();
  manifest[stage] = entry;
  WriteFile(path, manifest.dump(2) + "\n");
}

void Pipeline::Sample(uint64_t seed) {
  RunStage("sample", [&] {
    fs::create_directories(RunDir(seed));
    const FewShotSplit split = SampleFewShot(data_->source, spec_, cfg_.k, seed);
    std::string content;
    for (const auto* part : {&split.train, &split.dev}) {
      for (const auto& ex : *part) {
        json j = SegmentsJson(ex.segments());
        j["label"] = ex.label;
        j["split"] = part == &split.train ? "train" : "dev";
        content += j.dump() + "\n";
      }
    }
    WriteFile((fs::path(RunDir(seed)) / "split.jsonl").string(), content);
    WriteManifest(seed, "sample",
                  {{"k", cfg_.k},
                   {"seed", seed},
                   {"train", split.train.size()},
                   {"dev", split.dev.size()},
                   {"split_sha256", Sha256Hex(content)}});
  });
}

FewShotSplit Pipeline::LoadSplit(uint64_t seed) const {
  const std::string path = (fs::path(RunDir(seed)) / "split.jsonl").string();
  std::ifstream in(path);
  if (!in) throw IoError("no split at " + path + "; run the sample stage first");
  FewShotSplit split;
  split.seed = seed;
  split.k = cfg_.k;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    auto s = SegmentsFromJson(j);
    LabeledExample ex{s.text_a, s.text_b, j.at("label").get<std::string>()};
    (j.at("split") == "train" ? split.train : split.dev).push_back(std::move(ex));
  }
  return split;
}

void Pipeline::Teach(uint64_t seed) {
  RunStage("teach", [&] {
    const FewShotSplit split = LoadSplit(seed);
    const DemonstrationSet demos =
        SampleDemonstrations(split, spec_, DeriveSeed(seed, "demonstrations"));
    TeacherTrainConfig base = cfg_.teacher;
    base.seed = DeriveSeed(seed, "teacher");
    const GridSearchResult grid = GridSearch(MakeTeacherFactory(seed), split,
                                             spec_, demos, cfg_.grid, base,
                                             cfg_.prompt);
    json variants = json::array();
    for (const auto& v : grid.variants) {
      variants.push_back({{"learning_rate", v.learning_rate},
                          {"grad_accum", v.grad_accum},
                          {"dev_accuracy", v.dev_accuracy ? json(*v.dev_accuracy)
                                                          : json()},
                          {"error", v.error}});
    }
    json demo_json = json::array();
    for (const auto& label : spec_.label_space) {
      const auto& ex = demos.per_label.at(label);
      json d = SegmentsJson(ex.segments());
      d["label"] = label;
      demo_json.push_back(d);
    }
    const TeacherModel& best = grid.best;
    json teacher = {{"artifact_id", best.artifact_id},
                    {"dev_accuracy", best.dev_accuracy},
                    {"learning_rate", best.config.learning_rate},
                    {"grad_accum", best.config.grad_accum_steps},
                    {"batch_size", best.config.batch_size},
                    {"max_seq_len", best.config.max_seq_len},
                    {"max_steps", best.config.max_steps},
                    {"seed", best.config.seed},
                    {"demo_seed", demos.seed},
                    {"demonstrations", demo_json},
                    {"variants", variants}};
    WriteFile((fs::path(RunDir(seed)) / "teacher.json").string(),
              teacher.dump(2) + "\n");
    WriteManifest(seed, "teach",
                  {{"variants", grid.variants.size()},
                   {"dev_accuracy", best.dev_accuracy},
                   {"learning_rate", best.config.learning_rate},
                   {"grad_accum", best.config.grad_accum_steps}});
  });
}

TeacherModel Pipeline::LoadTeacher(uint64_t seed) {
  const json t = ReadJson((fs::path(RunDir(seed)) / "teacher.json").string());
  TeacherModel model;
  model.backend = MakeTeacherFactory(seed)();
  model.artifact_id = t.at("artifact_id").get<std::string>();
  model.backend->Load(model.artifact_id);
  model.dev_accuracy = t.at("dev_accuracy").get<double>();
  model.config.learning_rate = t.at("learning_rate").get<double>();
  model.config.grad_accum_steps = t.at("grad_accum").get<size_t>();
  model.config.batch_size = t.at("batch_size").get<size_t>();
  model.config.max_seq_len = t.at("max_seq_len").get<size_t>();
  model.config.max_steps = t.at("max_steps").get<size_t>();
  model.config.seed = t.at("seed").get<uint64_t>();
  model.demos.seed = t.at("demo_seed").get<uint64_t>();
  for (const auto& d : t.at("demonstrations")) {
    auto s = SegmentsFromJson(d);
    const auto label = d.at("label").get<std::string>();
    model.demos.per_label.emplace(label, LabeledExample{s.text_a, s.text_b, label});
  }
  model.prompt_options = cfg_.prompt;
  return model;
}

UnlabeledPool Pipeline::BuildPool(const FewShotSplit& split) {
  const size_t cap = cfg_.unlabeled_cap == 0 ? spec_.aug_budget : cfg_.unlabeled_cap;
  if (!data_->unlabeled) return BuildUnlabeledPool(data_->source, split, cap);

  std::unordered_set<std::string> seen;
  for (const auto* part : {&split.train, &split.dev}) {
    for (const auto& ex : *part) seen.insert(ContentKey(ex.segments()));
  }
  UnlabeledPool pool;
  pool.source = cfg_.unlabeled_path;
  for (const auto& t : data_->unlabeled->texts) {
    if (pool.texts.size() >= cap) break;
    if (seen.insert(ContentKey(t)).second) pool.texts.push_back(t);
  }
  return pool;
}

void Pipeline::PseudoLabelStage(uint64_t seed) {
  RunStage("pseudolabel", [&] {
    const FewShotSplit split = LoadSplit(seed);
    const TeacherModel teacher = LoadTeacher(seed);
    const UnlabeledPool pool = BuildPool(split);
    PseudoLabelOptions opts;
    opts.threshold = cfg_.threshold;
    opts.workers = cfg_.workers;
    const auto retained = PseudoLabel(teacher, pool, spec_, opts);
    const uint64_t balance_seed = DeriveSeed(seed, "balance");
    const AugmentedSet aug = BalanceClasses(retained, spec_,
                                            BalanceStrategy::kMinCap,
                                            balance_seed, cfg_.threshold);
    const std::string path = (fs::path(RunDir(seed)) / "aug.jsonl").string();
    WriteAugmented(path, aug);
    WriteManifest(seed, "pseudolabel",
                  {{"pool", pool.texts.size()},
                   {"retained", retained.size()},
                   {"threshold", cfg_.threshold},
                   {"strategy", "min_cap"},
                   {"seed", balance_seed},
                   {"per_class_counts", aug.per_class_counts},
                   {"aug_sha256", Sha256Hex(ReadFile(path))}});
  });
}

AugmentedSet Pipeline::LoadAugmented(uint64_t seed) const {
  return ReadAugmented((fs::path(RunDir(seed)) / "aug.jsonl").string(), spec_,
                       cfg_.threshold);
}

std::vector<TrainItem> Pipeline::MergedTrainSet(uint64_t seed) {
  const FewShotSplit split = LoadSplit(seed);
  AugmentedSet aug;
  if (UsesAugmentation(cfg_.ablation)) aug = LoadAugmented(seed);
  return MergeTrain(aug, split);
}

LabeledFeatures Pipeline::Features(uint64_t seed,
                                   const std::vector<TextSegments>& texts,
                                   const std::vector<std::string>& labels) {
  FeatureCache cache((fs::path(RunDir(seed)) / "features.cache").string());
  ExtractionOptions opts{PositionFor(cfg_.ablation), LayerModeFor(cfg_.ablation),
                         cfg_.fanout};
  FeatureExtractor extractor(GetEncoder(), &cache, opts);
  std::vector<std::string> rendered;
  rendered.reserve(texts.size());
  for (const auto& t : texts) rendered.push_back(ApplyTemplate(spec_, t).rendered);
  const auto features = extractor.Extract(rendered);

  LabeledFeatures out;
  const auto d = static_cast<Eigen::Index>(extractor.meta().d);
  out.features.resize(static_cast<Eigen::Index>(features.size()), d);
  for (size_t i = 0; i < features.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      out.features(static_cast<Eigen::Index>(i), j) =
          features[i].values[static_cast<size_t>(j)];
    }
    out.labels.push_back(spec_.LabelIndex(labels[i]));
  }
  return out;
}

namespace {

struct TextsAndLabels {
  std::vector<TextSegments> texts;
  std::vector<std::string> labels;
};

template <typename Range>
TextsAndLabels Collect(const Range& items) {
  TextsAndLabels out;
  for (const auto& it : items) {
    out.texts.push_back(it.segments());
    out.labels.push_back(it.label);
  }
  return out;
}

}  // namespace

void Pipeline::Extract(uint64_t seed) {
  RunStage("extract", [&] {
    const auto train = Collect(MergedTrainSet(seed));
    const auto dev = Collect(LoadSplit(seed).dev);
    const auto test = Collect(data_->test);
    Features(seed, train.texts, train.labels);
    Features(seed, dev.texts, dev.labels);
    Features(seed, test.texts, test.labels);
    const EncoderMeta meta = GetEncoder().Meta();
    WriteManifest(seed, "extract",
                  {{"position", ToString(PositionFor(cfg_.ablation))},
                   {"layer_mode", ToString(LayerModeFor(cfg_.ablation))},
                   {"model_id", meta.model_id},
                   {"d", meta.d},
                   {"texts", train.texts.size() + dev.texts.size() +
                                 test.texts.size()}});
  });
}

void Pipeline::Train(uint64_t seed) {
  RunStage("train", [&] {
    const auto items = MergedTrainSet(seed);
    const auto train_tl = Collect(items);
    const auto dev_tl = Collect(LoadSplit(seed).dev);
    const LabeledFeatures train = Features(seed, train_tl.texts, train_tl.labels);
    const LabeledFeatures dev = Features(seed, dev_tl.texts, dev_tl.labels);

    MLPConfig mc;
    mc.input_dim = static_cast<size_t>(train.features.cols());
    mc.hidden_dim = cfg_.classifier.hidden_dim;
    mc.num_classes = spec_.label_space.size();
    mc.seed = DeriveSeed(seed, "mlp");
    mc.learning_rate = cfg_.classifier.learning_rate;
    mc.batch_size = cfg_.classifier.batch_size;
    mc.max_epochs = cfg_.classifier.max_epochs;
    mc.patience = cfg_.classifier.patience;
    mc.normalize_features = cfg_.classifier.normalize_features;
    auto [model, history] = TrainMLP(InitMLP(mc), train, dev);

    const fs::path dir = RunDir(seed);
    SaveMLP(model, (dir / "mlp.model").string());
    json h = {{"train_loss", history.train_loss},
              {"dev_accuracy", history.dev_accuracy},
              {"best_epoch", history.best_epoch},
              {"stopped_epoch", history.stopped_epoch}};
    WriteFile((dir / "history.json").string(), h.dump(2) + "\n");

    FieldHasher train_hash;
    size_t gold = 0;
    for (const auto& it : items) {
      train_hash.Add(ContentKey(it.segments())).Add(it.label);
      gold += it.gold ? 1 : 0;
    }
    WriteManifest(seed, "train",
                  {{"train_size", items.size()},
                   {"gold", gold},
                   {"augmented", items.size() - gold},
                   {"train_set_sha256", train_hash.HexDigest()},
                   {"input_dim", mc.input_dim},
                   {"hidden_dim", mc.hidden()},
                   {"parameters", ParameterCount(mc)},
                   {"best_epoch", history.best_epoch},
                   {"stopped_epoch", history.stopped_epoch}});
  });
}

StageResult Pipeline::Evaluate(uint64_t seed) {
  return RunStage("eval", [&] {
    const fs::path dir = RunDir(seed);
    StageResult result;
    if (cfg_.ablation == Ablation::kTeacherOnly) {
      const TeacherModel teacher = LoadTeacher(seed);
      result.accuracy = TeacherAccuracy(teacher, spec_, data_->test);
      result.dev_accuracy = teacher.dev_accuracy;
    } else {
      const MLPModel model = LoadMLP((dir / "mlp.model").string());
      const auto test_tl = Collect(data_->test);
      const LabeledFeatures test = Features(seed, test_tl.texts, test_tl.labels);
      result.accuracy = Accuracy(model, test);
      const json h = ReadJson((dir / "history.json").string());
      const auto dev_curve = h.at("dev_accuracy").get<std::vector<double>>();
      const auto best = h.at("best_epoch").get<size_t>();
      result.dev_accuracy = best > 0 ? dev_curve.at(best - 1) : 0.0;
    }
    json r = {{"task", spec_.name},
              {"ablation", ToString(cfg_.ablation)},
              {"seed", seed},
              {"fingerprint", fingerprint_},
              {"accuracy", result.accuracy},
              {"dev_accuracy", result.dev_accuracy},
              {"test_size", data_->test.size()}};
    WriteFile((dir / "result.json").string(), r.dump(2) + "\n");
    return result;
  });
}

double Pipeline::RunSingle(uint64_t seed) {
  const fs::path dir = RunDir(seed);
  auto have = [&](const char* name) { return cfg_.resume && fs::exists(dir / name); };
  if (have("result.json")) {
    return ReadJson((dir / "result.json").string()).at("accuracy").get<double>();
  }
  spdlog::info("run {} seed {} ({})", fingerprint_, seed, ToString(cfg_.ablation));
  if (!have("split.jsonl")) Sample(seed);
  const bool aug = UsesAugmentation(cfg_.ablation);
  if (UsesTeacher(cfg_.ablation) && !(aug && have("aug.jsonl")) &&
      !have("teacher.json")) {
    Teach(seed);
  }
  if (aug && !have("aug.jsonl")) PseudoLabelStage(seed);
  if (cfg_.ablation != Ablation::kTeacherOnly) {
    Extract(seed);
    if (!have("mlp.model")) Train(seed);
  }
  return Evaluate(seed).accuracy;
}

RunReport Pipeline::RunAll() {
  std::map<uint64_t, double> per_seed;
  for (uint64_t seed : cfg_.seeds) per_seed[seed] = RunSingle(seed);
  RunReport report = MakeReport(cfg_, fingerprint_, per_seed);
  const fs::path dir = fs::path(cfg_.out_dir) / fingerprint_;
  EmitReport({report}, ReportFormat::kCsv, (dir / "report.csv").string());
  EmitReport({report}, ReportFormat::kMarkdown, (dir / "report.md").string());
  return report;
}

RunReport Pipeline::CollectReport() const {
  std::map<uint64_t, double> per_seed;
  for (uint64_t seed : cfg_.seeds) {
    const fs::path path = fs::path(RunDir(seed)) / "result.json";
    if (!fs::exists(path)) continue;
    per_seed[seed] = ReadJson(path.string()).at("accuracy").get<double>();
  }
  return MakeReport(cfg_, fingerprint_, per_seed);
}

}  // namespace btclf
