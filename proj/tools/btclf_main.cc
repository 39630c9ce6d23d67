// Command-line driver for the few-shot pipeline.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "btclf/errors.h"
#include "btclf/harness.h"
#include "btclf/http_backends.h"
#include "btclf/mock_backends.h"

namespace {

struct GlobalFlags {
  std::string config_path;
  std::vector<uint64_t> seeds;
  bool mock = false;
  std::string ablation;
  std::string out_dir;
  std::string task;
  std::string tasks_path;
  size_t k = 0;
  bool resume = false;
  bool verbose = false;
};

btclf::RunConfig BuildConfig(const GlobalFlags& flags) {
  btclf::RunConfig cfg;
  if (!flags.config_path.empty()) cfg = btclf::LoadRunConfig(flags.config_path);
  if (flags.mock) cfg.mock.enabled = true;
  if (!flags.ablation.empty()) cfg.ablation = btclf::ParseAblation(flags.ablation);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (!flags.task.empty()) cfg.task = flags.task;
  if (!flags.tasks_path.empty()) cfg.tasks_path = flags.tasks_path;
  if (flags.k > 0) cfg.k = flags.k;
  if (!flags.seeds.empty()) cfg.seeds = flags.seeds;
  if (flags.resume) cfg.resume = true;
  btclf::ApplyEnvironment(cfg);
  return cfg;
}

int ServeMock(const GlobalFlags& flags, int encoder_port, int teacher_port) {
  btclf::RunConfig cfg = BuildConfig(flags);
  btclf::Pipeline pipeline(cfg);
  std::shared_ptr<btclf::MockEncoder> encoder = pipeline.MakeMockEncoder();
  auto teacher_cfg = cfg.mock.teacher;
  teacher_cfg.vocabulary = pipeline.spec().LabelWords();
  if (teacher_cfg.artifact_dir.empty()) {
    teacher_cfg.artifact_dir = cfg.out_dir + "/mock-teacher";
  }

  btclf::BackendServer encoder_server;
  encoder_server.ServeEncoder(encoder);
  btclf::BackendServer teacher_server;
  teacher_server.ServeTeacher(
      [teacher_cfg] { return std::make_shared<btclf::MockTeacher>(teacher_cfg); });
  encoder_server.Start("127.0.0.1", encoder_port);
  std::cout << "ENCODER_URL=" << encoder_server.url() << "\n"
            << "TEACHER_URL=http://127.0.0.1:" << teacher_port << std::endl;
  teacher_server.Listen("127.0.0.1", teacher_port);
  encoder_server.Stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot text classification with a prompt-tuned teacher "
               "and a feature MLP"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seeds, "Seed(s) to run; repeatable");
  app.add_flag("--mock", flags.mock, "Use in-process mock backends");
  app.add_option("--ablation", flags.ablation,
                 "full, no_aug, cls_token, last_layer or teacher_only");
  app.add_option("--out", flags.out_dir, "Output directory for runs");
  app.add_option("--task", flags.task, "Task name");
  app.add_option("--tasks", flags.tasks_path, "Task registry JSON");
  app.add_option("--k", flags.k, "Examples per class");
  app.add_flag("--resume", flags.resume, "Skip stages whose artifacts exist");
  app.add_flag("-v,--verbose", flags.verbose, "Debug logging");

  auto* sample = app.add_subcommand("sample", "Draw the K-shot train/dev split");
  auto* teach = app.add_subcommand("teach", "Grid-search and finetune the teacher");
  auto* pseudo = app.add_subcommand("pseudolabel",
                                    "Label the pool, filter and balance");
  auto* extract = app.add_subcommand("extract", "Extract and cache features");
  auto* train = app.add_subcommand("train", "Train the MLP classifier");
  auto* eval = app.add_subcommand("eval", "Evaluate on the test file");
  auto* run_all = app.add_subcommand("run-all", "All stages for every seed");
  auto* report = app.add_subcommand("report", "Aggregate finished seeds");
  std::string format = "markdown";
  std::string report_path;
  report->add_option("--format", format, "csv or markdown")
      ->check(CLI::IsMember({"csv", "markdown"}));
  report->add_option("--output", report_path, "Write to file instead of stdout");

  auto* serve = app.add_subcommand("serve-mock",
                                   "Serve mock encoder and teacher over HTTP");
  int encoder_port = 8500;
  int teacher_port = 8501;
  serve->add_option("--encoder-port", encoder_port);
  serve->add_option("--teacher-port", teacher_port);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(flags.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (serve->parsed()) return ServeMock(flags, encoder_port, teacher_port);

    btclf::Pipeline pipeline(BuildConfig(flags));
    const auto& seeds = pipeline.config().seeds;
    auto for_each_seed = [&](auto&& fn) {
      for (uint64_t seed : seeds) fn(seed);
    };

    if (sample->parsed()) {
      for_each_seed([&](uint64_t s) { pipeline.Sample(s); });
    } else if (teach->parsed()) {
      for_each_seed([&](uint64_t s) { pipeline.Teach(s); });
    } else if (pseudo->parsed()) {
      for_each_seed([&](uint64_t s) { pipeline.PseudoLabelStage(s); });
    } else if (extract->parsed()) {
      for_each_seed([&](uint64_t s) { pipeline.Extract(s); });
    } else if (train->parsed()) {
      for_each_seed([&](uint64_t s) { pipeline.Train(s); });
    } else if (eval->parsed()) {
      for_each_seed([&](uint64_t s) {
        const auto r = pipeline.Evaluate(s);
        std::cout << "seed " << s << " accuracy " << r.accuracy << "\n";
      });
    } else if (run_all->parsed()) {
      const auto r = pipeline.RunAll();
      std::cout << btclf::FormatReport({r}, btclf::ReportFormat::kMarkdown);
      std::cout << "run directory: " << pipeline.config().out_dir << "/"
                << pipeline.fingerprint() << "\n";
    } else if (report->parsed()) {
      const auto r = pipeline.CollectReport();
      const auto fmt = format == "csv" ? btclf::ReportFormat::kCsv
                                       : btclf::ReportFormat::kMarkdown;
      if (report_path.empty()) {
        std::cout << btclf::FormatReport({r}, fmt);
      } else {
        btclf::EmitReport({r}, fmt, report_path);
      }
    }
  } catch (const btclf::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
