// lvce: longitudinal virtual contrast enhancement study runner.
//
// Subcommands cover the full study: generate, preprocess, simulate-dose,
// train, evaluate, dose-sweep, report, selftest. Completed stages are
// tracked in <output-dir>/manifest.json and skipped when their inputs and
// outputs are unchanged.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lvce/study.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadConfig = 2;
constexpr int kExitStageFailure = 3;
constexpr int kExitSelftestFailure = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longitudinal virtual contrast enhancement toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::string masked_metrics;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;

  app.add_option("--config", config_path, "study config JSON; defaults when omitted");
  app.add_option("--output-dir", output_dir, "output directory (default lvce_out)");
  app.add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--threads", threads, "worker threads (0 = hardware default)");
  app.add_option("--masked-metrics", masked_metrics, "on|off: restrict metrics to the brain mask")
      ->check(CLI::IsMember({"on", "off"}));

  auto* cmd_generate = app.add_subcommand("generate", "synthesize the phantom cohort");
  auto* cmd_preprocess = app.add_subcommand("preprocess", "resample, crop, register, normalize");
  auto* cmd_simulate = app.add_subcommand("simulate-dose", "synthesize low-dose images");
  auto* cmd_train = app.add_subcommand("train", "train one model");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "metrics + statistical comparison");
  auto* cmd_sweep = app.add_subcommand("dose-sweep", "train/evaluate across all dose levels");
  auto* cmd_report = app.add_subcommand("report", "tables, figures, slice panels");
  auto* cmd_selftest = app.add_subcommand("selftest", "gradient checks and metric oracles");

  std::string train_mode = "longitudinal";
  double train_dose = -1.0;
  cmd_train->add_option("--mode", train_mode, "longitudinal|single_session")
      ->check(CLI::IsMember({"longitudinal", "single_session"}));
  cmd_train->add_option("--dose", train_dose, "dose fraction (default: config train.dose)");
  double eval_dose = -1.0;
  cmd_evaluate->add_option("--dose", eval_dose, "dose fraction (default: config train.dose)");
  bool train_both = false;
  cmd_train->add_flag("--both", train_both, "train longitudinal and single_session");

  CLI11_PARSE(app, argc, argv);

  lvce::study::StudyConfig cfg;
  try {
    cfg = config_path.empty() ? lvce::study::default_desk_config()
                              : lvce::study::StudyConfig::load_file(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (seed_set) cfg.seed = seed;
    if (threads >= 0) cfg.threads = threads;
    if (!masked_metrics.empty()) cfg.masked_metrics = masked_metrics == "on";
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  }

  if (app.got_subcommand(cmd_selftest)) {
    return lvce::study::run_selftest() ? kExitOk : kExitSelftestFailure;
  }

  lvce::study::apply_runtime_settings(cfg);

  try {
    lvce::study::RunManifest manifest(cfg.output_dir, cfg.config_hash());
    if (app.got_subcommand(cmd_generate)) {
      lvce::study::run_generate(cfg, manifest);
    } else if (app.got_subcommand(cmd_preprocess)) {
      lvce::study::run_preprocess(cfg, manifest);
    } else if (app.got_subcommand(cmd_simulate)) {
      lvce::study::run_simulate_dose(cfg, manifest);
    } else if (app.got_subcommand(cmd_train)) {
      const double d = train_dose >= 0.0 ? train_dose : cfg.train.dose;
      const auto frac = lvce::dose::DoseFraction::of(d);
      if (train_both) {
        lvce::study::run_train(cfg, manifest, lvce::train::TrainMode::kSingleSession, frac);
        lvce::study::run_train(cfg, manifest, lvce::train::TrainMode::kLongitudinal, frac);
      } else {
        lvce::study::run_train(cfg, manifest, lvce::train::train_mode_from_name(train_mode), frac);
      }
    } else if (app.got_subcommand(cmd_evaluate)) {
      const double d = eval_dose >= 0.0 ? eval_dose : cfg.train.dose;
      lvce::study::run_evaluate(cfg, manifest, lvce::dose::DoseFraction::of(d));
    } else if (app.got_subcommand(cmd_sweep)) {
      lvce::study::run_dose_sweep(cfg, manifest);
    } else if (app.got_subcommand(cmd_report)) {
      lvce::study::run_report(cfg, manifest);
    }
  } catch (const lvce::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitOk;
}
