#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lvce/study.hpp"

using namespace lvce;
using namespace lvce::study;
namespace fs = std::filesystem;

namespace {

StudyConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 42) {
  StudyConfig cfg = default_desk_config();
  cfg.seed = seed;
  cfg.output_dir = out_dir;
  cfg.phantom.dims = {16, 16, 16};
  cfg.phantom.n_subjects = 6;
  cfg.phantom.misalignment_rot_max = 0.02;
  cfg.phantom.misalignment_trans_max = 1.5;
  cfg.preprocess.target_dims = {16, 16, 16};
  cfg.split_fractions = {0.5, 0.2, 0.3};  // 3 / 1 / 2
  cfg.dose_levels = {0.20, 0.25, 0.33};
  cfg.registration.pyramid_levels = 2;
  cfg.registration.max_iters_per_level = 40;
  cfg.vnet.levels = 2;
  cfg.vnet.base_channels = 4;
  cfg.train.epochs = 2;
  cfg.train.augment.trans_max = 1.0;
  return cfg;
}

std::string fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lvce_pipeline_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

void run_through_evaluate(const StudyConfig& cfg) {
  RunManifest manifest(cfg.output_dir, cfg.config_hash());
  run_generate(cfg, manifest);
  run_preprocess(cfg, manifest);
  run_simulate_dose(cfg, manifest);
  const auto frac = dose::DoseFraction::of(cfg.train.dose);
  run_train(cfg, manifest, train::TrainMode::kSingleSession, frac);
  run_train(cfg, manifest, train::TrainMode::kLongitudinal, frac);
  run_evaluate(cfg, manifest, frac);
}

}  // namespace

TEST_CASE("full pipeline: stage outputs, idempotence, determinism, report artifacts") {
  const std::string dir_a = fresh_dir("run_a");
  const StudyConfig cfg = tiny_config(dir_a);
  const StagePaths paths = stage_paths(cfg);

  // generate
  {
    RunManifest manifest(cfg.output_dir, cfg.config_hash());
    run_generate(cfg, manifest);
    CHECK(fs::exists(fs::path(paths.cohort_dir) / "cohort.json"));
    const auto index = read_cohort_index(paths.cohort_dir);
    CHECK(index.subject_ids.size() == 6);
    int n_train = 0, n_val = 0, n_test = 0;
    for (const auto& [id, split] : index.split) {
      n_train += split == SplitKind::kTrain;
      n_val += split == SplitKind::kVal;
      n_test += split == SplitKind::kTest;
    }
    CHECK(n_train == 3);
    CHECK(n_val == 1);
    CHECK(n_test == 2);
    CHECK(manifest.stage_current("generate"));
  }

  // preprocess: outputs normalized, transforms beat the initial misalignment
  {
    RunManifest manifest(cfg.output_dir, cfg.config_hash());
    run_preprocess(cfg, manifest);
    CHECK(manifest.stage_current("preprocess"));
    const auto index = read_cohort_index(paths.preproc_dir);
    CHECK(index.subject_ids.size() == 6);
    for (const auto& id : index.subject_ids) {
      const auto rec = load_subject(paths.preproc_dir, index, id);
      for (const Volume* v : {&rec.ses01.t1_pc, &rec.ses01.t1_sd, &rec.ses02.t1_pc,
                              &rec.ses02.t1_sd}) {
        double lo = 1e300, hi = -1e300;
        for (double x : v->data) {
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
        CHECK(lo >= 0.0);
        CHECK(hi <= 1.0);
      }
      const auto xfm = nlohmann::json::parse(read_text_file(
          (fs::path(paths.preproc_dir) / id / "ses-02" / "xfm_to_ses01.json").string()));
      CHECK(xfm.at("final_mse").get<double>() <= xfm.at("initial_mse").get<double>());
    }
  }

  // simulate-dose: one LD file per configured level plus determinism
  {
    RunManifest manifest(cfg.output_dir, cfg.config_hash());
    run_simulate_dose(cfg, manifest);
    const auto index = read_cohort_index(paths.preproc_dir);
    for (const auto& id : index.subject_ids)
      for (const char* p : {"20", "25", "33"})
        CHECK(fs::exists(volume_path(paths.preproc_dir, id, 2, std::string("t1_ld_d") + p)));
    CHECK(manifest.stage_current("simulate-dose"));
  }

  // train both models + evaluate
  {
    RunManifest manifest(cfg.output_dir, cfg.config_hash());
    const auto frac = dose::DoseFraction::of(0.25);
    const std::string ckpt_s =
        run_train(cfg, manifest, train::TrainMode::kSingleSession, frac);
    const std::string ckpt_l =
        run_train(cfg, manifest, train::TrainMode::kLongitudinal, frac);
    CHECK(fs::exists(ckpt_s));
    CHECK(fs::exists(ckpt_l));
    const auto model = nn::load_checkpoint(ckpt_l);
    CHECK(model.config().in_channels == 4);

    const std::string curves =
        read_text_file((fs::path(paths.models_dir) / "longitudinal_d25_curves.csv").string());
    CHECK(curves.rfind("epoch,train_loss,val_loss,lr\n", 0) == 0);
    CHECK(count_lines(curves) == cfg.train.epochs + 1);

    const std::string csv_path = run_evaluate(cfg, manifest, frac);
    const std::string csv = read_text_file(csv_path);
    CHECK(count_lines(csv) == 1 + 3 * 2);  // header + 3 models x 2 test subjects

    const auto comparison = nlohmann::json::parse(
        read_text_file((fs::path(paths.eval_dir) / "comparison_d25.json").string()));
    CHECK(comparison.size() == 3);

    const std::string table =
        read_text_file((fs::path(paths.eval_dir) / "table_d25.txt").string());
    CHECK(table.find("T1-LD") != std::string::npos);
    CHECK(table.find("Single Session") != std::string::npos);
    CHECK(table.find("Longitudinal") != std::string::npos);
    CHECK(table.find("\xC2\xB1") != std::string::npos);

    // Idempotence: a fresh manifest object sees all stages as current.
    RunManifest manifest2(cfg.output_dir, cfg.config_hash());
    CHECK(manifest2.stage_current("train-longitudinal-d25"));
    CHECK(manifest2.stage_current("evaluate-d25"));
  }

  // dose-sweep across the 3 configured levels
  {
    RunManifest manifest(cfg.output_dir, cfg.config_hash());
    run_dose_sweep(cfg, manifest);
    const std::string sweep = read_text_file((fs::path(paths.sweep_dir) / "sweep.csv").string());
    CHECK(count_lines(sweep) == 1 + 2 * 3 * 3);  // header + models x levels x metrics
    const auto slopes = nlohmann::json::parse(
        read_text_file((fs::path(paths.sweep_dir) / "slopes.json").string()));
    CHECK(slopes.size() == 6);  // 2 models x 3 metrics
    for (const auto& s : slopes) {
      CHECK(s.contains("slope"));
      CHECK(s.contains("p_slope"));
    }
  }

  // report artifacts
  {
    RunManifest manifest(cfg.output_dir, cfg.config_hash());
    run_report(cfg, manifest);
    CHECK(fs::exists(fs::path(paths.report_dir) / "table.txt"));
    for (const char* m : {"mse", "psnr", "ssim"}) {
      const std::string boxplot_csv =
          read_text_file((fs::path(paths.report_dir) / ("boxplot_" + std::string(m) + ".csv")).string());
      CHECK(count_lines(boxplot_csv) == 4);  // header + 3 models
      const std::string svg =
          read_text_file((fs::path(paths.report_dir) / ("boxplot_" + std::string(m) + ".svg")).string());
      CHECK(svg.find("<svg") != std::string::npos);
      const std::string dose_svg =
          read_text_file((fs::path(paths.report_dir) / ("dose_" + std::string(m) + ".svg")).string());
      CHECK(dose_svg.find("data model=") != std::string::npos);
    }

    // PGM slice panels: 5 tiles of X x Y, binary uint8.
    const auto index = read_cohort_index(paths.preproc_dir);
    int panels = 0;
    for (const auto& id : index.subject_ids) {
      if (index.split.at(id) != SplitKind::kTest) continue;
      const fs::path panel = fs::path(paths.report_dir) / ("slices_" + id + ".pgm");
      REQUIRE(fs::exists(panel));
      std::ifstream is(panel, std::ios::binary);
      std::string magic, dims_w, dims_h, maxval;
      is >> magic >> dims_w >> dims_h >> maxval;
      CHECK(magic == "P5");
      CHECK(dims_w == "80");  // 5 x 16
      CHECK(dims_h == "16");
      CHECK(maxval == "255");
      is.get();  // single whitespace after header
      std::vector<char> pixels(80 * 16);
      is.read(pixels.data(), static_cast<std::streamsize>(pixels.size()));
      CHECK(is.gcount() == static_cast<std::streamsize>(pixels.size()));
      ++panels;
    }
    CHECK(panels == 2);
  }
}

TEST_CASE("two identical runs produce byte-identical metrics CSVs") {
  const std::string dir_a = fresh_dir("det_a");
  const std::string dir_b = fresh_dir("det_b");
  StudyConfig cfg_a = tiny_config(dir_a, 7);
  StudyConfig cfg_b = tiny_config(dir_b, 7);
  cfg_a.dose_levels = {0.25};
  cfg_b.dose_levels = {0.25};
  run_through_evaluate(cfg_a);
  run_through_evaluate(cfg_b);
  const std::string csv_a =
      read_text_file((fs::path(stage_paths(cfg_a).eval_dir) / "metrics_d25.csv").string());
  const std::string csv_b =
      read_text_file((fs::path(stage_paths(cfg_b).eval_dir) / "metrics_d25.csv").string());
  CHECK(csv_a == csv_b);
  CHECK(!csv_a.empty());
}

TEST_CASE("config round-trips through JSON and hashes ignore runtime knobs") {
  StudyConfig cfg = tiny_config("unused_dir", 3);
  const auto j = cfg.to_json();
  const StudyConfig back = StudyConfig::from_json(j);
  CHECK(back.config_hash() == cfg.config_hash());
  CHECK(back.phantom.n_subjects == cfg.phantom.n_subjects);
  CHECK(back.train.epochs == cfg.train.epochs);
  CHECK(back.dose_levels == cfg.dose_levels);

  StudyConfig other = cfg;
  other.threads = 7;
  other.output_dir = "elsewhere";
  CHECK(other.config_hash() == cfg.config_hash());

  StudyConfig changed = cfg;
  changed.train.lr = 2e-4;
  CHECK(changed.config_hash() != cfg.config_hash());
}

TEST_CASE("invalid configs are rejected with ConfigError") {
  StudyConfig cfg = tiny_config("unused_dir2");
  cfg.split_fractions = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config("unused_dir2");
  cfg.dose_levels = {0.2, 0.2};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
