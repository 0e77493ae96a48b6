#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lvce/cohort_io.hpp"
#include "lvce/dose.hpp"
#include "lvce/metrics.hpp"
#include "lvce/phantom.hpp"
#include "lvce/registration.hpp"
#include "lvce/trainer.hpp"
#include "lvce/vnet.hpp"

namespace lvce::study {

struct PreprocessConfig {
  Real3 target_spacing{1.0, 1.0, 1.0};
  int crop_margin = 4;
  /// Common crop extents for every subject; {0,0,0} keeps each tight box.
  Index3 target_dims{0, 0, 0};
};

/// Whole-study configuration; JSON-serializable. Defaults are the desk-scale
/// profile (a complete run in well under an hour on one CPU); the full-size
/// profile from the study write-up is reachable by overriding fields.
struct StudyConfig {
  std::uint64_t seed = 20250810;
  std::string output_dir = "lvce_out";
  int threads = 0;  // 0 = hardware default
  bool masked_metrics = true;

  phantom::PhantomConfig phantom;
  std::array<double, 3> split_fractions{0.7, 0.1, 0.2};
  std::vector<double> dose_levels{0.10, 0.15, 0.20, 0.25, 0.33};
  dose::DoseModel dose_model;
  PreprocessConfig preprocess;
  reg::RegistrationConfig registration;
  nn::VNetConfig vnet;
  train::TrainConfig train;

  void validate() const;

  /// Canonical JSON (threads and output_dir excluded: they do not affect
  /// results and must not invalidate manifest stages).
  nlohmann::json to_json() const;
  static StudyConfig from_json(const nlohmann::json& j);
  static StudyConfig load_file(const std::string& path);
  std::string config_hash() const;
};

StudyConfig default_desk_config();

// -- run manifest ---------------------------------------------------------------

/// Stage ledger at <output_dir>/manifest.json: per-stage input/output file
/// digests under one config hash. A stage whose recorded digests all match
/// the files on disk is current and is skipped on rerun.
class RunManifest {
 public:
  RunManifest(std::string output_dir, std::string config_hash);

  bool stage_current(const std::string& stage) const;
  void record_stage(const std::string& stage, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const nlohmann::json& notes = nlohmann::json::object());
  void save() const;

  const nlohmann::json& raw() const { return data_; }

 private:
  std::string path_;
  std::string config_hash_;
  nlohmann::json data_;
};

// -- pipeline stages -----------------------------------------------------------

struct StagePaths {
  std::string cohort_dir;
  std::string preproc_dir;
  std::string models_dir;
  std::string eval_dir;
  std::string sweep_dir;
  std::string report_dir;
};
StagePaths stage_paths(const StudyConfig& cfg);

void apply_runtime_settings(const StudyConfig& cfg);

/// generate: phantom cohort + cohort.json.
void run_generate(const StudyConfig& cfg, RunManifest& manifest);

/// preprocess: resample, ses-01 crop box propagated to ses-02, rigid
/// registration (ses-01 SD->PC, ses-02 session->ses-01 PC), joint per-session
/// min-max normalization, sidecars. Registration failures skip the subject
/// with a warning.
void run_preprocess(const StudyConfig& cfg, RunManifest& manifest);

/// simulate-dose: t1_ld_d<percent>.nii.gz for every configured level.
void run_simulate_dose(const StudyConfig& cfg, RunManifest& manifest);

/// train: one model (mode at dose); checkpoint + loss/lr curves + config echo.
std::string run_train(const StudyConfig& cfg, RunManifest& manifest, train::TrainMode mode,
                      dose::DoseFraction dose_fraction);

/// evaluate: per-subject metrics CSV (T1-LD baseline + both models),
/// longitudinal-vs-single-session comparison JSON, Table-1-style text table,
/// prediction volumes.
std::string run_evaluate(const StudyConfig& cfg, RunManifest& manifest,
                         dose::DoseFraction dose_fraction);

/// dose-sweep: train + evaluate both modes at every configured level,
/// aggregate sweep.csv and per-(model, metric) regression slopes.
void run_dose_sweep(const StudyConfig& cfg, RunManifest& manifest);

/// report: tables, boxplot CSV/SVG, dose-level line plots (when sweep data
/// exists), mid-axial slice panels as PGM.
void run_report(const StudyConfig& cfg, RunManifest& manifest);

/// Fast internal verification (gradient checks + closed-form metric/statistic
/// oracles). Returns true when everything passes; prints one line per check.
bool run_selftest();

// -- shared helpers --------------------------------------------------------------

std::string format_double(double v);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

struct EvaluationBundle {
  std::vector<eval::MetricsRow> ld_rows;
  std::vector<eval::MetricsRow> single_rows;
  std::vector<eval::MetricsRow> longitudinal_rows;
};

/// Metric rows for all three table entries on the test split at one dose.
EvaluationBundle evaluate_cohort(const StudyConfig& cfg, const std::string& preproc_dir,
                                 const CohortIndex& index, const nn::VNet& longitudinal,
                                 const nn::VNet& single_session, dose::DoseFraction dose_fraction,
                                 std::map<std::string, Volume>* predictions_longitudinal = nullptr,
                                 std::map<std::string, Volume>* predictions_single = nullptr);

}  // namespace lvce::study
