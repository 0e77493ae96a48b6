#include "lvce/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "lvce/nifti.hpp"
#include "lvce/report.hpp"
#include "lvce/sha256.hpp"
#include "lvce/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lvce::study {

// -- config ----------------------------------------------------------------------

void StudyConfig::validate() const {
  phantom.validate();
  dose_model.validate();
  registration.validate();
  vnet.validate();
  train.validate();
  dose::dose_schedule(dose_levels);
  const double fsum = split_fractions[0] + split_fractions[1] + split_fractions[2];
  if (std::fabs(fsum - 1.0) > 1e-9)
    throw ConfigError("StudyConfig: split_fractions must sum to 1");
  for (int a = 0; a < 3; ++a) {
    if (!(preprocess.target_spacing[a] > 0.0))
      throw ConfigError("StudyConfig: preprocess.target_spacing must be positive");
    if (preprocess.target_dims[a] < 0)
      throw ConfigError("StudyConfig: preprocess.target_dims must be non-negative");
  }
  if (preprocess.crop_margin < 0) throw ConfigError("StudyConfig: crop_margin must be >= 0");
  if (output_dir.empty()) throw ConfigError("StudyConfig: output_dir must be set");
}

StudyConfig default_desk_config() {
  StudyConfig cfg;
  // Desk profile: the full study completes on one CPU in well under an hour
  // while keeping the longitudinal-vs-single-session contrast intact.
  cfg.phantom.dims = {32, 32, 32};
  cfg.phantom.n_subjects = 20;
  cfg.preprocess.target_dims = {32, 32, 32};
  cfg.vnet.levels = 3;
  cfg.vnet.base_channels = 8;
  cfg.train.epochs = 100;
  cfg.train.augment.trans_max = 2.0;  // scaled to 32 voxel volumes
  return cfg;
}

json StudyConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["masked_metrics"] = masked_metrics;
  j["phantom"] = {{"dims", phantom.dims},
                  {"n_subjects", phantom.n_subjects},
                  {"lesion_evolution_mix", phantom.lesion_evolution_mix},
                  {"enhancement_gain", phantom.enhancement_gain},
                  {"misalignment_rot_max", phantom.misalignment_rot_max},
                  {"misalignment_trans_max", phantom.misalignment_trans_max},
                  {"noise_sigma", phantom.noise_sigma}};
  j["split_fractions"] = split_fractions;
  j["dose_levels"] = dose_levels;
  j["dose_model"] = {{"kind", dose::dose_model_kind_name(dose_model.kind)},
                     {"k", dose_model.k},
                     {"noise_sigma_ld", dose_model.noise_sigma_ld}};
  j["preprocess"] = {{"target_spacing", preprocess.target_spacing},
                     {"crop_margin", preprocess.crop_margin},
                     {"target_dims", preprocess.target_dims}};
  j["registration"] = {{"pyramid_levels", registration.pyramid_levels},
                       {"max_iters_per_level", registration.max_iters_per_level},
                       {"step_size", registration.step_size},
                       {"convergence_tol", registration.convergence_tol}};
  j["vnet"] = {{"levels", vnet.levels},
               {"base_channels", vnet.base_channels},
               {"convs_per_level", vnet.convs_per_level},
               {"activation", vnet.activation == nn::Activation::kPrelu ? "prelu" : "relu"},
               {"residual", vnet.residual},
               {"predict_residual", vnet.predict_residual},
               {"kernel_size", vnet.kernel_size}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"lr", train.lr},
                {"adam_betas", std::array<double, 2>{train.adam_beta1, train.adam_beta2}},
                {"adam_eps", train.adam_eps},
                {"scheduler",
                 {{"factor", train.scheduler.factor},
                  {"patience", train.scheduler.patience},
                  {"min_delta", train.scheduler.min_delta}}},
                {"augment",
                 {{"flip_prob_per_axis", train.augment.flip_prob_per_axis},
                  {"rot_max", train.augment.rot_max},
                  {"trans_max", train.augment.trans_max},
                  {"scale_max_frac", train.augment.scale_max_frac},
                  {"noise_sigma", train.augment.noise_sigma},
                  {"noise_prob", train.augment.noise_prob},
                  {"intensity_offset", train.augment.intensity_offset},
                  {"offset_prob", train.augment.offset_prob}}},
                {"dose", train.dose}};
  return j;
}

StudyConfig StudyConfig::from_json(const json& j) {
  StudyConfig cfg = default_desk_config();
  cfg.seed = j.value("seed", cfg.seed);
  cfg.masked_metrics = j.value("masked_metrics", cfg.masked_metrics);
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
  if (j.contains("phantom")) {
    const auto& p = j.at("phantom");
    cfg.phantom.dims = p.value("dims", cfg.phantom.dims);
    cfg.phantom.n_subjects = p.value("n_subjects", cfg.phantom.n_subjects);
    cfg.phantom.lesion_evolution_mix =
        p.value("lesion_evolution_mix", cfg.phantom.lesion_evolution_mix);
    cfg.phantom.enhancement_gain = p.value("enhancement_gain", cfg.phantom.enhancement_gain);
    cfg.phantom.misalignment_rot_max =
        p.value("misalignment_rot_max", cfg.phantom.misalignment_rot_max);
    cfg.phantom.misalignment_trans_max =
        p.value("misalignment_trans_max", cfg.phantom.misalignment_trans_max);
    cfg.phantom.noise_sigma = p.value("noise_sigma", cfg.phantom.noise_sigma);
    // Keep preprocess crop extents in lockstep with the phantom dims unless
    // the config overrides them explicitly.
    if (!j.contains("preprocess") || !j.at("preprocess").contains("target_dims"))
      cfg.preprocess.target_dims = cfg.phantom.dims;
  }
  cfg.split_fractions = j.value("split_fractions", cfg.split_fractions);
  cfg.dose_levels = j.value("dose_levels", cfg.dose_levels);
  if (j.contains("dose_model")) {
    const auto& d = j.at("dose_model");
    cfg.dose_model.kind = dose::dose_model_kind_from_name(
        d.value("kind", dose::dose_model_kind_name(cfg.dose_model.kind)));
    cfg.dose_model.k = d.value("k", cfg.dose_model.k);
    cfg.dose_model.noise_sigma_ld = d.value("noise_sigma_ld", cfg.dose_model.noise_sigma_ld);
  }
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    cfg.preprocess.target_spacing = p.value("target_spacing", cfg.preprocess.target_spacing);
    cfg.preprocess.crop_margin = p.value("crop_margin", cfg.preprocess.crop_margin);
    cfg.preprocess.target_dims = p.value("target_dims", cfg.preprocess.target_dims);
  }
  if (j.contains("registration")) {
    const auto& r = j.at("registration");
    cfg.registration.pyramid_levels = r.value("pyramid_levels", cfg.registration.pyramid_levels);
    cfg.registration.max_iters_per_level =
        r.value("max_iters_per_level", cfg.registration.max_iters_per_level);
    cfg.registration.step_size = r.value("step_size", cfg.registration.step_size);
    cfg.registration.convergence_tol =
        r.value("convergence_tol", cfg.registration.convergence_tol);
  }
  if (j.contains("vnet")) {
    const auto& v = j.at("vnet");
    cfg.vnet.levels = v.value("levels", cfg.vnet.levels);
    cfg.vnet.base_channels = v.value("base_channels", cfg.vnet.base_channels);
    cfg.vnet.convs_per_level = v.value("convs_per_level", cfg.vnet.convs_per_level);
    cfg.vnet.activation = v.value("activation", std::string("prelu")) == "relu"
                              ? nn::Activation::kRelu
                              : nn::Activation::kPrelu;
    cfg.vnet.residual = v.value("residual", cfg.vnet.residual);
    cfg.vnet.predict_residual = v.value("predict_residual", cfg.vnet.predict_residual);
    cfg.vnet.kernel_size = v.value("kernel_size", cfg.vnet.kernel_size);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    if (t.contains("adam_betas")) {
      const auto betas = t.at("adam_betas").get<std::array<double, 2>>();
      cfg.train.adam_beta1 = betas[0];
      cfg.train.adam_beta2 = betas[1];
    }
    cfg.train.adam_eps = t.value("adam_eps", cfg.train.adam_eps);
    if (t.contains("scheduler")) {
      const auto& s = t.at("scheduler");
      cfg.train.scheduler.factor = s.value("factor", cfg.train.scheduler.factor);
      cfg.train.scheduler.patience = s.value("patience", cfg.train.scheduler.patience);
      cfg.train.scheduler.min_delta = s.value("min_delta", cfg.train.scheduler.min_delta);
    }
    if (t.contains("augment")) {
      const auto& a = t.at("augment");
      auto& ag = cfg.train.augment;
      ag.flip_prob_per_axis = a.value("flip_prob_per_axis", ag.flip_prob_per_axis);
      ag.rot_max = a.value("rot_max", ag.rot_max);
      ag.trans_max = a.value("trans_max", ag.trans_max);
      ag.scale_max_frac = a.value("scale_max_frac", ag.scale_max_frac);
      ag.noise_sigma = a.value("noise_sigma", ag.noise_sigma);
      ag.noise_prob = a.value("noise_prob", ag.noise_prob);
      ag.intensity_offset = a.value("intensity_offset", ag.intensity_offset);
      ag.offset_prob = a.value("offset_prob", ag.offset_prob);
    }
    cfg.train.dose = t.value("dose", cfg.train.dose);
  }
  return cfg;
}

StudyConfig StudyConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("config: bad field in " + path + ": " + e.what());
  }
}

std::string StudyConfig::config_hash() const { return sha256_hex(to_json().dump()); }

// -- manifest --------------------------------------------------------------------

RunManifest::RunManifest(std::string output_dir, std::string config_hash)
    : path_((fs::path(output_dir) / "manifest.json").string()),
      config_hash_(std::move(config_hash)) {
  fs::create_directories(output_dir);
  bool fresh = true;
  if (fs::exists(path_)) {
    std::ifstream is(path_);
    try {
      data_ = json::parse(is);
      fresh = data_.value("config_hash", "") != config_hash_;
    } catch (const json::exception&) {
      fresh = true;
    }
  }
  if (fresh) data_ = json{{"config_hash", config_hash_}, {"stages", json::object()}};
}

bool RunManifest::stage_current(const std::string& stage) const {
  const auto& stages = data_.at("stages");
  if (!stages.contains(stage)) return false;
  const auto& rec = stages.at(stage);
  for (const auto& group : {"inputs", "outputs"}) {
    for (const auto& [path, digest] : rec.at(group).items()) {
      if (!fs::exists(path)) return false;
      if (sha256_file(path) != digest.get<std::string>()) return false;
    }
  }
  return true;
}

void RunManifest::record_stage(const std::string& stage, const std::vector<std::string>& inputs,
                               const std::vector<std::string>& outputs, const json& notes) {
  json rec;
  rec["inputs"] = json::object();
  rec["outputs"] = json::object();
  for (const auto& p : inputs) rec["inputs"][p] = sha256_file(p);
  for (const auto& p : outputs) rec["outputs"][p] = sha256_file(p);
  if (!notes.empty()) rec["notes"] = notes;
  data_["stages"][stage] = rec;
  save();
}

void RunManifest::save() const {
  std::ofstream os(path_);
  os << data_.dump(2) << "\n";
  if (!os) throw FormatError("manifest: failed writing " + path_);
}

// -- shared helpers -----------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream os(path);
  os << content;
  if (!os) throw FormatError("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DependencyError("missing file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

StagePaths stage_paths(const StudyConfig& cfg) {
  const fs::path out(cfg.output_dir);
  return {(out / "cohort").string(),  (out / "preproc").string(), (out / "models").string(),
          (out / "eval").string(),    (out / "sweep").string(),   (out / "report").string()};
}

void apply_runtime_settings(const StudyConfig& cfg) {
  if (cfg.threads > 0) set_num_threads(cfg.threads);
}

namespace {

std::vector<std::string> cohort_volume_paths(const std::string& dir, const CohortIndex& index,
                                             const std::vector<std::string>& names_ses1,
                                             const std::vector<std::string>& names_ses2) {
  std::vector<std::string> paths;
  for (const auto& id : index.subject_ids) {
    for (const auto& n : names_ses1) paths.push_back(volume_path(dir, id, 1, n));
    for (const auto& n : names_ses2) paths.push_back(volume_path(dir, id, 2, n));
  }
  return paths;
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json rigid_to_json(const reg::RigidParams& p) {
  return json{{"rotation_rad", p.rotation}, {"translation_mm", p.translation}};
}

std::string checkpoint_path(const StagePaths& paths, train::TrainMode mode,
                            const std::string& percent) {
  return (fs::path(paths.models_dir) / (train::train_mode_name(mode) + "_d" + percent + ".ckpt"))
      .string();
}

}  // namespace

// -- generate -------------------------------------------------------------------

void run_generate(const StudyConfig& cfg, RunManifest& manifest) {
  if (manifest.stage_current("generate")) {
    std::cout << "[generate] up to date\n";
    return;
  }
  std::cout << "[generate] " << cfg.phantom.n_subjects << " subjects\n";
  phantom::PhantomConfig pcfg = cfg.phantom;
  pcfg.seed = Rng::derive_seed(cfg.seed, 0x9e07);
  const auto cohort = phantom::generate_cohort(pcfg);
  const auto split =
      phantom::split_cohort(pcfg.n_subjects, cfg.split_fractions, Rng::derive_seed(cfg.seed, 0x51));
  const auto paths = stage_paths(cfg);
  const auto written = write_cohort(cohort, split, pcfg, paths.cohort_dir);
  manifest.record_stage("generate", {}, written);
}

// -- preprocess ------------------------------------------------------------------

void run_preprocess(const StudyConfig& cfg, RunManifest& manifest) {
  if (manifest.stage_current("preprocess")) {
    std::cout << "[preprocess] up to date\n";
    return;
  }
  const auto paths = stage_paths(cfg);
  const CohortIndex index = read_cohort_index(paths.cohort_dir);
  std::cout << "[preprocess] " << index.subject_ids.size() << " subjects\n";

  std::vector<std::string> inputs = cohort_volume_paths(paths.cohort_dir, index,
                                                        {"t1_pc", "t1_sd", "mask"},
                                                        {"t1_pc", "t1_sd", "mask"});
  inputs.push_back((fs::path(paths.cohort_dir) / "cohort.json").string());

  std::vector<std::string> outputs;
  std::vector<std::string> skipped;

  for (const auto& id : index.subject_ids) {
    try {
      phantom::SubjectRecord rec = load_subject(paths.cohort_dir, index, id);

      // Resample to the target spacing (identity for native-resolution phantoms).
      for (Volume* v : {&rec.ses01.t1_pc, &rec.ses01.t1_sd, &rec.ses02.t1_pc, &rec.ses02.t1_sd})
        *v = resample_trilinear(*v, cfg.preprocess.target_spacing);

      // Crop box from the ses-01 brain mask, reused for ses-02.
      Volume mask_vol = rec.ses01.t1_pc;  // carries the ses-01 mask
      BoundingBox box = compute_crop_box(mask_vol, cfg.preprocess.crop_margin);
      if (cfg.preprocess.target_dims != Index3{0, 0, 0})
        box = fit_box_to_dims(box, cfg.preprocess.target_dims, rec.ses01.t1_pc.dims);

      rec.ses01.t1_pc = crop(rec.ses01.t1_pc, box);
      rec.ses01.t1_sd = crop(rec.ses01.t1_sd, box);
      rec.ses02.t1_pc = crop(rec.ses02.t1_pc, box);
      rec.ses02.t1_sd = crop(rec.ses02.t1_sd, box);

      // Intra-session alignment: ses-01 SD onto ses-01 PC.
      const auto reg_sd = reg::register_rigid(rec.ses01.t1_sd, rec.ses01.t1_pc, cfg.registration);
      rec.ses01.t1_sd = reg::warp_rigid(rec.ses01.t1_sd, reg_sd.params);

      // Inter-session alignment: ses-02 onto ses-01 PC; one transform for the
      // whole session keeps its internal voxel correspondence.
      const auto reg_sess =
          reg::register_rigid(rec.ses02.t1_pc, rec.ses01.t1_pc, cfg.registration);
      rec.ses02 = reg::apply_rigid_to_session(rec.ses02, reg_sess.params);

      // Joint min-max normalization per session.
      IntensityRange range1, range2;
      auto n1 = joint_minmax_normalize({rec.ses01.t1_pc, rec.ses01.t1_sd}, range1);
      rec.ses01.t1_pc = n1[0];
      rec.ses01.t1_sd = n1[1];
      auto n2 = joint_minmax_normalize({rec.ses02.t1_pc, rec.ses02.t1_sd}, range2);
      rec.ses02.t1_pc = n2[0];
      rec.ses02.t1_sd = n2[1];

      auto w1 = write_session_volumes(rec.ses01, paths.preproc_dir, id, 1);
      auto w2 = write_session_volumes(rec.ses02, paths.preproc_dir, id, 2);
      outputs.insert(outputs.end(), w1.begin(), w1.end());
      outputs.insert(outputs.end(), w2.begin(), w2.end());

      const fs::path sdir = subject_dir(paths.preproc_dir, id);
      const std::string box_path = (sdir / "crop_box.json").string();
      write_json_file(box_path, json{{"min", box.min},
                                     {"max", box.max},
                                     {"margin", cfg.preprocess.crop_margin},
                                     {"source", "ses-01 brain mask, reapplied to ses-02"}});
      outputs.push_back(box_path);

      const std::string xfm_sd_path = (sdir / "ses-01" / "xfm_sd_to_pc.json").string();
      write_json_file(xfm_sd_path,
                      json{{"params", rigid_to_json(reg_sd.params)},
                           {"center_mm", reg::volume_center(rec.ses01.t1_pc)},
                           {"initial_mse", reg_sd.initial_mse},
                           {"final_mse", reg_sd.final_mse}});
      outputs.push_back(xfm_sd_path);

      const std::string xfm_path = (sdir / "ses-02" / "xfm_to_ses01.json").string();
      write_json_file(xfm_path, json{{"params", rigid_to_json(reg_sess.params)},
                                     {"center_mm", reg::volume_center(rec.ses01.t1_pc)},
                                     {"initial_mse", reg_sess.initial_mse},
                                     {"final_mse", reg_sess.final_mse}});
      outputs.push_back(xfm_path);

      for (int session : {1, 2}) {
        const IntensityRange& r = session == 1 ? range1 : range2;
        const std::string norm_path =
            (sdir / (session == 1 ? "ses-01" : "ses-02") / "normalization.json").string();
        write_json_file(norm_path, json{{"min", r.min}, {"max", r.max}});
        outputs.push_back(norm_path);
      }
    } catch (const RegistrationFailure& e) {
      std::cerr << "[preprocess] warning: skipping " << id << ": " << e.what() << "\n";
      skipped.push_back(id);
    }
  }

  // The preprocessed cohort manifest drops skipped subjects.
  json cohort_json = json::parse(read_text_file((fs::path(paths.cohort_dir) / "cohort.json").string()));
  json kept = json::array();
  for (const auto& sj : cohort_json.at("subjects")) {
    const std::string id = sj.at("id").get<std::string>();
    if (std::find(skipped.begin(), skipped.end(), id) == skipped.end()) kept.push_back(sj);
  }
  cohort_json["subjects"] = kept;
  cohort_json["preprocess"] = {{"skipped", skipped},
                               {"crop_margin", cfg.preprocess.crop_margin},
                               {"target_dims", cfg.preprocess.target_dims},
                               {"target_spacing", cfg.preprocess.target_spacing}};
  const std::string manifest_path = (fs::path(paths.preproc_dir) / "cohort.json").string();
  write_json_file(manifest_path, cohort_json);
  outputs.push_back(manifest_path);

  manifest.record_stage("preprocess", inputs, outputs, json{{"skipped", skipped}});
}

// -- simulate-dose ---------------------------------------------------------------

void run_simulate_dose(const StudyConfig& cfg, RunManifest& manifest) {
  if (manifest.stage_current("simulate-dose")) {
    std::cout << "[simulate-dose] up to date\n";
    return;
  }
  const auto paths = stage_paths(cfg);
  const CohortIndex index = read_cohort_index(paths.preproc_dir);

  std::vector<double> levels = cfg.dose_levels;
  if (std::find(levels.begin(), levels.end(), cfg.train.dose) == levels.end())
    levels.push_back(cfg.train.dose);
  const auto schedule = dose::dose_schedule(levels);
  std::cout << "[simulate-dose] " << index.subject_ids.size() << " subjects x "
            << schedule.size() << " levels\n";

  std::vector<std::string> inputs =
      cohort_volume_paths(paths.preproc_dir, index, {}, {"t1_pc", "t1_sd", "mask"});
  inputs.push_back((fs::path(paths.preproc_dir) / "cohort.json").string());

  std::vector<std::string> outputs;
  for (std::size_t si = 0; si < index.subject_ids.size(); ++si) {
    const auto& id = index.subject_ids[si];
    const phantom::SubjectRecord rec = load_subject(paths.preproc_dir, index, id);
    for (const auto& frac : schedule) {
      const int percent_int = static_cast<int>(std::lround(frac.value * 100.0));
      Rng rng(Rng::derive_seed(cfg.seed, 0xD05Eu + static_cast<std::uint64_t>(percent_int), si));
      const Volume ld =
          dose::simulate_low_dose(rec.ses02.t1_pc, rec.ses02.t1_sd, frac, cfg.dose_model, rng);
      const std::string path =
          volume_path(paths.preproc_dir, id, 2, "t1_ld_d" + frac.percent_label());
      write_nifti(ld, path, NiftiDType::kFloat32);
      outputs.push_back(path);
    }
  }

  // Record the simulator parameters in the cohort manifest.
  const std::string manifest_path = (fs::path(paths.preproc_dir) / "cohort.json").string();
  json cohort_json = json::parse(read_text_file(manifest_path));
  json level_list = json::array();
  for (const auto& frac : schedule) level_list.push_back(frac.value);
  cohort_json["dose"] = {{"model",
                          {{"kind", dose::dose_model_kind_name(cfg.dose_model.kind)},
                           {"k", cfg.dose_model.k},
                           {"noise_sigma_ld", cfg.dose_model.noise_sigma_ld}}},
                         {"levels", level_list}};
  write_json_file(manifest_path, cohort_json);
  outputs.push_back(manifest_path);

  manifest.record_stage("simulate-dose", inputs, outputs);
}

// -- train -----------------------------------------------------------------------

std::string run_train(const StudyConfig& cfg, RunManifest& manifest, train::TrainMode mode,
                      dose::DoseFraction dose_fraction) {
  const auto paths = stage_paths(cfg);
  const std::string percent = dose_fraction.percent_label();
  const std::string stage = "train-" + train::train_mode_name(mode) + "-d" + percent;
  const std::string ckpt_path = checkpoint_path(paths, mode, percent);
  if (manifest.stage_current(stage)) {
    std::cout << "[" << stage << "] up to date\n";
    return ckpt_path;
  }
  std::cout << "[" << stage << "] epochs=" << cfg.train.epochs << "\n";

  const CohortIndex index = read_cohort_index(paths.preproc_dir);
  const auto train_recs = load_subjects(paths.preproc_dir, index, SplitKind::kTrain, percent);
  const auto val_recs = load_subjects(paths.preproc_dir, index, SplitKind::kVal, percent);

  train::TrainConfig tcfg = cfg.train;
  tcfg.mode = mode;
  tcfg.dose = dose_fraction.value;
  tcfg.seed = Rng::derive_seed(cfg.seed, 0x7A17u + static_cast<std::uint64_t>(mode == train::TrainMode::kLongitudinal ? 1 : 2),
                               static_cast<std::uint64_t>(std::lround(dose_fraction.value * 100.0)));

  const auto result = train::train(train_recs, val_recs, cfg.vnet, tcfg);

  fs::create_directories(paths.models_dir);
  nn::save_checkpoint(result.model, ckpt_path);

  std::ostringstream curves;
  curves << "epoch,train_loss,val_loss,lr\n";
  for (std::size_t e = 0; e < result.curve.size(); ++e) {
    const auto& row = result.curve[e];
    curves << (e + 1) << ',' << format_double(row.train_loss) << ','
           << format_double(row.val_loss) << ',' << format_double(row.lr) << '\n';
  }
  const std::string curves_path =
      (fs::path(paths.models_dir) / (train::train_mode_name(mode) + "_d" + percent + "_curves.csv"))
          .string();
  write_text_file(curves_path, curves.str());

  json echo = cfg.to_json();
  echo["train"]["mode"] = train::train_mode_name(mode);
  echo["train"]["dose"] = dose_fraction.value;
  echo["train"]["derived_seed"] = tcfg.seed;
  echo["result"] = {{"best_epoch", result.best_epoch + 1},
                    {"best_val_loss", result.best_val_loss}};
  const std::string echo_path =
      (fs::path(paths.models_dir) /
       (train::train_mode_name(mode) + "_d" + percent + "_train_config.json"))
          .string();
  write_json_file(echo_path, echo);

  std::vector<std::string> inputs;
  for (const auto& id : index.subject_ids) {
    const SplitKind k = index.split.at(id);
    if (k == SplitKind::kTest) continue;
    for (const auto& n :
         {std::string("t1_pc"), std::string("t1_sd"), std::string("mask")})
      for (int s : {1, 2}) inputs.push_back(volume_path(paths.preproc_dir, id, s, n));
    inputs.push_back(volume_path(paths.preproc_dir, id, 2, "t1_ld_d" + percent));
  }
  manifest.record_stage(stage, inputs, {ckpt_path, curves_path, echo_path});
  return ckpt_path;
}

// -- evaluate --------------------------------------------------------------------

EvaluationBundle evaluate_cohort(const StudyConfig& cfg, const std::string& preproc_dir,
                                 const CohortIndex& index, const nn::VNet& longitudinal,
                                 const nn::VNet& single_session, dose::DoseFraction dose_fraction,
                                 std::map<std::string, Volume>* predictions_longitudinal,
                                 std::map<std::string, Volume>* predictions_single) {
  EvaluationBundle bundle;
  const std::string percent = dose_fraction.percent_label();
  for (const auto& id : index.subject_ids) {
    if (index.split.at(id) != SplitKind::kTest) continue;
    const phantom::SubjectRecord rec = load_subject(preproc_dir, index, id, percent);
    const auto sample_long = train::make_sample(rec, train::TrainMode::kLongitudinal);
    const auto sample_single = train::make_sample(rec, train::TrainMode::kSingleSession);

    const Volume pred_long = nn::vnet_forward(longitudinal, sample_long.input);
    const Volume pred_single = nn::vnet_forward(single_session, sample_single.input);
    if (predictions_longitudinal) (*predictions_longitudinal)[id] = pred_long;
    if (predictions_single) (*predictions_single)[id] = pred_single;

    const Volume& sd = rec.ses02.t1_sd;
    const std::vector<std::uint8_t>* mask =
        cfg.masked_metrics && sd.mask ? &*sd.mask : nullptr;

    auto row_for = [&](eval::ModelTag tag, const Volume& pred) {
      eval::MetricsRow row;
      row.subject_id = id;
      row.model_tag = tag;
      row.dose = dose_fraction.value;
      row.mse = eval::mse_metric(pred, sd, mask);
      row.psnr = eval::psnr(pred, sd, mask);
      row.ssim = eval::ssim(pred, sd, mask);
      return row;
    };
    bundle.ld_rows.push_back(row_for(eval::ModelTag::kT1Ld, *rec.ses02.t1_ld));
    bundle.single_rows.push_back(row_for(eval::ModelTag::kSingleSession, pred_single));
    bundle.longitudinal_rows.push_back(row_for(eval::ModelTag::kLongitudinal, pred_long));
  }
  if (bundle.ld_rows.empty()) throw InvalidArgument("evaluate: empty test split");
  return bundle;
}

std::string run_evaluate(const StudyConfig& cfg, RunManifest& manifest,
                         dose::DoseFraction dose_fraction) {
  const auto paths = stage_paths(cfg);
  const std::string percent = dose_fraction.percent_label();
  const std::string stage = "evaluate-d" + percent;
  const std::string csv_path =
      (fs::path(paths.eval_dir) / ("metrics_d" + percent + ".csv")).string();
  if (manifest.stage_current(stage)) {
    std::cout << "[" << stage << "] up to date\n";
    return csv_path;
  }
  std::cout << "[" << stage << "]\n";

  const std::string ckpt_long =
      checkpoint_path(paths, train::TrainMode::kLongitudinal, percent);
  const std::string ckpt_single =
      checkpoint_path(paths, train::TrainMode::kSingleSession, percent);
  for (const auto& p : {ckpt_long, ckpt_single})
    if (!fs::exists(p))
      throw DependencyError("evaluate: missing checkpoint " + p + " (run the train stage)");

  const nn::VNet longitudinal = nn::load_checkpoint(ckpt_long);
  const nn::VNet single_session = nn::load_checkpoint(ckpt_single);
  const CohortIndex index = read_cohort_index(paths.preproc_dir);

  std::map<std::string, Volume> preds_long, preds_single;
  const EvaluationBundle bundle = evaluate_cohort(cfg, paths.preproc_dir, index, longitudinal,
                                                  single_session, dose_fraction, &preds_long,
                                                  &preds_single);

  std::vector<std::string> outputs;
  std::ostringstream csv;
  csv << metrics_csv_header();
  for (std::size_t i = 0; i < bundle.ld_rows.size(); ++i) {
    csv << metrics_row_csv(bundle.ld_rows[i]);
    csv << metrics_row_csv(bundle.single_rows[i]);
    csv << metrics_row_csv(bundle.longitudinal_rows[i]);
  }
  write_text_file(csv_path, csv.str());
  outputs.push_back(csv_path);

  std::vector<eval::ComparisonReport> comparisons;
  json comparison_json = json::array();
  for (eval::Metric m : {eval::Metric::kMse, eval::Metric::kPsnr, eval::Metric::kSsim}) {
    const auto rep = eval::compare_models(bundle.single_rows, bundle.longitudinal_rows, m);
    comparisons.push_back(rep);
    comparison_json.push_back(comparison_to_json(rep));
  }
  const std::string cmp_path =
      (fs::path(paths.eval_dir) / ("comparison_d" + percent + ".json")).string();
  write_json_file(cmp_path, comparison_json);
  outputs.push_back(cmp_path);

  const std::string table = render_comparison_table(bundle.ld_rows, bundle.single_rows,
                                                    bundle.longitudinal_rows, comparisons);
  const std::string table_path =
      (fs::path(paths.eval_dir) / ("table_d" + percent + ".txt")).string();
  write_text_file(table_path, table);
  outputs.push_back(table_path);

  const fs::path pred_dir = fs::path(paths.eval_dir) / "pred";
  fs::create_directories(pred_dir);
  for (const auto& [id, vol] : preds_long) {
    const std::string p = (pred_dir / (id + "_longitudinal_d" + percent + ".nii.gz")).string();
    write_nifti(vol, p, NiftiDType::kFloat32);
    outputs.push_back(p);
  }
  for (const auto& [id, vol] : preds_single) {
    const std::string p = (pred_dir / (id + "_single_session_d" + percent + ".nii.gz")).string();
    write_nifti(vol, p, NiftiDType::kFloat32);
    outputs.push_back(p);
  }

  std::vector<std::string> inputs = {ckpt_long, ckpt_single};
  for (const auto& id : index.subject_ids) {
    if (index.split.at(id) != SplitKind::kTest) continue;
    for (int s : {1, 2})
      for (const auto& n : {std::string("t1_pc"), std::string("t1_sd"), std::string("mask")})
        inputs.push_back(volume_path(paths.preproc_dir, id, s, n));
    inputs.push_back(volume_path(paths.preproc_dir, id, 2, "t1_ld_d" + percent));
  }
  manifest.record_stage(stage, inputs, outputs);
  return csv_path;
}

// -- dose sweep ------------------------------------------------------------------

void run_dose_sweep(const StudyConfig& cfg, RunManifest& manifest) {
  const auto paths = stage_paths(cfg);
  const auto schedule = dose::dose_schedule(cfg.dose_levels);

  std::vector<std::string> eval_csvs;
  for (const auto& frac : schedule) {
    run_train(cfg, manifest, train::TrainMode::kSingleSession, frac);
    run_train(cfg, manifest, train::TrainMode::kLongitudinal, frac);
    eval_csvs.push_back(run_evaluate(cfg, manifest, frac));
  }

  const std::string stage = "dose-sweep";
  const std::string sweep_csv_path = (fs::path(paths.sweep_dir) / "sweep.csv").string();
  const std::string slopes_path = (fs::path(paths.sweep_dir) / "slopes.json").string();
  if (manifest.stage_current(stage)) {
    std::cout << "[dose-sweep] up to date\n";
    return;
  }
  std::cout << "[dose-sweep] aggregating " << schedule.size() << " levels\n";

  // model -> metric -> per-dose means/sds, in schedule order.
  std::map<std::string, std::map<std::string, std::vector<std::array<double, 2>>>> agg;
  std::vector<double> doses;
  for (std::size_t di = 0; di < schedule.size(); ++di) {
    doses.push_back(schedule[di].value);
    const auto rows = parse_metrics_csv(read_text_file(eval_csvs[di]));
    for (eval::ModelTag tag : {eval::ModelTag::kSingleSession, eval::ModelTag::kLongitudinal}) {
      for (eval::Metric m : {eval::Metric::kMse, eval::Metric::kPsnr, eval::Metric::kSsim}) {
        std::vector<double> values;
        for (const auto& r : rows)
          if (r.model_tag == tag) values.push_back(r.metric(m));
        agg[eval::model_tag_name(tag)][eval::metric_name(m)].push_back(
            {stats::mean(values), stats::sample_sd(values)});
      }
    }
  }

  std::ostringstream csv;
  csv << "model,dose,metric,mean,sd\n";
  json slopes = json::array();
  for (const auto& [model, metrics] : agg) {
    for (const auto& [metric, rows] : metrics) {
      std::vector<double> means;
      for (std::size_t di = 0; di < rows.size(); ++di) {
        csv << model << ',' << format_double(doses[di]) << ',' << metric << ','
            << format_double(rows[di][0]) << ',' << format_double(rows[di][1]) << '\n';
        means.push_back(rows[di][0]);
      }
      const auto fit = stats::slope_regression(doses, means);
      slopes.push_back(json{{"model", model},
                            {"metric", metric},
                            {"slope", fit.slope},
                            {"intercept", fit.intercept},
                            {"p_slope", fit.p_slope},
                            {"exact_fit", fit.exact_fit}});
    }
  }
  write_text_file(sweep_csv_path, csv.str());
  write_json_file(slopes_path, slopes);

  manifest.record_stage(stage, eval_csvs, {sweep_csv_path, slopes_path});
}

// -- report ----------------------------------------------------------------------

void run_report(const StudyConfig& cfg, RunManifest& manifest) {
  const auto paths = stage_paths(cfg);
  const std::string percent = dose::DoseFraction::of(cfg.train.dose).percent_label();
  const std::string metrics_path =
      (fs::path(paths.eval_dir) / ("metrics_d" + percent + ".csv")).string();
  if (!fs::exists(metrics_path))
    throw DependencyError("report: missing " + metrics_path + " (run the evaluate stage)");

  const std::string stage = "report";
  if (manifest.stage_current(stage)) {
    std::cout << "[report] up to date\n";
    return;
  }
  std::cout << "[report]\n";
  fs::create_directories(paths.report_dir);

  const auto rows = parse_metrics_csv(read_text_file(metrics_path));
  std::vector<eval::MetricsRow> ld_rows, single_rows, long_rows;
  for (const auto& r : rows) {
    if (r.model_tag == eval::ModelTag::kT1Ld) ld_rows.push_back(r);
    if (r.model_tag == eval::ModelTag::kSingleSession) single_rows.push_back(r);
    if (r.model_tag == eval::ModelTag::kLongitudinal) long_rows.push_back(r);
  }

  std::vector<std::string> outputs;
  std::vector<std::string> inputs = {metrics_path};

  std::vector<eval::ComparisonReport> comparisons;
  for (eval::Metric m : {eval::Metric::kMse, eval::Metric::kPsnr, eval::Metric::kSsim})
    comparisons.push_back(eval::compare_models(single_rows, long_rows, m));
  const std::string table_path = (fs::path(paths.report_dir) / "table.txt").string();
  write_text_file(table_path, render_comparison_table(ld_rows, single_rows, long_rows, comparisons));
  outputs.push_back(table_path);

  // Boxplots per metric.
  const std::vector<std::string> labels = {"t1_ld", "single_session", "longitudinal"};
  for (eval::Metric m : {eval::Metric::kMse, eval::Metric::kPsnr, eval::Metric::kSsim}) {
    std::vector<BoxStats> bstats;
    for (const auto* rs : {&ld_rows, &single_rows, &long_rows}) {
      std::vector<double> values;
      for (const auto& r : *rs) values.push_back(r.metric(m));
      bstats.push_back(box_stats(values));
    }
    const std::string base =
        (fs::path(paths.report_dir) / ("boxplot_" + eval::metric_name(m))).string();
    write_text_file(base + ".csv", boxplot_csv(labels, bstats));
    write_text_file(base + ".svg", boxplot_svg(eval::metric_name(m), labels, bstats));
    outputs.push_back(base + ".csv");
    outputs.push_back(base + ".svg");
  }

  // Dose-level line plots, when a sweep has been run.
  const std::string sweep_csv_path = (fs::path(paths.sweep_dir) / "sweep.csv").string();
  if (fs::exists(sweep_csv_path)) {
    inputs.push_back(sweep_csv_path);
    std::map<std::string, std::map<std::string, std::map<double, std::array<double, 2>>>> sweep;
    std::istringstream is(read_text_file(sweep_csv_path));
    std::string line;
    std::getline(is, line);  // header
    std::set<double> dose_set;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string model, metric, field;
      double d, mean, sd;
      std::getline(ls, model, ',');
      std::getline(ls, field, ',');
      d = std::stod(field);
      std::getline(ls, metric, ',');
      std::getline(ls, field, ',');
      mean = std::stod(field);
      std::getline(ls, field, ',');
      sd = std::stod(field);
      sweep[metric][model][d] = {mean, sd};
      dose_set.insert(d);
    }
    const std::vector<double> doses(dose_set.begin(), dose_set.end());
    for (const auto& [metric, models] : sweep) {
      std::vector<DoseSeries> series;
      for (const auto& [model, by_dose] : models) {
        DoseSeries s;
        s.model = model;
        for (double d : doses) {
          s.mean.push_back(by_dose.at(d)[0]);
          s.sd.push_back(by_dose.at(d)[1]);
        }
        s.fit = stats::slope_regression(doses, s.mean);
        series.push_back(s);
      }
      const std::string p = (fs::path(paths.report_dir) / ("dose_" + metric + ".svg")).string();
      write_text_file(p, dose_lines_svg(metric + " vs dose", doses, series));
      outputs.push_back(p);
    }
  } else {
    std::cout << "[report] no sweep.csv; skipping dose-level plots\n";
  }

  // Mid-axial slice panels for the test subjects at the default dose.
  const CohortIndex index = read_cohort_index(paths.preproc_dir);
  for (const auto& id : index.subject_ids) {
    if (index.split.at(id) != SplitKind::kTest) continue;
    const phantom::SubjectRecord rec = load_subject(paths.preproc_dir, index, id, percent);
    const std::string pred_path =
        (fs::path(paths.eval_dir) / "pred" / (id + "_longitudinal_d" + percent + ".nii.gz"))
            .string();
    if (!fs::exists(pred_path))
      throw DependencyError("report: missing prediction " + pred_path);
    const Volume pred = read_nifti(pred_path);
    const std::string panel_path =
        (fs::path(paths.report_dir) / ("slices_" + id + ".pgm")).string();
    write_slice_panel_pgm(panel_path, rec.ses02.t1_pc, *rec.ses02.t1_ld, pred, rec.ses02.t1_sd);
    outputs.push_back(panel_path);
    inputs.push_back(pred_path);
  }

  manifest.record_stage(stage, inputs, outputs);
}

}  // namespace lvce::study
