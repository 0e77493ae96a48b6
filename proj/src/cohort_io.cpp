#include "lvce/cohort_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lvce/nifti.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lvce::study {

std::string split_kind_name(SplitKind k) {
  switch (k) {
    case SplitKind::kTrain:
      return "train";
    case SplitKind::kVal:
      return "val";
    case SplitKind::kTest:
      return "test";
  }
  return "?";
}

SplitKind split_kind_from_name(const std::string& name) {
  if (name == "train") return SplitKind::kTrain;
  if (name == "val") return SplitKind::kVal;
  if (name == "test") return SplitKind::kTest;
  throw InvalidArgument("unknown split kind: " + name);
}

std::string subject_dir(const std::string& dir, const std::string& subject_id) {
  return (fs::path(dir) / subject_id).string();
}

std::string volume_path(const std::string& dir, const std::string& subject_id, int session,
                        const std::string& name) {
  const std::string ses = session == 1 ? "ses-01" : "ses-02";
  return (fs::path(dir) / subject_id / ses / (name + ".nii.gz")).string();
}

namespace {

Volume mask_to_volume(const Volume& like) {
  Volume m(like.dims, like.spacing, like.origin);
  if (!like.mask) throw InvalidArgument("cohort: session volume has no mask to write");
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = (*like.mask)[i] ? 1.0 : 0.0;
  return m;
}

void attach_mask(Volume& vol, const Volume& mask_vol) {
  if (vol.dims != mask_vol.dims) throw FormatError("cohort: mask dims do not match volume");
  vol.mask.emplace(vol.size());
  for (std::size_t i = 0; i < vol.size(); ++i) (*vol.mask)[i] = mask_vol.data[i] != 0.0 ? 1 : 0;
}

}  // namespace

std::vector<std::string> write_session_volumes(const phantom::Session& sess,
                                               const std::string& dir,
                                               const std::string& subject_id, int session) {
  const std::string ses = session == 1 ? "ses-01" : "ses-02";
  const fs::path base = fs::path(dir) / subject_id / ses;
  fs::create_directories(base);
  std::vector<std::string> written;
  auto write = [&](const Volume& v, const std::string& name, NiftiDType dtype) {
    const std::string path = (base / (name + ".nii.gz")).string();
    write_nifti(v, path, dtype);
    written.push_back(path);
  };
  write(sess.t1_pc, "t1_pc", NiftiDType::kFloat32);
  write(sess.t1_sd, "t1_sd", NiftiDType::kFloat32);
  write(mask_to_volume(sess.t1_pc), "mask", NiftiDType::kUint8);
  return written;
}

std::vector<std::string> write_cohort(const std::vector<phantom::SubjectRecord>& records,
                                      const phantom::CohortSplit& split,
                                      const phantom::PhantomConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  std::vector<std::string> written;

  std::map<int, SplitKind> split_of;
  for (int i : split.train) split_of[i] = SplitKind::kTrain;
  for (int i : split.val) split_of[i] = SplitKind::kVal;
  for (int i : split.test) split_of[i] = SplitKind::kTest;

  json subjects = json::array();
  for (std::size_t s = 0; s < records.size(); ++s) {
    const auto& rec = records[s];
    for (int session : {1, 2}) {
      const auto& sess = session == 1 ? rec.ses01 : rec.ses02;
      auto paths = write_session_volumes(sess, dir, rec.subject_id, session);
      written.insert(written.end(), paths.begin(), paths.end());
    }
    json j;
    j["id"] = rec.subject_id;
    j["evolution"] = phantom::evolution_name(rec.evolution_label);
    j["misalignment"] = {{"rotation_rad", rec.true_misalignment.rotation},
                         {"translation_mm", rec.true_misalignment.translation}};
    const auto it = split_of.find(static_cast<int>(s));
    j["split"] = split_kind_name(it == split_of.end() ? SplitKind::kTrain : it->second);
    subjects.push_back(j);
  }

  json manifest;
  manifest["subjects"] = subjects;
  manifest["phantom"] = {{"dims", cfg.dims},
                         {"n_subjects", cfg.n_subjects},
                         {"lesion_evolution_mix", cfg.lesion_evolution_mix},
                         {"enhancement_gain", cfg.enhancement_gain},
                         {"misalignment_rot_max", cfg.misalignment_rot_max},
                         {"misalignment_trans_max", cfg.misalignment_trans_max},
                         {"noise_sigma", cfg.noise_sigma},
                         {"seed", cfg.seed}};
  manifest["provenance"] =
      "synthetic phantom cohort; geometry and intensity statistics are free modelling choices, "
      "not estimates from any clinical dataset";

  const std::string manifest_path = (fs::path(dir) / "cohort.json").string();
  std::ofstream os(manifest_path);
  os << manifest.dump(2) << "\n";
  if (!os) throw FormatError("cohort: failed writing " + manifest_path);
  written.push_back(manifest_path);
  return written;
}

CohortIndex read_cohort_index(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "cohort.json").string();
  std::ifstream is(manifest_path);
  if (!is) throw DependencyError("cohort: missing " + manifest_path + " (run generate first)");
  json manifest = json::parse(is, nullptr, true);

  CohortIndex index;
  for (const auto& j : manifest.at("subjects")) {
    const std::string id = j.at("id").get<std::string>();
    index.subject_ids.push_back(id);
    index.split[id] = split_kind_from_name(j.at("split").get<std::string>());
    index.evolution[id] = phantom::evolution_from_name(j.at("evolution").get<std::string>());
    reg::RigidParams params;
    params.rotation = j.at("misalignment").at("rotation_rad").get<Real3>();
    params.translation = j.at("misalignment").at("translation_mm").get<Real3>();
    index.true_misalignment[id] = params;
  }
  return index;
}

phantom::SubjectRecord load_subject(const std::string& dir, const CohortIndex& index,
                                    const std::string& subject_id,
                                    const std::string& dose_percent) {
  phantom::SubjectRecord rec;
  rec.subject_id = subject_id;
  rec.evolution_label = index.evolution.at(subject_id);
  rec.true_misalignment = index.true_misalignment.at(subject_id);
  for (int session : {1, 2}) {
    auto& sess = session == 1 ? rec.ses01 : rec.ses02;
    sess.t1_pc = read_nifti(volume_path(dir, subject_id, session, "t1_pc"));
    sess.t1_sd = read_nifti(volume_path(dir, subject_id, session, "t1_sd"));
    const Volume mask_vol = read_nifti(volume_path(dir, subject_id, session, "mask"));
    attach_mask(sess.t1_pc, mask_vol);
    attach_mask(sess.t1_sd, mask_vol);
    if (session == 2 && !dose_percent.empty()) {
      const std::string ld_path = volume_path(dir, subject_id, 2, "t1_ld_d" + dose_percent);
      if (!fs::exists(ld_path))
        throw DependencyError("cohort: missing " + ld_path + " (run simulate-dose first)");
      Volume ld = read_nifti(ld_path);
      attach_mask(ld, mask_vol);
      sess.t1_ld = std::move(ld);
    }
  }
  return rec;
}

std::vector<phantom::SubjectRecord> load_subjects(const std::string& dir,
                                                  const CohortIndex& index, SplitKind which,
                                                  const std::string& dose_percent) {
  std::vector<phantom::SubjectRecord> out;
  for (const auto& id : index.subject_ids) {
    if (index.split.at(id) != which) continue;
    out.push_back(load_subject(dir, index, id, dose_percent));
  }
  return out;
}

}  // namespace lvce::study
