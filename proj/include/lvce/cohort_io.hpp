#pragma once

#include <map>
#include <string>
#include <vector>

#include "lvce/dose.hpp"
#include "lvce/phantom.hpp"
#include "lvce/rigid.hpp"

namespace lvce::study {

enum class SplitKind { kTrain, kVal, kTest };
std::string split_kind_name(SplitKind k);
SplitKind split_kind_from_name(const std::string& name);

/// Cohort layout on disk:
///   <dir>/sub-XXX/ses-0Y/{t1_pc,t1_sd,mask}.nii.gz
///   <dir>/sub-XXX/ses-02/t1_ld_d<percent>.nii.gz   (after dose simulation)
///   <dir>/cohort.json
struct CohortIndex {
  std::vector<std::string> subject_ids;
  std::map<std::string, SplitKind> split;
  std::map<std::string, phantom::Evolution> evolution;
  std::map<std::string, reg::RigidParams> true_misalignment;
};

/// Writes volumes and cohort.json; returns every path written (manifest fodder).
std::vector<std::string> write_cohort(const std::vector<phantom::SubjectRecord>& records,
                                      const phantom::CohortSplit& split,
                                      const phantom::PhantomConfig& cfg, const std::string& dir);

CohortIndex read_cohort_index(const std::string& dir);

/// Loads one subject's volumes. When dose_percent is non-empty the matching
/// t1_ld_d<percent>.nii.gz is attached to ses-02. Brain masks are read from
/// the mask images and attached to every volume of the session.
phantom::SubjectRecord load_subject(const std::string& dir, const CohortIndex& index,
                                    const std::string& subject_id,
                                    const std::string& dose_percent = "");

std::vector<phantom::SubjectRecord> load_subjects(const std::string& dir,
                                                  const CohortIndex& index, SplitKind which,
                                                  const std::string& dose_percent = "");

/// Paths for one subject inside a cohort directory.
std::string subject_dir(const std::string& dir, const std::string& subject_id);
std::string volume_path(const std::string& dir, const std::string& subject_id, int session,
                        const std::string& name);

/// Writes data (and the session mask, if present on the volume) for one
/// subject/session; returns written paths.
std::vector<std::string> write_session_volumes(const phantom::Session& sess,
                                               const std::string& dir,
                                               const std::string& subject_id, int session);

}  // namespace lvce::study
