#pragma once

#include <string>
#include <vector>

#include "lvce/optim.hpp"
#include "lvce/phantom.hpp"
#include "lvce/vnet.hpp"
#include "lvce/volume.hpp"

namespace lvce::train {

struct AugmentConfig {
  double flip_prob_per_axis = 0.5;
  double rot_max = 0.05;          // radians per axis
  double trans_max = 5.0;         // voxels per axis
  double scale_max_frac = 0.10;   // uniform scaling within +/- this fraction
  double noise_sigma = 0.01;
  double noise_prob = 0.3;
  double intensity_offset = 0.1;  // shift drawn uniformly in +/- this bound
  double offset_prob = 0.5;

  void validate() const;
};

/// The transform drawn for one sample. Spatial parts apply to inputs and
/// target alike; intensity parts apply to the input channels only.
struct AugmentRecord {
  std::array<bool, 3> flipped{false, false, false};
  Real3 rotation{0.0, 0.0, 0.0};
  Real3 translation{0.0, 0.0, 0.0};
  double scale = 1.0;
  bool noise_applied = false;
  bool offset_applied = false;
  double offset = 0.0;
};

struct TrainSample {
  MultiChannelVolume input;
  Volume target;
  std::string subject_id;
};

AugmentRecord draw_augment(const AugmentConfig& cfg, Rng& rng);

/// Flips + affine from the record, applied identically to every input
/// channel and to the target (replayable for verification).
TrainSample apply_spatial_augment(const TrainSample& sample, const AugmentRecord& record);

/// Draws one transform and applies it: spatial to inputs and target,
/// noise/shift to inputs only. Deterministic for a fixed rng state.
TrainSample augment_sample(const TrainSample& sample, const AugmentConfig& cfg, Rng& rng,
                           AugmentRecord* record_out = nullptr);

enum class TrainMode { kLongitudinal, kSingleSession };
std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 500;
  int batch_size = 1;  // the pipeline is defined for batch size 1
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  PlateauConfig scheduler;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kLongitudinal;
  double dose = 0.25;

  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate in effect during the epoch
};

struct TrainResult {
  nn::VNet model;  // best-validation snapshot
  std::vector<EpochStats> curve;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

/// Builds network inputs from a preprocessed subject: longitudinal
/// [ses01-PC, ses01-SD, ses02-PC, ses02-LD], single-session
/// [ses02-PC, ses02-LD]; the target is ses02-SD. Requires t1_ld present.
TrainSample make_sample(const phantom::SubjectRecord& record, TrainMode mode);
std::vector<TrainSample> make_samples(const std::vector<phantom::SubjectRecord>& records,
                                      TrainMode mode);

/// Mean MSE of the model over samples, no augmentation. Used for validation.
double mean_mse_loss(const nn::VNet& model, const std::vector<TrainSample>& samples);

/// Full training run: Adam (batch size 1), per-epoch seeded shuffling,
/// augmentation on training samples only, plateau scheduling on the
/// validation loss, best-validation checkpointing. Bitwise deterministic for
/// fixed (config, cohort).
TrainResult train(const std::vector<phantom::SubjectRecord>& train_cohort,
                  const std::vector<phantom::SubjectRecord>& val_cohort, nn::VNetConfig arch,
                  const TrainConfig& cfg);

}  // namespace lvce::train
