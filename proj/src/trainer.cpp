#include "lvce/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lvce::train {

void AugmentConfig::validate() const {
  for (double p : {flip_prob_per_axis, noise_prob, offset_prob})
    if (p < 0.0 || p > 1.0) throw InvalidArgument("AugmentConfig: probabilities must be in [0,1]");
  for (double b : {rot_max, trans_max, scale_max_frac, noise_sigma, intensity_offset})
    if (b < 0.0) throw InvalidArgument("AugmentConfig: bounds must be non-negative");
  if (scale_max_frac >= 1.0) throw InvalidArgument("AugmentConfig: scale_max_frac must be < 1");
}

AugmentRecord draw_augment(const AugmentConfig& cfg, Rng& rng) {
  AugmentRecord rec;
  for (int a = 0; a < 3; ++a) rec.flipped[static_cast<std::size_t>(a)] = rng.bernoulli(cfg.flip_prob_per_axis);
  for (int a = 0; a < 3; ++a) rec.rotation[a] = rng.uniform(-cfg.rot_max, cfg.rot_max);
  for (int a = 0; a < 3; ++a) rec.translation[a] = rng.uniform(-cfg.trans_max, cfg.trans_max);
  rec.scale = rng.uniform(1.0 - cfg.scale_max_frac, 1.0 + cfg.scale_max_frac);
  rec.noise_applied = rng.bernoulli(cfg.noise_prob) && cfg.noise_sigma > 0.0;
  rec.offset_applied = rng.bernoulli(cfg.offset_prob);
  rec.offset = rng.uniform(-cfg.intensity_offset, cfg.intensity_offset);
  if (!rec.offset_applied || cfg.intensity_offset == 0.0) {
    rec.offset_applied = false;
    rec.offset = 0.0;
  }
  return rec;
}

namespace {

Volume spatial_transform(const Volume& vol, const AugmentRecord& rec) {
  Volume out = vol;
  for (int a = 0; a < 3; ++a)
    if (rec.flipped[static_cast<std::size_t>(a)]) out = flip(out, a);
  const bool affine_identity = rec.rotation == Real3{0.0, 0.0, 0.0} &&
                               rec.translation == Real3{0.0, 0.0, 0.0} && rec.scale == 1.0;
  if (!affine_identity) out = apply_affine(out, rec.rotation, rec.translation, rec.scale);
  return out;
}

}  // namespace

TrainSample apply_spatial_augment(const TrainSample& sample, const AugmentRecord& rec) {
  TrainSample out = sample;
  for (auto& ch : out.input.channels) ch = spatial_transform(ch, rec);
  out.target = spatial_transform(out.target, rec);
  return out;
}

TrainSample augment_sample(const TrainSample& sample, const AugmentConfig& cfg, Rng& rng,
                           AugmentRecord* record_out) {
  cfg.validate();
  const AugmentRecord rec = draw_augment(cfg, rng);
  TrainSample out = apply_spatial_augment(sample, rec);
  for (auto& ch : out.input.channels) {
    if (rec.noise_applied) ch = add_gaussian_noise(ch, cfg.noise_sigma, rng);
    if (rec.offset_applied) ch = shift_intensity(ch, rec.offset);
  }
  if (record_out) *record_out = rec;
  return out;
}

std::string train_mode_name(TrainMode mode) {
  return mode == TrainMode::kLongitudinal ? "longitudinal" : "single_session";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "longitudinal") return TrainMode::kLongitudinal;
  if (name == "single_session") return TrainMode::kSingleSession;
  throw InvalidArgument("unknown train mode: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
  if (batch_size != 1) throw InvalidArgument("TrainConfig: only batch size 1 is supported");
  if (!(lr > 0.0)) throw InvalidArgument("TrainConfig: lr must be positive");
  scheduler.validate();
  augment.validate();
  if (!(dose >= 0.0 && dose <= 1.0)) throw InvalidArgument("TrainConfig: dose outside [0, 1]");
}

TrainSample make_sample(const phantom::SubjectRecord& record, TrainMode mode) {
  if (!record.ses02.t1_ld)
    throw DependencyError("make_sample: subject " + record.subject_id +
                          " has no simulated low-dose image (run the dose stage first)");
  TrainSample s;
  s.subject_id = record.subject_id;
  if (mode == TrainMode::kLongitudinal) {
    s.input = stack_channels(
        {record.ses01.t1_pc, record.ses01.t1_sd, record.ses02.t1_pc, *record.ses02.t1_ld},
        ChannelOrder::kLongitudinal);
  } else {
    s.input = stack_channels({record.ses02.t1_pc, *record.ses02.t1_ld},
                             ChannelOrder::kSingleSession);
  }
  s.target = record.ses02.t1_sd;
  return s;
}

std::vector<TrainSample> make_samples(const std::vector<phantom::SubjectRecord>& records,
                                      TrainMode mode) {
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_sample(r, mode));
  return out;
}

double mean_mse_loss(const nn::VNet& model, const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw InvalidArgument("mean_mse_loss: no samples");
  double acc = 0.0;
  for (const auto& s : samples) {
    const nn::Tensor pred = model.forward(nn::to_tensor(s.input));
    const nn::Tensor loss = nn::mse_loss(pred, nn::to_tensor(s.target));
    acc += loss.data()[0];
  }
  return acc / static_cast<double>(samples.size());
}

TrainResult train(const std::vector<phantom::SubjectRecord>& train_cohort,
                  const std::vector<phantom::SubjectRecord>& val_cohort, nn::VNetConfig arch,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_cohort.empty()) throw InvalidArgument("train: empty training split");
  if (val_cohort.empty()) throw InvalidArgument("train: empty validation split");

  arch.in_channels = cfg.mode == TrainMode::kLongitudinal ? 4 : 2;
  arch.validate();

  const std::vector<TrainSample> train_samples = make_samples(train_cohort, cfg.mode);
  const std::vector<TrainSample> val_samples = make_samples(val_cohort, cfg.mode);

  nn::VNet model(arch, Rng::derive_seed(cfg.seed, 0x1217));
  Adam adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  PlateauScheduler sched(cfg.lr, cfg.scheduler);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  const std::size_t n_train = train_samples.size();
  std::vector<std::size_t> order(n_train);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double epoch_lr = sched.lr();

    std::iota(order.begin(), order.end(), 0u);
    Rng shuffle_rng(Rng::derive_seed(cfg.seed, 0xE90c, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n_train - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.uniform_index(i + 1);
      std::swap(order[i], order[j]);
    }

    double train_acc = 0.0;
    for (std::size_t si : order) {
      // One rng stream per (epoch, sample), so the schedule of draws never
      // depends on visit order.
      Rng aug_rng(Rng::derive_seed(cfg.seed, 0xA000u + static_cast<std::uint64_t>(epoch), si));
      const TrainSample aug = augment_sample(train_samples[si], cfg.augment, aug_rng);

      for (auto& [name, t] : model.parameters()) t.zero_grad();
      const nn::Tensor pred = model.forward(nn::to_tensor(aug.input));
      const nn::Tensor loss = nn::mse_loss(pred, nn::to_tensor(aug.target));
      const double loss_value = loss.data()[0];
      if (!std::isfinite(loss_value))
        throw TrainingDivergence("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", subject " + aug.subject_id);
      loss.backward();
      adam.step(model.parameters(), epoch_lr);
      train_acc += loss_value;
    }

    const double train_loss = train_acc / static_cast<double>(n_train);
    const double val_loss = mean_mse_loss(model, val_samples);
    if (!std::isfinite(val_loss))
      throw TrainingDivergence("train: non-finite validation loss at epoch " +
                               std::to_string(epoch));

    result.curve.push_back({train_loss, val_loss, epoch_lr});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.model = model.clone();
    }
    sched.update(val_loss);
  }
  return result;
}

}  // namespace lvce::train
