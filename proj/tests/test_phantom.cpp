#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "lvce/phantom.hpp"
#include "lvce/rigid.hpp"

using namespace lvce;
using namespace lvce::phantom;

namespace {

PhantomConfig test_config(std::uint64_t seed = 1) {
  PhantomConfig cfg;
  cfg.dims = {24, 24, 24};
  cfg.n_subjects = 8;
  cfg.seed = seed;
  return cfg;
}

std::size_t support_count(const Volume& v) {
  std::size_t n = 0;
  for (double x : v.data) n += x > 0.0;
  return n;
}

}  // namespace

TEST_CASE("generation is bitwise deterministic in (seed, index)") {
  const PhantomConfig cfg = test_config(77);
  const auto a = generate_subject(cfg, 3);
  const auto b = generate_subject(cfg, 3);
  CHECK(a.ses01.t1_pc.data == b.ses01.t1_pc.data);
  CHECK(a.ses01.t1_sd.data == b.ses01.t1_sd.data);
  CHECK(a.ses02.t1_pc.data == b.ses02.t1_pc.data);
  CHECK(a.ses02.t1_sd.data == b.ses02.t1_sd.data);
  CHECK(*a.ses02.t1_pc.mask == *b.ses02.t1_pc.mask);
  CHECK(a.true_misalignment.rotation == b.true_misalignment.rotation);
  CHECK(a.evolution_label == b.evolution_label);

  const auto c = generate_subject(cfg, 4);
  CHECK(a.ses01.t1_pc.data != c.ses01.t1_pc.data);
}

TEST_CASE("zero enhancement gain makes SD equal PC before noise") {
  PhantomConfig cfg = test_config(5);
  cfg.enhancement_gain = 0.0;
  cfg.noise_sigma = 0.0;
  const auto rec = generate_subject(cfg, 0);
  CHECK(rec.ses01.t1_sd.data == rec.ses01.t1_pc.data);
  CHECK(rec.ses02.t1_sd.data == rec.ses02.t1_pc.data);
}

TEST_CASE("SD >= PC inside enhancing regions before noise") {
  PhantomConfig cfg = test_config(6);
  cfg.noise_sigma = 0.0;
  const auto rec = generate_subject(cfg, 1);
  for (std::size_t i = 0; i < rec.ses01.t1_pc.size(); ++i)
    CHECK(rec.ses01.t1_sd.data[i] >= rec.ses01.t1_pc.data[i]);
}

TEST_CASE("evolution labels scale the ses-02 lesion support (voxel-count oracle)") {
  PhantomConfig cfg = test_config(20240607);
  cfg.n_subjects = 16;
  bool saw_growth = false, saw_shrinkage = false;
  for (int i = 0; i < cfg.n_subjects; ++i) {
    const auto rec = generate_subject(cfg, i);
    const std::size_t n1 = support_count(rec.enhancement_ses01);
    const std::size_t n2 = support_count(rec.enhancement_ses02_aligned);
    switch (rec.evolution_label) {
      case Evolution::kGrowth:
        CHECK(n2 > n1);
        saw_growth = true;
        break;
      case Evolution::kShrinkage:
        CHECK(n2 < n1);
        saw_shrinkage = true;
        break;
      case Evolution::kStable:
        CHECK(n2 == n1);
        break;
    }
  }
  CHECK(saw_growth);
  CHECK(saw_shrinkage);
}

TEST_CASE("lesion enhancement is zero outside the brain mask") {
  const PhantomConfig cfg = test_config(9);
  const auto rec = generate_subject(cfg, 2);
  const auto& mask = *rec.ses01.t1_pc.mask;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) {
      CHECK(rec.enhancement_ses01.data[i] == 0.0);
      CHECK(rec.enhancement_ses02_aligned.data[i] == 0.0);
    }
  }
}

TEST_CASE("inverting the recorded misalignment re-aligns ses-02 with ses-01") {
  PhantomConfig cfg = test_config(13);
  cfg.dims = {32, 32, 32};
  cfg.misalignment_rot_max = 0.05;
  cfg.misalignment_trans_max = 3.0;
  for (int i = 0; i < 3; ++i) {
    const auto rec = generate_subject(cfg, i);
    const auto inv = reg::invert_rigid(rec.true_misalignment);
    const Volume realigned = reg::warp_rigid(rec.ses02.t1_pc, inv);
    double mae = 0.0;
    std::size_t n = 0;
    const auto& mask = *rec.ses01.t1_pc.mask;
    for (std::size_t v = 0; v < mask.size(); ++v) {
      if (mask[v] == 0) continue;
      mae += std::fabs(realigned.data[v] - rec.ses01.t1_pc.data[v]);
      ++n;
    }
    mae /= static_cast<double>(n);
    CHECK(mae <= 2.0 * cfg.noise_sigma);
  }
}

TEST_CASE("config validation rejects malformed parameters") {
  PhantomConfig cfg = test_config();
  cfg.lesion_evolution_mix = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = test_config();
  cfg.dims = {8, 24, 24};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = test_config();
  cfg.enhancement_gain = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  CHECK_THROWS_AS(generate_subject(test_config(), 99), InvalidArgument);
}

TEST_CASE("split honors the study-sized 75/5/17 partition") {
  const auto split = split_cohort(97, {75.0 / 97.0, 5.0 / 97.0, 17.0 / 97.0}, 42);
  CHECK(split.train.size() == 75);
  CHECK(split.val.size() == 5);
  CHECK(split.test.size() == 17);
}

TEST_CASE("split is a partition; seeds permute membership but not sizes") {
  const auto a = split_cohort(20, {0.6, 0.1, 0.3}, 1);
  const auto b = split_cohort(20, {0.6, 0.1, 0.3}, 2);
  CHECK(a.train.size() == 12);
  CHECK(a.val.size() == 2);
  CHECK(a.test.size() == 6);
  CHECK(b.train.size() == 12);

  std::set<int> all(a.train.begin(), a.train.end());
  all.insert(a.val.begin(), a.val.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 20);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 19);

  CHECK(a.train != b.train);  // different permutation

  const auto a2 = split_cohort(20, {0.6, 0.1, 0.3}, 1);
  CHECK(a.train == a2.train);  // deterministic
}

TEST_CASE("degenerate fractions: all-train needs the explicit opt-in") {
  CHECK_THROWS_AS(split_cohort(10, {1.0, 0.0, 0.0}, 3), InvalidArgument);
  const auto split = split_cohort(10, {1.0, 0.0, 0.0}, 3, /*allow_empty=*/true);
  CHECK(split.train.size() == 10);
  CHECK(split.val.empty());
  CHECK(split.test.empty());
  CHECK_THROWS_AS(split_cohort(10, {0.5, 0.2, 0.2}, 3), InvalidArgument);  // sums to 0.9
  CHECK_THROWS_AS(split_cohort(0, {0.6, 0.1, 0.3}, 3), InvalidArgument);
}
