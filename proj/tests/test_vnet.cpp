#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lvce/optim.hpp"
#include "lvce/phantom.hpp"
#include "lvce/trainer.hpp"
#include "lvce/vnet.hpp"

using namespace lvce;
using namespace lvce::nn;

namespace {

VNetConfig tiny_config(int in_channels = 2) {
  VNetConfig cfg;
  cfg.in_channels = in_channels;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.convs_per_level = 2;
  return cfg;
}

Tensor random_input(const std::vector<int>& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("forward output is single-channel with the input spatial dims") {
  VNetConfig cfg = tiny_config(4);
  cfg.levels = 3;
  VNet model(cfg, 3);
  const Tensor out = model.forward(random_input({4, 16, 16, 16}, 1));
  CHECK(out.shape() == std::vector<int>{1, 16, 16, 16});
}

TEST_CASE("shape contract holds across random valid configurations") {
  Rng rng(40);
  for (int trial = 0; trial < 6; ++trial) {
    VNetConfig cfg;
    cfg.in_channels = rng.bernoulli(0.5) ? 2 : 4;
    cfg.levels = 2 + static_cast<int>(rng.uniform_index(2));
    cfg.base_channels = 4;
    cfg.convs_per_level = 1 + static_cast<int>(rng.uniform_index(2));
    cfg.residual = rng.bernoulli(0.5);
    cfg.predict_residual = rng.bernoulli(0.5);
    cfg.activation = rng.bernoulli(0.5) ? Activation::kPrelu : Activation::kRelu;
    const int size = 8 << static_cast<int>(rng.uniform_index(2));
    VNet model(cfg, trial);
    const Tensor out =
        model.forward(random_input({cfg.in_channels, size, size, size}, trial + 100u));
    CHECK(out.shape() == std::vector<int>{1, size, size, size});
  }
}

TEST_CASE("non-divisible spatial dims name the offending level") {
  VNet model(tiny_config(2), 5);
  CHECK_THROWS_WITH_AS(model.forward(random_input({2, 6, 7, 6}, 2)),
                       doctest::Contains("level 1"), ShapeError);
  VNetConfig cfg = tiny_config(2);
  cfg.levels = 3;
  VNet deeper(cfg, 5);
  // 10 halves once to 5, which cannot halve again at level 2.
  CHECK_THROWS_WITH_AS(deeper.forward(random_input({2, 10, 10, 10}, 2)),
                       doctest::Contains("level 2"), ShapeError);
}

TEST_CASE("channel count mismatches are rejected") {
  VNet model(tiny_config(2), 7);
  CHECK_THROWS_AS(model.forward(random_input({4, 8, 8, 8}, 3)), ShapeError);
}

TEST_CASE("residual head: zero-initialized final layer is the identity on the LD channel") {
  VNetConfig cfg = tiny_config(4);
  cfg.predict_residual = true;
  VNet model(cfg, 11);
  const Tensor input = random_input({4, 8, 8, 8}, 4);
  const Tensor out = model.forward(input);
  const std::int64_t sp = 8 * 8 * 8;
  for (std::int64_t i = 0; i < sp; ++i)
    CHECK(out.data()[static_cast<std::size_t>(i)] ==
          input.data()[static_cast<std::size_t>(3 * sp + i)]);
}

TEST_CASE("forward is deterministic and initialization is seed-reproducible") {
  VNet a(tiny_config(2), 99);
  VNet b(tiny_config(2), 99);
  for (const auto& [name, t] : a.parameters())
    CHECK(t.data() == b.parameters().at(name).data());
  const Tensor input = random_input({2, 8, 8, 8}, 5);
  CHECK(a.forward(input).data() == a.forward(input).data());
  VNet c(tiny_config(2), 100);
  CHECK(a.parameters().at("enc0.conv0.w").data() != c.parameters().at("enc0.conv0.w").data());
}

TEST_CASE("gradient check passes on a tiny model and catches corrupted gradients") {
  // A random head (no residual identity) keeps every gradient non-trivial,
  // so the corrupted-gradient mutation below is actually detectable.
  VNetConfig cfg = tiny_config(2);
  cfg.predict_residual = false;
  VNet model(cfg, 13);
  const Tensor input = random_input({2, 8, 8, 8}, 6);
  const Tensor target = random_input({1, 8, 8, 8}, 7);

  const auto report = gradient_check(model, input, target, 1e-5, 1e-4, 0.02, 17);
  CHECK(report.pass);
  CHECK(report.n_checked > 0);
  CHECK(report.max_rel_error < 1e-4);

  // Mutation test: double the analytic gradients; the check must fail.
  for (auto& [name, t] : model.parameters()) t.zero_grad();
  mse_loss(model.forward(input), target).backward();
  std::map<std::string, std::vector<double>> grads;
  std::vector<std::pair<std::string, Tensor>> params;
  for (auto& [name, t] : model.parameters()) {
    grads[name] = t.grad();
    for (double& g : grads[name]) g *= 2.0;
    params.emplace_back(name, t);
  }
  auto loss_fn = [&]() { return mse_loss(model.forward(input), target).data()[0]; };
  const auto corrupted =
      gradient_check_core(loss_fn, params, grads, 1e-5, 1e-4, 0.03, 17);
  CHECK_FALSE(corrupted.pass);
}

TEST_CASE("gradient check on an empty parameter set passes vacuously") {
  std::vector<std::pair<std::string, Tensor>> params;
  std::map<std::string, std::vector<double>> grads;
  const auto report = gradient_check_core([] { return 0.0; }, params, grads, 1e-5, 1e-4, 0.01, 1);
  CHECK(report.pass);
  CHECK(report.n_checked == 0);
}

TEST_CASE("checkpoint round-trips config and parameters") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lvce_vnet_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  VNetConfig cfg = tiny_config(4);
  cfg.predict_residual = false;
  VNet model(cfg, 21);
  save_checkpoint(model, path);
  const VNet loaded = load_checkpoint(path);

  CHECK(loaded.config().in_channels == cfg.in_channels);
  CHECK(loaded.config().levels == cfg.levels);
  CHECK(loaded.config().predict_residual == cfg.predict_residual);
  for (const auto& [name, t] : model.parameters()) {
    const auto& lt = loaded.parameters().at(name);
    REQUIRE(lt.shape() == t.shape());
    for (std::size_t i = 0; i < t.data().size(); ++i)
      CHECK(lt.data()[i] == doctest::Approx(t.data()[i]).epsilon(1e-7));
  }

  const Tensor input = random_input({4, 8, 8, 8}, 9);
  const Tensor out_a = model.forward(input);
  const Tensor out_b = loaded.forward(input);
  for (std::size_t i = 0; i < out_a.data().size(); ++i)
    CHECK(out_a.data()[i] == doctest::Approx(out_b.data()[i]).epsilon(1e-5));

  std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
  bad << "NOTLVCE";
  bad.close();
  CHECK_THROWS_AS(load_checkpoint((dir / "bad.ckpt").string()), FormatError);
}

TEST_CASE("vnet_forward bridges volumes and enforces the channel contract") {
  phantom::PhantomConfig pcfg;
  pcfg.dims = {16, 16, 16};
  pcfg.n_subjects = 1;
  pcfg.seed = 3;
  auto rec = phantom::generate_subject(pcfg, 0);
  rec.ses02.t1_ld = rec.ses02.t1_pc;  // stand-in low-dose channel

  const auto sample = train::make_sample(rec, train::TrainMode::kLongitudinal);
  VNet model(tiny_config(4), 0);
  const Volume pred = vnet_forward(model, sample.input);
  CHECK(pred.dims == Index3{16, 16, 16});

  const auto two = train::make_sample(rec, train::TrainMode::kSingleSession);
  CHECK_THROWS_AS(vnet_forward(model, two.input), ShapeError);
}

TEST_CASE("single-sample overfit: loss drops below 0.2x of the start") {
  phantom::PhantomConfig pcfg;
  pcfg.dims = {16, 16, 16};
  pcfg.n_subjects = 1;
  pcfg.seed = 12;
  pcfg.misalignment_rot_max = 0.0;
  pcfg.misalignment_trans_max = 0.0;
  pcfg.noise_sigma = 0.0;  // noise would put a floor under the loss
  auto rec = phantom::generate_subject(pcfg, 0);
  // Low-dose stand-in at 25%: pc + 0.25 (sd - pc).
  Volume ld = rec.ses02.t1_pc;
  for (std::size_t i = 0; i < ld.size(); ++i)
    ld.data[i] += 0.25 * (rec.ses02.t1_sd.data[i] - rec.ses02.t1_pc.data[i]);
  rec.ses02.t1_ld = ld;

  const auto sample = train::make_sample(rec, train::TrainMode::kLongitudinal);
  const Tensor input = to_tensor(sample.input);
  const Tensor target = to_tensor(sample.target);

  // Random head: the run must actually fit the mapping, not start at the
  // low-dose identity.
  VNetConfig cfg = tiny_config(4);
  cfg.predict_residual = false;
  VNet model(cfg, 31);
  train::Adam adam;
  double initial = -1.0, final_loss = -1.0;
  for (int step = 0; step < 50; ++step) {
    for (auto& [name, t] : model.parameters()) t.zero_grad();
    const Tensor loss = mse_loss(model.forward(input), target);
    if (step == 0) initial = loss.data()[0];
    final_loss = loss.data()[0];
    loss.backward();
    adam.step(model.parameters(), 1e-2);
  }
  CHECK(final_loss < 0.2 * initial);
}
