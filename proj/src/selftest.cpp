#include <cmath>
#include <iostream>

#include "lvce/dose.hpp"
#include "lvce/metrics.hpp"
#include "lvce/optim.hpp"
#include "lvce/sha256.hpp"
#include "lvce/stats.hpp"
#include "lvce/study.hpp"
#include "lvce/tensor.hpp"
#include "lvce/vnet.hpp"

namespace lvce::study {

namespace {

bool check(const char* name, bool ok) {
  std::cout << "[selftest] " << (ok ? "PASS" : "FAIL") << " " << name << "\n";
  return ok;
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

bool conv_identity() {
  nn::Tensor x = nn::Tensor::from_data({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  nn::Tensor w = nn::Tensor::from_data({1, 1, 1, 1, 1}, {1.0});
  nn::Tensor b = nn::Tensor::zeros({1});
  nn::Tensor y = nn::conv3d(x, w, b, 1, 0);
  return y.data() == x.data();
}

bool conv_window_sum() {
  nn::Tensor x = nn::Tensor::from_data({1, 3, 3, 3}, std::vector<double>(27, 1.0));
  nn::Tensor w = nn::Tensor::from_data({1, 1, 3, 3, 3}, std::vector<double>(27, 1.0));
  nn::Tensor b = nn::Tensor::zeros({1});
  nn::Tensor y = nn::conv3d(x, w, b, 1, 0);
  return y.numel() == 1 && near(y.data()[0], 27.0, 1e-12);
}

bool vnet_gradients() {
  nn::VNetConfig cfg;
  cfg.in_channels = 2;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.predict_residual = false;  // random head, so no gradient is trivially zero
  nn::VNet model(cfg, 7);
  Rng rng(11);
  std::vector<double> xin(2 * 8 * 8 * 8), tgt(8 * 8 * 8);
  for (double& v : xin) v = rng.uniform();
  for (double& v : tgt) v = rng.uniform();
  const nn::Tensor input = nn::Tensor::from_data({2, 8, 8, 8}, xin);
  const nn::Tensor target = nn::Tensor::from_data({1, 8, 8, 8}, tgt);
  const auto report = nn::gradient_check(model, input, target, 1e-5, 1e-4, 0.02, 3);
  return report.pass && report.n_checked > 0;
}

bool mse_loss_grad() {
  nn::Tensor pred = nn::Tensor::from_data({1, 2, 1, 1}, {0.5, 0.7}, true);
  nn::Tensor target = nn::Tensor::from_data({1, 2, 1, 1}, {0.4, 0.9});
  nn::Tensor loss = nn::mse_loss(pred, target);
  loss.backward();
  const bool value_ok = near(loss.data()[0], (0.01 + 0.04) / 2.0, 1e-15);
  const bool grad_ok = near(pred.grad()[0], 2.0 * 0.1 / 2.0, 1e-15) &&
                       near(pred.grad()[1], 2.0 * -0.2 / 2.0, 1e-15);
  return value_ok && grad_ok;
}

bool ssim_constant_case() {
  Volume a(Index3{16, 16, 16}, Real3{1, 1, 1});
  Volume b = a;
  std::fill(a.data.begin(), a.data.end(), 0.5);
  std::fill(b.data.begin(), b.data.end(), 0.25);
  const double expected = (2.0 * 0.5 * 0.25 + 1e-4) / (0.5 * 0.5 + 0.25 * 0.25 + 1e-4);
  return near(eval::ssim(a, b), expected, 1e-9);
}

bool psnr_cases() {
  Volume ref(Index3{4, 4, 4}, Real3{1, 1, 1});
  Volume noisy = ref;
  for (double& v : noisy.data) v += 0.1;
  const bool p20 = near(eval::psnr(noisy, ref), 20.0, 1e-9);
  Volume small = ref;
  for (double& v : small.data) v += std::sqrt(1e-3);
  const bool p30 = near(eval::psnr(small, ref), 30.0, 1e-9);
  return p20 && p30;
}

bool stats_cases() {
  const auto sw = stats::shapiro_wilk({-1.0, 0.0, 1.0});
  const bool sw_ok = near(sw.w, 1.0, 1e-9) && near(sw.p, 1.0, 1e-6);
  const auto wres = stats::wilcoxon_signed_rank({1, 2, 3}, {0, 0, 0});
  const bool w_ok = wres.w_minus == 0.0 && near(wres.p, 0.25, 1e-12);
  const auto tres = stats::paired_t_test({1, 2, 3}, {0, 0, 0});
  const bool t_ok = near(tres.t, 2.0 * std::sqrt(3.0), 1e-9) && near(tres.p, 0.0741799, 1e-4);
  return sw_ok && w_ok && t_ok;
}

bool adam_first_step() {
  std::map<std::string, nn::Tensor> params;
  params["theta"] = nn::Tensor::from_data({1}, {0.0}, true);
  params["theta"].zero_grad();
  params["theta"].grad()[0] = 1.0;
  train::Adam adam;
  adam.step(params, 1e-3);
  const double expected = -1e-3 / (1.0 + 1e-8);
  return near(params["theta"].data()[0], expected, 1e-15);
}

bool dose_endpoints() {
  Volume pc(Index3{4, 4, 4}, Real3{1, 1, 1});
  Volume sd = pc;
  Rng rng(5);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    pc.data[i] = rng.uniform();
    sd.data[i] = pc.data[i] + rng.uniform(0.0, 0.5);
  }
  dose::DoseModel model;
  model.noise_sigma_ld = 0.0;
  for (auto kind : {dose::DoseModelKind::kLinear, dose::DoseModelKind::kSaturating}) {
    model.kind = kind;
    Rng r0(1);
    if (dose::simulate_low_dose(pc, sd, dose::DoseFraction::of(0.0), model, r0).data != pc.data)
      return false;
    if (dose::simulate_low_dose(pc, sd, dose::DoseFraction::of(1.0), model, r0).data != sd.data)
      return false;
  }
  return true;
}

bool sha256_vector() {
  return sha256_hex(std::string("abc")) ==
         "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
}

}  // namespace

bool run_selftest() {
  bool ok = true;
  ok &= check("conv3d identity kernel", conv_identity());
  ok &= check("conv3d 3x3x3 window sum", conv_window_sum());
  ok &= check("vnet finite-difference gradients", vnet_gradients());
  ok &= check("mse loss value and gradient", mse_loss_grad());
  ok &= check("ssim constant-image closed form", ssim_constant_case());
  ok &= check("psnr closed forms", psnr_cases());
  ok &= check("statistics exact cases", stats_cases());
  ok &= check("adam first-step update", adam_first_step());
  ok &= check("dose simulator endpoints", dose_endpoints());
  ok &= check("sha256 test vector", sha256_vector());
  std::cout << "[selftest] " << (ok ? "all checks passed" : "FAILURES detected") << "\n";
  return ok;
}

}  // namespace lvce::study
