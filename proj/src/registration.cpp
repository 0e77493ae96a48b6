#include "lvce/registration.hpp"

#include <cmath>
#include <iostream>

namespace lvce::reg {

void RegistrationConfig::validate() const {
  if (pyramid_levels < 1 || max_iters_per_level < 1 || !(step_size > 0.0) ||
      !(convergence_tol > 0.0))
    throw InvalidArgument("RegistrationConfig: all fields must be positive");
}

namespace {

struct Objective {
  const Volume& fixed;
  const Volume& moving;
  Real3 center;  // rotation center: physical center of the fixed volume

  // Masked MSE of fixed vs moving(T(p)); optionally the 6-parameter gradient
  // [rot x,y,z, trans x,y,z] and the Gauss-Newton curvature diagonal used
  // for per-parameter step scaling. Voxels whose warped position leaves the
  // moving support (or its mask) are excluded.
  double eval(const RigidParams& params, double* grad6, double* curv6 = nullptr) const {
    const double cx = std::cos(params.rotation[0]), sx = std::sin(params.rotation[0]);
    const double cy = std::cos(params.rotation[1]), sy = std::sin(params.rotation[1]);
    const double cz = std::cos(params.rotation[2]), sz = std::sin(params.rotation[2]);
    const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
    const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
    const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
    const Mat3 dxm{{{0, 0, 0}, {0, -sx, -cx}, {0, cx, -sx}}};
    const Mat3 dym{{{-sy, 0, cy}, {0, 0, 0}, {-cy, 0, -sy}}};
    const Mat3 dzm{{{-sz, -cz, 0}, {cz, -sz, 0}, {0, 0, 0}}};
    const Mat3 rot = rz * ry * rx;
    const Mat3 drot[3] = {rz * ry * dxm, rz * dym * rx, dzm * ry * rx};

    double sse = 0.0;
    double g[6] = {0, 0, 0, 0, 0, 0};
    double curv[6] = {0, 0, 0, 0, 0, 0};
    std::size_t n = 0;
    std::size_t i = 0;
    for (int z = 0; z < fixed.dims[2]; ++z)
      for (int y = 0; y < fixed.dims[1]; ++y)
        for (int x = 0; x < fixed.dims[0]; ++x, ++i) {
          if (fixed.mask && (*fixed.mask)[i] == 0) continue;
          const Real3 p{fixed.origin[0] + x * fixed.spacing[0],
                        fixed.origin[1] + y * fixed.spacing[1],
                        fixed.origin[2] + z * fixed.spacing[2]};
          const Real3 pc{p[0] - center[0], p[1] - center[1], p[2] - center[2]};
          const Real3 rp = rot * pc;
          const double qx = rp[0] + center[0] + params.translation[0];
          const double qy = rp[1] + center[1] + params.translation[1];
          const double qz = rp[2] + center[2] + params.translation[2];
          const double ux = (qx - moving.origin[0]) / moving.spacing[0];
          const double uy = (qy - moving.origin[1]) / moving.spacing[1];
          const double uz = (qz - moving.origin[2]) / moving.spacing[2];
          if (ux < 0.0 || uy < 0.0 || uz < 0.0 || ux > moving.dims[0] - 1 ||
              uy > moving.dims[1] - 1 || uz > moving.dims[2] - 1)
            continue;
          if (moving.mask && !sample_mask_nearest(*moving.mask, moving.dims, ux, uy, uz))
            continue;

          double r;
          if (grad6) {
            Real3 gv;  // d(moving)/du, voxel units
            const double m = sample_trilinear_grad(moving, ux, uy, uz, gv);
            r = m - fixed.data[i];
            const Real3 gm{gv[0] / moving.spacing[0], gv[1] / moving.spacing[1],
                           gv[2] / moving.spacing[2]};  // mm units
            for (int a = 0; a < 3; ++a) {
              const Real3 dq = drot[a] * pc;
              const double jac = gm[0] * dq[0] + gm[1] * dq[1] + gm[2] * dq[2];
              g[a] += r * jac;
              curv[a] += jac * jac;
            }
            for (int a = 0; a < 3; ++a) {
              g[3 + a] += r * gm[a];
              curv[3 + a] += gm[a] * gm[a];
            }
          } else {
            const double m = sample_trilinear(moving, ux, uy, uz);
            r = m - fixed.data[i];
          }
          sse += r * r;
          ++n;
        }
    if (n == 0)
      throw RegistrationFailure("register_rigid: empty mask/support intersection");
    if (grad6)
      for (int a = 0; a < 6; ++a) grad6[a] = 2.0 * g[a] / static_cast<double>(n);
    if (curv6)
      for (int a = 0; a < 6; ++a) curv6[a] = 2.0 * curv[a] / static_cast<double>(n);
    return sse / static_cast<double>(n);
  }
};

Volume downsample(const Volume& vol, int factor) {
  if (factor == 1) return vol;
  const Real3 sp{vol.spacing[0] * factor, vol.spacing[1] * factor, vol.spacing[2] * factor};
  return resample_trilinear(vol, sp);
}

}  // namespace

RegistrationResult register_rigid(const Volume& moving, const Volume& fixed,
                                  const RegistrationConfig& cfg) {
  cfg.validate();
  fixed.validate();
  moving.validate();
  if (fixed.spacing != moving.spacing)
    throw InvalidArgument("register_rigid: fixed and moving must share spacing");

  RegistrationResult res;
  {
    Objective full{fixed, moving, volume_center(fixed)};
    res.initial_mse = full.eval(RigidParams{}, nullptr);
  }

  RigidParams params;
  bool coarse_initialized = false;
  for (int level = cfg.pyramid_levels - 1; level >= 0; --level) {
    const int factor = 1 << level;
    const int min_dim = std::min({fixed.dims[0], fixed.dims[1], fixed.dims[2]});
    if (min_dim / factor < 4) continue;
    const Volume f = downsample(fixed, factor);
    const Volume m = downsample(moving, factor);
    Objective obj{f, m, volume_center(f)};

    if (!coarse_initialized) {
      // Deterministic translation grid at the coarsest level: plain descent
      // cannot capture offsets beyond the local feature scale.
      coarse_initialized = true;
      double half_extent = 0.0;
      for (int a = 0; a < 3; ++a)
        half_extent = std::max(half_extent, (fixed.dims[a] - 1) * fixed.spacing[a] / 2.0);
      const double range = std::min(0.45 * half_extent, 8.0);
      const double step = 2.0;
      double best = obj.eval(params, nullptr);
      RigidParams best_params = params;
      for (double tz = -range; tz <= range; tz += step)
        for (double ty = -range; ty <= range; ty += step)
          for (double tx = -range; tx <= range; tx += step) {
            RigidParams trial = params;
            trial.translation = {tx, ty, tz};
            double mse;
            try {
              mse = obj.eval(trial, nullptr);
            } catch (const RegistrationFailure&) {
              continue;  // no overlap at this offset
            }
            if (mse < best) {
              best = mse;
              best_params = trial;
            }
          }
      params = best_params;
    }

    LevelTrace trace;
    trace.downsample_factor = factor;
    double grad[6], curv[6];
    double mse = obj.eval(params, grad, curv);
    trace.start_mse = mse;
    // step_size scales the per-parameter step Delta_a = -eta g_a / curv_a:
    // rotations and translations share one knob because the Gauss-Newton
    // curvature diagonal carries each parameter's own units.
    double eta = cfg.step_size;
    const double eta_max = cfg.step_size * 2.0;

    for (int iter = 0; iter < cfg.max_iters_per_level; ++iter) {
      ++trace.iterations;
      double max_curv = 0.0;
      for (double c : curv) max_curv = std::max(max_curv, c);
      if (max_curv <= 0.0) break;
      const double damping = 1e-3 * max_curv + 1e-30;
      double dir[6];
      double norm2 = 0.0;
      for (int a = 0; a < 6; ++a) {
        dir[a] = grad[a] / (curv[a] + damping);
        norm2 += dir[a] * dir[a];
      }
      if (norm2 < 1e-28) break;

      bool accepted = false;
      while (eta >= 1e-6) {
        RigidParams trial = params;
        for (int a = 0; a < 3; ++a) trial.rotation[a] -= eta * dir[a];
        for (int a = 0; a < 3; ++a) trial.translation[a] -= eta * dir[a + 3];
        const double trial_mse = obj.eval(trial, nullptr);
        if (trial_mse < mse) {
          const double rel = (mse - trial_mse) / std::max(mse, 1e-300);
          params = trial;
          mse = trial_mse;
          accepted = true;
          eta = std::min(eta * 1.5, eta_max);
          if (rel < cfg.convergence_tol) iter = cfg.max_iters_per_level;  // converged
          break;
        }
        eta *= 0.5;
      }
      if (!accepted) break;
      if (iter >= cfg.max_iters_per_level) break;
      mse = obj.eval(params, grad, curv);
    }
    trace.end_mse = mse;
    res.levels.push_back(trace);
  }

  for (double& r : params.rotation) {
    constexpr double kPi = 3.14159265358979323846;
    while (r <= -kPi) r += 2.0 * kPi;
    while (r > kPi) r -= 2.0 * kPi;
  }
  res.params = params;
  {
    Objective full{fixed, moving, volume_center(fixed)};
    res.final_mse = full.eval(params, nullptr);
  }
  if (res.final_mse > res.initial_mse) {
    res.regressed = true;
    std::cerr << "[register] warning: final MSE " << res.final_mse
              << " exceeds pre-registration MSE " << res.initial_mse << "\n";
  }
  return res;
}

phantom::Session apply_rigid_to_session(const phantom::Session& sess, const RigidParams& params) {
  phantom::Session out;
  out.t1_pc = warp_rigid(sess.t1_pc, params);
  out.t1_sd = warp_rigid(sess.t1_sd, params);
  if (sess.t1_ld) out.t1_ld = warp_rigid(*sess.t1_ld, params);
  return out;
}

}  // namespace lvce::reg
