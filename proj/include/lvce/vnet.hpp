#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lvce/tensor.hpp"
#include "lvce/volume.hpp"

namespace lvce::nn {

enum class Activation { kPrelu, kRelu };

struct VNetConfig {
  int in_channels = 4;       // 4 = longitudinal, 2 = single-session
  int levels = 4;            // encoder depth
  int base_channels = 16;    // channels at level 0, doubled per level
  int convs_per_level = 2;
  Activation activation = Activation::kPrelu;
  bool residual = true;
  /// When set, the network output is added to the last input channel
  /// (the low-dose image), so a zero-initialized head is the identity on it.
  bool predict_residual = true;
  int kernel_size = 3;  // non-strided convs, same-padded

  void validate() const;
};

/// 3D encoder-decoder with strided down-convolutions, transposed
/// up-convolutions and channel-concatenation skips. Parameters live in a
/// name-keyed map so optimizer state and checkpoints are order-stable.
class VNet {
 public:
  VNet() = default;
  /// Builds and initializes parameters: Kaiming fan-in kernels, zero biases,
  /// PReLU slopes 0.25; the head is zero-initialized when predict_residual.
  VNet(const VNetConfig& config, std::uint64_t seed);

  const VNetConfig& config() const { return config_; }
  std::map<std::string, Tensor>& parameters() { return params_; }
  const std::map<std::string, Tensor>& parameters() const { return params_; }
  std::int64_t parameter_count() const;

  /// Forward pass; input is [in_channels, X, Y, Z] with spatial dims
  /// divisible by 2^(levels-1). Output is [1, X, Y, Z].
  Tensor forward(const Tensor& input) const;

  /// Deep copy (fresh parameter tensors, no shared graph state).
  VNet clone() const;

 private:
  Tensor conv_block(const Tensor& input, const std::string& name, int convs) const;
  Tensor activate(const Tensor& t, const std::string& name) const;

  VNetConfig config_;
  std::map<std::string, Tensor> params_;
};

/// Convenience wrapper over VNet::forward for Volume inputs; the output
/// keeps the geometry of the first channel.
Volume vnet_forward(const VNet& model, const MultiChannelVolume& input);

Tensor to_tensor(const MultiChannelVolume& mcv, bool requires_grad = false);
Tensor to_tensor(const Volume& vol, bool requires_grad = false);
Volume from_tensor(const Tensor& t, const Volume& geometry_like);

// -- checkpoints ---------------------------------------------------------------

/// Binary checkpoint: magic "LVCE1", config JSON, then named parameter
/// arrays as (name, dims, little-endian float32 data).
void save_checkpoint(const VNet& model, const std::string& path);
VNet load_checkpoint(const std::string& path);

// -- gradient verification -------------------------------------------------------

struct GradientCheckReport {
  int n_checked = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  bool pass = true;
  double tolerance = 0.0;
};

/// Central finite differences over a random subset of parameters against the
/// supplied analytic gradients. loss_fn re-evaluates the scalar loss at the
/// current parameter values.
GradientCheckReport gradient_check_core(
    const std::function<double()>& loss_fn,
    std::vector<std::pair<std::string, Tensor>>& params,
    const std::map<std::string, std::vector<double>>& analytic_grads, double epsilon,
    double tolerance, double sample_fraction, std::uint64_t seed);

/// Full-model check: forward + MSE loss against target, backward for the
/// analytic gradients, then finite differences on ~sample_fraction of the
/// parameters. Intended for small models (<= ~50k parameters).
GradientCheckReport gradient_check(VNet& model, const Tensor& input, const Tensor& target,
                                   double epsilon = 1e-5, double tolerance = 1e-4,
                                   double sample_fraction = 0.01, std::uint64_t seed = 0);

}  // namespace lvce::nn
