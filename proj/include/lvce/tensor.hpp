#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lvce/errors.hpp"

namespace lvce::nn {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads. Receives
  // the node by reference so closures never hold a self shared_ptr.
  std::function<void(Node&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Value-semantic handle to a node of the autodiff graph.
///
/// Volume tensors are 4-D [C, X, Y, Z]; within a channel the memory follows
/// the Volume convention (x fastest): offset = c*XYZ + (z*Y + y)*X + x.
/// Convolution kernels are 5-D [C_out, C_in, k, k, k] with the same x-fastest
/// rule for the spatial block; transposed-convolution kernels are
/// [C_in, C_out, k, k, k].
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  /// Gradient after backward(); empty until then.
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->data.size(), 0.0);
  }

  /// Reverse-mode sweep from this scalar tensor. Gradients accumulate into
  /// every reachable tensor with requires_grad set.
  void backward() const;

  /// Deep copy of shape/data; the copy is a fresh leaf (no graph history).
  Tensor detached_copy() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// 3D cross-correlation with zero padding and cubic kernel.
/// input [C_in, X, Y, Z], kernel [C_out, C_in, k, k, k], bias [C_out].
/// Output spatial dims are floor((D + 2*padding - k)/stride) + 1.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding);

/// Transposed 3D convolution (no padding): output dims are (D-1)*stride + k.
/// kernel layout [C_in, C_out, k, k, k].
Tensor conv_transpose3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride);

/// PReLU with one learnable slope (shape [1]) shared across the tensor.
Tensor prelu(const Tensor& input, const Tensor& slope);
Tensor relu(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);

/// Concatenates two 4-D tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Extracts channel c of a 4-D tensor as a [1, X, Y, Z] tensor.
Tensor select_channel(const Tensor& input, int channel);

/// Mean over all elements of the squared difference; scalar output.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace lvce::nn
