#include "lvce/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "lvce/threading.hpp"

namespace lvce::nn {

namespace {

using detail::Node;

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor shape entries must be positive");
    n *= d;
  }
  return n;
}

std::shared_ptr<Node> make_node(std::vector<int> shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data.assign(static_cast<std::size_t>(shape_numel(node->shape)), 0.0);
  node->requires_grad = requires_grad;
  return node;
}

void expect_rank(const Tensor& t, int rank, const char* what) {
  if (static_cast<int>(t.shape().size()) != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     std::to_string(t.shape().size()));
}

struct Dims4 {
  int c, x, y, z;
  std::int64_t xy() const { return static_cast<std::int64_t>(x) * y; }
  std::int64_t xyz() const { return xy() * z; }
};

Dims4 dims4(const Tensor& t) {
  return {t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]};
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return Tensor(make_node(std::move(shape), requires_grad));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  auto node = make_node(std::move(shape), requires_grad);
  if (node->data.size() != data.size())
    throw ShapeError("from_data: data length does not match shape");
  node->data = std::move(data);
  return Tensor(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::detached_copy() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  node->requires_grad = node_->requires_grad;
  return Tensor(node);
}

void Tensor::backward() const {
  if (!node_) throw InvalidArgument("backward: undefined tensor");
  if (node_->numel() != 1) throw InvalidArgument("backward: root tensor must be scalar");

  // Post-order DFS (iterative) for a reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// -- conv3d ----------------------------------------------------------------

namespace {

struct ConvGeom {
  int ci, co, k, stride, pad;
  Dims4 in;   // c == ci
  Dims4 out;  // c == co
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                       int padding) {
  expect_rank(input, 4, "conv3d input");
  expect_rank(kernel, 5, "conv3d kernel");
  expect_rank(bias, 1, "conv3d bias");
  const auto& ks = kernel.shape();
  if (ks[2] != ks[3] || ks[2] != ks[4]) throw ShapeError("conv3d: kernel must be cubic");
  ConvGeom g;
  g.in = dims4(input);
  g.co = ks[0];
  g.ci = ks[1];
  g.k = ks[2];
  g.stride = stride;
  g.pad = padding;
  if (g.ci != g.in.c)
    throw ShapeError("conv3d: kernel expects " + std::to_string(g.ci) + " input channels, got " +
                     std::to_string(g.in.c));
  if (bias.shape()[0] != g.co) throw ShapeError("conv3d: bias length must equal output channels");
  if (stride < 1 || padding < 0) throw InvalidArgument("conv3d: invalid stride/padding");
  auto out_dim = [&](int d) {
    const int v = (d + 2 * padding - g.k) / stride + 1;
    if (v < 1)
      throw ShapeError("conv3d: kernel larger than padded input (dim " + std::to_string(d) + ")");
    return v;
  };
  g.out = {g.co, out_dim(g.in.x), out_dim(g.in.y), out_dim(g.in.z)};
  return g;
}

// Loop bounds such that the source index o*stride + koff - pad stays inside
// [0, limit).
inline void out_range(int koff, int pad, int stride, int in_limit, int out_limit, int& lo,
                      int& hi) {
  const int shift = koff - pad;  // in = out*stride + shift
  lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
  const int num = in_limit - 1 - shift;
  hi = num < 0 ? -1 : std::min(out_limit - 1, num / stride);
}

void conv3d_forward_kernel(const ConvGeom& g, const double* x, const double* w, const double* b,
                           double* out) {
  const std::int64_t in_xy = g.in.xy(), in_xyz = g.in.xyz();
  const std::int64_t out_xy = g.out.xy(), out_xyz = g.out.xyz();
  parallel_for(g.co, [&](std::int64_t co0, std::int64_t co1) {
    for (std::int64_t co = co0; co < co1; ++co) {
      double* oc = out + co * out_xyz;
      std::fill_n(oc, out_xyz, b[co]);
      for (int ci = 0; ci < g.ci; ++ci) {
        const double* xc = x + ci * in_xyz;
        const double* wc = w + (co * g.ci + ci) * g.k * g.k * g.k;
        for (int kz = 0; kz < g.k; ++kz)
          for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
              const double wv = wc[(kz * g.k + ky) * g.k + kx];
              if (wv == 0.0) continue;
              int zlo, zhi, ylo, yhi, xlo, xhi;
              out_range(kz, g.pad, g.stride, g.in.z, g.out.z, zlo, zhi);
              out_range(ky, g.pad, g.stride, g.in.y, g.out.y, ylo, yhi);
              out_range(kx, g.pad, g.stride, g.in.x, g.out.x, xlo, xhi);
              for (int zo = zlo; zo <= zhi; ++zo) {
                const int zi = zo * g.stride + kz - g.pad;
                for (int yo = ylo; yo <= yhi; ++yo) {
                  const int yi = yo * g.stride + ky - g.pad;
                  const double* src =
                      xc + zi * in_xy + yi * g.in.x + (xlo * g.stride + kx - g.pad);
                  double* dst = oc + zo * out_xy + yo * g.out.x + xlo;
                  const int len = xhi - xlo + 1;
                  if (len <= 0) continue;
                  if (g.stride == 1) {
                    for (int i = 0; i < len; ++i) dst[i] += wv * src[i];
                  } else {
                    for (int i = 0; i < len; ++i) dst[i] += wv * src[i * g.stride];
                  }
                }
              }
            }
      }
    }
  });
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
  const ConvGeom g = conv_geometry(input, kernel, bias, stride, padding);
  const bool needs_grad = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  auto out = make_node({g.out.c, g.out.x, g.out.y, g.out.z}, needs_grad);
  conv3d_forward_kernel(g, input.data().data(), kernel.data().data(), bias.data().data(),
                        out->data.data());
  if (needs_grad) {
    out->parents = {input.node(), kernel.node(), bias.node()};
    auto xn = input.node();
    auto wn = kernel.node();
    auto bn = bias.node();
    out->backward_fn = [g, xn, wn, bn](Node& self) {
      const double* gout = self.grad.data();
      const std::int64_t in_xy = g.in.xy(), in_xyz = g.in.xyz();
      const std::int64_t out_xy = g.out.xy(), out_xyz = g.out.xyz();

      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int co = 0; co < g.co; ++co) {
          const double* gc = gout + co * out_xyz;
          double acc = 0.0;
          for (std::int64_t i = 0; i < out_xyz; ++i) acc += gc[i];
          bn->grad[static_cast<std::size_t>(co)] += acc;
        }
      }

      if (wn->requires_grad) {
        wn->ensure_grad();
        const double* x = xn->data.data();
        double* wg = wn->grad.data();
        parallel_for(g.co, [&](std::int64_t co0, std::int64_t co1) {
          for (std::int64_t co = co0; co < co1; ++co) {
            const double* gc = gout + co * out_xyz;
            for (int ci = 0; ci < g.ci; ++ci) {
              const double* xc = x + ci * in_xyz;
              double* wgc = wg + (co * g.ci + ci) * g.k * g.k * g.k;
              for (int kz = 0; kz < g.k; ++kz)
                for (int ky = 0; ky < g.k; ++ky)
                  for (int kx = 0; kx < g.k; ++kx) {
                    int zlo, zhi, ylo, yhi, xlo, xhi;
                    out_range(kz, g.pad, g.stride, g.in.z, g.out.z, zlo, zhi);
                    out_range(ky, g.pad, g.stride, g.in.y, g.out.y, ylo, yhi);
                    out_range(kx, g.pad, g.stride, g.in.x, g.out.x, xlo, xhi);
                    double acc = 0.0;
                    for (int zo = zlo; zo <= zhi; ++zo) {
                      const int zi = zo * g.stride + kz - g.pad;
                      for (int yo = ylo; yo <= yhi; ++yo) {
                        const int yi = yo * g.stride + ky - g.pad;
                        const double* src =
                            xc + zi * in_xy + yi * g.in.x + (xlo * g.stride + kx - g.pad);
                        const double* gr = gc + zo * out_xy + yo * g.out.x + xlo;
                        const int len = xhi - xlo + 1;
                        if (len <= 0) continue;
                        if (g.stride == 1) {
                          for (int i = 0; i < len; ++i) acc += gr[i] * src[i];
                        } else {
                          for (int i = 0; i < len; ++i) acc += gr[i] * src[i * g.stride];
                        }
                      }
                    }
                    wgc[(kz * g.k + ky) * g.k + kx] += acc;
                  }
            }
          }
        });
      }

      if (xn->requires_grad) {
        xn->ensure_grad();
        const double* w = wn->data.data();
        double* xg = xn->grad.data();
        parallel_for(g.ci, [&](std::int64_t ci0, std::int64_t ci1) {
          for (std::int64_t ci = ci0; ci < ci1; ++ci) {
            double* xgc = xg + ci * in_xyz;
            for (int co = 0; co < g.co; ++co) {
              const double* gc = gout + co * out_xyz;
              const double* wc = w + (co * g.ci + ci) * g.k * g.k * g.k;
              for (int kz = 0; kz < g.k; ++kz)
                for (int ky = 0; ky < g.k; ++ky)
                  for (int kx = 0; kx < g.k; ++kx) {
                    const double wv = wc[(kz * g.k + ky) * g.k + kx];
                    if (wv == 0.0) continue;
                    int zlo, zhi, ylo, yhi, xlo, xhi;
                    out_range(kz, g.pad, g.stride, g.in.z, g.out.z, zlo, zhi);
                    out_range(ky, g.pad, g.stride, g.in.y, g.out.y, ylo, yhi);
                    out_range(kx, g.pad, g.stride, g.in.x, g.out.x, xlo, xhi);
                    for (int zo = zlo; zo <= zhi; ++zo) {
                      const int zi = zo * g.stride + kz - g.pad;
                      for (int yo = ylo; yo <= yhi; ++yo) {
                        const int yi = yo * g.stride + ky - g.pad;
                        double* dst =
                            xgc + zi * in_xy + yi * g.in.x + (xlo * g.stride + kx - g.pad);
                        const double* gr = gc + zo * out_xy + yo * g.out.x + xlo;
                        const int len = xhi - xlo + 1;
                        if (len <= 0) continue;
                        if (g.stride == 1) {
                          for (int i = 0; i < len; ++i) dst[i] += wv * gr[i];
                        } else {
                          for (int i = 0; i < len; ++i) dst[i * g.stride] += wv * gr[i];
                        }
                      }
                    }
                  }
            }
          }
        });
      }
    };
  }
  return Tensor(out);
}

// -- conv_transpose3d --------------------------------------------------------

namespace {

struct TConvGeom {
  int ci, co, k, stride;
  Dims4 in, out;
};

TConvGeom tconv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                         int stride) {
  expect_rank(input, 4, "conv_transpose3d input");
  expect_rank(kernel, 5, "conv_transpose3d kernel");
  expect_rank(bias, 1, "conv_transpose3d bias");
  const auto& ks = kernel.shape();
  if (ks[2] != ks[3] || ks[2] != ks[4]) throw ShapeError("conv_transpose3d: kernel must be cubic");
  TConvGeom g;
  g.in = dims4(input);
  g.ci = ks[0];
  g.co = ks[1];
  g.k = ks[2];
  g.stride = stride;
  if (g.ci != g.in.c)
    throw ShapeError("conv_transpose3d: kernel expects " + std::to_string(g.ci) +
                     " input channels, got " + std::to_string(g.in.c));
  if (bias.shape()[0] != g.co)
    throw ShapeError("conv_transpose3d: bias length must equal output channels");
  if (stride < 1) throw InvalidArgument("conv_transpose3d: invalid stride");
  g.out = {g.co, (g.in.x - 1) * stride + g.k, (g.in.y - 1) * stride + g.k,
           (g.in.z - 1) * stride + g.k};
  return g;
}

}  // namespace

Tensor conv_transpose3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride) {
  const TConvGeom g = tconv_geometry(input, kernel, bias, stride);
  const bool needs_grad = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  auto out = make_node({g.out.c, g.out.x, g.out.y, g.out.z}, needs_grad);

  const std::int64_t in_xy = g.in.xy(), in_xyz = g.in.xyz();
  const std::int64_t out_xy = g.out.xy(), out_xyz = g.out.xyz();
  {
    const double* x = input.data().data();
    const double* w = kernel.data().data();
    const double* b = bias.data().data();
    double* o = out->data.data();
    parallel_for(g.co, [&](std::int64_t co0, std::int64_t co1) {
      for (std::int64_t co = co0; co < co1; ++co) {
        double* oc = o + co * out_xyz;
        std::fill_n(oc, out_xyz, b[co]);
        for (int ci = 0; ci < g.ci; ++ci) {
          const double* xc = x + ci * in_xyz;
          const double* wc = w + (ci * g.co + co) * g.k * g.k * g.k;
          for (int kz = 0; kz < g.k; ++kz)
            for (int ky = 0; ky < g.k; ++ky)
              for (int kx = 0; kx < g.k; ++kx) {
                const double wv = wc[(kz * g.k + ky) * g.k + kx];
                if (wv == 0.0) continue;
                for (int zi = 0; zi < g.in.z; ++zi) {
                  const int zo = zi * g.stride + kz;
                  for (int yi = 0; yi < g.in.y; ++yi) {
                    const int yo = yi * g.stride + ky;
                    const double* src = xc + zi * in_xy + yi * g.in.x;
                    double* dst = oc + zo * out_xy + yo * g.out.x + kx;
                    for (int xi = 0; xi < g.in.x; ++xi) dst[xi * g.stride] += wv * src[xi];
                  }
                }
              }
        }
      }
    });
  }

  if (needs_grad) {
    out->parents = {input.node(), kernel.node(), bias.node()};
    auto xn = input.node();
    auto wn = kernel.node();
    auto bn = bias.node();
    out->backward_fn = [g, xn, wn, bn, in_xy, in_xyz, out_xy, out_xyz](Node& self) {
      const double* gout = self.grad.data();

      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int co = 0; co < g.co; ++co) {
          const double* gc = gout + co * out_xyz;
          double acc = 0.0;
          for (std::int64_t i = 0; i < out_xyz; ++i) acc += gc[i];
          bn->grad[static_cast<std::size_t>(co)] += acc;
        }
      }

      if (wn->requires_grad) {
        wn->ensure_grad();
        const double* x = xn->data.data();
        double* wg = wn->grad.data();
        parallel_for(g.ci, [&](std::int64_t ci0, std::int64_t ci1) {
          for (std::int64_t ci = ci0; ci < ci1; ++ci) {
            const double* xc = x + ci * in_xyz;
            for (int co = 0; co < g.co; ++co) {
              const double* gc = gout + co * out_xyz;
              double* wgc = wg + (ci * g.co + co) * g.k * g.k * g.k;
              for (int kz = 0; kz < g.k; ++kz)
                for (int ky = 0; ky < g.k; ++ky)
                  for (int kx = 0; kx < g.k; ++kx) {
                    double acc = 0.0;
                    for (int zi = 0; zi < g.in.z; ++zi) {
                      const int zo = zi * g.stride + kz;
                      for (int yi = 0; yi < g.in.y; ++yi) {
                        const int yo = yi * g.stride + ky;
                        const double* src = xc + zi * in_xy + yi * g.in.x;
                        const double* gr = gc + zo * out_xy + yo * g.out.x + kx;
                        for (int xi = 0; xi < g.in.x; ++xi) acc += src[xi] * gr[xi * g.stride];
                      }
                    }
                    wgc[(kz * g.k + ky) * g.k + kx] += acc;
                  }
            }
          }
        });
      }

      if (xn->requires_grad) {
        xn->ensure_grad();
        const double* w = wn->data.data();
        double* xg = xn->grad.data();
        parallel_for(g.ci, [&](std::int64_t ci0, std::int64_t ci1) {
          for (std::int64_t ci = ci0; ci < ci1; ++ci) {
            double* xgc = xg + ci * in_xyz;
            for (int co = 0; co < g.co; ++co) {
              const double* gc = gout + co * out_xyz;
              const double* wc = w + (ci * g.co + co) * g.k * g.k * g.k;
              for (int kz = 0; kz < g.k; ++kz)
                for (int ky = 0; ky < g.k; ++ky)
                  for (int kx = 0; kx < g.k; ++kx) {
                    const double wv = wc[(kz * g.k + ky) * g.k + kx];
                    if (wv == 0.0) continue;
                    for (int zi = 0; zi < g.in.z; ++zi) {
                      const int zo = zi * g.stride + kz;
                      for (int yi = 0; yi < g.in.y; ++yi) {
                        const int yo = yi * g.stride + ky;
                        double* dst = xgc + zi * in_xy + yi * g.in.x;
                        const double* gr = gc + zo * out_xy + yo * g.out.x + kx;
                        for (int xi = 0; xi < g.in.x; ++xi) dst[xi] += wv * gr[xi * g.stride];
                      }
                    }
                  }
            }
          }
        });
      }
    };
  }
  return Tensor(out);
}

// -- pointwise ops -----------------------------------------------------------

Tensor prelu(const Tensor& input, const Tensor& slope) {
  if (slope.numel() != 1) throw ShapeError("prelu: slope must be a single-element tensor");
  const double a = slope.data()[0];
  const bool needs_grad = input.requires_grad() || slope.requires_grad();
  auto out = make_node(input.shape(), needs_grad);
  const auto& x = input.data();
  for (std::size_t i = 0; i < x.size(); ++i) out->data[i] = x[i] > 0.0 ? x[i] : a * x[i];
  if (needs_grad) {
    out->parents = {input.node(), slope.node()};
    auto xn = input.node();
    auto an = slope.node();
    out->backward_fn = [xn, an](Node& self) {
      const double a = an->data[0];
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          xn->grad[i] += self.grad[i] * (xn->data[i] > 0.0 ? 1.0 : a);
      }
      if (an->requires_grad) {
        an->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if (xn->data[i] <= 0.0) acc += self.grad[i] * xn->data[i];
        an->grad[0] += acc;
      }
    };
  }
  return Tensor(out);
}

Tensor relu(const Tensor& input) {
  auto out = make_node(input.shape(), input.requires_grad());
  const auto& x = input.data();
  for (std::size_t i = 0; i < x.size(); ++i) out->data[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (input.requires_grad()) {
    out->parents = {input.node()};
    auto xn = input.node();
    out->backward_fn = [xn](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (xn->data[i] > 0.0) xn->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
  const bool needs_grad = a.requires_grad() || b.requires_grad();
  auto out = make_node(a.shape(), needs_grad);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.data()[i] + b.data()[i];
  if (needs_grad) {
    out->parents = {a.node(), b.node()};
    auto an = a.node();
    auto bn = b.node();
    out->backward_fn = [an, bn](Node& self) {
      for (auto& n : {an, bn}) {
        if (!n->requires_grad) continue;
        n->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) n->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  expect_rank(a, 4, "concat_channels");
  expect_rank(b, 4, "concat_channels");
  for (int d = 1; d < 4; ++d)
    if (a.shape()[d] != b.shape()[d]) throw ShapeError("concat_channels: spatial dims differ");
  const std::int64_t sp =
      static_cast<std::int64_t>(a.shape()[1]) * a.shape()[2] * a.shape()[3];
  const int ca = a.shape()[0], cb = b.shape()[0];
  const bool needs_grad = a.requires_grad() || b.requires_grad();
  auto out = make_node({ca + cb, a.shape()[1], a.shape()[2], a.shape()[3]}, needs_grad);
  std::copy_n(a.data().data(), ca * sp, out->data.data());
  std::copy_n(b.data().data(), cb * sp, out->data.data() + ca * sp);
  if (needs_grad) {
    out->parents = {a.node(), b.node()};
    auto an = a.node();
    auto bn = b.node();
    out->backward_fn = [an, bn, ca, cb, sp](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::int64_t i = 0; i < ca * sp; ++i) an->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::int64_t i = 0; i < cb * sp; ++i)
          bn->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(ca * sp + i)];
      }
    };
  }
  return Tensor(out);
}

Tensor select_channel(const Tensor& input, int channel) {
  expect_rank(input, 4, "select_channel");
  if (channel < 0 || channel >= input.shape()[0])
    throw ShapeError("select_channel: channel out of range");
  const std::int64_t sp =
      static_cast<std::int64_t>(input.shape()[1]) * input.shape()[2] * input.shape()[3];
  auto out = make_node({1, input.shape()[1], input.shape()[2], input.shape()[3]},
                       input.requires_grad());
  std::copy_n(input.data().data() + channel * sp, sp, out->data.data());
  if (input.requires_grad()) {
    out->parents = {input.node()};
    auto xn = input.node();
    out->backward_fn = [xn, channel, sp](Node& self) {
      xn->ensure_grad();
      for (std::int64_t i = 0; i < sp; ++i)
        xn->grad[static_cast<std::size_t>(channel * sp + i)] += self.grad[static_cast<std::size_t>(i)];
    };
  }
  return Tensor(out);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeError("mse_loss: shape mismatch");
  const std::size_t n = pred.data().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  const bool needs_grad = pred.requires_grad() || target.requires_grad();
  auto out = make_node({1}, needs_grad);
  out->data[0] = acc / static_cast<double>(n);
  if (needs_grad) {
    out->parents = {pred.node(), target.node()};
    auto pn = pred.node();
    auto tn = target.node();
    out->backward_fn = [pn, tn, n](Node& self) {
      const double scale = 2.0 * self.grad[0] / static_cast<double>(n);
      if (pn->requires_grad) {
        pn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          pn->grad[i] += scale * (pn->data[i] - tn->data[i]);
      }
      if (tn->requires_grad) {
        tn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          tn->grad[i] -= scale * (pn->data[i] - tn->data[i]);
      }
    };
  }
  return Tensor(out);
}

}  // namespace lvce::nn
