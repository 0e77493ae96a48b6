#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "conv_reference.hpp"
#include "lvce/rng.hpp"
#include "lvce/tensor.hpp"

using namespace lvce;
using namespace lvce::nn;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Central finite differences of a scalar-valued function w.r.t. a tensor.
std::vector<double> finite_diff(Tensor& t, const std::function<double()>& f, double eps = 1e-6) {
  std::vector<double> g(t.data().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = t.data()[i];
    t.data()[i] = saved + eps;
    const double lp = f();
    t.data()[i] = saved - eps;
    const double lm = f();
    t.data()[i] = saved;
    g[i] = (lp - lm) / (2.0 * eps);
  }
  return g;
}

}  // namespace

TEST_CASE("conv3d: 1x1x1 identity kernel") {
  Rng rng(1);
  Tensor x = Tensor::from_data({2, 3, 3, 3}, random_vec(54, rng));
  Tensor w = Tensor::from_data({2, 2, 1, 1, 1}, {1, 0, 0, 1});
  Tensor b = Tensor::zeros({2});
  Tensor y = conv3d(x, w, b, 1, 0);
  CHECK(y.data() == x.data());
}

TEST_CASE("conv3d: all-ones window sums 27") {
  Tensor x = Tensor::from_data({1, 3, 3, 3}, std::vector<double>(27, 1.0));
  Tensor w = Tensor::from_data({1, 1, 3, 3, 3}, std::vector<double>(27, 1.0));
  Tensor b = Tensor::from_data({1}, {0.5});
  Tensor y = conv3d(x, w, b, 1, 0);
  CHECK(y.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y.data()[0] == doctest::Approx(27.5).epsilon(1e-14));
}

TEST_CASE("conv3d shape errors") {
  Tensor x = Tensor::zeros({2, 4, 4, 4});
  Tensor w = Tensor::zeros({3, 1, 3, 3, 3});  // channel mismatch
  Tensor b = Tensor::zeros({3});
  CHECK_THROWS_AS(conv3d(x, w, b, 1, 1), ShapeError);
  Tensor w2 = Tensor::zeros({3, 2, 3, 3, 3});
  Tensor b2 = Tensor::zeros({2});  // bias mismatch
  CHECK_THROWS_AS(conv3d(x, w2, b2, 1, 1), ShapeError);
  Tensor w3 = Tensor::zeros({3, 2, 5, 5, 5});  // kernel larger than padded input
  Tensor b3 = Tensor::zeros({3});
  CHECK_THROWS_AS(conv3d(x, w3, b3, 1, 0), ShapeError);
}

TEST_CASE("conv3d forward and backward match the naive reference on random shapes") {
  Rng rng(20240514);
  for (int trial = 0; trial < 12; ++trial) {
    conv_ref::ConvSpec spec;
    spec.in = {1 + static_cast<int>(rng.uniform_index(3)),
               3 + static_cast<int>(rng.uniform_index(4)),
               3 + static_cast<int>(rng.uniform_index(4)),
               3 + static_cast<int>(rng.uniform_index(4))};
    spec.co = 1 + static_cast<int>(rng.uniform_index(3));
    spec.k = 1 + static_cast<int>(rng.uniform_index(3));
    spec.stride = 1 + static_cast<int>(rng.uniform_index(2));
    spec.pad = static_cast<int>(rng.uniform_index(2));
    if (spec.in.x + 2 * spec.pad < spec.k) continue;

    const auto xd = random_vec(static_cast<std::size_t>(spec.in.numel()), rng);
    const auto wd = random_vec(static_cast<std::size_t>(spec.co) * spec.in.c * spec.k * spec.k *
                                   spec.k, rng);
    const auto bd = random_vec(static_cast<std::size_t>(spec.co), rng);

    Tensor x = Tensor::from_data({spec.in.c, spec.in.x, spec.in.y, spec.in.z}, xd, true);
    Tensor w = Tensor::from_data({spec.co, spec.in.c, spec.k, spec.k, spec.k}, wd, true);
    Tensor b = Tensor::from_data({spec.co}, bd, true);
    Tensor out = conv3d(x, w, b, spec.stride, spec.pad);

    const auto ref_out = conv_ref::forward(spec, xd, wd, bd);
    CHECK(max_abs_diff(out.data(), ref_out) < 1e-10);

    // Backward through an MSE head so the upstream gradient is non-trivial;
    // the reference replays the same chain.
    const auto target = random_vec(ref_out.size(), rng);
    Tensor t = Tensor::from_data(out.shape(), target);
    mse_loss(out, t).backward();

    std::vector<double> gout(ref_out.size());
    for (std::size_t i = 0; i < gout.size(); ++i)
      gout[i] = 2.0 * (ref_out[i] - target[i]) / static_cast<double>(ref_out.size());
    const auto ref_g = conv_ref::backward(spec, xd, wd, gout);
    CHECK(max_abs_diff(x.grad(), ref_g.dx) < 1e-10);
    CHECK(max_abs_diff(w.grad(), ref_g.dw) < 1e-10);
    CHECK(max_abs_diff(b.grad(), ref_g.db) < 1e-10);
  }
}

TEST_CASE("conv_transpose3d doubles spatial dims with k=2, s=2") {
  Rng rng(5);
  Tensor x = Tensor::from_data({3, 4, 4, 4}, random_vec(3 * 64, rng));
  Tensor w = Tensor::from_data({3, 2, 2, 2, 2}, random_vec(3 * 2 * 8, rng));
  Tensor b = Tensor::zeros({2});
  Tensor y = conv_transpose3d(x, w, b, 2);
  CHECK(y.shape() == std::vector<int>{2, 8, 8, 8});
}

TEST_CASE("conv_transpose3d gradients match central finite differences") {
  Rng rng(6);
  Tensor x = Tensor::from_data({2, 4, 4, 4}, random_vec(2 * 64, rng), true);
  Tensor w = Tensor::from_data({2, 2, 2, 2, 2}, random_vec(2 * 2 * 8, rng), true);
  Tensor b = Tensor::from_data({2}, random_vec(2, rng), true);
  const auto target = random_vec(2 * 8 * 8 * 8, rng);

  auto loss_value = [&]() {
    Tensor out = conv_transpose3d(x, w, b, 2);
    Tensor t = Tensor::from_data(out.shape(), target);
    return mse_loss(out, t).data()[0];
  };

  x.zero_grad();
  w.zero_grad();
  b.zero_grad();
  {
    Tensor out = conv_transpose3d(x, w, b, 2);
    Tensor t = Tensor::from_data(out.shape(), target);
    mse_loss(out, t).backward();
  }
  for (Tensor* p : {&w, &b, &x}) {
    const auto fd = finite_diff(*p, loss_value, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double denom = std::max({std::fabs(fd[i]), std::fabs(p->grad()[i]), 1e-6});
      CHECK(std::fabs(fd[i] - p->grad()[i]) / denom < 1e-6);
    }
  }
}

TEST_CASE("pointwise ops: values and finite-difference gradients") {
  Rng rng(7);
  const std::size_t n = 16;
  Tensor x = Tensor::from_data({1, 4, 2, 2}, random_vec(n, rng), true);
  Tensor slope = Tensor::from_data({1}, {0.25}, true);
  const auto target = random_vec(n, rng);

  SUBCASE("prelu") {
    auto loss_value = [&]() {
      Tensor y = prelu(x, slope);
      return mse_loss(y, Tensor::from_data(y.shape(), target)).data()[0];
    };
    x.zero_grad();
    slope.zero_grad();
    {
      Tensor y = prelu(x, slope);
      for (std::size_t i = 0; i < n; ++i) {
        const double xv = x.data()[i];
        CHECK(y.data()[i] == (xv > 0 ? xv : 0.25 * xv));
      }
      mse_loss(y, Tensor::from_data(y.shape(), target)).backward();
    }
    for (Tensor* p : {&x, &slope}) {
      const auto fd = finite_diff(*p, loss_value);
      for (std::size_t i = 0; i < fd.size(); ++i)
        CHECK(std::fabs(fd[i] - p->grad()[i]) < 1e-7);
    }
  }

  SUBCASE("relu") {
    auto loss_value = [&]() {
      Tensor y = relu(x);
      return mse_loss(y, Tensor::from_data(y.shape(), target)).data()[0];
    };
    x.zero_grad();
    {
      Tensor y = relu(x);
      mse_loss(y, Tensor::from_data(y.shape(), target)).backward();
    }
    const auto fd = finite_diff(x, loss_value);
    for (std::size_t i = 0; i < fd.size(); ++i) CHECK(std::fabs(fd[i] - x.grad()[i]) < 1e-7);
  }

  SUBCASE("add accumulates into both branches and reused tensors") {
    Tensor y = Tensor::from_data({1, 4, 2, 2}, random_vec(n, rng), true);
    auto loss_value = [&]() {
      // x appears twice: once directly and once through the sum.
      Tensor s = add(add(x, y), x);
      return mse_loss(s, Tensor::from_data(s.shape(), target)).data()[0];
    };
    x.zero_grad();
    y.zero_grad();
    {
      Tensor s = add(add(x, y), x);
      mse_loss(s, Tensor::from_data(s.shape(), target)).backward();
    }
    for (Tensor* p : {&x, &y}) {
      const auto fd = finite_diff(*p, loss_value);
      for (std::size_t i = 0; i < fd.size(); ++i)
        CHECK(std::fabs(fd[i] - p->grad()[i]) < 1e-7);
    }
  }

  SUBCASE("concat and select route gradients to the right channels") {
    Tensor y = Tensor::from_data({2, 4, 2, 2}, random_vec(2 * n, rng), true);
    const auto target3 = random_vec(n, rng);
    auto loss_value = [&]() {
      Tensor cat = concat_channels(x, y);      // 3 channels
      Tensor mid = select_channel(cat, 1);     // first channel of y
      return mse_loss(mid, Tensor::from_data(mid.shape(), target3)).data()[0];
    };
    x.zero_grad();
    y.zero_grad();
    {
      Tensor cat = concat_channels(x, y);
      Tensor mid = select_channel(cat, 1);
      mse_loss(mid, Tensor::from_data(mid.shape(), target3)).backward();
    }
    for (double g : x.grad()) CHECK(g == 0.0);  // channel 0 unused
    const auto fd = finite_diff(y, loss_value);
    for (std::size_t i = 0; i < fd.size(); ++i) CHECK(std::fabs(fd[i] - y.grad()[i]) < 1e-7);
  }
}

TEST_CASE("mse_loss: values and analytic gradient") {
  Tensor pred = Tensor::from_data({1, 2, 1, 1}, {0.5, 0.7}, true);
  Tensor target = Tensor::from_data({1, 2, 1, 1}, {0.5, 0.7});
  Tensor zero = mse_loss(pred, target);
  zero.backward();
  CHECK(zero.data()[0] == 0.0);
  CHECK(pred.grad() == std::vector<double>{0.0, 0.0});

  pred.zero_grad();
  Tensor shifted = Tensor::from_data({1, 2, 1, 1}, {0.4, 0.6});
  Tensor loss = mse_loss(pred, shifted);
  CHECK(loss.data()[0] == doctest::Approx(0.01).epsilon(1e-14));
  loss.backward();
  CHECK(pred.grad()[0] == doctest::Approx(0.1).epsilon(1e-12));

  Tensor bad = Tensor::zeros({1, 3, 1, 1});
  CHECK_THROWS_AS(mse_loss(pred, bad), ShapeError);
}

TEST_CASE("mse_loss analytic gradient matches finite differences on random data") {
  Rng rng(9);
  Tensor pred = Tensor::from_data({2, 3, 3, 3}, random_vec(54, rng), true);
  Tensor target = Tensor::from_data({2, 3, 3, 3}, random_vec(54, rng));
  auto loss_value = [&]() { return mse_loss(pred, target).data()[0]; };
  pred.zero_grad();
  mse_loss(pred, target).backward();
  // The loss is quadratic in pred, so central differences are exact up to
  // rounding; a larger step keeps the rounding term below 1e-8 relative.
  const auto fd = finite_diff(pred, loss_value, 1e-3);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double denom = std::max({std::fabs(fd[i]), std::fabs(pred.grad()[i]), 1e-8});
    CHECK(std::fabs(fd[i] - pred.grad()[i]) / denom < 1e-8);
  }
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = Tensor::zeros({1, 2, 2, 2}, true);
  CHECK_THROWS_AS(x.backward(), InvalidArgument);
}
