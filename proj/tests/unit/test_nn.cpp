#include <doctest.h>

#include <cmath>
#include <functional>

#include "fei/nn.hpp"

using namespace fei;
using namespace fei::nn;

namespace {

std::vector<double> randn(std::size_t n, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central differences of f over every entry of x, compared with `analytic`.
void check_gradient(std::vector<double>& x, const std::function<double()>& f, const std::vector<double>& analytic,
                    double tol = 1e-6) {
  REQUIRE(x.size() == analytic.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    const double fd = (up - down) / (2 * h);
    CHECK(std::abs(fd - analytic[i]) <= tol * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace

TEST_CASE("activation derivatives match finite differences") {
  for (auto a : {Activation::identity, Activation::relu, Activation::gelu, Activation::softplus, Activation::tanh}) {
    for (double x : {-2.1, -0.3, 0.4, 1.7}) {
      const double fd = (activate(a, x + 1e-6) - activate(a, x - 1e-6)) / 2e-6;
      CHECK(activate_derivative(a, x) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  CHECK(parse_activation("gelu") == Activation::gelu);
}

TEST_CASE("dense layer gradients") {
  Rng rng(1);
  const Dense layer{5, 3, 0};
  std::vector<double> p(layer.num_params());
  layer.init(p, rng);
  auto x = randn(5, rng);
  const auto c = randn(3, rng);
  auto loss = [&] {
    std::vector<double> y(3);
    layer.forward(p, x, y);
    return dot(y, c);
  };
  std::vector<double> gp(p.size(), 0.0), gx(5, 0.0);
  layer.backward(p, x, c, gp, gx);
  check_gradient(p, loss, gp);
  check_gradient(x, loss, gx);
}

TEST_CASE("strided convolution gradients") {
  Rng rng(2);
  const Conv1d conv{2, 3, 5, 2, 11, 0};
  CHECK(conv.out_length() == 6);
  std::vector<double> p(conv.num_params());
  conv.init(p, rng);
  auto x = randn(2 * 11, rng);
  const auto c = randn(3 * conv.out_length(), rng);
  auto loss = [&] {
    std::vector<double> y(c.size());
    conv.forward(p, x, y);
    return dot(y, c);
  };
  std::vector<double> gp(p.size(), 0.0), gx(x.size(), 0.0);
  conv.backward(p, x, c, gp, gx);
  check_gradient(p, loss, gp);
  check_gradient(x, loss, gx);
}

TEST_CASE("batch norm training-mode gradients and statistics") {
  Rng rng(3);
  const BatchNorm1d bn{2, 4, 0, 0};
  std::vector<double> p = {1.3, 0.7, 0.2, -0.4};
  Batch x = {randn(8, rng), randn(8, rng), randn(8, rng)};
  const Batch c = {randn(8, rng), randn(8, rng), randn(8, rng)};
  auto loss = [&] {
    Batch y, xhat;
    std::vector<double> inv;
    bn.forward_batch(p, x, y, xhat, inv, {});
    double s = 0.0;
    for (std::size_t b = 0; b < 3; ++b) s += dot(y[b], c[b]);
    return s;
  };
  Batch y, xhat, dx;
  std::vector<double> inv;
  std::vector<double> stats(bn.num_stats());
  bn.init_stats(stats);
  bn.forward_batch(p, x, y, xhat, inv, stats);
  std::vector<double> gp(p.size(), 0.0);
  bn.backward_batch(p, xhat, inv, c, gp, dx);
  check_gradient(p, loss, gp);
  for (std::size_t b = 0; b < 3; ++b) {
    auto& xb = x[b];
    std::vector<double> keep = xb;
    // Gradient of one sample's inputs, the other samples held fixed.
    check_gradient(xb, loss, dx[b]);
    xb = keep;
  }

  // Running statistics: 0.9 * init + 0.1 * batch (unbiased variance).
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double mean = 0.0, n = 0.0;
    for (const auto& s : x) {
      for (std::size_t t = 0; t < 4; ++t) mean += s[ch * 4 + t], n += 1;
    }
    mean /= n;
    double var = 0.0;
    for (const auto& s : x) {
      for (std::size_t t = 0; t < 4; ++t) var += (s[ch * 4 + t] - mean) * (s[ch * 4 + t] - mean);
    }
    var /= n - 1;
    CHECK(stats[ch] == doctest::Approx(0.1 * mean));
    CHECK(stats[2 + ch] == doctest::Approx(0.9 + 0.1 * var));
  }
}

TEST_CASE("batch norm inference uses running statistics") {
  const BatchNorm1d bn{1, 3, 0, 0};
  const std::vector<double> p = {2.0, 1.0};
  const std::vector<double> stats = {1.0, 4.0};
  const std::vector<double> x = {1.0, 3.0, 5.0};
  std::vector<double> y(3);
  bn.forward(p, stats, x, y);
  const double s = std::sqrt(4.0 + bn.eps);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(2.0 * 2.0 / s + 1.0));
  CHECK(y[2] == doctest::Approx(2.0 * 4.0 / s + 1.0));
}

TEST_CASE("mlp gradients and identity initialization") {
  Rng rng(4);
  const Mlp net(4, 6, 3, Activation::gelu);
  std::vector<double> p(net.num_params());
  net.init(p, rng);
  auto x = randn(4, rng);
  const auto c = randn(3, rng);
  auto loss = [&] {
    std::vector<double> y(3);
    net.forward(p, x, y);
    return dot(y, c);
  };
  Tape tape;
  std::vector<double> y(3), gp(p.size(), 0.0), gx(4, 0.0);
  net.forward(p, x, y, &tape);
  net.backward(p, tape, c, gp, gx);
  check_gradient(p, loss, gp);
  check_gradient(x, loss, gx);

  for (auto a : {Activation::relu, Activation::gelu, Activation::softplus}) {
    const Mlp id(4, 8, 4, a);
    std::vector<double> q(id.num_params());
    id.init_identity(q);
    std::vector<double> out(4);
    id.forward(q, x, out);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-12));
  }
}
