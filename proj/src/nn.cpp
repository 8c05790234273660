#include "fei/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fei/errors.hpp"

namespace fei::nn {

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  if (name == "softplus") return Activation::softplus;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::softplus: return "softplus";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2; }

}  // namespace

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::gelu: return x * normal_cdf(x);
    case Activation::softplus: return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::gelu: return normal_cdf(x) + x * normal_pdf(x);
    case Activation::softplus: return 1.0 / (1.0 + std::exp(-x));
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

void activate(Activation a, std::span<const double> pre, std::span<double> out) {
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = activate(a, pre[i]);
}

void activate_backward(Activation a, std::span<const double> pre, std::span<const double> upstream,
                       std::span<double> out) {
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = upstream[i] * activate_derivative(a, pre[i]);
}

void Dense::init(std::span<double> params, Rng& rng) const {
  const double bound = 1.0 / std::sqrt(double(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < num_params(); ++i) params[offset + i] = dist(rng);
}

void Dense::forward(std::span<const double> params, std::span<const double> x, std::span<double> y) const {
  const double* w = params.data() + weight_offset();
  const double* b = params.data() + bias_offset();
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w + o * in;
    double acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void Dense::backward(std::span<const double> params, std::span<const double> x, std::span<const double> dy,
                     std::span<double> grad, std::span<double> dx) const {
  const double* w = params.data() + weight_offset();
  double* gw = grad.data() + weight_offset();
  double* gb = grad.data() + bias_offset();
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    gb[o] += g;
    if (g == 0.0) continue;
    double* grow = gw + o * in;
    for (std::size_t i = 0; i < in; ++i) grow[i] += g * x[i];
    if (!dx.empty()) {
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
    }
  }
}

void Conv1d::init(std::span<double> params, Rng& rng) const {
  const double bound = 1.0 / std::sqrt(double(in_channels * kernel));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < num_params(); ++i) params[offset + i] = dist(rng);
}

void Conv1d::forward(std::span<const double> params, std::span<const double> x, std::span<double> y) const {
  const double* w = params.data() + weight_offset();
  const double* b = params.data() + bias_offset();
  const std::size_t lout = out_length();
  const auto pad = static_cast<std::ptrdiff_t>(padding());
  const auto lin = static_cast<std::ptrdiff_t>(in_length);
  for (std::size_t o = 0; o < out_channels; ++o) {
    double* yo = y.data() + o * lout;
    std::fill(yo, yo + lout, b[o]);
    for (std::size_t i = 0; i < in_channels; ++i) {
      const double* xi = x.data() + i * in_length;
      const double* wk = w + (o * in_channels + i) * kernel;
      for (std::size_t j = 0; j < kernel; ++j) {
        const double wv = wk[j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        // Valid outputs t satisfy 0 <= t*stride + shift < lin.
        std::ptrdiff_t t0 = shift >= 0 ? 0 : (-shift + static_cast<std::ptrdiff_t>(stride) - 1) / static_cast<std::ptrdiff_t>(stride);
        std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(lout),
                                                     (lin - shift + static_cast<std::ptrdiff_t>(stride) - 1) /
                                                         static_cast<std::ptrdiff_t>(stride));
        if (stride == 1) {
          const double* src = xi + shift;
          for (std::ptrdiff_t t = t0; t < t1; ++t) yo[t] += wv * src[t];
        } else {
          for (std::ptrdiff_t t = t0; t < t1; ++t) yo[t] += wv * xi[t * static_cast<std::ptrdiff_t>(stride) + shift];
        }
      }
    }
  }
}

void Conv1d::backward(std::span<const double> params, std::span<const double> x, std::span<const double> dy,
                      std::span<double> grad, std::span<double> dx) const {
  const double* w = params.data() + weight_offset();
  double* gw = grad.data() + weight_offset();
  double* gb = grad.data() + bias_offset();
  const std::size_t lout = out_length();
  const auto pad = static_cast<std::ptrdiff_t>(padding());
  const auto lin = static_cast<std::ptrdiff_t>(in_length);
  const auto s = static_cast<std::ptrdiff_t>(stride);
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < out_channels; ++o) {
    const double* go = dy.data() + o * lout;
    double bsum = 0.0;
    for (std::size_t t = 0; t < lout; ++t) bsum += go[t];
    gb[o] += bsum;
    for (std::size_t i = 0; i < in_channels; ++i) {
      const double* xi = x.data() + i * in_length;
      const double* wk = w + (o * in_channels + i) * kernel;
      double* gk = gw + (o * in_channels + i) * kernel;
      double* dxi = dx.empty() ? nullptr : dx.data() + i * in_length;
      for (std::size_t j = 0; j < kernel; ++j) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        std::ptrdiff_t t0 = shift >= 0 ? 0 : (-shift + s - 1) / s;
        std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(lout), (lin - shift + s - 1) / s);
        double acc = 0.0;
        const double wv = wk[j];
        if (s == 1) {
          const double* src = xi + shift;
          for (std::ptrdiff_t t = t0; t < t1; ++t) acc += go[t] * src[t];
          if (dxi) {
            double* dst = dxi + shift;
            for (std::ptrdiff_t t = t0; t < t1; ++t) dst[t] += wv * go[t];
          }
        } else {
          for (std::ptrdiff_t t = t0; t < t1; ++t) acc += go[t] * xi[t * s + shift];
          if (dxi) {
            for (std::ptrdiff_t t = t0; t < t1; ++t) dxi[t * s + shift] += wv * go[t];
          }
        }
        gk[j] += acc;
      }
    }
  }
}

void BatchNorm1d::init(std::span<double> params) const {
  std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(offset), channels, 1.0);
  std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(offset + channels), channels, 0.0);
}

void BatchNorm1d::init_stats(std::span<double> stats) const {
  std::fill_n(stats.begin() + static_cast<std::ptrdiff_t>(stats_offset), channels, 0.0);
  std::fill_n(stats.begin() + static_cast<std::ptrdiff_t>(stats_offset + channels), channels, 1.0);
}

void BatchNorm1d::forward(std::span<const double> params, std::span<const double> stats, std::span<const double> x,
                          std::span<double> y) const {
  const double* gamma = params.data() + offset;
  const double* beta = gamma + channels;
  const double* mean = stats.data() + stats_offset;
  const double* var = mean + channels;
  for (std::size_t c = 0; c < channels; ++c) {
    const double scale = gamma[c] / std::sqrt(var[c] + eps);
    const double shift = beta[c] - mean[c] * scale;
    for (std::size_t t = 0; t < length; ++t) y[c * length + t] = x[c * length + t] * scale + shift;
  }
}

void BatchNorm1d::forward_batch(std::span<const double> params, const Batch& x, Batch& y, Batch& xhat,
                                std::vector<double>& inv_std, std::span<double> stats_update) const {
  if (x.empty()) throw InvalidInputError("batch normalization needs a non-empty batch");
  const std::size_t n = x.size();
  const double count = double(n * length);
  const double* gamma = params.data() + offset;
  const double* beta = gamma + channels;
  y.resize(n);
  xhat.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i].resize(channels * length);
    xhat[i].resize(channels * length);
  }
  inv_std.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < length; ++t) mean += x[i][c * length + t];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < length; ++t) {
        const double dv = x[i][c * length + t] - mean;
        var += dv * dv;
      }
    }
    var /= count;
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < length; ++t) {
        const std::size_t k = c * length + t;
        xhat[i][k] = (x[i][k] - mean) * inv_std[c];
        y[i][k] = gamma[c] * xhat[i][k] + beta[c];
      }
    }
    if (!stats_update.empty()) {
      double& rm = stats_update[stats_offset + c];
      double& rv = stats_update[stats_offset + channels + c];
      const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
      rm = (1.0 - momentum) * rm + momentum * mean;
      rv = (1.0 - momentum) * rv + momentum * unbiased;
    }
  }
}

void BatchNorm1d::backward_batch(std::span<const double> params, const Batch& xhat, std::span<const double> inv_std,
                                 const Batch& dy, std::span<double> grad, Batch& dx) const {
  const std::size_t n = xhat.size();
  const double count = double(n * length);
  const double* gamma = params.data() + offset;
  double* g_gamma = grad.data() + offset;
  double* g_beta = g_gamma + channels;
  dx.resize(n);
  for (std::size_t i = 0; i < n; ++i) dx[i].resize(channels * length);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < length; ++t) {
        const std::size_t k = c * length + t;
        sum_dy += dy[i][k];
        sum_dy_xhat += dy[i][k] * xhat[i][k];
      }
    }
    g_gamma[c] += sum_dy_xhat;
    g_beta[c] += sum_dy;
    const double mean_dy = sum_dy / count;
    const double mean_dy_xhat = sum_dy_xhat / count;
    const double scale = gamma[c] * inv_std[c];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < length; ++t) {
        const std::size_t k = c * length + t;
        dx[i][k] = scale * (dy[i][k] - mean_dy - xhat[i][k] * mean_dy_xhat);
      }
    }
  }
}

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out, Activation act, std::size_t offset)
    : first{in, hidden, offset}, second{hidden, out, offset + hidden * in + hidden}, activation(act) {}

void Mlp::init(std::span<double> params, Rng& rng) const {
  first.init(params, rng);
  second.init(params, rng);
}

void Mlp::init_identity(std::span<double> params) const {
  const std::size_t d = first.in;
  if (second.out != d || first.out != 2 * d) {
    throw ConfigError("identity predictor init needs hidden width = 2 x input width");
  }
  if (activation != Activation::relu && activation != Activation::gelu && activation != Activation::softplus) {
    throw ConfigError("identity predictor init needs a relu, gelu or softplus activation");
  }
  std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(first.offset), num_params(), 0.0);
  double* w1 = params.data() + first.weight_offset();
  double* w2 = params.data() + second.weight_offset();
  for (std::size_t i = 0; i < d; ++i) {
    w1[i * d + i] = 1.0;
    w1[(d + i) * d + i] = -1.0;
    w2[i * (2 * d) + i] = 1.0;
    w2[i * (2 * d) + d + i] = -1.0;
  }
}

void Mlp::forward(std::span<const double> params, std::span<const double> x, std::span<double> y,
                  Tape* tape) const {
  std::vector<double> pre(first.out);
  first.forward(params, x, pre);
  std::vector<double> hidden(first.out);
  activate(activation, pre, hidden);
  second.forward(params, hidden, y);
  if (tape) {
    tape->slots.emplace_back(x.begin(), x.end());
    tape->slots.push_back(std::move(pre));
    tape->slots.push_back(std::move(hidden));
  }
}

void Mlp::backward(std::span<const double> params, const Tape& tape, std::span<const double> dy,
                   std::span<double> grad, std::span<double> dx) const {
  const auto& x = tape.slots.at(0);
  const auto& pre = tape.slots.at(1);
  const auto& hidden = tape.slots.at(2);
  std::vector<double> dhidden(first.out);
  second.backward(params, hidden, dy, grad, dhidden);
  std::vector<double> dpre(first.out);
  activate_backward(activation, pre, dhidden, dpre);
  first.backward(params, x, dpre, grad, dx);
}

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

}  // namespace fei::nn
