#pragma once

// Layers with explicit forward/backward passes over flat parameter vectors.
//
// A layer does not own its weights. It records an offset into a parameter
// span, so a whole network is one contiguous std::vector<double> and its
// gradient is another vector of the same size. EMA copies, optimizer state
// and checkpoint blobs are then plain elementwise operations on vectors.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fei/signal.hpp"

namespace fei::nn {

enum class Activation { identity, relu, gelu, softplus, tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

double activate(Activation a, double x);
/// d activate(x) / dx evaluated at the pre-activation x.
double activate_derivative(Activation a, double x);

void activate(Activation a, std::span<const double> pre, std::span<double> out);
/// out[i] = upstream[i] * activate'(pre[i]).
void activate_backward(Activation a, std::span<const double> pre, std::span<const double> upstream,
                       std::span<double> out);

/// y = W x + b with W stored row-major (out x in), followed by b.
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;

  std::size_t num_params() const { return out * in + out; }
  std::size_t weight_offset() const { return offset; }
  std::size_t bias_offset() const { return offset + out * in; }

  /// U(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
  void init(std::span<double> params, Rng& rng) const;
  void forward(std::span<const double> params, std::span<const double> x, std::span<double> y) const;
  /// Accumulates dW, db into `grad`; writes dx when it is non-empty.
  void backward(std::span<const double> params, std::span<const double> x, std::span<const double> dy,
                std::span<double> grad, std::span<double> dx) const;
};

/// 1-D convolution with "same"-style zero padding (kernel-1)/2, optional stride.
/// Input and output are channel-major (channels x length).
struct Conv1d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t in_length = 0;
  std::size_t offset = 0;

  std::size_t padding() const { return (kernel - 1) / 2; }
  std::size_t out_length() const { return (in_length + 2 * padding() - kernel) / stride + 1; }
  std::size_t num_params() const { return out_channels * in_channels * kernel + out_channels; }
  std::size_t weight_offset() const { return offset; }
  std::size_t bias_offset() const { return offset + out_channels * in_channels * kernel; }

  void init(std::span<double> params, Rng& rng) const;
  void forward(std::span<const double> params, std::span<const double> x, std::span<double> y) const;
  void backward(std::span<const double> params, std::span<const double> x, std::span<const double> dy,
                std::span<double> grad, std::span<double> dx) const;
};

/// A batch of per-sample activation maps.
using Batch = std::vector<std::vector<double>>;

/// Batch normalization of a channels x length map: statistics per channel over
/// all samples and positions. Trainable scale and shift live in the parameter
/// vector; running mean and variance live in a separate statistics vector.
struct BatchNorm1d {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::size_t offset = 0;        // gamma, then beta
  std::size_t stats_offset = 0;  // running mean, then running variance
  double eps = 1e-5;
  double momentum = 0.1;

  std::size_t num_params() const { return 2 * channels; }
  std::size_t num_stats() const { return 2 * channels; }

  /// gamma = 1, beta = 0.
  void init(std::span<double> params) const;
  /// Running mean 0 and variance 1.
  void init_stats(std::span<double> stats) const;

  /// Inference with the running statistics.
  void forward(std::span<const double> params, std::span<const double> stats, std::span<const double> x,
               std::span<double> y) const;
  /// Training mode. Fills `xhat` (normalized inputs) and `inv_std` (per channel), and
  /// blends the batch statistics into `stats_update` when it is non-empty.
  void forward_batch(std::span<const double> params, const Batch& x, Batch& y, Batch& xhat,
                     std::vector<double>& inv_std, std::span<double> stats_update) const;
  /// Accumulates dgamma, dbeta into `grad` and writes dx.
  void backward_batch(std::span<const double> params, const Batch& xhat, std::span<const double> inv_std,
                      const Batch& dy, std::span<double> grad, Batch& dx) const;
};

/// Intermediate activations saved by a forward pass for the matching backward pass.
struct Tape {
  std::vector<std::vector<double>> slots;

  std::vector<double>& push(std::size_t size) { return slots.emplace_back(size, 0.0); }
  void clear() { slots.clear(); }
};

/// Two dense layers with an activation between them.
struct Mlp {
  Dense first;
  Dense second;
  Activation activation = Activation::softplus;

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, Activation act, std::size_t offset = 0);

  std::size_t num_params() const { return first.num_params() + second.num_params(); }
  std::size_t input_dim() const { return first.in; }
  std::size_t hidden_dim() const { return first.out; }
  std::size_t output_dim() const { return second.out; }

  void init(std::span<double> params, Rng& rng) const;
  /// Sets the network to the exact identity map. Needs hidden = 2 * in = 2 * out and an
  /// activation with a(x) - a(-x) = x (relu, gelu, softplus): the hidden layer holds
  /// [x, -x] and the output layer subtracts the halves.
  void init_identity(std::span<double> params) const;

  /// Forward pass. Records (input, pre-activation, hidden) on `tape` when given.
  void forward(std::span<const double> params, std::span<const double> x, std::span<double> y,
               Tape* tape = nullptr) const;
  void backward(std::span<const double> params, const Tape& tape, std::span<const double> dy,
                std::span<double> grad, std::span<double> dx) const;
};

double squared_norm(std::span<const double> x);

}  // namespace fei::nn
