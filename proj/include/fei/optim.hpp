#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fei {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay for one flat parameter group.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::size_t size, AdamWOptions opts) : opts_(opts), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps() const { return t_; }

 private:
  AdamWOptions opts_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Rescales the gradient groups so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping. A non-positive max_norm disables clipping.
double clip_global_norm(std::span<const std::span<double>> groups, double max_norm);

}  // namespace fei
