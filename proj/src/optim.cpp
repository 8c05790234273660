#include "fei/optim.hpp"

#include <cmath>

#include "fei/errors.hpp"

namespace fei {

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InvalidInputError("optimizer state size does not match the parameter group");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, double(t_));
  const double decay = 1.0 - lr * opts_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] = params[i] * decay - lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
  }
}

double clip_global_norm(std::span<const std::span<double>> groups, double max_norm) {
  double sq = 0.0;
  for (auto g : groups) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto g : groups) {
      for (double& v : g) v *= factor;
    }
  }
  return norm;
}

}  // namespace fei
