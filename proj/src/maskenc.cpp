#include "fei/maskenc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fei/errors.hpp"

namespace fei {

namespace {

std::size_t count_ones(std::span<const std::uint8_t> bits) {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

}  // namespace

void MaskEncoder::check(std::span<const std::uint8_t> bits, std::size_t table_size) const {
  if (bits.size() != rows_) {
    throw InvalidInputError("mask has " + std::to_string(bits.size()) + " positions, mask encoder expects " +
                            std::to_string(rows_));
  }
  if (table_size != rows_ * dim_) throw InvalidInputError("mask embedding table has the wrong size");
}

void MaskEncoder::init(std::span<double> table, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < num_params(); ++i) table[i] = normal(rng);
}

void MaskEncoder::encode(std::span<const std::uint8_t> bits, std::span<const double> table,
                         std::span<double> out) const {
  check(bits, table.size());
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t k = count_ones(bits);
  if (k == 0) return;
  for (std::size_t r = 0; r < rows_; ++r) {
    if (!bits[r]) continue;
    const double* row = table.data() + r * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] += row[j];
  }
  if (k == 1) return;
  const double scale = 1.0 / std::sqrt(double(k));
  for (double& v : out) v *= scale;
}

std::vector<double> MaskEncoder::encode(std::span<const std::uint8_t> bits, std::span<const double> table) const {
  std::vector<double> out(dim_);
  encode(bits, table, out);
  return out;
}

void MaskEncoder::backward(std::span<const std::uint8_t> bits, std::span<const double> d_embedding,
                           std::span<double> table_grad) const {
  check(bits, table_grad.size());
  const std::size_t k = count_ones(bits);
  if (k == 0) return;
  const double scale = 1.0 / std::sqrt(double(k));
  for (std::size_t r = 0; r < rows_; ++r) {
    if (!bits[r]) continue;
    double* g = table_grad.data() + r * dim_;
    for (std::size_t j = 0; j < dim_; ++j) g[j] += d_embedding[j] * scale;
  }
}

}  // namespace fei
