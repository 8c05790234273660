#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fei/signal.hpp"

namespace fei {

/// Mask encoder m = (sum of table rows selected by the mask) / sqrt(k).
///
/// The table has one row of width `dim` per mask position (frequency bin, or
/// time step for time-domain masking). The empty mask maps to the zero vector.
class MaskEncoder {
 public:
  MaskEncoder() = default;
  MaskEncoder(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_params() const { return rows_ * dim_; }

  /// Fills the table i.i.d. from N(0, 1).
  void init(std::span<double> table, Rng& rng) const;

  void encode(std::span<const std::uint8_t> bits, std::span<const double> table, std::span<double> out) const;
  std::vector<double> encode(std::span<const std::uint8_t> bits, std::span<const double> table) const;

  /// Accumulates dL/dW_emb given dL/dm: each masked row receives dm / sqrt(k).
  void backward(std::span<const std::uint8_t> bits, std::span<const double> d_embedding,
                std::span<double> table_grad) const;

 private:
  void check(std::span<const std::uint8_t> bits, std::size_t table_size) const;

  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
};

}  // namespace fei
