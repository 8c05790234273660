#pragma once

// Real FFT utilities, mask sampling and construction of masked target series.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fei {

using Rng = std::mt19937_64;

/// One sample: `channels` x `length` values stored channel-major.
struct TimeSeries {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> values;
  /// Class index (as an integral double) or a regression target.
  std::optional<double> label;

  TimeSeries() = default;
  TimeSeries(std::size_t channels, std::size_t length, std::vector<double> values,
             std::optional<double> label = std::nullopt);

  static TimeSeries univariate(std::vector<double> values, std::optional<double> label = std::nullopt);

  std::span<const double> channel(std::size_t c) const;
  std::span<double> channel(std::size_t c);

  /// Throws InvalidInputError unless length >= 2, channels >= 1 and all values are finite.
  void validate() const;
};

/// Number of one-sided frequency bins for a real series of the given length.
constexpr std::size_t num_bins(std::size_t length) { return length / 2 + 1; }

/// One-sided spectrum of every channel, bins stored channel-major.
struct ComplexSpectrum {
  std::size_t channels = 0;
  std::size_t origin_length = 0;
  std::vector<std::complex<double>> bins;

  std::size_t bins_per_channel() const { return num_bins(origin_length); }
  std::span<const std::complex<double>> channel(std::size_t c) const;
  std::span<std::complex<double>> channel(std::size_t c);
};

/// Unnormalized forward real FFT of one channel.
std::vector<std::complex<double>> rfft(std::span<const double> x);
/// Inverse of rfft, scaled by 1/length. Throws InvalidInputError on a size mismatch.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t length);

ComplexSpectrum rfft(const TimeSeries& series);
/// Rebuilds series values (channel-major) from a spectrum.
std::vector<double> irfft(const ComplexSpectrum& spectrum);

struct FrequencyDomain {};
struct TimeDomain {};

/// Binary mask, 1 = masked. The tag keeps frequency and time masks apart.
template <class Domain>
struct BinaryMask {
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  explicit BinaryMask(std::size_t size) : bits(size, 0) {}
  explicit BinaryMask(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

  std::size_t size() const { return bits.size(); }
  std::size_t count() const {
    std::size_t k = 0;
    for (auto b : bits) k += b != 0;
    return k;
  }
  double ratio() const { return bits.empty() ? 0.0 : double(count()) / double(bits.size()); }
  bool operator==(const BinaryMask&) const = default;
};

using FrequencyMask = BinaryMask<FrequencyDomain>;
using TimeMask = BinaryMask<TimeDomain>;

/// Bounds of the uniform masking-ratio distribution, 0 <= low < high < 1.
struct MaskRatioRange {
  double low = 0.0;
  double high = 0.7;

  /// Throws ConfigError when the bounds are out of order or out of range.
  void validate() const;
};

/// Number of masked positions for ratio r over `size` positions: round(r * size),
/// capped at size - 1 so that a mask never removes every position.
std::size_t masked_count(double ratio, std::size_t size);

/// Draws r ~ U(low, high) and returns masked_count(r, size).
std::size_t sample_masked_count(std::size_t size, const MaskRatioRange& range, Rng& rng);

/// k distinct positions chosen uniformly without replacement.
std::vector<std::uint8_t> scattered_bits(std::size_t size, std::size_t k, Rng& rng);
/// One contiguous run of k ones starting at `start`.
std::vector<std::uint8_t> contiguous_bits(std::size_t size, std::size_t k, std::size_t start);

/// Discrete frequency masking: k random bins.
FrequencyMask sample_mask_dfm(std::size_t n, const MaskRatioRange& range, Rng& rng);
/// Continuous frequency masking: one run of k bins with a uniform start.
FrequencyMask sample_mask_cfm(std::size_t n, const MaskRatioRange& range, Rng& rng);
/// Time-domain masking: k random time steps.
TimeMask sample_mask_tdm(std::size_t length, const MaskRatioRange& range, Rng& rng);

/// Zeroes the masked bins of every channel's spectrum and transforms back.
TimeSeries apply_frequency_mask(const TimeSeries& series, const FrequencyMask& mask);
/// Sets masked time steps of every channel to zero.
TimeSeries apply_time_mask(const TimeSeries& series, const TimeMask& mask);

/// How target series are produced from an original series.
enum class MaskingStrategy { dfm, cfm, tdm };

MaskingStrategy parse_masking_strategy(std::string_view name);
std::string_view to_string(MaskingStrategy s);

/// Mask length for a strategy: frequency bins for DFM/CFM, time steps for TDM.
std::size_t mask_positions(MaskingStrategy s, std::size_t length);

/// Samples a mask of mask_positions(s, length) positions.
std::vector<std::uint8_t> sample_mask_bits(MaskingStrategy s, std::size_t length, const MaskRatioRange& range,
                                           Rng& rng);

/// Applies a mask produced by sample_mask_bits for the same strategy.
TimeSeries apply_mask(const TimeSeries& series, MaskingStrategy s, std::span<const std::uint8_t> bits);

}  // namespace fei
