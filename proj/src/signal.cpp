#include "fei/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <string>

#include "fei/errors.hpp"

namespace fei {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

  fftw_plan forward(std::size_t length) { return get(length).forward; }
  fftw_plan inverse(std::size_t length) { return get(length).inverse; }

 private:
  struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
  };

  PlanCache() = default;
  ~PlanCache() {
    for (auto& [len, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.inverse);
    }
  }

  Plans get(std::size_t length) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(length);
    if (it != plans_.end()) return it->second;

    const int n = static_cast<int>(length);
    const std::size_t nb = num_bins(length);
    double* real = fftw_alloc_real(length);
    fftw_complex* cplx = fftw_alloc_complex(nb);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    Plans p;
    p.forward = fftw_plan_dft_r2c_1d(n, real, cplx, flags);
    p.inverse = fftw_plan_dft_c2r_1d(n, cplx, real, flags);
    fftw_free(real);
    fftw_free(cplx);
    plans_.emplace(length, p);
    return p;
  }

  std::mutex mutex_;
  std::map<std::size_t, Plans> plans_;
};

void require_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInputError("series contains a non-finite value");
  }
}

}  // namespace

TimeSeries::TimeSeries(std::size_t channels_, std::size_t length_, std::vector<double> values_,
                       std::optional<double> label_)
    : channels(channels_), length(length_), values(std::move(values_)), label(label_) {
  if (values.size() != channels * length) {
    throw InvalidInputError("series holds " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(channels) + "x" + std::to_string(length));
  }
}

TimeSeries TimeSeries::univariate(std::vector<double> values, std::optional<double> label) {
  const std::size_t n = values.size();
  return TimeSeries(1, n, std::move(values), label);
}

std::span<const double> TimeSeries::channel(std::size_t c) const {
  return std::span<const double>(values).subspan(c * length, length);
}

std::span<double> TimeSeries::channel(std::size_t c) {
  return std::span<double>(values).subspan(c * length, length);
}

void TimeSeries::validate() const {
  if (length < 2) throw InvalidInputError("series length must be at least 2");
  if (channels < 1) throw InvalidInputError("series needs at least one channel");
  if (values.size() != channels * length) throw InvalidInputError("series value count does not match its shape");
  require_finite(values);
}

std::span<const std::complex<double>> ComplexSpectrum::channel(std::size_t c) const {
  const std::size_t nb = bins_per_channel();
  return std::span<const std::complex<double>>(bins).subspan(c * nb, nb);
}

std::span<std::complex<double>> ComplexSpectrum::channel(std::size_t c) {
  const std::size_t nb = bins_per_channel();
  return std::span<std::complex<double>>(bins).subspan(c * nb, nb);
}

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  if (x.size() < 2) throw InvalidInputError("rfft needs at least 2 samples");
  require_finite(x);
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(num_bins(x.size()));
  fftw_execute_dft_r2c(PlanCache::instance().forward(x.size()), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t length) {
  if (length < 2) throw InvalidInputError("irfft needs an output length of at least 2");
  if (spectrum.size() != num_bins(length)) {
    throw InvalidInputError("spectrum has " + std::to_string(spectrum.size()) + " bins, length " +
                            std::to_string(length) + " needs " + std::to_string(num_bins(length)));
  }
  // c2r overwrites its input.
  std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
  std::vector<double> out(length);
  fftw_execute_dft_c2r(PlanCache::instance().inverse(length), reinterpret_cast<fftw_complex*>(in.data()),
                       out.data());
  const double scale = 1.0 / double(length);
  for (double& v : out) v *= scale;
  return out;
}

ComplexSpectrum rfft(const TimeSeries& series) {
  series.validate();
  ComplexSpectrum s;
  s.channels = series.channels;
  s.origin_length = series.length;
  s.bins.reserve(series.channels * num_bins(series.length));
  for (std::size_t c = 0; c < series.channels; ++c) {
    auto ch = rfft(series.channel(c));
    s.bins.insert(s.bins.end(), ch.begin(), ch.end());
  }
  return s;
}

std::vector<double> irfft(const ComplexSpectrum& spectrum) {
  if (spectrum.bins.size() != spectrum.channels * spectrum.bins_per_channel()) {
    throw InvalidInputError("spectrum bin count does not match its shape");
  }
  std::vector<double> out;
  out.reserve(spectrum.channels * spectrum.origin_length);
  for (std::size_t c = 0; c < spectrum.channels; ++c) {
    auto ch = irfft(spectrum.channel(c), spectrum.origin_length);
    out.insert(out.end(), ch.begin(), ch.end());
  }
  return out;
}

void MaskRatioRange::validate() const {
  if (!(low >= 0.0 && low < high && high < 1.0)) {
    throw ConfigError("mask ratio bounds must satisfy 0 <= beta1 < beta2 < 1 (got beta1=" + std::to_string(low) +
                      ", beta2=" + std::to_string(high) + ")");
  }
}

std::size_t masked_count(double ratio, std::size_t size) {
  if (size == 0) return 0;
  const auto k = static_cast<std::size_t>(std::llround(ratio * double(size)));
  return std::min(k, size - 1);
}

std::size_t sample_masked_count(std::size_t size, const MaskRatioRange& range, Rng& rng) {
  range.validate();
  std::uniform_real_distribution<double> ratio(range.low, range.high);
  return masked_count(ratio(rng), size);
}

std::vector<std::uint8_t> scattered_bits(std::size_t size, std::size_t k, Rng& rng) {
  if (k > size) throw InvalidInputError("cannot mask more positions than exist");
  // Partial Fisher-Yates over the index set.
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::uint8_t> bits(size, 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, size - 1);
    std::swap(idx[i], idx[pick(rng)]);
    bits[idx[i]] = 1;
  }
  return bits;
}

std::vector<std::uint8_t> contiguous_bits(std::size_t size, std::size_t k, std::size_t start) {
  if (k > size || start > size - k) throw InvalidInputError("contiguous mask run exceeds the mask length");
  std::vector<std::uint8_t> bits(size, 0);
  std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(start), k, std::uint8_t{1});
  return bits;
}

FrequencyMask sample_mask_dfm(std::size_t n, const MaskRatioRange& range, Rng& rng) {
  const std::size_t k = sample_masked_count(n, range, rng);
  return FrequencyMask(scattered_bits(n, k, rng));
}

FrequencyMask sample_mask_cfm(std::size_t n, const MaskRatioRange& range, Rng& rng) {
  const std::size_t k = sample_masked_count(n, range, rng);
  std::uniform_int_distribution<std::size_t> start(0, n - k);
  return FrequencyMask(contiguous_bits(n, k, start(rng)));
}

TimeMask sample_mask_tdm(std::size_t length, const MaskRatioRange& range, Rng& rng) {
  const std::size_t k = sample_masked_count(length, range, rng);
  return TimeMask(scattered_bits(length, k, rng));
}

TimeSeries apply_frequency_mask(const TimeSeries& series, const FrequencyMask& mask) {
  series.validate();
  const std::size_t nb = num_bins(series.length);
  if (mask.size() != nb) {
    throw InvalidInputError("frequency mask has " + std::to_string(mask.size()) + " bins, series needs " +
                            std::to_string(nb));
  }
  TimeSeries out = series;
  if (mask.count() == 0) return out;
  for (std::size_t c = 0; c < series.channels; ++c) {
    auto spec = rfft(series.channel(c));
    for (std::size_t i = 0; i < nb; ++i) {
      if (mask.bits[i]) spec[i] = {0.0, 0.0};
    }
    auto back = irfft(spec, series.length);
    std::copy(back.begin(), back.end(), out.channel(c).begin());
  }
  return out;
}

TimeSeries apply_time_mask(const TimeSeries& series, const TimeMask& mask) {
  if (mask.size() != series.length) {
    throw InvalidInputError("time mask has " + std::to_string(mask.size()) + " steps, series has " +
                            std::to_string(series.length));
  }
  TimeSeries out = series;
  for (std::size_t c = 0; c < series.channels; ++c) {
    auto ch = out.channel(c);
    for (std::size_t t = 0; t < series.length; ++t) {
      if (mask.bits[t]) ch[t] = 0.0;
    }
  }
  return out;
}

MaskingStrategy parse_masking_strategy(std::string_view name) {
  if (name == "dfm" || name == "DFM") return MaskingStrategy::dfm;
  if (name == "cfm" || name == "CFM") return MaskingStrategy::cfm;
  if (name == "tdm" || name == "TDM") return MaskingStrategy::tdm;
  throw ConfigError("unknown masking strategy '" + std::string(name) + "' (expected dfm, cfm or tdm)");
}

std::string_view to_string(MaskingStrategy s) {
  switch (s) {
    case MaskingStrategy::dfm: return "dfm";
    case MaskingStrategy::cfm: return "cfm";
    case MaskingStrategy::tdm: return "tdm";
  }
  return "dfm";
}

std::size_t mask_positions(MaskingStrategy s, std::size_t length) {
  return s == MaskingStrategy::tdm ? length : num_bins(length);
}

std::vector<std::uint8_t> sample_mask_bits(MaskingStrategy s, std::size_t length, const MaskRatioRange& range,
                                           Rng& rng) {
  switch (s) {
    case MaskingStrategy::dfm: return sample_mask_dfm(num_bins(length), range, rng).bits;
    case MaskingStrategy::cfm: return sample_mask_cfm(num_bins(length), range, rng).bits;
    case MaskingStrategy::tdm: return sample_mask_tdm(length, range, rng).bits;
  }
  return {};
}

TimeSeries apply_mask(const TimeSeries& series, MaskingStrategy s, std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> copy(bits.begin(), bits.end());
  if (s == MaskingStrategy::tdm) return apply_time_mask(series, TimeMask(std::move(copy)));
  return apply_frequency_mask(series, FrequencyMask(std::move(copy)));
}

}  // namespace fei
