#include "fei/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "fei/errors.hpp"

namespace fei {

std::size_t Dataset::class_of(std::size_t i) const {
  if (!task.is_classification()) throw ConfigError("dataset '" + name + "' is not a classification dataset");
  const auto& label = samples.at(i).label;
  if (!label) throw InvalidInputError("sample " + std::to_string(i) + " has no label");
  return static_cast<std::size_t>(*label);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.task = task;
  out.sampling_rate_hz = sampling_rate_hz;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    s.validate();
    if (s.length != length() || s.channels != channels()) {
      throw InvalidInputError("dataset '" + name + "': sample " + std::to_string(i) + " has shape " +
                              std::to_string(s.channels) + "x" + std::to_string(s.length) + ", expected " +
                              std::to_string(channels()) + "x" + std::to_string(length()));
    }
    if (s.label && !std::isfinite(*s.label)) {
      throw InvalidInputError("dataset '" + name + "': sample " + std::to_string(i) + " has a non-finite label");
    }
    if (task.is_classification()) {
      if (!s.label) throw InvalidInputError("dataset '" + name + "': sample " + std::to_string(i) + " is unlabelled");
      const double l = *s.label;
      if (l < 0.0 || l != std::floor(l) || l >= double(task.num_classes)) {
        throw InvalidInputError("dataset '" + name + "': label " + std::to_string(l) + " outside [0, " +
                                std::to_string(task.num_classes) + ")");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// UCR-style text

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view field, std::size_t line) {
  field = trim(field);
  if (field.empty()) throw ParseError("empty field", line);
  // from_chars rejects a leading '+'.
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("cannot parse '" + std::string(field) + "' as a number", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(field) + "'", line);
  return v;
}

struct RawRow {
  double label;
  std::vector<double> values;
  std::size_t line;
};

}  // namespace

Dataset parse_ucr(const std::string& text, const std::string& name, const UcrLoadOptions& opts) {
  std::vector<RawRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  char delim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (delim == 0) delim = view.find('\t') != std::string_view::npos ? '\t' : ',';
    RawRow row{0.0, {}, line_no};
    bool first = true;
    std::size_t pos = 0;
    while (true) {
      const std::size_t next = view.find(delim, pos);
      const std::string_view field = view.substr(pos, next == std::string_view::npos ? next : next - pos);
      const double v = parse_number(field, line_no);
      if (first) {
        row.label = v;
        first = false;
      } else {
        row.values.push_back(v);
      }
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    if (row.values.size() < 2) throw ParseError("row needs a label and at least 2 values", line_no);
    const std::size_t want = opts.expected_length.value_or(rows.empty() ? row.values.size() : rows.front().values.size());
    if (row.values.size() != want) {
      throw ParseError("row has " + std::to_string(row.values.size()) + " values, expected " + std::to_string(want),
                       line_no);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInputError("'" + name + "' contains no data rows");

  Dataset ds;
  ds.name = name;
  if (opts.task == TaskKind::classification) {
    std::map<double, std::size_t> remap;
    for (const auto& r : rows) remap.emplace(r.label, 0);
    std::size_t next = 0;
    for (auto& [raw, idx] : remap) idx = next++;
    ds.task = Task::classification(remap.size());
    for (auto& r : rows) {
      ds.samples.push_back(TimeSeries::univariate(std::move(r.values), double(remap.at(r.label))));
    }
  } else {
    ds.task = Task::regression();
    for (auto& r : rows) ds.samples.push_back(TimeSeries::univariate(std::move(r.values), r.label));
  }
  ds.validate();
  return ds;
}

Dataset load_ucr_tsv(const std::filesystem::path& path, const UcrLoadOptions& opts) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw InvalidInputError("cannot open dataset file '" + path.string() + "'");
  std::ostringstream buf;
  buf << file.rdbuf();
  auto ds = parse_ucr(buf.str(), path.stem().string(), opts);
  return ds;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

void write_ucr_tsv(const Dataset& ds, const std::filesystem::path& path) {
  std::string out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.channels != 1) throw InvalidInputError("the UCR text format holds univariate series only");
    if (!s.label) throw InvalidInputError("sample " + std::to_string(i) + " has no label to write");
    append_number(out, *s.label);
    for (double v : s.values) {
      out.push_back('\t');
      append_number(out, v);
    }
    out.push_back('\n');
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw InvalidInputError("cannot write dataset file '" + path.string() + "'");
  file << out;
  if (!file) throw InvalidInputError("failed writing dataset file '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Normalization

void normalize_in_place(TimeSeries& series) {
  constexpr double kStdFloor = 1e-8;
  for (std::size_t c = 0; c < series.channels; ++c) {
    auto ch = series.channel(c);
    double mean = 0.0;
    for (double v : ch) mean += v;
    mean /= double(ch.size());
    double var = 0.0;
    for (double v : ch) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(ch.size()));
    if (sd < kStdFloor) {
      std::fill(ch.begin(), ch.end(), 0.0);
      continue;
    }
    for (double& v : ch) v = (v - mean) / sd;
  }
}

Dataset normalize_per_sample(Dataset ds) {
  for (auto& s : ds.samples) normalize_in_place(s);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generator

std::size_t SyntheticSpec::resolved_max_bin() const {
  return max_bin != 0 ? max_bin : static_cast<std::size_t>(0.7 * double(length / 2));
}

std::vector<std::pair<std::size_t, std::size_t>> class_frequencies(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (spec.length < 8) throw ConfigError("synthetic series length must be at least 8");
  const std::size_t lo = spec.min_bin;
  const std::size_t hi = spec.resolved_max_bin();
  const std::size_t tones = 2 * spec.num_classes;
  if (lo < 1 || hi <= lo) throw ConfigError("synthetic frequency range must satisfy 1 <= min_bin < max_bin");
  if (hi + spec.shift_bins > spec.length / 2) {
    throw ConfigError("synthetic class frequencies exceed the Nyquist bin " + std::to_string(spec.length / 2));
  }
  std::vector<std::size_t> bins(tones);
  for (std::size_t j = 0; j < tones; ++j) {
    bins[j] = lo + static_cast<std::size_t>(std::llround(double(j) * double(hi - lo) / double(tones - 1)));
  }
  for (std::size_t j = 1; j < tones; ++j) {
    if (bins[j] - bins[j - 1] < 3) {
      throw ConfigError("cannot place " + std::to_string(tones) + " tones at least 3 bins apart in [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    out.emplace_back(bins[c] + spec.shift_bins, bins[c + spec.num_classes] + spec.shift_bins);
  }
  return out;
}

Dataset make_synthetic_freq_dataset(const SyntheticSpec& spec) {
  const auto freqs = class_frequencies(spec);
  if (spec.per_class == 0) throw ConfigError("synthetic dataset needs at least one sample per class");
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) throw ConfigError("noise_std must be >= 0");
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);
  const std::size_t L = spec.length;

  Dataset ds;
  ds.name = "synthetic";
  ds.task = Task::classification(spec.num_classes);
  ds.samples.reserve(spec.num_classes * spec.per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto [f1, f2] = freqs[c];
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const double a1 = amp(rng), p1 = phase(rng), a2 = amp(rng), p2 = phase(rng);
      std::vector<double> v(L);
      for (std::size_t t = 0; t < L; ++t) {
        const double tt = 2.0 * std::numbers::pi * double(t) / double(L);
        v[t] = a1 * std::sin(double(f1) * tt + p1) + a2 * std::sin(double(f2) * tt + p2);
        if (spec.noise_std > 0.0) v[t] += noise(rng);
      }
      ds.samples.push_back(TimeSeries::univariate(std::move(v), double(c)));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

SplitIndices split_indices(const Dataset& ds, const SplitSpec& spec) {
  if (ds.empty()) throw ConfigError("cannot split an empty dataset");
  if (spec.train < 0.0 || spec.val < 0.0 || spec.test < 0.0 ||
      std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  Rng rng(spec.seed);
  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratify && ds.task.is_classification()) {
    groups.resize(ds.task.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) groups.at(ds.class_of(i)).push_back(i);
  } else {
    groups.emplace_back(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) groups[0][i] = i;
  }
  SplitIndices out;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    const std::size_t n = g.size();
    const std::size_t n_train = std::min(n, static_cast<std::size_t>(std::llround(spec.train * double(n))));
    const std::size_t n_val =
        std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.val * double(n))));
    out.train.insert(out.train.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.insert(out.val.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train),
                   g.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.insert(out.test.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), g.end());
  }
  std::shuffle(out.train.begin(), out.train.end(), rng);
  std::shuffle(out.val.begin(), out.val.end(), rng);
  std::shuffle(out.test.begin(), out.test.end(), rng);
  return out;
}

DatasetSplit split(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds, spec);
  return {ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)};
}

// ---------------------------------------------------------------------------
// Sliding windows

Dataset sliding_windows(const TimeSeries& series, std::size_t window_len, std::size_t stride,
                        const WindowLabeler& labeler, Task task) {
  if (window_len < 2) throw ConfigError("window length must be at least 2");
  if (stride == 0) throw ConfigError("window stride must be positive");
  if (window_len > series.length) {
    throw InvalidInputError("window length " + std::to_string(window_len) + " exceeds series length " +
                            std::to_string(series.length));
  }
  Dataset ds;
  ds.name = "windows";
  ds.task = task;
  std::size_t w = 0;
  for (std::size_t start = 0; start + window_len <= series.length; start += stride, ++w) {
    std::vector<double> values;
    values.reserve(series.channels * window_len);
    for (std::size_t c = 0; c < series.channels; ++c) {
      auto ch = series.channel(c).subspan(start, window_len);
      values.insert(values.end(), ch.begin(), ch.end());
    }
    std::optional<double> label = labeler ? labeler(w, start) : std::nullopt;
    ds.samples.emplace_back(series.channels, window_len, std::move(values), label);
  }
  return ds;
}

}  // namespace fei
