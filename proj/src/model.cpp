#include "fei/model.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "fei/errors.hpp"
#include "fei/parallel.hpp"

namespace fei {

EncoderArchitecture parse_architecture(std::string_view name) {
  if (name == "conv-resnet-1d") return EncoderArchitecture::conv_resnet_1d;
  if (name == "mlp") return EncoderArchitecture::mlp;
  throw ConfigError("unknown encoder architecture '" + std::string(name) + "' (expected conv-resnet-1d or mlp)");
}

std::string_view to_string(EncoderArchitecture a) {
  return a == EncoderArchitecture::mlp ? "mlp" : "conv-resnet-1d";
}

PredictorInit parse_predictor_init(std::string_view name) {
  if (name == "random") return PredictorInit::random;
  if (name == "identity") return PredictorInit::identity;
  throw ConfigError("unknown predictor init '" + std::string(name) + "' (expected random or identity)");
}

std::string_view to_string(PredictorInit p) { return p == PredictorInit::identity ? "identity" : "random"; }

void EncoderConfig::validate() const {
  if (d == 0 || d % 2 != 0) throw ConfigError("embedding dimension d must be positive and even");
  if (input_channels == 0) throw ConfigError("encoder needs at least one input channel");
  if (input_length < 2) throw ConfigError("encoder input length must be at least 2");
  if (architecture == EncoderArchitecture::conv_resnet_1d) {
    const std::size_t stages = widths.size() + 1;
    if (kernels.size() != stages || strides.size() != stages) {
      throw ConfigError("conv encoder needs one kernel and one stride per stage (" + std::to_string(stages) + ")");
    }
    for (std::size_t w : widths) {
      if (w == 0) throw ConfigError("conv stage width must be positive");
    }
    for (std::size_t k : kernels) {
      if (k == 0 || k % 2 == 0) throw ConfigError("conv kernel sizes must be odd");
    }
    for (std::size_t s : strides) {
      if (s == 0) throw ConfigError("conv strides must be positive");
    }
  } else if (mlp_hidden == 0) {
    throw ConfigError("mlp encoder hidden width must be positive");
  }
}

// ---------------------------------------------------------------------------
// ConvResNetEncoder

ConvResNetEncoder::ConvResNetEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::vector<std::size_t> widths = cfg_.widths;
  widths.push_back(cfg_.d);
  std::size_t channels = cfg_.input_channels;
  std::size_t length = cfg_.input_length;
  std::size_t offset = 0;
  auto norm = [&](std::size_t c, std::size_t len) -> std::optional<nn::BatchNorm1d> {
    if (!cfg_.batch_norm) return std::nullopt;
    nn::BatchNorm1d bn{c, len, offset, num_stats_};
    offset += bn.num_params();
    num_stats_ += bn.num_stats();
    return bn;
  };
  for (std::size_t s = 0; s < widths.size(); ++s) {
    Block b;
    b.conv1 = nn::Conv1d{channels, widths[s], cfg_.kernels[s], cfg_.strides[s], length, offset};
    offset += b.conv1.num_params();
    const std::size_t out_len = b.conv1.out_length();
    if (out_len == 0) throw ConfigError("conv encoder downsamples the series to zero length");
    b.norm1 = norm(widths[s], out_len);
    b.conv2 = nn::Conv1d{widths[s], widths[s], cfg_.kernels[s], 1, out_len, offset};
    offset += b.conv2.num_params();
    b.norm2 = norm(widths[s], out_len);
    if (channels != widths[s] || cfg_.strides[s] != 1) {
      b.shortcut = nn::Conv1d{channels, widths[s], 1, cfg_.strides[s], length, offset};
      offset += b.shortcut->num_params();
      b.shortcut_norm = norm(widths[s], out_len);
    }
    blocks_.push_back(b);
    channels = widths[s];
    length = out_len;
  }
  num_params_ = offset;
}

void ConvResNetEncoder::init(std::span<double> params, Rng& rng) const {
  for (const auto& b : blocks_) {
    b.conv1.init(params, rng);
    if (b.norm1) b.norm1->init(params);
    b.conv2.init(params, rng);
    if (b.norm2) b.norm2->init(params);
    if (b.shortcut) b.shortcut->init(params, rng);
    if (b.shortcut_norm) b.shortcut_norm->init(params);
  }
}

void ConvResNetEncoder::init_stats(std::span<double> stats) const {
  for (const auto& b : blocks_) {
    for (const auto* bn : {&b.norm1, &b.norm2, &b.shortcut_norm}) {
      if (*bn) (*bn)->init_stats(stats);
    }
  }
}

namespace {

void global_average_pool(std::span<const double> x, std::size_t channels, std::size_t length,
                         std::span<double> out) {
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < length; ++t) acc += x[c * length + t];
    out[c] = acc / double(length);
  }
}

// Tape slots per residual block, and normalization layers per block.
enum Slot : std::size_t { kInput, kPre1, kHidden, kHat1, kHat2, kHatShortcut, kSum, kSlots };
constexpr std::size_t kNormsPerBlock = 3;

// Per-sample work with gradient accumulation into fixed chunks of the batch,
// summed in chunk order afterwards so results do not depend on thread count.
constexpr std::size_t kChunk = 16;

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

template <class F>
void for_each_sample(std::size_t n, F&& f) {
  parallel_for(n, [&](std::size_t i) { f(i); });
}

nn::Batch make_batch(std::size_t n, std::size_t size) { return nn::Batch(n, std::vector<double>(size, 0.0)); }

}  // namespace

void ConvResNetEncoder::forward(std::span<const double> params, std::span<const double> stats,
                                std::span<const double> input, std::span<double> embedding) const {
  std::vector<double> x(input.begin(), input.end());
  for (const auto& b : blocks_) {
    const std::size_t out_size = b.conv1.out_channels * b.conv1.out_length();
    std::vector<double> pre(out_size), hidden(out_size), sum(out_size), skip(out_size);
    b.conv1.forward(params, x, pre);
    if (b.norm1) b.norm1->forward(params, stats, pre, pre);
    nn::activate(cfg_.activation, pre, hidden);
    b.conv2.forward(params, hidden, sum);
    if (b.norm2) b.norm2->forward(params, stats, sum, sum);
    if (b.shortcut) {
      b.shortcut->forward(params, x, skip);
      if (b.shortcut_norm) b.shortcut_norm->forward(params, stats, skip, skip);
    } else {
      skip = x;
    }
    for (std::size_t i = 0; i < out_size; ++i) sum[i] += skip[i];
    x.resize(out_size);
    nn::activate(cfg_.activation, sum, x);
  }
  const auto& last = blocks_.back().conv2;
  global_average_pool(x, last.out_channels, last.out_length(), embedding);
}

void ConvResNetEncoder::forward_batch(std::span<const double> params, const nn::Batch& inputs, nn::Batch& embeddings,
                                      std::span<double> stats_update, EncoderTape* tape) const {
  const std::size_t n = inputs.size();
  nn::Batch x = inputs;
  for (const auto& b : blocks_) {
    const std::size_t out_size = b.conv1.out_channels * b.conv1.out_length();
    nn::Batch pre = make_batch(n, out_size);
    for_each_sample(n, [&](std::size_t i) { b.conv1.forward(params, x[i], pre[i]); });
    nn::Batch hat1, hat2, hat_skip;
    std::vector<double> inv1, inv2, inv_skip;
    if (b.norm1) b.norm1->forward_batch(params, pre, pre, hat1, inv1, stats_update);

    nn::Batch hidden = make_batch(n, out_size);
    nn::Batch sum = make_batch(n, out_size);
    for_each_sample(n, [&](std::size_t i) {
      nn::activate(cfg_.activation, pre[i], hidden[i]);
      b.conv2.forward(params, hidden[i], sum[i]);
    });
    if (b.norm2) b.norm2->forward_batch(params, sum, sum, hat2, inv2, stats_update);

    if (b.shortcut) {
      nn::Batch skip = make_batch(n, out_size);
      for_each_sample(n, [&](std::size_t i) { b.shortcut->forward(params, x[i], skip[i]); });
      if (b.shortcut_norm) b.shortcut_norm->forward_batch(params, skip, skip, hat_skip, inv_skip, stats_update);
      for_each_sample(n, [&](std::size_t i) {
        for (std::size_t k = 0; k < out_size; ++k) sum[i][k] += skip[i][k];
      });
    } else {
      for_each_sample(n, [&](std::size_t i) {
        for (std::size_t k = 0; k < out_size; ++k) sum[i][k] += x[i][k];
      });
    }
    nn::Batch out = make_batch(n, out_size);
    for_each_sample(n, [&](std::size_t i) { nn::activate(cfg_.activation, sum[i], out[i]); });
    if (tape) {
      tape->slots.push_back(std::move(x));
      tape->slots.push_back(std::move(pre));
      tape->slots.push_back(std::move(hidden));
      tape->slots.push_back(std::move(hat1));
      tape->slots.push_back(std::move(hat2));
      tape->slots.push_back(std::move(hat_skip));
      tape->slots.push_back(std::move(sum));
      tape->inv_std.push_back(std::move(inv1));
      tape->inv_std.push_back(std::move(inv2));
      tape->inv_std.push_back(std::move(inv_skip));
    }
    x = std::move(out);
  }
  const auto& last = blocks_.back().conv2;
  embeddings = make_batch(n, cfg_.d);
  for_each_sample(n, [&](std::size_t i) {
    global_average_pool(x[i], last.out_channels, last.out_length(), embeddings[i]);
  });
}

void ConvResNetEncoder::backward_batch(std::span<const double> params, const EncoderTape& tape,
                                       const nn::Batch& d_embeddings, std::span<double> grad) const {
  const std::size_t n = d_embeddings.size();
  const std::size_t chunks = chunk_count(n);
  nn::Batch partial = make_batch(chunks, num_params_);
  auto per_chunk = [&](auto&& f) {
    parallel_for(chunks, [&](std::size_t c) {
      for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) f(i, std::span<double>(partial[c]));
    });
  };

  const auto& last = blocks_.back().conv2;
  const std::size_t len = last.out_length();
  nn::Batch d_out = make_batch(n, last.out_channels * len);
  for_each_sample(n, [&](std::size_t i) {
    for (std::size_t c = 0; c < last.out_channels; ++c) {
      std::fill_n(d_out[i].begin() + static_cast<std::ptrdiff_t>(c * len), len, d_embeddings[i][c] / double(len));
    }
  });

  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const auto& b = blocks_[bi];
    const auto slot = [&](Slot s) -> const nn::Batch& { return tape.slots.at(kSlots * bi + s); };
    const auto inv_std = [&](std::size_t k) -> std::span<const double> {
      return tape.inv_std.at(kNormsPerBlock * bi + k);
    };
    const nn::Batch& x = slot(kInput);
    const std::size_t out_size = b.conv1.out_channels * b.conv1.out_length();
    const bool need_dx = bi > 0;

    nn::Batch d_sum = make_batch(n, out_size);
    for_each_sample(n, [&](std::size_t i) { nn::activate_backward(cfg_.activation, slot(kSum)[i], d_out[i], d_sum[i]); });

    nn::Batch d_conv2;
    if (b.norm2) {
      b.norm2->backward_batch(params, slot(kHat2), inv_std(1), d_sum, grad, d_conv2);
    } else {
      d_conv2 = d_sum;
    }
    nn::Batch d_pre = make_batch(n, out_size);
    per_chunk([&](std::size_t i, std::span<double> g) {
      std::vector<double> d_hidden(out_size);
      b.conv2.backward(params, slot(kHidden)[i], d_conv2[i], g, d_hidden);
      nn::activate_backward(cfg_.activation, slot(kPre1)[i], d_hidden, d_pre[i]);
    });
    nn::Batch d_conv1;
    if (b.norm1) {
      b.norm1->backward_batch(params, slot(kHat1), inv_std(0), d_pre, grad, d_conv1);
    } else {
      d_conv1 = std::move(d_pre);
    }
    nn::Batch d_skip;
    if (b.shortcut_norm) {
      b.shortcut_norm->backward_batch(params, slot(kHatShortcut), inv_std(2), d_sum, grad, d_skip);
    }
    const nn::Batch& d_skip_in = b.shortcut_norm ? d_skip : d_sum;

    nn::Batch dx = make_batch(n, need_dx ? x[0].size() : 0);
    per_chunk([&](std::size_t i, std::span<double> g) {
      b.conv1.backward(params, x[i], d_conv1[i], g, dx[i]);
      if (b.shortcut) {
        std::vector<double> d_short(need_dx ? x[i].size() : 0);
        b.shortcut->backward(params, x[i], d_skip_in[i], g, d_short);
        for (std::size_t k = 0; k < d_short.size(); ++k) dx[i][k] += d_short[k];
      } else if (need_dx) {
        for (std::size_t k = 0; k < out_size; ++k) dx[i][k] += d_skip_in[i][k];
      }
    });
    d_out = std::move(dx);
  }
  for (const auto& g : partial) {
    for (std::size_t k = 0; k < num_params_; ++k) grad[k] += g[k];
  }
}

// ---------------------------------------------------------------------------
// MlpEncoder

MlpEncoder::MlpEncoder(EncoderConfig cfg)
    : cfg_(std::move(cfg)),
      net_(cfg_.input_channels * cfg_.input_length, cfg_.mlp_hidden, cfg_.d, cfg_.activation) {
  cfg_.validate();
}

void MlpEncoder::init(std::span<double> params, Rng& rng) const { net_.init(params, rng); }

void MlpEncoder::forward(std::span<const double> params, std::span<const double>, std::span<const double> input,
                         std::span<double> embedding) const {
  net_.forward(params, input, embedding);
}

void MlpEncoder::forward_batch(std::span<const double> params, const nn::Batch& inputs, nn::Batch& embeddings,
                               std::span<double>, EncoderTape* tape) const {
  const std::size_t n = inputs.size();
  embeddings = make_batch(n, cfg_.d);
  if (tape) tape->samples.assign(n, nn::Tape{});
  for_each_sample(n, [&](std::size_t i) {
    net_.forward(params, inputs[i], embeddings[i], tape ? &tape->samples[i] : nullptr);
  });
}

void MlpEncoder::backward_batch(std::span<const double> params, const EncoderTape& tape,
                                const nn::Batch& d_embeddings, std::span<double> grad) const {
  const std::size_t n = d_embeddings.size();
  const std::size_t chunks = chunk_count(n);
  nn::Batch partial = make_batch(chunks, num_params());
  parallel_for(chunks, [&](std::size_t c) {
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      net_.backward(params, tape.samples[i], d_embeddings[i], partial[c], {});
    }
  });
  for (const auto& g : partial) {
    for (std::size_t k = 0; k < g.size(); ++k) grad[k] += g[k];
  }
}

std::shared_ptr<const Encoder> make_encoder(const EncoderConfig& cfg) {
  if (cfg.architecture == EncoderArchitecture::mlp) return std::make_shared<MlpEncoder>(cfg);
  return std::make_shared<ConvResNetEncoder>(cfg);
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<double>& FeiParams::blob(std::string_view name) {
  return const_cast<std::vector<double>&>(std::as_const(*this).blob(name));
}

const std::vector<double>& FeiParams::blob(std::string_view name) const {
  if (name == "encoder") return encoder;
  if (name == "projector") return projector;
  if (name == "encoder_momentum") return encoder_momentum;
  if (name == "projector_momentum") return projector_momentum;
  if (name == "mask_table") return mask_table;
  if (name == "predictor_target") return predictor_target;
  if (name == "predictor_mask") return predictor_mask;
  if (name == "encoder_stats") return encoder_stats;
  if (name == "encoder_momentum_stats") return encoder_momentum_stats;
  throw InvalidInputError("unknown parameter blob '" + std::string(name) + "'");
}

namespace {

template <class F>
void for_each_group(FeiGradients& g, F&& f) {
  f(g.encoder);
  f(g.projector);
  f(g.mask_table);
  f(g.predictor_target);
  f(g.predictor_mask);
}

}  // namespace

void FeiGradients::zero() {
  for_each_group(*this, [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
}

void FeiGradients::add(const FeiGradients& other) {
  auto add_into = [](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  add_into(encoder, other.encoder);
  add_into(projector, other.projector);
  add_into(mask_table, other.mask_table);
  add_into(predictor_target, other.predictor_target);
  add_into(predictor_mask, other.predictor_mask);
}

double FeiGradients::squared_norm() const {
  double s = 0.0;
  for_each_group(const_cast<FeiGradients&>(*this), [&](std::vector<double>& v) { s += nn::squared_norm(v); });
  return s;
}

void FeiGradients::scale(double factor) {
  for_each_group(*this, [&](std::vector<double>& v) {
    for (double& x : v) x *= factor;
  });
}

// ---------------------------------------------------------------------------
// FeiModel

void ModelConfig::validate() const {
  encoder.validate();
  if (predictor_init == PredictorInit::identity) {
    const std::size_t h = subspace ? encoder.d / 2 : encoder.d;
    if (predictor_hidden != 2 * h) throw ConfigError("identity predictor init needs predictor_hidden = 2h");
  }
}

FeiModel::FeiModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  encoder_ = make_encoder(cfg_.encoder);
  const std::size_t d = cfg_.encoder.d;
  subspace_dim_ = cfg_.subspace ? d / 2 : d;
  if (cfg_.subspace) projector_ = nn::Dense{d, subspace_dim_, 0};
  const std::size_t hidden = cfg_.predictor_hidden == 0 ? subspace_dim_ : cfg_.predictor_hidden;
  target_predictor_ = nn::Mlp(subspace_dim_, hidden, subspace_dim_, cfg_.predictor_activation);
  mask_predictor_ = nn::Mlp(subspace_dim_, hidden, subspace_dim_, cfg_.predictor_activation);
  mask_encoder_ = MaskEncoder(fei::mask_positions(cfg_.masking, cfg_.encoder.input_length), subspace_dim_);
}

FeiParams FeiModel::init(std::uint64_t seed) const {
  Rng rng(seed);
  FeiParams p;
  p.encoder.resize(encoder_->num_params());
  encoder_->init(p.encoder, rng);
  if (projector_) {
    p.projector.resize(projector_->num_params());
    projector_->init(p.projector, rng);
  }
  p.encoder_momentum = p.encoder;
  p.projector_momentum = p.projector;
  p.encoder_stats.resize(encoder_->num_stats());
  encoder_->init_stats(p.encoder_stats);
  p.encoder_momentum_stats = p.encoder_stats;
  p.mask_table.resize(mask_encoder_.num_params());
  mask_encoder_.init(p.mask_table, rng);
  p.predictor_target.resize(target_predictor_.num_params());
  p.predictor_mask.resize(mask_predictor_.num_params());
  if (cfg_.predictor_init == PredictorInit::identity) {
    target_predictor_.init_identity(p.predictor_target);
    mask_predictor_.init_identity(p.predictor_mask);
  } else {
    target_predictor_.init(p.predictor_target, rng);
    mask_predictor_.init(p.predictor_mask, rng);
  }
  return p;
}

FeiGradients FeiModel::zero_gradients() const {
  FeiGradients g;
  g.encoder.assign(encoder_->num_params(), 0.0);
  g.projector.assign(projector_ ? projector_->num_params() : 0, 0.0);
  g.mask_table.assign(mask_encoder_.num_params(), 0.0);
  g.predictor_target.assign(target_predictor_.num_params(), 0.0);
  g.predictor_mask.assign(mask_predictor_.num_params(), 0.0);
  return g;
}

void FeiModel::check(const FeiParams& p) const {
  auto expect = [](const std::vector<double>& v, std::size_t n, std::string_view name) {
    if (v.size() != n) {
      throw InvalidInputError("parameter blob '" + std::string(name) + "' has " + std::to_string(v.size()) +
                              " values, model expects " + std::to_string(n));
    }
  };
  const std::size_t proj = projector_ ? projector_->num_params() : 0;
  expect(p.encoder, encoder_->num_params(), "encoder");
  expect(p.encoder_momentum, encoder_->num_params(), "encoder_momentum");
  expect(p.projector, proj, "projector");
  expect(p.projector_momentum, proj, "projector_momentum");
  expect(p.mask_table, mask_encoder_.num_params(), "mask_table");
  expect(p.predictor_target, target_predictor_.num_params(), "predictor_target");
  expect(p.predictor_mask, mask_predictor_.num_params(), "predictor_mask");
  expect(p.encoder_stats, encoder_->num_stats(), "encoder_stats");
  expect(p.encoder_momentum_stats, encoder_->num_stats(), "encoder_momentum_stats");
}

void FeiModel::check(const TimeSeries& series) const {
  if (series.channels != cfg_.encoder.input_channels || series.length != cfg_.encoder.input_length) {
    throw InvalidInputError("series is " + std::to_string(series.channels) + "x" + std::to_string(series.length) +
                            ", encoder expects " + std::to_string(cfg_.encoder.input_channels) + "x" +
                            std::to_string(cfg_.encoder.input_length));
  }
}

void FeiModel::project(std::span<const double> projector_params, std::span<const double> e,
                       std::span<double> u) const {
  if (e.size() != embedding_dim() || u.size() != subspace_dim_) {
    throw InvalidInputError("projector input/output size mismatch");
  }
  if (projector_) {
    projector_->forward(projector_params, e, u);
  } else {
    std::copy(e.begin(), e.end(), u.begin());
  }
}

Embedding FeiModel::embed(std::span<const double> encoder_params, std::span<const double> encoder_stats,
                          std::span<const double> projector_params, const TimeSeries& series) const {
  check(series);
  Embedding out{std::vector<double>(embedding_dim()), std::vector<double>(subspace_dim_)};
  encoder_->forward(encoder_params, encoder_stats, series.values, out.e);
  project(projector_params, out.e, out.u);
  return out;
}

void momentum_update(std::span<double> momentum, std::span<const double> online, double alpha) {
  if (momentum.size() != online.size()) throw InvalidInputError("momentum copy and online weights differ in size");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("momentum factor alpha must lie in [0, 1)");
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < momentum.size(); ++i) momentum[i] = alpha * momentum[i] + beta * online[i];
}

void momentum_update(FeiParams& params, double alpha) {
  momentum_update(params.encoder_momentum, params.encoder, alpha);
  momentum_update(params.projector_momentum, params.projector, alpha);
  momentum_update(params.encoder_momentum_stats, params.encoder_stats, alpha);
}

}  // namespace fei
