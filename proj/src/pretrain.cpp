#include "fei/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fei/errors.hpp"
#include "fei/parallel.hpp"

namespace fei {

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class Flags>
auto& flag_member(Flags& f, std::string_view name) {
  if (name == "no_emb_infer") return f.no_emb_infer;
  if (name == "no_mask_prompt") return f.no_mask_prompt;
  if (name == "no_momentum") return f.no_momentum;
  if (name == "no_subspace") return f.no_subspace;
  if (name == "no_mask_infer") return f.no_mask_infer;
  if (name == "no_detach") return f.no_detach;
  throw ConfigError("unknown ablation flag '" + std::string(name) + "'");
}

}  // namespace

bool& AblationFlags::flag(std::string_view name) { return flag_member(*this, name); }
bool AblationFlags::flag(std::string_view name) const { return flag_member(*this, name); }

std::vector<std::string> AblationFlags::enabled() const {
  std::vector<std::string> out;
  for (auto name : names) {
    if (flag(name)) out.emplace_back(name);
  }
  return out;
}

AblationFlags AblationFlags::only(std::string_view name) {
  AblationFlags f;
  f.flag(name) = true;
  return f;
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const { return lr * std::pow(lr_decay, double(epoch)); }

void TrainConfig::validate() const {
  mask_range().validate();
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
}

ComputationGraph apply_ablation(const AblationFlags& flags) {
  ComputationGraph g;
  g.target_branch = !flags.no_emb_infer;
  g.mask_branch = !flags.no_mask_infer;
  g.mask_prompt = !flags.no_mask_prompt;
  g.momentum_target = !flags.no_momentum;
  g.subspace = !flags.no_subspace;
  g.detach_prompt = !flags.no_detach;
  g.detach_anchor = !flags.no_detach;
  return g;
}

ModelConfig apply_ablation(ModelConfig model, const AblationFlags& flags) {
  if (flags.no_subspace) model.subspace = false;
  return model;
}

std::string ComputationGraph::describe() const {
  std::ostringstream os;
  os << "u = " << (subspace ? "s(f(x))" : "f(x)") << "; ";
  os << "u' = " << (subspace ? "s" : "") << (momentum_target ? "'" : "") << (subspace ? "(" : "") << "f"
     << (momentum_target ? "'" : "") << "(x')" << (subspace ? ")" : "") << " [no grad]; ";
  os << "m = g(M); ";
  if (target_branch) {
    os << "target: u'^ = z1(u" << (mask_prompt ? (detach_prompt ? " + D(m)" : " + m") : "") << "); ";
  }
  if (mask_branch) os << "mask: m^ = z2(" << (detach_anchor ? "D(u)" : "u") << " - u'); ";
  os << "loss = mean(" << (target_branch ? "|u' - u'^|^2" : "") << (target_branch && mask_branch ? " + " : "")
     << (mask_branch ? "|m - m^|^2" : "") << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Objective and gradients

namespace {

constexpr std::size_t kChunk = 16;

struct SampleLoss {
  double target = 0.0;
  double mask = 0.0;
};

void add_scaled(std::span<double> dst, std::span<const double> src, double s) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

nn::Batch values_of(std::span<const TimeSeries> series) {
  nn::Batch out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = series[i].values;
  return out;
}

// Projector, predictors and mask encoder for one sample, given the encoder
// output `e` of the original series and the target embedding `u_t`. With
// `grads`, accumulates weighted gradients and writes dL/de to `de`.
SampleLoss sample_heads(const FeiModel& model, const FeiParams& p, std::span<const double> e,
                        std::span<const double> u_t, std::span<const std::uint8_t> bits, const ComputationGraph& graph,
                        BranchSelection which, double weight, FeiGradients* grads, std::span<double> de) {
  const std::size_t h = model.subspace_dim();
  const bool want_target = graph.target_branch && which != BranchSelection::mask_only;
  const bool want_mask = graph.mask_branch && which != BranchSelection::target_only;

  std::vector<double> u(h);
  model.project(p.projector, e, u);
  const std::vector<double> m = model.mask_encoder().encode(bits, p.mask_table);

  SampleLoss loss;
  std::vector<double> du(h, 0.0), dm(h, 0.0);
  bool du_used = false;

  if (want_target) {
    std::vector<double> in(u);
    if (graph.mask_prompt) add_scaled(in, m, 1.0);
    nn::Tape tape;
    std::vector<double> pred(h);
    model.target_predictor().forward(p.predictor_target, in, pred, grads ? &tape : nullptr);
    std::vector<double> r(h);
    for (std::size_t j = 0; j < h; ++j) r[j] = pred[j] - u_t[j];
    loss.target = nn::squared_norm(r);
    if (grads) {
      for (double& v : r) v *= 2.0 * weight;
      std::vector<double> d_in(h);
      model.target_predictor().backward(p.predictor_target, tape, r, grads->predictor_target, d_in);
      add_scaled(du, d_in, 1.0);
      du_used = true;
      if (graph.mask_prompt && !graph.detach_prompt) add_scaled(dm, d_in, 1.0);
    }
  }

  if (want_mask) {
    std::vector<double> in(h);
    for (std::size_t j = 0; j < h; ++j) in[j] = u[j] - u_t[j];
    nn::Tape tape;
    std::vector<double> pred(h);
    model.mask_predictor().forward(p.predictor_mask, in, pred, grads ? &tape : nullptr);
    std::vector<double> r(h);
    for (std::size_t j = 0; j < h; ++j) r[j] = pred[j] - m[j];
    loss.mask = nn::squared_norm(r);
    if (grads) {
      for (double& v : r) v *= 2.0 * weight;
      std::vector<double> d_in(h);
      model.mask_predictor().backward(p.predictor_mask, tape, r, grads->predictor_mask, d_in);
      if (!graph.detach_anchor) {
        add_scaled(du, d_in, 1.0);
        du_used = true;
      }
      // m is also the regression target of this branch; it trains the mask table.
      add_scaled(dm, r, -1.0);
    }
  }

  if (grads) {
    model.mask_encoder().backward(bits, dm, grads->mask_table);
    if (du_used) {
      if (model.projector()) {
        model.projector()->backward(p.projector, e, du, grads->projector, de);
      } else {
        std::copy(du.begin(), du.end(), de.begin());
      }
    }
  }
  return loss;
}

void check_batch(const FeiModel& model, std::span<const TimeSeries> originals, std::span<const TimeSeries> targets,
                 std::span<const std::vector<std::uint8_t>> masks) {
  if (originals.empty()) throw InvalidInputError("batch is empty");
  if (targets.size() != originals.size() || masks.size() != originals.size()) {
    throw InvalidInputError("batch originals, targets and masks differ in count");
  }
  for (std::size_t i = 0; i < originals.size(); ++i) {
    model.check(originals[i]);
    model.check(targets[i]);
  }
}

// The online encoder always runs in training mode (batch statistics); the
// momentum encoder embeds targets with its running statistics.
BranchLosses objective(const FeiModel& model, const FeiParams& p, std::span<const TimeSeries> originals,
                       std::span<const TimeSeries> targets, std::span<const std::vector<std::uint8_t>> masks,
                       const ComputationGraph& graph, BranchSelection which, FeiGradients* grads,
                       std::span<double> stats_update) {
  check_batch(model, originals, targets, masks);
  model.check(p);
  const std::size_t n = originals.size();
  const std::size_t h = model.subspace_dim();

  nn::Batch e;
  EncoderTape tape;
  model.encoder().forward_batch(p.encoder, values_of(originals), e, stats_update, grads ? &tape : nullptr);

  nn::Batch u_t(n, std::vector<double>(h));
  if (graph.momentum_target) {
    parallel_for(n, [&](std::size_t i) { u_t[i] = model.embed_momentum(p, targets[i]).u; });
  } else {
    nn::Batch e_t;
    model.encoder().forward_batch(p.encoder, values_of(targets), e_t, {}, nullptr);
    parallel_for(n, [&](std::size_t i) { model.project(p.projector, e_t[i], u_t[i]); });
  }

  const double weight = 1.0 / double(n);
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<FeiGradients> partial(grads ? chunks : 0);
  nn::Batch de(grads ? n : 0, std::vector<double>(model.embedding_dim(), 0.0));
  std::vector<SampleLoss> per(n);
  // Fixed chunking and in-order reduction keep results independent of thread count.
  parallel_for(chunks, [&](std::size_t c) {
    FeiGradients* g = nullptr;
    if (grads) {
      partial[c] = model.zero_gradients();
      g = &partial[c];
    }
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      per[i] = sample_heads(model, p, e[i], u_t[i], masks[i], graph, which, weight, g,
                            grads ? std::span<double>(de[i]) : std::span<double>());
    }
  });

  if (grads) {
    *grads = std::move(partial[0]);
    for (std::size_t c = 1; c < chunks; ++c) grads->add(partial[c]);
    const bool want_target = graph.target_branch && which != BranchSelection::mask_only;
    const bool want_mask = graph.mask_branch && which != BranchSelection::target_only;
    if (want_target || (want_mask && !graph.detach_anchor)) {
      model.encoder().backward_batch(p.encoder, tape, de, grads->encoder);
    }
  }

  BranchLosses out;
  for (const auto& s : per) {
    out.target += s.target;
    out.mask += s.mask;
  }
  out.target /= double(n);
  out.mask /= double(n);
  return out;
}

}  // namespace

BranchLosses fei_loss(const FeiModel& model, const FeiParams& params, std::span<const TimeSeries> originals,
                      std::span<const TimeSeries> targets, std::span<const std::vector<std::uint8_t>> masks,
                      const ComputationGraph& graph) {
  return objective(model, params, originals, targets, masks, graph, BranchSelection::both, nullptr, {});
}

BranchLosses fei_gradients(const FeiModel& model, const FeiParams& params, std::span<const TimeSeries> originals,
                           std::span<const TimeSeries> targets, std::span<const std::vector<std::uint8_t>> masks,
                           const ComputationGraph& graph, FeiGradients& grads, BranchSelection which,
                           std::span<double> stats_update) {
  return objective(model, params, originals, targets, masks, graph, which, &grads, stats_update);
}

MaskedBatch make_masked_batch(std::span<const TimeSeries> originals, MaskingStrategy strategy,
                              const MaskRatioRange& range, std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t counter) {
  range.validate();
  MaskedBatch out;
  out.masks.resize(originals.size());
  out.targets.resize(originals.size());
  parallel_for(originals.size(), [&](std::size_t i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(counter),
                      static_cast<std::uint32_t>(counter >> 32), static_cast<std::uint32_t>(i)};
    Rng rng(seq);
    out.masks[i] = sample_mask_bits(strategy, originals[i].length, range, rng);
    out.targets[i] = apply_mask(originals[i], strategy, out.masks[i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValidationStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

AdamW make_adamw(std::size_t size, const TrainConfig& cfg) {
  return AdamW(size, AdamWOptions{cfg.betas[0], cfg.betas[1], 1e-8, cfg.weight_decay});
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

FeiTrainer::FeiTrainer(const FeiModel& model, FeiParams params, TrainConfig cfg)
    : model_(&model), params_(std::move(params)), cfg_(std::move(cfg)), graph_(apply_ablation(cfg_.ablation)) {
  cfg_.validate();
  model.check(params_);
  if (graph_.subspace != model.config().subspace) {
    throw ConfigError("model projector setting does not match the no_subspace ablation flag");
  }
  if (cfg_.masking_strategy != model.config().masking) {
    throw ConfigError("model mask table was built for a different masking strategy");
  }
  grads_ = model.zero_gradients();
  opt_encoder_ = make_adamw(params_.encoder.size(), cfg_);
  opt_projector_ = make_adamw(params_.projector.size(), cfg_);
  opt_mask_table_ = make_adamw(params_.mask_table.size(), cfg_);
  opt_target_ = make_adamw(params_.predictor_target.size(), cfg_);
  opt_mask_ = make_adamw(params_.predictor_mask.size(), cfg_);
  lr_ = cfg_.lr;
}

StepRecord FeiTrainer::step(std::span<const TimeSeries> batch, std::size_t epoch) {
  const auto masked =
      make_masked_batch(batch, cfg_.masking_strategy, cfg_.mask_range(), cfg_.seed, kTrainStream, step_);
  return step(batch, masked, epoch);
}

StepRecord FeiTrainer::step(std::span<const TimeSeries> batch, const MaskedBatch& masked, std::size_t epoch) {
  std::vector<double> stats = params_.encoder_stats;
  const BranchLosses loss = fei_gradients(*model_, params_, batch, masked.targets, masked.masks, graph_, grads_,
                                          BranchSelection::both, stats);
  if (!finite(loss.target) || !finite(loss.mask)) {
    std::ostringstream os;
    os << "non-finite loss at epoch " << epoch << ", step " << step_ + 1 << " (target branch " << loss.target
       << ", mask branch " << loss.mask << ")";
    throw NumericalError(os.str());
  }

  FeiGradients clipped = grads_;
  std::array<std::span<double>, 5> groups = {clipped.encoder, clipped.projector, clipped.mask_table,
                                             clipped.predictor_target, clipped.predictor_mask};
  const double norm = clip_global_norm(groups, cfg_.grad_clip);
  if (!finite(norm)) throw NumericalError("non-finite gradient norm at step " + std::to_string(step_ + 1));

  params_.encoder_stats = std::move(stats);
  opt_encoder_.step(params_.encoder, clipped.encoder, lr_);
  opt_projector_.step(params_.projector, clipped.projector, lr_);
  opt_mask_table_.step(params_.mask_table, clipped.mask_table, lr_);
  opt_target_.step(params_.predictor_target, clipped.predictor_target, lr_);
  opt_mask_.step(params_.predictor_mask, clipped.predictor_mask, lr_);
  // EMA uses the post-step online weights.
  momentum_update(params_, cfg_.alpha);
  ++step_;

  StepRecord rec;
  rec.epoch = epoch;
  rec.step = step_;
  rec.loss_target_branch = loss.target;
  rec.loss_mask_branch = loss.mask;
  rec.loss_total = loss.total();
  rec.lr_current = lr_;
  return rec;
}

double validation_loss(const FeiModel& model, const FeiParams& params, const Dataset& data, const TrainConfig& cfg) {
  if (data.empty()) throw ConfigError("validation dataset is empty");
  const ComputationGraph graph = apply_ablation(cfg.ablation);
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += cfg.batch) {
    const std::size_t end = std::min(data.size(), start + cfg.batch);
    std::span<const TimeSeries> batch(data.samples.data() + start, end - start);
    const auto masked =
        make_masked_batch(batch, cfg.masking_strategy, cfg.mask_range(), cfg.validation_seed, kValidationStream, start);
    const BranchLosses l = fei_loss(model, params, batch, masked.targets, masked.masks, graph);
    total += l.total() * double(end - start);
  }
  return total / double(data.size());
}

bool EarlyStopping::update(double loss) {
  if (!seen_ || loss < best_) {
    seen_ = true;
    best_ = loss;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

PretrainResult pretrain(const FeiModel& model, FeiParams init, const Dataset& train, const Dataset* val,
                        const TrainConfig& cfg, const PretrainHooks& hooks) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training dataset is empty");
  if (val && val->empty()) val = nullptr;
  for (const auto& s : train.samples) model.check(s);

  FeiTrainer trainer(model, std::move(init), cfg);
  PretrainResult result;
  const bool monitored = val != nullptr || static_cast<bool>(hooks.validation_loss);
  EarlyStopping stopper(cfg.patience);

  std::vector<std::size_t> order(train.size());
  std::vector<TimeSeries> batch;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    trainer.set_lr(cfg.lr_at_epoch(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(kShuffleStream), static_cast<std::uint32_t>(epoch)};
    Rng shuffle_rng(seq);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train.samples[order[i]]);
      const StepRecord rec = trainer.step(batch, epoch);
      loss_sum += rec.loss_total;
      ++steps;
      result.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
    }

    EpochSummary summary;
    summary.epoch = epoch;
    summary.train_loss = loss_sum / double(steps);
    summary.lr = trainer.lr();
    if (monitored) {
      summary.val_loss = hooks.validation_loss ? hooks.validation_loss(epoch, trainer.params())
                                               : validation_loss(model, trainer.params(), *val, cfg);
      if (!std::isfinite(*summary.val_loss)) {
        throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
      }
      if (stopper.update(*summary.val_loss)) {
        result.best = trainer.params();
        result.best_epoch = epoch;
      }
    }
    result.epochs.push_back(summary);
    if (hooks.on_epoch) hooks.on_epoch(summary);
    if (monitored && stopper.should_stop()) {
      result.stopped_early = epoch + 1 < cfg.max_epochs;
      break;
    }
  }
  result.last = trainer.params();
  if (!monitored) {
    result.best = result.last;
    result.best_epoch = result.epochs.back().epoch;
  }
  return result;
}

}  // namespace fei
