#include "fei/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "fei/errors.hpp"
#include "fei/optim.hpp"
#include "fei/parallel.hpp"

namespace fei {

EvalMode parse_eval_mode(std::string_view name) {
  if (name == "linear") return EvalMode::linear;
  if (name == "finetune") return EvalMode::finetune;
  throw ConfigError("unknown eval mode '" + std::string(name) + "' (expected linear or finetune)");
}

std::string_view to_string(EvalMode m) { return m == EvalMode::finetune ? "finetune" : "linear"; }

IterationUnit parse_iteration_unit(std::string_view name) {
  if (name == "epoch") return IterationUnit::epoch;
  if (name == "step") return IterationUnit::step;
  throw ConfigError("unknown iteration unit '" + std::string(name) + "' (expected epoch or step)");
}

std::string_view to_string(IterationUnit u) { return u == IterationUnit::step ? "step" : "epoch"; }

EvalConfig EvalConfig::linear_defaults() { return EvalConfig{}; }

EvalConfig EvalConfig::finetune_defaults() {
  EvalConfig c;
  c.mode = EvalMode::finetune;
  c.max_iters = 100;
  c.lr = 1e-5;
  c.iter_unit = IterationUnit::step;
  return c;
}

EvalConfig EvalConfig::defaults_for(EvalMode mode) {
  return mode == EvalMode::finetune ? finetune_defaults() : linear_defaults();
}

void EvalConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("eval lr must be positive");
  if (batch < 1) throw ConfigError("eval batch must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("eval weight_decay must be non-negative");
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["task"] = r.task == TaskKind::classification ? "classification" : "regression";
  j["mode"] = r.mode;
  j["num_samples"] = r.num_samples;
  if (r.task == TaskKind::classification) {
    j["num_classes"] = r.num_classes;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
  } else {
    j["mse"] = r.mse;
    j["mae"] = r.mae;
  }
  j["best_val_loss"] = r.best_val_loss ? nlohmann::json(*r.best_val_loss) : nlohmann::json(nullptr);
  j["selected_iteration"] = r.selected_iteration;
  j["optimizer_steps"] = r.optimizer_steps;
  return j;
}

// ---------------------------------------------------------------------------
// Metrics

MetricsReport compute_classification_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                             std::size_t num_classes) {
  if (preds.empty()) throw InvalidInputError("cannot compute metrics on an empty prediction set");
  if (preds.size() != labels.size()) throw InvalidInputError("predictions and labels differ in length");
  if (num_classes == 0) throw ConfigError("classification metrics need at least one class");
  std::vector<std::size_t> tp(num_classes, 0), predicted(num_classes, 0), actual(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= num_classes || labels[i] >= num_classes) {
      throw InvalidInputError("class index outside [0, " + std::to_string(num_classes) + ")");
    }
    ++predicted[preds[i]];
    ++actual[labels[i]];
    if (preds[i] == labels[i]) {
      ++tp[labels[i]];
      ++correct;
    }
  }
  MetricsReport r;
  r.task = TaskKind::classification;
  r.num_samples = preds.size();
  r.num_classes = num_classes;
  r.accuracy = double(correct) / double(preds.size());
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : double(a) / double(b); };
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double p = ratio(tp[c], predicted[c]);
    const double rc = ratio(tp[c], actual[c]);
    r.precision += p;
    r.recall += rc;
    r.f1 += (p + rc) > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
  }
  r.precision /= double(num_classes);
  r.recall /= double(num_classes);
  r.f1 /= double(num_classes);
  return r;
}

MetricsReport compute_regression_metrics(std::span<const double> preds, std::span<const double> targets) {
  if (preds.empty()) throw InvalidInputError("cannot compute metrics on an empty prediction set");
  if (preds.size() != targets.size()) throw InvalidInputError("predictions and targets differ in length");
  MetricsReport r;
  r.task = TaskKind::regression;
  r.num_samples = preds.size();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double e = preds[i] - targets[i];
    r.mse += e * e;
    r.mae += std::abs(e);
  }
  r.mse /= double(preds.size());
  r.mae /= double(preds.size());
  return r;
}

std::size_t select_lowest(std::span<const double> losses) {
  if (losses.empty()) throw InvalidInputError("cannot select from an empty loss trace");
  return static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) - losses.begin());
}

// ---------------------------------------------------------------------------
// Linear head

LinearHead::LinearHead(std::size_t in, std::size_t out, Rng& rng) : layer{in, out, 0}, params(layer.num_params()) {
  layer.init(params, rng);
}

std::vector<double> LinearHead::forward(std::span<const double> features) const {
  std::vector<double> y(layer.out);
  layer.forward(params, features, y);
  return y;
}

namespace {

std::size_t head_outputs(const Dataset& ds) { return ds.task.is_classification() ? ds.task.num_classes : 1; }

double label_value(const Dataset& ds, std::size_t i) {
  const auto& l = ds.samples[i].label;
  if (!l) throw InvalidInputError("sample " + std::to_string(i) + " of '" + ds.name + "' has no label");
  return *l;
}

// Loss of one output vector and its gradient (scaled by `weight`) when requested.
double head_loss(std::span<const double> out, double label, bool classification, double weight,
                 std::span<double> d_out) {
  if (classification) {
    const auto cls = static_cast<std::size_t>(label);
    const double mx = *std::max_element(out.begin(), out.end());
    double z = 0.0;
    for (double v : out) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    if (!d_out.empty()) {
      for (std::size_t k = 0; k < out.size(); ++k) {
        d_out[k] = weight * (std::exp(out[k] - log_z) - (k == cls ? 1.0 : 0.0));
      }
    }
    return log_z - out[cls];
  }
  const double e = out[0] - label;
  if (!d_out.empty()) d_out[0] = weight * 2.0 * e;
  return e * e;
}

double mean_head_loss(const LinearHead& head, const std::vector<std::vector<double>>& x, const Dataset& ds) {
  const bool cls = ds.task.is_classification();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += head_loss(head.forward(x[i]), label_value(ds, i), cls, 0.0, {});
  return total / double(x.size());
}

void check_task(const Dataset& a, const Dataset& b) {
  if (a.task.kind != b.task.kind || a.task.num_classes != b.task.num_classes) {
    throw ConfigError("datasets '" + a.name + "' and '" + b.name + "' describe different tasks");
  }
}

// Drives optimizer steps and validation checks for either iteration unit.
// `step` receives the sample indices of one batch; `validate` returns the
// current validation loss; `keep` snapshots the current iterate.
struct ScheduleOutcome {
  std::vector<double> trace;
  std::size_t selected = 0;
  std::size_t steps = 0;
};

ScheduleOutcome run_schedule(const EvalConfig& cfg, std::size_t n_train,
                             const std::function<void(std::span<const std::size_t>)>& step,
                             const std::function<std::optional<double>()>& validate,
                             const std::function<void()>& keep) {
  ScheduleOutcome out;
  const bool select = cfg.early_stop_on_val;
  std::size_t since_best = 0;
  double best_loss = 0.0;
  // Returns true when patience is exhausted.
  auto check = [&](std::size_t iteration) -> bool {
    const auto loss = validate();
    if (!loss) return false;
    if (!std::isfinite(*loss)) throw NumericalError("non-finite validation loss during evaluation");
    const bool better = out.trace.empty() || *loss < best_loss;
    out.trace.push_back(*loss);
    if (better) {
      best_loss = *loss;
      out.selected = iteration;
      since_best = 0;
      keep();
    } else {
      ++since_best;
    }
    return cfg.patience > 0 && since_best >= cfg.patience;
  };

  if (select) check(0);
  std::vector<std::size_t> order(n_train);
  std::size_t epoch = 0;
  bool stop = false;
  while (!stop) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    Rng rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n_train && !stop; start += cfg.batch) {
      const std::size_t end = std::min(n_train, start + cfg.batch);
      step(std::span<const std::size_t>(order).subspan(start, end - start));
      ++out.steps;
      if (cfg.iter_unit == IterationUnit::step) {
        const bool last = out.steps >= cfg.max_iters;
        if (select && (out.steps % cfg.eval_every == 0 || last)) stop = check(out.steps);
        if (last) stop = true;
      }
    }
    ++epoch;
    if (cfg.iter_unit == IterationUnit::epoch) {
      if (select && !stop) stop = check(epoch);
      if (epoch >= cfg.max_iters) stop = true;
    }
  }
  if (!select) {
    out.selected = cfg.iter_unit == IterationUnit::step ? out.steps : epoch;
    keep();
  }
  return out;
}

}  // namespace

HeadFit fit_linear_head(const std::vector<std::vector<double>>& train_x, const Dataset& train,
                        const std::vector<std::vector<double>>& val_x, const Dataset& val, const EvalConfig& cfg) {
  cfg.validate();
  if (train_x.empty()) throw ConfigError("linear head needs training samples");
  if (train_x.size() != train.size() || val_x.size() != val.size()) {
    throw InvalidInputError("feature rows do not match dataset sizes");
  }
  if (!val.empty()) check_task(train, val);
  const bool cls = train.task.is_classification();
  const std::size_t dim = train_x.front().size();
  Rng rng(cfg.seed);
  HeadFit fit;
  fit.head = LinearHead(dim, head_outputs(train), rng);
  LinearHead best = fit.head;
  AdamW opt(fit.head.params.size(), AdamWOptions{0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<double> grad(fit.head.params.size());

  auto step = [&](std::span<const std::size_t> batch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double w = 1.0 / double(batch.size());
    std::vector<double> d_out(fit.head.layer.out);
    for (std::size_t i : batch) {
      const auto out = fit.head.forward(train_x[i]);
      head_loss(out, label_value(train, i), cls, w, d_out);
      fit.head.layer.backward(fit.head.params, train_x[i], d_out, grad, {});
    }
    opt.step(fit.head.params, grad, cfg.lr);
  };
  auto validate = [&]() -> std::optional<double> {
    if (val.empty()) return std::nullopt;
    return mean_head_loss(fit.head, val_x, val);
  };
  EvalConfig run_cfg = cfg;
  if (val.empty()) run_cfg.early_stop_on_val = false;
  const auto outcome = run_schedule(run_cfg, train_x.size(), step, validate, [&] { best = fit.head; });
  fit.head = best;
  fit.val_trace = outcome.trace;
  fit.selected_iteration = outcome.selected;
  fit.optimizer_steps = outcome.steps;
  return fit;
}

std::vector<std::vector<double>> encode_dataset(const FeiModel& model, const FeiParams& params,
                                                const Dataset& ds) {
  std::vector<std::vector<double>> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) {
    model.check(ds.samples[i]);
    out[i].resize(model.embedding_dim());
    model.encoder().forward(params.encoder, params.encoder_stats, ds.samples[i].values, out[i]);
  });
  return out;
}

MetricsReport evaluate_head(const LinearHead& head, const std::vector<std::vector<double>>& x, const Dataset& ds) {
  if (ds.task.is_classification()) {
    std::vector<std::size_t> preds(x.size()), labels(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto out = head.forward(x[i]);
      preds[i] = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
      labels[i] = ds.class_of(i);
    }
    return compute_classification_metrics(preds, labels, ds.task.num_classes);
  }
  std::vector<double> preds(x.size()), targets(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    preds[i] = head.forward(x[i])[0];
    targets[i] = label_value(ds, i);
  }
  return compute_regression_metrics(preds, targets);
}

LinearEvalResult linear_probe(const FeiModel& model, const FeiParams& params, const Dataset& train,
                              const Dataset& val, const Dataset& test, const EvalConfig& cfg) {
  model.check(params);
  check_task(train, test);
  if (test.empty()) throw ConfigError("test split is empty");
  const auto train_x = encode_dataset(model, params, train);
  const auto val_x = encode_dataset(model, params, val);
  const auto test_x = encode_dataset(model, params, test);
  LinearEvalResult r;
  r.fit = fit_linear_head(train_x, train, val_x, val, cfg);
  r.metrics = evaluate_head(r.fit.head, test_x, test);
  r.metrics.mode = "linear";
  if (!r.fit.val_trace.empty()) r.metrics.best_val_loss = r.fit.val_trace[select_lowest(r.fit.val_trace)];
  r.metrics.selected_iteration = r.fit.selected_iteration;
  r.metrics.optimizer_steps = r.fit.optimizer_steps;
  return r;
}

MetricsReport linear_eval(const FeiModel& model, const FeiParams& params, const Dataset& train, const Dataset& val,
                          const Dataset& test, const EvalConfig& cfg) {
  return linear_probe(model, params, train, val, test, cfg).metrics;
}

// ---------------------------------------------------------------------------
// Fine-tuning

FineTuneResult fine_tune(const FeiModel& model, const FeiParams& params, const Dataset& train, const Dataset& val,
                         const Dataset& test, const EvalConfig& cfg) {
  cfg.validate();
  EvalConfig probe_cfg = EvalConfig::linear_defaults();
  probe_cfg.seed = cfg.seed;
  probe_cfg.batch = cfg.batch;
  const LinearEvalResult probe = linear_probe(model, params, train, val, test, probe_cfg);

  const bool cls = train.task.is_classification();
  const Encoder& enc = model.encoder();
  FineTuneResult out;
  out.params = params;
  out.head = probe.fit.head;
  FeiParams best_params = out.params;
  LinearHead best_head = out.head;

  AdamW opt_enc(out.params.encoder.size(), AdamWOptions{0.9, 0.999, 1e-8, cfg.weight_decay});
  AdamW opt_head(out.head.params.size(), AdamWOptions{0.9, 0.999, 1e-8, cfg.weight_decay});
  constexpr std::size_t kChunk = 16;

  // The encoder trains with batch statistics and keeps its running statistics current.
  auto step = [&](std::span<const std::size_t> batch) {
    const std::size_t n = batch.size();
    const double w = 1.0 / double(n);
    nn::Batch inputs(n), e;
    for (std::size_t b = 0; b < n; ++b) inputs[b] = train.samples[batch[b]].values;
    EncoderTape tape;
    enc.forward_batch(out.params.encoder, inputs, e, out.params.encoder_stats, &tape);

    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<std::vector<double>> g_head(chunks);
    nn::Batch de(n, std::vector<double>(model.embedding_dim()));
    parallel_for(chunks, [&](std::size_t c) {
      g_head[c].assign(out.head.params.size(), 0.0);
      for (std::size_t b = c * kChunk; b < std::min(n, (c + 1) * kChunk); ++b) {
        const auto logits = out.head.forward(e[b]);
        std::vector<double> d_out(logits.size());
        head_loss(logits, label_value(train, batch[b]), cls, w, d_out);
        out.head.layer.backward(out.head.params, e[b], d_out, g_head[c], de[b]);
      }
    });
    for (std::size_t c = 1; c < chunks; ++c) {
      for (std::size_t j = 0; j < g_head[0].size(); ++j) g_head[0][j] += g_head[c][j];
    }
    std::vector<double> g_enc(out.params.encoder.size(), 0.0);
    enc.backward_batch(out.params.encoder, tape, de, g_enc);
    opt_enc.step(out.params.encoder, g_enc, cfg.lr);
    opt_head.step(out.head.params, g_head[0], cfg.lr);
  };
  auto validate = [&]() -> std::optional<double> {
    if (val.empty()) return std::nullopt;
    return mean_head_loss(out.head, encode_dataset(model, out.params, val), val);
  };
  EvalConfig run_cfg = cfg;
  if (val.empty()) run_cfg.early_stop_on_val = false;
  const auto outcome = run_schedule(run_cfg, train.size(), step, validate, [&] {
    best_params.encoder = out.params.encoder;
    best_params.encoder_stats = out.params.encoder_stats;
    best_head = out.head;
  });
  out.params = best_params;
  out.head = best_head;
  out.val_trace = outcome.trace;
  out.metrics = evaluate_head(out.head, encode_dataset(model, out.params, test), test);
  out.metrics.mode = "finetune";
  if (!outcome.trace.empty()) out.metrics.best_val_loss = outcome.trace[select_lowest(outcome.trace)];
  out.metrics.selected_iteration = outcome.selected;
  out.metrics.optimizer_steps = outcome.steps;
  return out;
}

// ---------------------------------------------------------------------------
// Statistics and projection

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInputError("spearman inputs differ in length");
  if (x.size() < 2) throw InvalidInputError("spearman needs at least two points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto dim = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd X(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != dim) {
      throw InvalidInputError("pca rows differ in width");
    }
    for (Eigen::Index j = 0; j < dim; ++j) X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  const Eigen::MatrixXd cov = (X.transpose() * X) / double(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  // Eigenvalues ascend; take the last two columns, largest first.
  Eigen::MatrixXd basis(dim, 2);
  for (int k = 0; k < 2; ++k) {
    const Eigen::Index col = dim - 1 - k;
    if (col < 0) {
      basis.col(k).setZero();
      continue;
    }
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.col(k) = v;
  }
  const Eigen::MatrixXd scores = X * basis;
  std::vector<std::array<double, 2>> out(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = {scores(i, 0), scores(i, 1)};
  return out;
}

// ---------------------------------------------------------------------------
// Embedding export

std::string_view to_string(EmbeddingRole r) {
  switch (r) {
    case EmbeddingRole::u: return "u";
    case EmbeddingRole::u_target: return "u_target";
    case EmbeddingRole::u_inferred: return "u_inferred";
  }
  return "u";
}

namespace {

EmbeddingRole parse_role(std::string_view s, std::size_t line) {
  if (s == "u") return EmbeddingRole::u;
  if (s == "u_target") return EmbeddingRole::u_target;
  if (s == "u_inferred") return EmbeddingRole::u_inferred;
  throw ParseError("unknown embedding role '" + std::string(s) + "'", line);
}

}  // namespace

EmbeddingExport export_embeddings(const FeiModel& model, const FeiParams& params, const Dataset& ds,
                                  std::span<const std::vector<std::uint8_t>> masks, const ComputationGraph& graph) {
  model.check(params);
  const std::size_t h = model.subspace_dim();
  for (const auto& m : masks) {
    if (m.size() != model.mask_positions()) throw InvalidInputError("export mask length does not match the model");
  }
  const std::size_t per_sample = 1 + 2 * masks.size();
  EmbeddingExport out;
  out.masks.assign(masks.begin(), masks.end());
  out.rows.resize(ds.size() * per_sample);
  parallel_for(ds.size(), [&](std::size_t s) {
    const auto& x = ds.samples[s];
    const Embedding anchor = model.embed_online(params, x);
    std::size_t r = s * per_sample;
    out.rows[r++] = EmbeddingRow{s, -1, 0.0, EmbeddingRole::u, anchor.u};
    for (std::size_t k = 0; k < masks.size(); ++k) {
      const double ratio = double(std::count(masks[k].begin(), masks[k].end(), 1)) / double(masks[k].size());
      const TimeSeries target = apply_mask(x, model.config().masking, masks[k]);
      // Target embeddings come from the online encoder and projector, so that
      // distances to the anchor do not include the lag of the momentum copy.
      const Embedding tgt = model.embed_online(params, target);
      std::vector<double> in = anchor.u;
      if (graph.mask_prompt) {
        const auto m = model.mask_encoder().encode(masks[k], params.mask_table);
        for (std::size_t j = 0; j < h; ++j) in[j] += m[j];
      }
      std::vector<double> inferred(h);
      model.target_predictor().forward(params.predictor_target, in, inferred);
      out.rows[r++] = EmbeddingRow{s, static_cast<long>(k), ratio, EmbeddingRole::u_target, tgt.u};
      out.rows[r++] = EmbeddingRow{s, static_cast<long>(k), ratio, EmbeddingRole::u_inferred, std::move(inferred)};
    }
  });
  std::vector<std::vector<double>> values;
  values.reserve(out.rows.size());
  for (const auto& row : out.rows) values.push_back(row.values);
  const auto scores = pca_2d(values);
  out.projection.reserve(out.rows.size());
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    EmbeddingRow p = out.rows[i];
    p.values = {scores[i][0], scores[i][1]};
    out.projection.push_back(std::move(p));
  }
  return out;
}

void write_embeddings_csv(std::span<const EmbeddingRow> rows, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InvalidInputError("cannot write '" + path.string() + "'");
  const std::size_t width = rows.empty() ? 0 : rows.front().values.size();
  f << "sample_id,mask_id,mask_ratio,role";
  for (std::size_t j = 0; j < width; ++j) f << ",v" << j;
  f << '\n';
  f.precision(17);
  for (const auto& r : rows) {
    f << r.sample_id << ',' << r.mask_id << ',' << r.mask_ratio << ',' << to_string(r.role);
    for (double v : r.values) f << ',' << v;
    f << '\n';
  }
  if (!f) throw InvalidInputError("failed writing '" + path.string() + "'");
}

std::vector<EmbeddingRow> read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInputError("cannot open '" + path.string() + "'");
  std::string line;
  std::vector<EmbeddingRow> rows;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 4) throw ParseError("embedding row needs at least 4 columns", line_no);
    EmbeddingRow r;
    try {
      r.sample_id = std::stoul(fields[0]);
      r.mask_id = std::stol(fields[1]);
      r.mask_ratio = std::stod(fields[2]);
      r.role = parse_role(fields[3], line_no);
      for (std::size_t j = 4; j < fields.size(); ++j) r.values.push_back(std::stod(fields[j]));
    } catch (const std::logic_error&) {
      throw ParseError("malformed embedding row", line_no);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_masks_csv(std::span<const std::vector<std::uint8_t>> masks, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InvalidInputError("cannot write '" + path.string() + "'");
  f << "mask_id,k,mask_ratio,bits\n";
  f.precision(17);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::count(masks[i].begin(), masks[i].end(), 1));
    f << i << ',' << k << ',' << double(k) / double(masks[i].size()) << ',';
    for (auto b : masks[i]) f << (b ? '1' : '0');
    f << '\n';
  }
}

double ratio_distance_spearman(std::span<const EmbeddingRow> rows) {
  std::map<std::size_t, const EmbeddingRow*> anchors;
  for (const auto& r : rows) {
    if (r.role == EmbeddingRole::u) anchors[r.sample_id] = &r;
  }
  std::vector<double> ratios, distances;
  for (const auto& r : rows) {
    if (r.role != EmbeddingRole::u_target) continue;
    const auto it = anchors.find(r.sample_id);
    if (it == anchors.end()) throw InvalidInputError("target row without an anchor row");
    const auto& u = it->second->values;
    double sq = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) sq += (u[j] - r.values[j]) * (u[j] - r.values[j]);
    ratios.push_back(r.mask_ratio);
    distances.push_back(std::sqrt(sq));
  }
  return spearman(ratios, distances);
}

double spectral_logistic_ceiling(const Dataset& ds, std::uint64_t seed) {
  if (!ds.task.is_classification()) throw ConfigError("the spectral ceiling needs a classification dataset");
  auto features = [&](const Dataset& part) {
    std::vector<std::vector<double>> x(part.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto spec = rfft(part.samples[i]);
      for (const auto& c : spec.bins) x[i].push_back(std::abs(c));
    }
    return x;
  };
  const auto parts = split(ds, SplitSpec{0.6, 0.2, 0.2, seed, true});
  auto train_x = features(parts.train);
  auto val_x = features(parts.val);
  auto test_x = features(parts.test);
  // Standardize with training statistics.
  const std::size_t dim = train_x.front().size();
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (const auto& r : train_x)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += r[j] / double(train_x.size());
  for (const auto& r : train_x)
    for (std::size_t j = 0; j < dim; ++j) sd[j] += (r[j] - mean[j]) * (r[j] - mean[j]) / double(train_x.size());
  for (double& s : sd) s = std::sqrt(s) + 1e-8;
  for (auto* set : {&train_x, &val_x, &test_x}) {
    for (auto& r : *set)
      for (std::size_t j = 0; j < dim; ++j) r[j] = (r[j] - mean[j]) / sd[j];
  }
  EvalConfig cfg;
  cfg.max_iters = 100;
  cfg.lr = 1e-2;
  cfg.seed = seed;
  const auto fit = fit_linear_head(train_x, parts.train, val_x, parts.val, cfg);
  return evaluate_head(fit.head, test_x, parts.test).accuracy;
}

}  // namespace fei
