#include "fei/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "fei/checkpoint.hpp"
#include "fei/config.hpp"
#include "fei/errors.hpp"
#include "fei/experiment.hpp"
#include "fei/run.hpp"

namespace fei {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const InvalidInputError*>(&e)) return 2;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 1;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("FEI_SEED");
  if (!raw || !*raw) return std::nullopt;
  const std::string_view text(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("FEI_SEED must be a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (auto env = seed_from_env()) return *env;
  return fallback;
}

namespace {

using Clock = std::chrono::system_clock;

std::string_view task_name(TaskKind t) { return t == TaskKind::classification ? "classification" : "regression"; }

TaskKind parse_task(std::string_view name) {
  if (name == "classification") return TaskKind::classification;
  if (name == "regression") return TaskKind::regression;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected classification or regression)");
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json step_json(const StepRecord& r) {
  return {{"epoch", r.epoch},
          {"step", r.step},
          {"loss_total", r.loss_total},
          {"loss_target_branch", r.loss_target_branch},
          {"loss_mask_branch", r.loss_mask_branch},
          {"lr_current", r.lr_current}};
}

Dataset load_for_checkpoint(const std::filesystem::path& path, TaskKind task, const Checkpoint& ckpt,
                            bool normalize) {
  UcrLoadOptions opts;
  opts.task = task;
  Dataset ds = load_ucr_tsv(path, opts);
  if (normalize) ds = normalize_per_sample(std::move(ds));
  ds.validate();
  const auto& enc = ckpt.model.encoder;
  if (ds.length() != enc.input_length || ds.channels() != enc.input_channels) {
    throw InvalidInputError("dimension mismatch: checkpoint expects " + std::to_string(enc.input_channels) + " x " +
                            std::to_string(enc.input_length) + " series, '" + path.string() + "' has " +
                            std::to_string(ds.channels()) + " x " + std::to_string(ds.length()));
  }
  return ds;
}

bool checkpoint_normalizes(const Checkpoint& c) { return c.meta.value("normalize", true); }

}  // namespace

std::filesystem::path cmd_pretrain(const PretrainOptions& opts, std::ostream& log) {
  const auto started = Clock::now();
  RunConfig cfg = load_run_config(opts.config);
  cfg.train.seed = resolve_seed(opts.seed, cfg.train.seed);
  const Dataset ds = load_configured_dataset(cfg);
  cfg.model = fit_model_to_data(cfg.model, ds);
  cfg.validate();
  const DatasetSplit parts = split(ds, cfg.data.split);

  RunManifest manifest;
  manifest.command = "pretrain";
  manifest.config = to_json(cfg);
  manifest.seed = cfg.train.seed;
  manifest.started = started;
  const auto dir = create_run_directory(opts.out.value_or(cfg.output_dir), "pretrain", manifest.config_hash());

  std::ofstream steps(dir / "steps.jsonl");
  std::ofstream epochs(dir / "epochs.jsonl");
  PretrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { steps << step_json(r).dump() << '\n'; };
  hooks.on_epoch = [&](const EpochSummary& s) {
    nlohmann::json j = {{"epoch", s.epoch}, {"train_loss", s.train_loss}, {"lr", s.lr}};
    j["val_loss"] = s.val_loss ? nlohmann::json(*s.val_loss) : nlohmann::json(nullptr);
    epochs << j.dump() << '\n';
    log << "epoch " << s.epoch << " train " << s.train_loss;
    if (s.val_loss) log << " val " << *s.val_loss;
    log << '\n';
  };
  const TrainedModel trained = pretrain_configured(cfg, parts, hooks);
  steps.close();
  epochs.close();

  const nlohmann::json base_meta = {{"normalize", cfg.data.normalize}, {"dataset", ds.name}};
  Checkpoint ckpt{trained.model_config, trained.train_config, trained.result.best, {}, base_meta};
  ckpt.meta["kind"] = "best";
  ckpt.meta["epoch"] = trained.result.best_epoch;
  save_checkpoint(ckpt, dir / "best.ckpt");
  ckpt.params = trained.result.last;
  ckpt.meta["kind"] = "last";
  ckpt.meta["epoch"] = trained.result.epochs.back().epoch;
  save_checkpoint(ckpt, dir / "last.ckpt");

  manifest.finished = Clock::now();
  manifest.artifacts = {{"loss_log", (dir / "steps.jsonl").string()},
                        {"epoch_log", (dir / "epochs.jsonl").string()},
                        {"best_checkpoint", (dir / "best.ckpt").string()},
                        {"last_checkpoint", (dir / "last.ckpt").string()}};
  manifest.extra = {{"best_epoch", trained.result.best_epoch},
                    {"epochs_run", trained.result.epochs.size()},
                    {"stopped_early", trained.result.stopped_early}};
  write_manifest(manifest, dir);
  log << "best epoch " << trained.result.best_epoch << ", run directory " << dir.string() << '\n';
  return dir;
}

std::filesystem::path cmd_eval(const EvalOptions& opts, std::ostream& log) {
  const auto started = Clock::now();
  const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
  const std::string ckpt_hash = git_blob_hash_file(opts.checkpoint);

  DataConfig data;
  EvalConfig ec = EvalConfig::defaults_for(opts.mode);
  if (opts.config) {
    const RunConfig cfg = load_run_config(*opts.config);
    data = cfg.data;
    if (cfg.eval.mode == opts.mode) ec = cfg.eval;
  } else {
    data.normalize = checkpoint_normalizes(ckpt);
  }
  ec.seed = resolve_seed(opts.seed, ec.seed);
  ec.validate();
  const Dataset ds = load_for_checkpoint(opts.data, opts.task, ckpt, data.normalize);
  const DatasetSplit parts = split(ds, data.split);
  const FeiModel model(ckpt.model);

  RunManifest manifest;
  manifest.command = "eval";
  manifest.config = {{"checkpoint", opts.checkpoint.string()}, {"checkpoint_hash", ckpt_hash},
                     {"data", to_json(data)},                  {"data_path", opts.data.string()},
                     {"task", task_name(opts.task)},           {"eval", to_json(ec)}};
  manifest.seed = ec.seed;
  manifest.started = started;
  manifest.extra["checkpoint_hash"] = ckpt_hash;
  const auto dir = create_run_directory(opts.out, "eval", manifest.config_hash());

  MetricsReport metrics;
  if (opts.mode == EvalMode::linear) {
    metrics = linear_eval(model, ckpt.params, parts.train, parts.val, parts.test, ec);
  } else {
    const FineTuneResult ft = fine_tune(model, ckpt.params, parts.train, parts.val, parts.test, ec);
    metrics = ft.metrics;
    Checkpoint tuned = ckpt;
    tuned.params = ft.params;
    tuned.extra["head"] = ft.head.params;
    tuned.meta["kind"] = "finetuned";
    tuned.meta["source_checkpoint_hash"] = ckpt_hash;
    tuned.meta["head_inputs"] = ft.head.layer.in;
    tuned.meta["head_outputs"] = ft.head.layer.out;
    save_checkpoint(tuned, dir / "finetuned.ckpt");
    manifest.artifacts["finetuned_checkpoint"] = (dir / "finetuned.ckpt").string();
  }
  write_json(to_json(metrics), dir / "metrics.json");
  manifest.artifacts["metrics"] = (dir / "metrics.json").string();
  manifest.finished = Clock::now();
  write_manifest(manifest, dir);
  log << to_json(metrics).dump(2) << '\n';
  return dir;
}

std::filesystem::path cmd_ablate(const AblateOptions& opts, std::ostream& log) {
  const auto started = Clock::now();
  RunConfig cfg = load_run_config(opts.config);
  cfg.train.seed = resolve_seed(opts.seed, cfg.train.seed);
  const Dataset ds = load_configured_dataset(cfg);
  cfg.model = fit_model_to_data(cfg.model, ds);
  cfg.validate();
  const DatasetSplit parts = split(ds, cfg.data.split);

  RunManifest manifest;
  manifest.command = "ablate";
  manifest.config = to_json(cfg);
  manifest.seed = cfg.train.seed;
  manifest.started = started;
  const auto dir = create_run_directory(opts.out.value_or(cfg.output_dir), "ablate", manifest.config_hash());

  const auto rows = run_ablation_study(cfg, parts, [&](const AblationRow& r) {
    log << r.model << ": " << (r.error.empty() ? "done" : "failed: " + r.error) << '\n';
  });
  std::ofstream table(dir / "ablation.csv");
  write_ablation_table(rows, ds.task.kind, table);
  table.close();
  write_ablation_table(rows, ds.task.kind, log);

  manifest.finished = Clock::now();
  manifest.artifacts["table"] = (dir / "ablation.csv").string();
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
  manifest.extra["failed_rows"] = failed;
  if (failed > 0) manifest.status = "partial";
  write_manifest(manifest, dir);
  return dir;
}

std::filesystem::path cmd_embed(const EmbedOptions& opts, std::ostream& log) {
  const auto started = Clock::now();
  const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
  const std::string ckpt_hash = git_blob_hash_file(opts.checkpoint);
  if (opts.num_masks == 0) throw ConfigError("--num-masks must be positive");
  Dataset ds = load_for_checkpoint(opts.data, opts.task, ckpt, checkpoint_normalizes(ckpt));
  if (opts.limit > 0 && opts.limit < ds.size()) {
    std::vector<std::size_t> head(opts.limit);
    for (std::size_t i = 0; i < opts.limit; ++i) head[i] = i;
    ds = ds.subset(head);
  }
  const std::uint64_t seed = resolve_seed(opts.seed, ckpt.train.seed);
  const FeiModel model(ckpt.model);

  Rng rng(seed);
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::size_t i = 0; i < opts.num_masks; ++i) {
    masks.push_back(sample_mask_bits(ckpt.model.masking, ds.length(), ckpt.train.mask_range(), rng));
  }
  const EmbeddingExport ex = export_embeddings(model, ckpt.params, ds, masks, apply_ablation(ckpt.train.ablation));

  RunManifest manifest;
  manifest.command = "embed";
  manifest.config = {{"checkpoint", opts.checkpoint.string()}, {"checkpoint_hash", ckpt_hash},
                     {"data_path", opts.data.string()},        {"task", task_name(opts.task)},
                     {"num_masks", opts.num_masks},            {"limit", opts.limit}};
  manifest.seed = seed;
  manifest.started = started;
  const auto dir = create_run_directory(opts.out, "embed", manifest.config_hash());
  write_embeddings_csv(ex.rows, dir / "embeddings.csv");
  write_embeddings_csv(ex.projection, dir / "projection.csv");
  write_masks_csv(ex.masks, dir / "masks.csv");

  manifest.finished = Clock::now();
  manifest.artifacts = {{"embeddings", (dir / "embeddings.csv").string()},
                        {"projection", (dir / "projection.csv").string()},
                        {"masks", (dir / "masks.csv").string()}};
  manifest.extra["checkpoint_hash"] = ckpt_hash;
  manifest.extra["ratio_distance_spearman"] = ratio_distance_spearman(ex.rows);
  write_manifest(manifest, dir);
  log << ex.rows.size() << " embedding rows, ratio/distance Spearman "
      << manifest.extra["ratio_distance_spearman"].get<double>() << ", run directory " << dir.string() << '\n';
  return dir;
}

std::filesystem::path cmd_synth(const SynthOptions& opts, std::ostream& log) {
  RunConfig cfg = load_run_config(opts.config);
  cfg.synth.seed = resolve_seed(opts.seed, cfg.synth.seed);
  const Dataset ds = make_synthetic_freq_dataset(cfg.synth);
  if (opts.out.has_parent_path()) std::filesystem::create_directories(opts.out.parent_path());
  write_ucr_tsv(ds, opts.out);
  const double ceiling = spectral_logistic_ceiling(normalize_per_sample(ds), cfg.synth.seed);
  log << "wrote " << ds.size() << " series to " << opts.out.string() << '\n'
      << "spectral-logistic ceiling accuracy " << ceiling << '\n';
  return opts.out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-masked embedding inference for time series", "fei"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string mode = "linear", task = "classification";
  std::optional<std::string> out_root;

  PretrainOptions pre;
  auto* c_pre = app.add_subcommand("pretrain", "Pretrain an encoder from a config file");
  c_pre->add_option("--config", pre.config, "YAML run config")->required();
  c_pre->add_option("--seed", seed, "Seed (overrides FEI_SEED and the config)");
  c_pre->add_option("--out", out_root, "Root directory for run directories");

  EvalOptions ev;
  std::optional<std::string> ev_config;
  auto* c_eval = app.add_subcommand("eval", "Linear probe or fine-tune a checkpoint");
  c_eval->add_option("--ckpt", ev.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--data", ev.data, "UCR-style dataset file")->required();
  c_eval->add_option("--mode", mode, "linear or finetune");
  c_eval->add_option("--config", ev_config, "YAML config with eval, split and normalization settings");
  c_eval->add_option("--task", task, "classification or regression");
  c_eval->add_option("--seed", seed, "Seed (overrides FEI_SEED)");
  c_eval->add_option("--out", out_root, "Root directory for run directories");

  AblateOptions ab;
  auto* c_ablate = app.add_subcommand("ablate", "Pretrain and linear-evaluate FEI and its six ablations");
  c_ablate->add_option("--config", ab.config, "YAML run config")->required();
  c_ablate->add_option("--seed", seed, "Seed (overrides FEI_SEED and the config)");
  c_ablate->add_option("--out", out_root, "Root directory for run directories");

  EmbedOptions em;
  auto* c_embed = app.add_subcommand("embed", "Export u, u' and inferred u' for random masks");
  c_embed->add_option("--ckpt", em.checkpoint, "Checkpoint file")->required();
  c_embed->add_option("--data", em.data, "UCR-style dataset file")->required();
  c_embed->add_option("--num-masks", em.num_masks, "Masks per sample")->required();
  c_embed->add_option("--limit", em.limit, "Export only the first N samples (0 = all)");
  c_embed->add_option("--task", task, "classification or regression");
  c_embed->add_option("--seed", seed, "Mask seed (overrides FEI_SEED)");
  c_embed->add_option("--out", out_root, "Root directory for run directories");

  SynthOptions sy;
  auto* c_synth = app.add_subcommand("synth", "Write the synthetic frequency dataset");
  c_synth->add_option("--config", sy.config, "YAML config with a synth section")->required();
  c_synth->add_option("--out", sy.out, "Output dataset file")->required();
  c_synth->add_option("--seed", seed, "Dataset seed (overrides FEI_SEED and the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; usage errors count as configuration errors.
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_pre) {
      pre.seed = seed;
      if (out_root) pre.out = *out_root;
      cmd_pretrain(pre, out);
    } else if (*c_eval) {
      ev.mode = parse_eval_mode(mode);
      ev.task = parse_task(task);
      ev.seed = seed;
      if (ev_config) ev.config = *ev_config;
      if (out_root) ev.out = *out_root;
      cmd_eval(ev, out);
    } else if (*c_ablate) {
      ab.seed = seed;
      if (out_root) ab.out = *out_root;
      cmd_ablate(ab, out);
    } else if (*c_embed) {
      em.task = parse_task(task);
      em.seed = seed;
      if (out_root) em.out = *out_root;
      cmd_embed(em, out);
    } else if (*c_synth) {
      sy.seed = seed;
      cmd_synth(sy, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace fei
