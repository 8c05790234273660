// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "fei/checkpoint.hpp"
#include "fei/cli.hpp"
#include "fei/config.hpp"
#include "fei/data.hpp"
#include "fei/errors.hpp"
#include "fei/eval.hpp"
#include "fei/experiment.hpp"
#include "fei/maskenc.hpp"
#include "fei/pretrain.hpp"
#include "fei/signal.hpp"

using namespace fei;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

int failures = 0;

void report(int id, const std::string& title, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << "[exception: " << e.what() << "] ";
  }
  o.detail << "(" << std::fixed;
  o.detail.precision(1);
  o.detail << seconds_since(t0) << " s)";
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " -- " << o.detail.str()
            << std::endl;
}

const fs::path kWork = fs::temp_directory_path() / "fei_acceptance";

// Desk-scale pretraining settings shared by criteria 5-8; see README.
const char* kExperimentConfig =
    "data:\n  path: synthetic.tsv\n  split: {train: 0.6, val: 0.2, test: 0.2, seed: 11, stratify: true}\n"
    "model:\n  architecture: conv-resnet-1d\n  d: 64\n"
    "train:\n  alpha: 0.995\n  beta1: 0.0\n  beta2: 0.7\n  lr: 0.001\n  batch: 64\n  max_epochs: 30\n"
    "  patience: 30\n  seed: 5\n"
    "eval:\n  mode: linear\n"
    "synth:\n  num_classes: 4\n  per_class: 500\n  length: 128\n  noise_std: 0.1\n  seed: 7\n";

constexpr std::size_t kStudyEpochs = 10;

std::string run_cli_binary(const std::string& args, int& code) {
  const auto out = kWork / "cli_stdout.txt";
  const std::string cmd = std::string("'") + FEI_CLI_PATH + "' " + args + " > '" + out.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(out);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

void criterion_spectral(Outcome& o) {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t lengths[] = {64, 128, 178};
  double worst_masked = 0.0, worst_kept = 0.0, worst_identity = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t L = lengths[i % 3];
    std::vector<double> v(L);
    for (double& x : v) x = normal(rng);
    const auto series = TimeSeries::univariate(v);
    const auto mask = sample_mask_dfm(num_bins(L), {0.0, 0.7}, rng);
    const auto X = rfft(series.values);
    const auto Y = rfft(apply_frequency_mask(series, mask).values);
    double peak = 0.0;
    for (const auto& c : X) peak = std::max(peak, std::abs(c));
    for (std::size_t k = 0; k < X.size(); ++k) {
      if (mask.bits[k]) {
        worst_masked = std::max(worst_masked, std::abs(Y[k]) / peak);
      } else {
        worst_kept = std::max(worst_kept, std::abs(Y[k] - X[k]) / std::abs(X[k]));
      }
    }
    const auto same = apply_frequency_mask(series, FrequencyMask(num_bins(L)));
    for (std::size_t t = 0; t < L; ++t) {
      worst_identity = std::max(worst_identity, std::abs(same.values[t] - series.values[t]));
    }
  }
  const double elapsed = seconds_since(t0);
  o.detail << "max masked amplitude/peak " << worst_masked << ", max unmasked rel. error " << worst_kept
           << ", empty-mask max error " << worst_identity << ", runtime " << elapsed << " s ";
  o.require(worst_masked < 1e-8, "masked amplitude < 1e-8 of max");
  o.require(worst_kept < 1e-8, "unmasked bins within 1e-8 relative");
  o.require(worst_identity < 1e-10, "empty-mask round trip < 1e-10");
  o.require(elapsed < 5.0, "runtime < 5 s");
}

void criterion_mask_encoder(Outcome& o) {
  const auto t0 = Clock::now();
  const std::size_t n = 65, h = 32;
  const MaskEncoder enc(n, h);
  std::vector<double> table(enc.num_params());
  Rng rng(202);
  enc.init(table, rng);

  std::vector<std::uint8_t> bits(n, 0);
  const auto zero = enc.encode(bits, table);
  o.require(std::all_of(zero.begin(), zero.end(), [](double v) { return v == 0.0; }), "zero mask -> zero vector");
  bits[11] = 1;
  const auto one = enc.encode(bits, table);
  o.require(std::equal(one.begin(), one.end(), table.begin() + 11 * h), "one-hot mask -> row exactly");
  bits[40] = 1;
  const auto two = enc.encode(bits, table);
  double pair_err = 0.0;
  for (std::size_t j = 0; j < h; ++j) {
    pair_err = std::max(pair_err, std::abs(two[j] - (table[11 * h + j] + table[40 * h + j]) / std::sqrt(2.0)));
  }
  o.require(pair_err < 1e-12, "pair mask within 1e-12");

  std::uniform_int_distribution<std::size_t> k_dist(1, n - 1);
  double sum = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    enc.init(table, rng);
    const auto m = enc.encode(scattered_bits(n, k_dist(rng), rng), table);
    sum += nn::squared_norm(m);
  }
  const double mean_sq = sum / draws;
  const double elapsed = seconds_since(t0);
  o.detail << "pair error " << pair_err << ", E|m|^2 = " << mean_sq << " vs h = " << h << ", runtime " << elapsed
           << " s ";
  o.require(std::abs(mean_sq - double(h)) <= 0.05 * double(h), "E|m|^2 within 5% of h");
  o.require(elapsed < 10.0, "runtime < 10 s");
}

void criterion_ema(Outcome& o) {
  ModelConfig mc;
  const FeiModel model(mc);
  const FeiParams p = model.init(303);
  const bool equal = p.encoder_momentum.size() == p.encoder.size() &&
                     std::memcmp(p.encoder_momentum.data(), p.encoder.data(), p.encoder.size() * 8) == 0 &&
                     std::memcmp(p.projector_momentum.data(), p.projector.data(), p.projector.size() * 8) == 0;
  o.require(equal, "theta'_0 == theta_0 bitwise");

  // Constant online weights, distinct momentum start.
  const double alpha = 0.995;
  std::vector<double> momentum = p.encoder;
  for (double& v : momentum) v = -v + 0.25;
  const auto start = momentum;
  for (int s = 0; s < 50; ++s) momentum_update(momentum, p.encoder, alpha);
  const double a50 = std::pow(alpha, 50);
  double err = 0.0;
  for (std::size_t i = 0; i < momentum.size(); ++i) {
    err = std::max(err, std::abs(momentum[i] - (a50 * start[i] + (1 - a50) * p.encoder[i])));
  }
  o.detail << "max deviation from closed form " << err << " ";
  o.require(err < 1e-12, "50-step closed form within 1e-12");
}

struct GradToy {
  FeiModel model;
  FeiParams params;
  std::vector<TimeSeries> batch;
  MaskedBatch masked;

  explicit GradToy(std::uint64_t seed) : model(make_config()), params(model.init(seed)) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 4; ++i) {
      std::vector<double> v(16);
      for (double& x : v) x = normal(rng);
      batch.push_back(TimeSeries::univariate(v));
    }
    masked = make_masked_batch(batch, MaskingStrategy::dfm, {0.1, 0.7}, seed, 0, 0);
    for (double& v : params.encoder_momentum) v += 0.05 * normal(rng);
  }

  static ModelConfig make_config() {
    ModelConfig mc;
    mc.encoder.architecture = EncoderArchitecture::mlp;
    mc.encoder.input_length = 16;
    mc.encoder.d = 8;  // h = 4
    mc.encoder.mlp_hidden = 12;
    return mc;
  }
};

void criterion_detach(Outcome& o) {
  GradToy toy(404);
  const ComputationGraph g;
  auto grads = [&](const ComputationGraph& graph, BranchSelection which) {
    FeiGradients out = toy.model.zero_gradients();
    fei_gradients(toy.model, toy.params, toy.batch, toy.masked.targets, toy.masked.masks, graph, out, which);
    return out;
  };
  const auto target_only = grads(g, BranchSelection::target_only);
  const auto mask_only = grads(g, BranchSelection::mask_only);
  auto all_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  o.require(all_zero(target_only.mask_table), "target branch gives zero W_emb gradient");
  o.require(all_zero(mask_only.encoder) && all_zero(mask_only.projector), "mask branch gives zero theta, phi gradient");
  o.require(!all_zero(mask_only.mask_table) && !all_zero(target_only.encoder), "both branches are live");

  // Full gradients (no detach, so the analytic gradient is the true one) vs central differences.
  const auto full = apply_ablation(AblationFlags::only("no_detach"));
  const auto analytic = grads(full, BranchSelection::both);
  double worst = 0.0;
  auto check_group = [&](std::vector<double>& p, const std::vector<double>& a) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      const double h = 1e-5;
      p[i] = keep + h;
      const double up = fei_loss(toy.model, toy.params, toy.batch, toy.masked.targets, toy.masked.masks, full).total();
      p[i] = keep - h;
      const double dn = fei_loss(toy.model, toy.params, toy.batch, toy.masked.targets, toy.masked.masks, full).total();
      p[i] = keep;
      const double fd = (up - dn) / (2 * h);
      num += (fd - a[i]) * (fd - a[i]);
      den += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num / den));
  };
  check_group(toy.params.encoder, analytic.encoder);
  check_group(toy.params.projector, analytic.projector);
  check_group(toy.params.mask_table, analytic.mask_table);
  check_group(toy.params.predictor_target, analytic.predictor_target);
  check_group(toy.params.predictor_mask, analytic.predictor_mask);
  o.detail << "worst relative FD error " << worst << " ";
  o.require(worst < 1e-4, "finite differences within 1e-4 relative");
}

// State shared by criteria 5 and 6.
struct Pretrained {
  fs::path run_dir;
  DatasetSplit split;
  Checkpoint best;
};
std::optional<Pretrained> g_pretrained;

double mean_embedding_std(const std::vector<std::vector<double>>& x) {
  const std::size_t d = x.front().size();
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0, v = 0.0;
    for (const auto& r : x) m += r[j];
    m /= double(x.size());
    for (const auto& r : x) v += (r[j] - m) * (r[j] - m);
    total += std::sqrt(v / double(x.size()));
  }
  return total / double(d);
}

void criterion_end_to_end(Outcome& o) {
  const auto t0 = Clock::now();
  std::ofstream(kWork / "experiment.yaml") << kExperimentConfig;
  int code = 0;
  const auto synth_out = run_cli_binary(
      "synth --config '" + (kWork / "experiment.yaml").string() + "' --out '" + (kWork / "synthetic.tsv").string() + "'",
      code);
  o.require(code == 0, "fei synth exits 0");
  const auto at = synth_out.find("ceiling accuracy ");
  const double ceiling = at == std::string::npos ? 0.0 : std::stod(synth_out.substr(at + 17));
  o.require(ceiling >= 0.99, "spectral ceiling >= 0.99");

  std::ostringstream log;
  PretrainOptions opts{kWork / "experiment.yaml", std::nullopt, kWork / "runs"};
  const auto dir = cmd_pretrain(opts, log);
  const RunConfig cfg = load_run_config(kWork / "experiment.yaml");
  const Dataset ds = load_configured_dataset(cfg);
  const DatasetSplit parts = split(ds, cfg.data.split);
  const Checkpoint best = load_checkpoint(dir / "best.ckpt");
  const FeiModel model(best.model);

  const auto pretrained = linear_eval(model, best.params, parts.train, parts.val, parts.test, cfg.eval);
  const auto random = linear_eval(model, model.init(best.train.seed), parts.train, parts.val, parts.test, cfg.eval);

  std::vector<double> epoch_loss;
  std::ifstream epochs(dir / "epochs.jsonl");
  for (std::string line; std::getline(epochs, line);) {
    epoch_loss.push_back(nlohmann::json::parse(line).at("train_loss").get<double>());
  }
  const double spread = mean_embedding_std(encode_dataset(model, best.params, parts.test));
  const double elapsed = seconds_since(t0);

  o.detail << "ceiling " << ceiling << ", pretrained acc " << pretrained.accuracy << ", random-init acc "
           << random.accuracy << ", best epoch " << best.meta.value("epoch", 0) << ", epochs run "
           << epoch_loss.size();
  if (epoch_loss.size() >= 20) o.detail << ", epoch-1 loss " << epoch_loss[0] << ", epoch-20 loss " << epoch_loss[19];
  o.detail << ", mean embedding std " << spread << ", runtime " << elapsed << " s ";
  o.require(pretrained.accuracy - random.accuracy >= 0.15, "(a) gain over random init >= 15 points");
  o.require(epoch_loss.size() >= 20 && epoch_loss[19] < epoch_loss[0], "(b) epoch-20 loss < epoch-1 loss");
  o.require(spread > 1e-3, "(c) mean embedding std > 1e-3");
  o.require(elapsed < 15 * 60, "runtime < 15 min");
  g_pretrained = Pretrained{dir, parts, best};
}

void criterion_embedding_space(Outcome& o) {
  const auto t0 = Clock::now();
  if (!g_pretrained) throw Error("needs the checkpoint from criterion 5");
  const auto& pre = *g_pretrained;
  const FeiModel model(pre.best.model);
  std::vector<std::size_t> first(20);
  for (std::size_t i = 0; i < 20; ++i) first[i] = i;
  const Dataset held = pre.split.test.subset(first);
  Rng rng(606);
  std::vector<std::vector<std::uint8_t>> masks;
  for (int i = 0; i < 200; ++i) {
    masks.push_back(sample_mask_bits(pre.best.model.masking, held.length(), pre.best.train.mask_range(), rng));
  }
  const auto ex = export_embeddings(model, pre.best.params, held, masks, apply_ablation(pre.best.train.ablation));
  const fs::path csv = kWork / "embeddings.csv";
  write_embeddings_csv(ex.rows, csv);
  const double rho = ratio_distance_spearman(read_embeddings_csv(csv));
  const double elapsed = seconds_since(t0);
  o.detail << "Spearman(mask ratio, |u - u'|) = " << rho << " over " << held.size() * masks.size()
           << " pairs, runtime " << elapsed << " s ";
  o.require(rho > 0.5, "Spearman > 0.5");
  o.require(elapsed < 60.0, "runtime < 1 min");
}

RunConfig study_config() {
  RunConfig cfg = load_run_config(kWork / "experiment.yaml");
  cfg.train.max_epochs = kStudyEpochs;
  cfg.train.patience = kStudyEpochs;
  return cfg;
}

void criterion_ablation(Outcome& o) {
  if (!g_pretrained) throw Error("needs the dataset from criterion 5");
  const RunConfig cfg = study_config();
  const auto rows = run_ablation_study(cfg, g_pretrained->split);
  std::ostringstream table;
  write_ablation_table(rows, TaskKind::classification, table);
  std::cout << "ablation table (" << kStudyEpochs << " epochs per row):\n" << table.str();
  std::ofstream(kWork / "ablation.csv") << table.str();

  o.require(rows.size() == 7, "7 rows");
  bool finite = true;
  for (const auto& r : rows) finite = finite && r.error.empty() && r.metrics;
  o.require(finite, "all rows complete with finite losses");
  if (!finite) return;
  const double fei = rows[0].metrics->accuracy;
  auto acc_of = [&](const std::string& name) {
    for (const auto& r : rows) {
      if (r.model == name) return r.metrics->accuracy;
    }
    return std::nan("");
  };
  const double no_prompt = acc_of("no_mask_prompt"), no_emb = acc_of("no_emb_infer");
  o.detail << "FEI " << fei << ", no_mask_prompt " << no_prompt << ", no_emb_infer " << no_emb << " ";
  o.require(no_prompt <= fei - 0.05, "no_mask_prompt at least 5 points below FEI");
  o.require(no_emb <= fei - 0.05, "no_emb_infer at least 5 points below FEI");
}

void criterion_strategies(Outcome& o) {
  if (!g_pretrained) throw Error("needs the dataset from criterion 5");
  RunConfig cfg = study_config();
  // +25% of Nyquist: L/2 = 64 bins, so 16 bins.
  SyntheticSpec shifted = cfg.synth;
  shifted.shift_bins = cfg.synth.length / 2 / 4;
  shifted.seed = cfg.synth.seed + 1;
  const Dataset shifted_ds = normalize_per_sample(make_synthetic_freq_dataset(shifted));
  const DatasetSplit shifted_split = split(shifted_ds, cfg.data.split);

  const auto rows = run_strategy_study(cfg, g_pretrained->split, shifted_split);
  std::ostringstream table;
  write_strategy_table(rows, table);
  std::cout << "masking-strategy table (" << kStudyEpochs << " epochs per row, shift " << shifted.shift_bins
            << " bins):\n"
            << table.str();
  std::ofstream(kWork / "strategies.csv") << table.str();

  bool complete = rows.size() == 3;
  for (const auto& r : rows) complete = complete && r.error.empty();
  o.require(complete, "DFM, CFM and TDM all complete");
  if (!complete) return;
  const double dfm = rows[0].drop(), tdm = rows[2].drop();
  o.detail << "DFM drop " << dfm << ", CFM drop " << rows[1].drop() << ", TDM drop " << tdm << " ";
  o.require(dfm <= tdm, "DFM drop <= TDM drop");
}

void criterion_persistence(Outcome& o) {
  ModelConfig mc;
  mc.encoder.architecture = EncoderArchitecture::mlp;
  mc.encoder.input_length = 64;
  mc.encoder.d = 16;
  mc.encoder.mlp_hidden = 32;
  SyntheticSpec s;
  s.num_classes = 2;
  s.per_class = 40;
  s.length = 64;
  s.seed = 9;
  const auto ds = normalize_per_sample(make_synthetic_freq_dataset(s));
  const auto parts = split(ds, {0.6, 0.2, 0.2, 1, true});
  TrainConfig tc;
  tc.batch = 32;
  tc.lr = 1e-3;
  tc.max_epochs = 3;
  tc.seed = 77;
  const FeiModel model(mc);
  const auto a = pretrain(model, model.init(77), parts.train, &parts.val, tc);
  const auto b = pretrain(model, model.init(77), parts.train, &parts.val, tc);
  bool same = a.steps.size() == b.steps.size();
  for (std::size_t i = 0; same && i < a.steps.size(); ++i) {
    same = std::memcmp(&a.steps[i].loss_total, &b.steps[i].loss_total, sizeof(double)) == 0 &&
           std::memcmp(&a.steps[i].loss_target_branch, &b.steps[i].loss_target_branch, sizeof(double)) == 0 &&
           std::memcmp(&a.steps[i].loss_mask_branch, &b.steps[i].loss_mask_branch, sizeof(double)) == 0;
  }
  o.require(same, "same seed gives bitwise-identical loss logs");

  Checkpoint c{mc, tc, a.best, {}, {}};
  const auto path = kWork / "roundtrip.ckpt";
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  bool bitwise = true;
  for (auto name : FeiParams::blob_names) {
    const auto& x = c.params.blob(name);
    const auto& y = back.params.blob(name);
    bitwise = bitwise && x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
  }
  o.require(bitwise, "checkpoint round trip bitwise exact");

  auto bytes = serialize_checkpoint(c);
  bytes[bytes.size() - 5] ^= 0x04;
  bool refused = false;
  try {
    deserialize_checkpoint(bytes);
  } catch (const ChecksumError&) {
    refused = true;
  }
  o.require(refused, "corrupted checksum refused with ChecksumError");
  o.detail << a.steps.size() << " steps compared, " << FeiParams::blob_names.size() << " blobs compared ";
}

void criterion_metrics(Outcome& o) {
  const std::vector<std::size_t> labels = {0, 0, 0, 1, 1, 2}, preds = {0, 1, 0, 1, 1, 0};
  const auto m = compute_classification_metrics(preds, labels, 3);
  o.require(std::abs(m.accuracy - 4.0 / 6.0) < 1e-9 && std::abs(m.precision - 4.0 / 9.0) < 1e-9 &&
                std::abs(m.recall - 5.0 / 9.0) < 1e-9 && std::abs(m.f1 - 22.0 / 45.0) < 1e-9,
            "hand-computed confusion example");
  const std::vector<double> p = {1, 2, 3}, t = {1.5, 2, 5};
  const auto r = compute_regression_metrics(p, t);
  o.require(std::abs(r.mse - 4.25 / 3.0) < 1e-9 && std::abs(r.mae - 2.5 / 3.0) < 1e-9, "regression arithmetic");

  Rng rng(1010);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 6;
    const std::size_t n = 1 + rng() % 60;
    std::uniform_int_distribution<std::size_t> cls(0, k - 1);
    std::vector<std::size_t> yp(n), yt(n);
    for (std::size_t i = 0; i < n; ++i) yp[i] = cls(rng), yt[i] = cls(rng);
    std::vector<std::vector<double>> cm(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < n; ++i) cm[yt[i]][yp[i]] += 1;
    double correct = 0, P = 0, R = 0, F = 0;
    for (std::size_t c = 0; c < k; ++c) {
      correct += cm[c][c];
      double col = 0, row = 0;
      for (std::size_t j = 0; j < k; ++j) col += cm[j][c], row += cm[c][j];
      const double pc = col > 0 ? cm[c][c] / col : 0.0, rc = row > 0 ? cm[c][c] / row : 0.0;
      P += pc;
      R += rc;
      F += pc + rc > 0 ? 2 * pc * rc / (pc + rc) : 0.0;
    }
    const auto got = compute_classification_metrics(yp, yt, k);
    const double kk = double(k);
    if (std::abs(got.accuracy - correct / double(n)) > 1e-9 || std::abs(got.precision - P / kk) > 1e-9 ||
        std::abs(got.recall - R / kk) > 1e-9 || std::abs(got.f1 - F / kk) > 1e-9) {
      ++mismatches;
    }
  }
  o.detail << mismatches << " mismatches in 1000 random prediction vectors ";
  o.require(mismatches == 0, "brute-force confusion sweep");
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  std::cout << "working directory " << kWork.string() << std::endl;

  report(1, "spectral surgery", criterion_spectral);
  report(2, "mask-encoder closed form", criterion_mask_encoder);
  report(3, "EMA correctness", criterion_ema);
  report(4, "detach asymmetry and finite-difference gradients", criterion_detach);
  report(5, "synthetic end-to-end", criterion_end_to_end);
  report(6, "frequency-sensitive embedding space", criterion_embedding_space);
  report(7, "ablation directionality", criterion_ablation);
  report(8, "masking-strategy harness", criterion_strategies);
  report(9, "determinism and persistence", criterion_persistence);
  report(10, "metrics unit suite", criterion_metrics);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
