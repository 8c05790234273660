#include <doctest.h>

#include <cmath>
#include <functional>

#include "fei/errors.hpp"
#include "fei/model.hpp"
#include "fei/pretrain.hpp"

using namespace fei;

namespace {

ModelConfig mlp_toy() {
  ModelConfig mc;
  mc.encoder.architecture = EncoderArchitecture::mlp;
  mc.encoder.input_length = 16;
  mc.encoder.d = 8;  // h = 4
  mc.encoder.mlp_hidden = 12;
  return mc;
}

ModelConfig conv_toy() {
  ModelConfig mc;
  mc.encoder.input_length = 16;
  mc.encoder.d = 8;
  mc.encoder.widths = {4};
  mc.encoder.kernels = {3, 3};
  mc.encoder.strides = {1, 2};
  return mc;
}

std::vector<TimeSeries> random_batch(std::size_t n, std::size_t L, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<TimeSeries> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(L);
    for (double& x : v) x = d(rng);
    out.push_back(TimeSeries::univariate(v));
  }
  return out;
}

struct Toy {
  FeiModel model;
  FeiParams params;
  std::vector<TimeSeries> batch;
  MaskedBatch masked;

  Toy(ModelConfig mc, std::size_t n, std::uint64_t seed) : model(mc), params(model.init(seed)) {
    batch = random_batch(n, mc.encoder.input_length, seed + 1);
    masked = make_masked_batch(batch, mc.masking, {0.1, 0.7}, seed, 0, 0);
    // Give the momentum copy its own values so that u' differs from u.
    Rng rng(seed + 2);
    std::normal_distribution<double> d(0.0, 0.05);
    for (double& v : params.encoder_momentum) v += d(rng);
  }

  BranchLosses loss(const ComputationGraph& g) const {
    return fei_loss(model, params, batch, masked.targets, masked.masks, g);
  }
  FeiGradients grads(const ComputationGraph& g, BranchSelection which = BranchSelection::both) const {
    FeiGradients out = model.zero_gradients();
    fei_gradients(model, params, batch, masked.targets, masked.masks, g, out, which);
    return out;
  }
};

std::vector<double>& group(FeiParams& p, int i) {
  switch (i) {
    case 0: return p.encoder;
    case 1: return p.projector;
    case 2: return p.mask_table;
    case 3: return p.predictor_target;
    default: return p.predictor_mask;
  }
}

const std::vector<double>& group(const FeiGradients& g, int i) {
  switch (i) {
    case 0: return g.encoder;
    case 1: return g.projector;
    case 2: return g.mask_table;
    case 3: return g.predictor_target;
    default: return g.predictor_mask;
  }
}

const char* kGroupNames[] = {"encoder", "projector", "mask_table", "predictor_target", "predictor_mask"};

// Relative L2 error between the analytic gradient of group `gi` and central
// differences of `objective`.
double fd_error(Toy& toy, int gi, const std::vector<double>& analytic, const std::function<double()>& objective) {
  auto& p = group(toy.params, gi);
  const double h = 1e-5;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = objective();
    p[i] = keep - h;
    const double down = objective();
    p[i] = keep;
    const double fd = (up - down) / (2 * h);
    num += (fd - analytic[i]) * (fd - analytic[i]);
    den += fd * fd;
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace

TEST_CASE("full gradients match finite differences on the mlp toy") {
  Toy toy(mlp_toy(), 3, 10);
  const auto g = apply_ablation(AblationFlags::only("no_detach"));
  const auto grads = toy.grads(g);
  for (int gi = 0; gi < 5; ++gi) {
    INFO(kGroupNames[gi]);
    CHECK(fd_error(toy, gi, group(grads, gi), [&] { return toy.loss(g).total(); }) < 1e-4);
  }
}

TEST_CASE("detached gradients match finite differences of the owning branch") {
  Toy toy(mlp_toy(), 3, 11);
  const ComputationGraph g;
  const auto grads = toy.grads(g);
  // The target branch owns the encoder, projector and psi1; the mask branch owns the table and psi2.
  const bool target_owned[] = {true, true, false, true, false};
  for (int gi = 0; gi < 5; ++gi) {
    INFO(kGroupNames[gi]);
    CHECK(fd_error(toy, gi, group(grads, gi), [&] {
            const auto l = toy.loss(g);
            return target_owned[gi] ? l.target : l.mask;
          }) < 1e-4);
  }
}

TEST_CASE("branch isolation: no gradient crosses a detach") {
  for (auto mc : {mlp_toy(), conv_toy()}) {
    Toy toy(mc, 4, 12);
    const ComputationGraph g;
    const auto target_only = toy.grads(g, BranchSelection::target_only);
    const auto mask_only = toy.grads(g, BranchSelection::mask_only);
    for (double v : target_only.mask_table) REQUIRE(v == 0.0);
    for (double v : mask_only.encoder) REQUIRE(v == 0.0);
    for (double v : mask_only.projector) REQUIRE(v == 0.0);
    // Sanity: the same groups are live in the other branch.
    CHECK(nn::squared_norm(mask_only.mask_table) > 0.0);
    CHECK(nn::squared_norm(target_only.encoder) > 0.0);

    const auto both = toy.grads(g);
    for (int gi = 0; gi < 5; ++gi) {
      const auto& a = group(target_only, gi);
      const auto& b = group(mask_only, gi);
      const auto& c = group(both, gi);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv encoder with batch statistics matches finite differences") {
  Toy toy(conv_toy(), 4, 13);
  const auto g = apply_ablation(AblationFlags::only("no_detach"));
  const auto grads = toy.grads(g);
  for (int gi = 0; gi < 5; ++gi) {
    INFO(kGroupNames[gi]);
    CHECK(fd_error(toy, gi, group(grads, gi), [&] { return toy.loss(g).total(); }) < 1e-4);
  }
}

TEST_CASE("momentum copies start bitwise equal and follow the EMA closed form") {
  const FeiModel model(conv_toy());
  FeiParams p = model.init(3);
  CHECK(p.encoder_momentum == p.encoder);
  CHECK(p.projector_momentum == p.projector);
  CHECK(p.encoder_momentum_stats == p.encoder_stats);

  const double alpha = 0.995;
  const std::vector<double> theta = {1.0, -2.0, 0.5};
  std::vector<double> m = {0.0, 3.0, -1.0};
  const auto m0 = m;
  for (int i = 0; i < 50; ++i) momentum_update(m, theta, alpha);
  const double a50 = std::pow(alpha, 50);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(m[i] - (a50 * m0[i] + (1 - a50) * theta[i])) < 1e-12);
}

TEST_CASE("trainer applies the EMA after the optimizer step") {
  const FeiModel model(mlp_toy());
  TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch = 4;
  FeiTrainer trainer(model, model.init(4), tc);
  const auto before = trainer.params().encoder_momentum;
  const auto batch = random_batch(4, 16, 5);
  trainer.step(batch, 0);
  const auto& p = trainer.params();
  CHECK(p.encoder != before);
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    CHECK(p.encoder_momentum[i] == doctest::Approx(tc.alpha * before[i] + (1 - tc.alpha) * p.encoder[i]).epsilon(1e-14));
  }
}

TEST_CASE("model shape checks") {
  const FeiModel model(conv_toy());
  CHECK(model.subspace_dim() == 4);
  CHECK(model.mask_positions() == 9);
  FeiParams p = model.init(1);
  CHECK_NOTHROW(model.check(p));
  p.mask_table.pop_back();
  CHECK_THROWS_AS(model.check(p), InvalidInputError);
  CHECK_THROWS_AS(model.check(TimeSeries::univariate(std::vector<double>(15, 0.0))), InvalidInputError);

  ModelConfig bad = conv_toy();
  bad.encoder.d = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig flat = conv_toy();
  flat.subspace = false;
  CHECK(FeiModel(flat).subspace_dim() == 8);

  ModelConfig tdm = conv_toy();
  tdm.masking = MaskingStrategy::tdm;
  CHECK(FeiModel(tdm).mask_positions() == 16);
}

TEST_CASE("inference embedding is deterministic and sized") {
  const FeiModel model(conv_toy());
  const FeiParams p = model.init(2);
  const auto x = random_batch(1, 16, 3)[0];
  const auto a = model.embed_online(p, x);
  const auto b = model.embed_online(p, x);
  CHECK(a.e.size() == 8);
  CHECK(a.u.size() == 4);
  CHECK(a.u == b.u);
}
