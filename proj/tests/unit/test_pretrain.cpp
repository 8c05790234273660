#include <doctest.h>

#include <cmath>
#include <limits>

#include "fei/data.hpp"
#include "fei/errors.hpp"
#include "fei/pretrain.hpp"

using namespace fei;

namespace {

ModelConfig small_mlp() {
  ModelConfig mc;
  mc.encoder.architecture = EncoderArchitecture::mlp;
  mc.encoder.input_length = 32;
  mc.encoder.d = 8;
  mc.encoder.mlp_hidden = 16;
  return mc;
}

Dataset small_data(std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 2;
  s.per_class = 24;
  s.length = 32;
  s.seed = seed;
  return normalize_per_sample(make_synthetic_freq_dataset(s));
}

TrainConfig quick(std::uint64_t seed) {
  TrainConfig tc;
  tc.batch = 16;
  tc.lr = 1e-3;
  tc.max_epochs = 3;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_CASE("defaults follow the published hyperparameters") {
  const TrainConfig tc;
  CHECK(tc.alpha == 0.995);
  CHECK(tc.beta1 == 0.0);
  CHECK(tc.beta2 == 0.7);
  CHECK(tc.lr == 2e-4);
  CHECK(tc.batch == 512);
  CHECK(tc.max_epochs == 100);
}

TEST_CASE("learning rate decays geometrically per epoch") {
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.lr_decay = 0.5;
  CHECK(tc.lr_at_epoch(0) == 1e-3);
  CHECK(tc.lr_at_epoch(3) == doctest::Approx(1.25e-4));
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.alpha = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.beta1 = 0.8;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.batch = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  CHECK_THROWS_AS(tc.ablation.flag("no_such_flag"), ConfigError);
}

TEST_CASE("ablation flags map onto the computation graph") {
  CHECK_FALSE(apply_ablation(AblationFlags::only("no_emb_infer")).target_branch);
  CHECK_FALSE(apply_ablation(AblationFlags::only("no_mask_infer")).mask_branch);
  CHECK_FALSE(apply_ablation(AblationFlags::only("no_mask_prompt")).mask_prompt);
  CHECK_FALSE(apply_ablation(AblationFlags::only("no_momentum")).momentum_target);
  CHECK_FALSE(apply_ablation(AblationFlags::only("no_subspace")).subspace);
  const auto nd = apply_ablation(AblationFlags::only("no_detach"));
  CHECK_FALSE(nd.detach_prompt);
  CHECK_FALSE(nd.detach_anchor);
  CHECK_FALSE(apply_ablation(ModelConfig{}, AblationFlags::only("no_subspace")).subspace);
  CHECK(ComputationGraph{}.describe().find("D(u)") != std::string::npos);
}

TEST_CASE("early stopping counts epochs without strict improvement") {
  EarlyStopping es(2);
  CHECK(es.update(1.0));
  CHECK_FALSE(es.update(1.0));
  CHECK_FALSE(es.should_stop());
  CHECK(es.update(0.5));
  CHECK_FALSE(es.update(0.7));
  CHECK_FALSE(es.update(0.6));
  CHECK(es.should_stop());
  CHECK(*es.best() == 0.5);
  EarlyStopping off(0);
  for (int i = 0; i < 10; ++i) off.update(1.0);
  CHECK_FALSE(off.should_stop());
}

TEST_CASE("masked batches are reproducible from their seed coordinates") {
  const auto ds = small_data(1);
  std::span<const TimeSeries> batch(ds.samples.data(), 8);
  const auto a = make_masked_batch(batch, MaskingStrategy::dfm, {0.0, 0.7}, 3, 1, 5);
  const auto b = make_masked_batch(batch, MaskingStrategy::dfm, {0.0, 0.7}, 3, 1, 5);
  const auto c = make_masked_batch(batch, MaskingStrategy::dfm, {0.0, 0.7}, 3, 1, 6);
  CHECK(a.masks == b.masks);
  CHECK(a.masks != c.masks);
  CHECK(a.targets.size() == 8);
}

TEST_CASE("same seed gives bitwise-identical loss logs") {
  const auto ds = small_data(2);
  const auto parts = split(ds, {0.6, 0.2, 0.2, 1, true});
  const FeiModel model(small_mlp());
  auto run = [&](std::uint64_t seed) {
    return pretrain(model, model.init(seed), parts.train, &parts.val, quick(seed));
  };
  const auto a = run(4), b = run(4), c = run(5);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].loss_total == b.steps[i].loss_total);
    CHECK(a.steps[i].loss_target_branch == b.steps[i].loss_target_branch);
  }
  CHECK(a.best == b.best);
  CHECK(a.steps[0].loss_total != c.steps[0].loss_total);
}

TEST_CASE("pretraining tracks the best validation epoch") {
  const auto ds = small_data(3);
  const auto parts = split(ds, {0.6, 0.2, 0.2, 1, true});
  const FeiModel model(small_mlp());
  TrainConfig tc = quick(1);
  tc.max_epochs = 4;
  std::vector<double> val = {3.0, 1.0, 2.0, 2.5};
  PretrainHooks hooks;
  hooks.validation_loss = [&](std::size_t epoch, const FeiParams&) { return val[epoch]; };
  tc.patience = 2;
  const auto r = pretrain(model, model.init(1), parts.train, nullptr, tc, hooks);
  CHECK(r.best_epoch == 1);
  CHECK(r.epochs.size() == 4);
  CHECK_FALSE(r.stopped_early);

  val = {3.0, 1.0, 2.0, 2.5, 0.1, 0.1};
  tc.max_epochs = 6;
  tc.patience = 1;
  const auto s = pretrain(model, model.init(1), parts.train, nullptr, tc, hooks);
  CHECK(s.epochs.size() == 3);
  CHECK(s.stopped_early);
  CHECK(s.epochs[2].lr == doctest::Approx(tc.lr * tc.lr_decay * tc.lr_decay));
}

TEST_CASE("every ablation trains with finite losses") {
  const auto ds = small_data(4);
  for (auto name : AblationFlags::names) {
    INFO(name);
    TrainConfig tc = quick(2);
    tc.max_epochs = 1;
    tc.ablation = AblationFlags::only(name);
    const FeiModel model(apply_ablation(small_mlp(), tc.ablation));
    const auto r = pretrain(model, model.init(2), ds, nullptr, tc);
    for (const auto& s : r.steps) CHECK(std::isfinite(s.loss_total));
  }
}

TEST_CASE("non-finite parameters raise a numerical error") {
  const auto ds = small_data(5);
  const FeiModel model(small_mlp());
  FeiParams p = model.init(1);
  p.encoder[0] = std::numeric_limits<double>::quiet_NaN();
  FeiTrainer trainer(model, p, quick(1));
  std::span<const TimeSeries> batch(ds.samples.data(), 8);
  CHECK_THROWS_AS(trainer.step(batch, 0), NumericalError);
}

TEST_CASE("trainer refuses a model built for another strategy") {
  const FeiModel model(small_mlp());
  TrainConfig tc = quick(1);
  tc.masking_strategy = MaskingStrategy::tdm;
  CHECK_THROWS_AS(FeiTrainer(model, model.init(1), tc), ConfigError);
}
