#include "fei/experiment.hpp"

#include <cmath>
#include <iomanip>

#include "fei/errors.hpp"

namespace fei {

ModelConfig fit_model_to_data(ModelConfig model, const Dataset& ds) {
  if (ds.empty()) throw InvalidInputError("dataset '" + ds.name + "' is empty");
  model.encoder.input_length = ds.length();
  model.encoder.input_channels = ds.channels();
  return model;
}

TrainedModel pretrain_configured(const RunConfig& cfg, const DatasetSplit& split, const PretrainHooks& hooks) {
  TrainedModel out;
  out.train_config = cfg.train;
  ModelConfig mc = fit_model_to_data(cfg.model, split.train);
  mc.masking = cfg.train.masking_strategy;
  out.model_config = apply_ablation(mc, cfg.train.ablation);
  const FeiModel model(out.model_config);
  out.result = pretrain(model, model.init(cfg.train.seed), split.train, &split.val, cfg.train, hooks);
  return out;
}

namespace {

double headline(const MetricsReport& m) { return m.task == TaskKind::classification ? m.accuracy : m.mse; }

MetricsReport evaluate_trained(const TrainedModel& t, const DatasetSplit& split, const EvalConfig& ec) {
  const FeiModel model(t.model_config);
  return linear_eval(model, t.result.best, split.train, split.val, split.test, ec);
}

}  // namespace

std::vector<AblationRow> run_ablation_study(const RunConfig& cfg, const DatasetSplit& split,
                                            const std::function<void(const AblationRow&)>& on_row) {
  std::vector<std::string> names = {"FEI"};
  for (auto n : AblationFlags::names) names.emplace_back(n);

  std::vector<AblationRow> rows;
  std::optional<double> reference;
  for (const auto& name : names) {
    AblationRow row;
    row.model = name;
    try {
      RunConfig run = cfg;
      run.train.ablation = name == "FEI" ? AblationFlags{} : AblationFlags::only(name);
      row.metrics = evaluate_trained(pretrain_configured(run, split), split, cfg.eval);
      if (name == "FEI") reference = headline(*row.metrics);
      if (reference) row.delta = headline(*row.metrics) - *reference;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(row);
    if (on_row) on_row(rows.back());
  }
  return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, TaskKind task, std::ostream& out) {
  const bool cls = task == TaskKind::classification;
  out << (cls ? "model,accuracy,precision,recall,f1,delta,status\n" : "model,mse,mae,delta,status\n");
  out << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.model;
    if (r.metrics) {
      const auto& m = *r.metrics;
      if (cls) {
        out << ',' << m.accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1;
      } else {
        out << ',' << m.mse << ',' << m.mae;
      }
    } else {
      out << (cls ? ",,,," : ",,");
    }
    out << ',';
    if (r.delta) out << *r.delta;
    out << ',';
    if (r.error.empty()) {
      out << "ok";
    } else {
      // Keep the table one row per model: no commas or newlines in the message.
      std::string msg = r.error;
      for (char& c : msg) {
        if (c == ',' || c == '\n') c = ' ';
      }
      out << "failed: " << msg;
    }
    out << '\n';
  }
}

std::vector<StrategyRow> run_strategy_study(const RunConfig& cfg, const DatasetSplit& split,
                                            const DatasetSplit& shifted,
                                            const std::function<void(const StrategyRow&)>& on_row) {
  if (split.train.task.kind != TaskKind::classification) {
    throw ConfigError("the masking-strategy study needs a classification dataset");
  }
  std::vector<StrategyRow> rows;
  for (auto s : {MaskingStrategy::dfm, MaskingStrategy::cfm, MaskingStrategy::tdm}) {
    StrategyRow row;
    row.strategy = s;
    try {
      RunConfig run = cfg;
      run.train.masking_strategy = s;
      const TrainedModel t = pretrain_configured(run, split);
      row.accuracy = evaluate_trained(t, split, cfg.eval).accuracy;
      row.shifted_accuracy = evaluate_trained(t, shifted, cfg.eval).accuracy;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(row);
    if (on_row) on_row(rows.back());
  }
  return rows;
}

void write_strategy_table(const std::vector<StrategyRow>& rows, std::ostream& out) {
  out << "strategy,accuracy,shifted_accuracy,drop,status\n" << std::setprecision(6);
  for (const auto& r : rows) {
    out << to_string(r.strategy) << ',';
    if (r.error.empty()) {
      out << r.accuracy << ',' << r.shifted_accuracy << ',' << r.drop() << ",ok\n";
    } else {
      out << ",,,failed\n";
    }
  }
}

}  // namespace fei
