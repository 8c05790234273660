#include "fei/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "fei/errors.hpp"

namespace fei {

namespace {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// "lr" is a word of "lr_rate".
bool is_word_prefix(std::string_view word, std::string_view key) {
  return key.size() > word.size() && key.starts_with(word) && key[word.size()] == '_';
}

}  // namespace

std::optional<std::string> suggest_key(std::string_view key, std::span<const std::string_view> candidates) {
  for (auto c : candidates) {
    if (is_word_prefix(c, key) || is_word_prefix(key, c)) return std::string(c);
  }
  std::optional<std::string> best;
  std::size_t best_d = std::max<std::size_t>(2, key.size() / 3) + 1;
  for (auto c : candidates) {
    const std::size_t d = edit_distance(key, c);
    if (d < best_d) {
      best_d = d;
      best = std::string(c);
    }
  }
  return best;
}

namespace {

using Setter = std::function<void(const YAML::Node&)>;
using Fields = std::vector<std::pair<std::string_view, Setter>>;

[[noreturn]] void unknown_key(const std::string& where, const std::string& key,
                              std::span<const std::string_view> known) {
  std::string msg = "unknown config key '" + where + key + "'";
  if (auto s = suggest_key(key, known)) msg += " (did you mean '" + *s + "'?)";
  throw ConfigError(msg);
}

void read_fields(const YAML::Node& node, const std::string& section, const Fields& fields) {
  if (!node || node.IsNull()) return;
  const std::string where = section.empty() ? "" : section + ".";
  if (!node.IsMap()) throw ConfigError("config section '" + section + "' must be a mapping");
  std::vector<std::string_view> known;
  for (const auto& f : fields) known.push_back(f.first);
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) unknown_key(where, key, known);
    try {
      it->second(kv.second);
    } catch (const YAML::Exception& e) {
      throw ConfigError("config key '" + where + key + "': " + e.msg);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + where + key + "': " + e.what());
    }
  }
}

double as_double(const YAML::Node& n) { return n.as<double>(); }

std::size_t as_size(const YAML::Node& n) {
  const long long v = n.as<long long>();
  if (v < 0) throw ConfigError("expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t as_u64(const YAML::Node& n) { return n.as<std::uint64_t>(); }

std::vector<std::size_t> as_sizes(const YAML::Node& n) {
  if (!n.IsSequence()) throw ConfigError("expected a list of integers");
  std::vector<std::size_t> out;
  for (const auto& v : n) out.push_back(as_size(v));
  return out;
}

template <class T>
Setter set(T& target, T (*convert)(const YAML::Node&)) {
  return [&target, convert](const YAML::Node& n) { target = convert(n); };
}

Setter set_bool(bool& target) {
  return [&target](const YAML::Node& n) { target = n.as<bool>(); };
}

Setter set_string(std::function<void(const std::string&)> f) {
  return [f = std::move(f)](const YAML::Node& n) { f(n.as<std::string>()); };
}

TaskKind parse_task(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw ConfigError("unknown task '" + s + "' (expected classification or regression)");
}

std::string_view task_name(TaskKind k) { return k == TaskKind::regression ? "regression" : "classification"; }

AblationFlags parse_ablation(const YAML::Node& n) {
  AblationFlags flags;
  auto enable = [&](const std::string& name) {
    if (std::find(AblationFlags::names.begin(), AblationFlags::names.end(), name) == AblationFlags::names.end()) {
      std::string msg = "unknown ablation flag '" + name + "'";
      if (auto s = suggest_key(name, AblationFlags::names)) msg += " (did you mean '" + *s + "'?)";
      throw ConfigError(msg);
    }
    flags.flag(name) = true;
  };
  if (n.IsScalar()) {
    const auto s = n.as<std::string>();
    if (s != "none" && !s.empty()) enable(s);
  } else if (n.IsSequence()) {
    for (const auto& v : n) enable(v.as<std::string>());
  } else if (!n.IsNull()) {
    throw ConfigError("ablation must be a flag name or a list of flag names");
  }
  return flags;
}

void read_model(const YAML::Node& node, ModelConfig& m) {
  EncoderConfig& e = m.encoder;
  read_fields(node, "model",
              {{"architecture", set_string([&](const std::string& s) { e.architecture = parse_architecture(s); })},
               {"d", set(e.d, as_size)},
               {"widths", set(e.widths, as_sizes)},
               {"kernels", set(e.kernels, as_sizes)},
               {"strides", set(e.strides, as_sizes)},
               {"mlp_hidden", set(e.mlp_hidden, as_size)},
               {"activation", set_string([&](const std::string& s) { e.activation = nn::parse_activation(s); })},
               {"batch_norm", set_bool(e.batch_norm)},
               {"predictor_hidden", set(m.predictor_hidden, as_size)},
               {"predictor_activation",
                set_string([&](const std::string& s) { m.predictor_activation = nn::parse_activation(s); })},
               {"predictor_init",
                set_string([&](const std::string& s) { m.predictor_init = parse_predictor_init(s); })}});
}

void read_train(const YAML::Node& node, TrainConfig& t) {
  read_fields(node, "train",
              {{"alpha", set(t.alpha, as_double)},
               {"beta1", set(t.beta1, as_double)},
               {"beta2", set(t.beta2, as_double)},
               {"lr", set(t.lr, as_double)},
               {"batch", set(t.batch, as_size)},
               {"max_epochs", set(t.max_epochs, as_size)},
               {"patience", set(t.patience, as_size)},
               {"lr_decay", set(t.lr_decay, as_double)},
               {"betas",
                [&](const YAML::Node& n) {
                  if (!n.IsSequence() || n.size() != 2) throw ConfigError("betas must be a list of two numbers");
                  t.betas = {n[0].as<double>(), n[1].as<double>()};
                }},
               {"weight_decay", set(t.weight_decay, as_double)},
               {"grad_clip", set(t.grad_clip, as_double)},
               {"seed", set(t.seed, as_u64)},
               {"validation_seed", set(t.validation_seed, as_u64)},
               {"masking_strategy",
                set_string([&](const std::string& s) { t.masking_strategy = parse_masking_strategy(s); })},
               {"ablation", [&](const YAML::Node& n) { t.ablation = parse_ablation(n); }}});
}

void read_eval(const YAML::Node& node, EvalConfig& e) {
  // The mode picks the protocol defaults that the other keys then override.
  if (node && node.IsMap() && node["mode"]) {
    try {
      e = EvalConfig::defaults_for(parse_eval_mode(node["mode"].as<std::string>()));
    } catch (const YAML::Exception& ex) {
      throw ConfigError("config key 'eval.mode': " + ex.msg);
    }
  }
  read_fields(node, "eval",
              {{"mode", [](const YAML::Node&) {}},
               {"max_iters", set(e.max_iters, as_size)},
               {"lr", set(e.lr, as_double)},
               {"batch", set(e.batch, as_size)},
               {"seed", set(e.seed, as_u64)},
               {"early_stop_on_val", set_bool(e.early_stop_on_val)},
               {"patience", set(e.patience, as_size)},
               {"iter_unit", set_string([&](const std::string& s) { e.iter_unit = parse_iteration_unit(s); })},
               {"eval_every", set(e.eval_every, as_size)},
               {"weight_decay", set(e.weight_decay, as_double)}});
}

void read_synth(const YAML::Node& node, SyntheticSpec& s) {
  read_fields(node, "synth",
              {{"num_classes", set(s.num_classes, as_size)},
               {"per_class", set(s.per_class, as_size)},
               {"length", set(s.length, as_size)},
               {"noise_std", set(s.noise_std, as_double)},
               {"seed", set(s.seed, as_u64)},
               {"min_bin", set(s.min_bin, as_size)},
               {"max_bin", set(s.max_bin, as_size)},
               {"shift_bins", set(s.shift_bins, as_size)}});
}

void read_data(const YAML::Node& node, DataConfig& d) {
  read_fields(node, "data",
              {{"path", set_string([&](const std::string& s) { d.path = s; })},
               {"task", set_string([&](const std::string& s) { d.task = parse_task(s); })},
               {"normalize", set_bool(d.normalize)},
               {"split", [&](const YAML::Node& n) {
                  read_fields(n, "data.split",
                              {{"train", set(d.split.train, as_double)},
                               {"val", set(d.split.val, as_double)},
                               {"test", set(d.split.test, as_double)},
                               {"seed", set(d.split.seed, as_u64)},
                               {"stratify", set_bool(d.split.stratify)}});
                }}});
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  eval.validate();
  if (model.masking != train.masking_strategy) {
    throw ConfigError("model masking does not match train.masking_strategy");
  }
  if (model.subspace == train.ablation.no_subspace) {
    throw ConfigError("model subspace setting does not match the no_subspace ablation flag");
  }
  const auto& s = data.split;
  if (s.train < 0 || s.val < 0 || s.test < 0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    throw ConfigError("data.split fractions must be non-negative and sum to 1");
  }
  if (s.train <= 0.0) throw ConfigError("data.split.train must be positive");
}

RunConfig parse_run_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config is not valid YAML: " + e.msg);
  }
  RunConfig cfg;
  if (!root || root.IsNull()) {
    cfg.model.masking = cfg.train.masking_strategy;
    return cfg;
  }
  read_fields(root, "",
              {{"data", [&](const YAML::Node& n) { read_data(n, cfg.data); }},
               {"model", [&](const YAML::Node& n) { read_model(n, cfg.model); }},
               {"train", [&](const YAML::Node& n) { read_train(n, cfg.train); }},
               {"eval", [&](const YAML::Node& n) { read_eval(n, cfg.eval); }},
               {"synth", [&](const YAML::Node& n) { read_synth(n, cfg.synth); }},
               {"output", [&](const YAML::Node& n) {
                  read_fields(n, "output", {{"dir", set_string([&](const std::string& s) { cfg.output_dir = s; })}});
                }}});
  cfg.model.masking = cfg.train.masking_strategy;
  cfg.model = apply_ablation(cfg.model, cfg.train.ablation);
  cfg.model.encoder.input_length = cfg.synth.length;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_run_config(ss.str());
  if (!cfg.data.path.empty() && cfg.data.path.is_relative()) {
    cfg.data.path = path.parent_path() / cfg.data.path;
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON forms

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"architecture", to_string(c.architecture)},
          {"input_channels", c.input_channels},
          {"input_length", c.input_length},
          {"d", c.d},
          {"widths", c.widths},
          {"kernels", c.kernels},
          {"strides", c.strides},
          {"mlp_hidden", c.mlp_hidden},
          {"activation", nn::to_string(c.activation)},
          {"batch_norm", c.batch_norm}};
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"subspace", c.subspace},
          {"masking", to_string(c.masking)},
          {"predictor_hidden", c.predictor_hidden},
          {"predictor_activation", nn::to_string(c.predictor_activation)},
          {"predictor_init", to_string(c.predictor_init)}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"lr", c.lr},
          {"batch", c.batch},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"lr_decay", c.lr_decay},
          {"betas", c.betas},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"validation_seed", c.validation_seed},
          {"masking_strategy", to_string(c.masking_strategy)},
          {"ablation", c.ablation.enabled()}};
}

nlohmann::json to_json(const EvalConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"max_iters", c.max_iters},
          {"lr", c.lr},
          {"batch", c.batch},
          {"seed", c.seed},
          {"early_stop_on_val", c.early_stop_on_val},
          {"patience", c.patience},
          {"iter_unit", to_string(c.iter_unit)},
          {"eval_every", c.eval_every},
          {"weight_decay", c.weight_decay}};
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"num_classes", s.num_classes}, {"per_class", s.per_class}, {"length", s.length},
          {"noise_std", s.noise_std},     {"seed", s.seed},           {"min_bin", s.min_bin},
          {"max_bin", s.max_bin},         {"shift_bins", s.shift_bins}};
}

nlohmann::json to_json(const DataConfig& d) {
  return {{"path", d.path.string()},
          {"task", task_name(d.task)},
          {"normalize", d.normalize},
          {"split",
           {{"train", d.split.train},
            {"val", d.split.val},
            {"test", d.split.test},
            {"seed", d.split.seed},
            {"stratify", d.split.stratify}}}};
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"data", to_json(c.data)},   {"model", to_json(c.model)}, {"train", to_json(c.train)},
          {"eval", to_json(c.eval)},   {"synth", to_json(c.synth)}, {"output", {{"dir", c.output_dir.string()}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  const auto& e = j.at("encoder");
  m.encoder.architecture = parse_architecture(e.at("architecture").get<std::string>());
  m.encoder.input_channels = e.at("input_channels").get<std::size_t>();
  m.encoder.input_length = e.at("input_length").get<std::size_t>();
  m.encoder.d = e.at("d").get<std::size_t>();
  m.encoder.widths = e.at("widths").get<std::vector<std::size_t>>();
  m.encoder.kernels = e.at("kernels").get<std::vector<std::size_t>>();
  m.encoder.strides = e.at("strides").get<std::vector<std::size_t>>();
  m.encoder.mlp_hidden = e.at("mlp_hidden").get<std::size_t>();
  m.encoder.activation = nn::parse_activation(e.at("activation").get<std::string>());
  m.encoder.batch_norm = e.at("batch_norm").get<bool>();
  m.subspace = j.at("subspace").get<bool>();
  m.masking = parse_masking_strategy(j.at("masking").get<std::string>());
  m.predictor_hidden = j.at("predictor_hidden").get<std::size_t>();
  m.predictor_activation = nn::parse_activation(j.at("predictor_activation").get<std::string>());
  m.predictor_init = parse_predictor_init(j.at("predictor_init").get<std::string>());
  return m;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.alpha = j.at("alpha").get<double>();
  t.beta1 = j.at("beta1").get<double>();
  t.beta2 = j.at("beta2").get<double>();
  t.lr = j.at("lr").get<double>();
  t.batch = j.at("batch").get<std::size_t>();
  t.max_epochs = j.at("max_epochs").get<std::size_t>();
  t.patience = j.at("patience").get<std::size_t>();
  t.lr_decay = j.at("lr_decay").get<double>();
  t.betas = j.at("betas").get<std::array<double, 2>>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.grad_clip = j.at("grad_clip").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.validation_seed = j.at("validation_seed").get<std::uint64_t>();
  t.masking_strategy = parse_masking_strategy(j.at("masking_strategy").get<std::string>());
  for (const auto& name : j.at("ablation")) t.ablation.flag(name.get<std::string>()) = true;
  return t;
}

Dataset load_configured_dataset(const RunConfig& cfg) {
  Dataset ds;
  if (cfg.data.path.empty()) {
    ds = make_synthetic_freq_dataset(cfg.synth);
  } else {
    UcrLoadOptions opts;
    opts.task = cfg.data.task;
    ds = load_ucr_tsv(cfg.data.path, opts);
  }
  if (cfg.data.normalize) ds = normalize_per_sample(std::move(ds));
  ds.validate();
  return ds;
}

}  // namespace fei
