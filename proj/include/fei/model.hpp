#pragma once

// Encoder, subspace projector, predictors and their momentum copies.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fei/maskenc.hpp"
#include "fei/nn.hpp"
#include "fei/signal.hpp"

namespace fei {

enum class EncoderArchitecture { conv_resnet_1d, mlp };

EncoderArchitecture parse_architecture(std::string_view name);
std::string_view to_string(EncoderArchitecture a);

struct EncoderConfig {
  EncoderArchitecture architecture = EncoderArchitecture::conv_resnet_1d;
  std::size_t input_channels = 1;
  std::size_t input_length = 128;
  /// Embedding dimension; must be even.
  std::size_t d = 64;
  /// Residual stage widths before the final stage, whose width is d.
  std::vector<std::size_t> widths = {16, 32};
  /// Kernel size and stride per stage (widths.size() + 1 entries).
  std::vector<std::size_t> kernels = {7, 5, 3};
  std::vector<std::size_t> strides = {1, 2, 2};
  /// Hidden width of the mlp architecture.
  std::size_t mlp_hidden = 128;
  nn::Activation activation = nn::Activation::gelu;
  /// Batch normalization after each convolution of the conv encoder.
  bool batch_norm = true;

  void validate() const;
};

/// Activations recorded by a training-mode batch pass.
struct EncoderTape {
  std::vector<nn::Batch> slots;
  std::vector<std::vector<double>> inv_std;  // per normalization layer
  std::vector<nn::Tape> samples;             // per-sample tapes (mlp)
};

/// Maps a C x L series to an embedding of length d.
///
/// Normalization layers use batch statistics in forward_batch and the running
/// statistics vector in forward. The running statistics are not trained; they
/// are blended from batch statistics during training.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual const EncoderConfig& config() const = 0;
  virtual std::size_t num_params() const = 0;
  virtual std::size_t num_stats() const = 0;
  virtual void init(std::span<double> params, Rng& rng) const = 0;
  virtual void init_stats(std::span<double> stats) const = 0;
  /// Inference on one channel-major C x L input.
  virtual void forward(std::span<const double> params, std::span<const double> stats,
                       std::span<const double> input, std::span<double> embedding) const = 0;
  /// Training-mode pass. Updates `stats_update` when non-empty; records on `tape` when given.
  virtual void forward_batch(std::span<const double> params, const nn::Batch& inputs, nn::Batch& embeddings,
                             std::span<double> stats_update, EncoderTape* tape) const = 0;
  /// Accumulates dL/dparams for the pass recorded on `tape`.
  virtual void backward_batch(std::span<const double> params, const EncoderTape& tape,
                              const nn::Batch& d_embeddings, std::span<double> grad) const = 0;

  std::size_t embedding_dim() const { return config().d; }
};

/// Residual 1-D CNN: one residual block per stage, global average pooling.
/// Block: conv -> bn -> act -> conv -> bn, plus shortcut (1x1 conv -> bn when
/// the shape changes), then act.
class ConvResNetEncoder final : public Encoder {
 public:
  explicit ConvResNetEncoder(EncoderConfig cfg);

  const EncoderConfig& config() const override { return cfg_; }
  std::size_t num_params() const override { return num_params_; }
  std::size_t num_stats() const override { return num_stats_; }
  void init(std::span<double> params, Rng& rng) const override;
  void init_stats(std::span<double> stats) const override;
  void forward(std::span<const double> params, std::span<const double> stats, std::span<const double> input,
               std::span<double> embedding) const override;
  void forward_batch(std::span<const double> params, const nn::Batch& inputs, nn::Batch& embeddings,
                     std::span<double> stats_update, EncoderTape* tape) const override;
  void backward_batch(std::span<const double> params, const EncoderTape& tape, const nn::Batch& d_embeddings,
                      std::span<double> grad) const override;

 private:
  struct Block {
    nn::Conv1d conv1;
    std::optional<nn::BatchNorm1d> norm1;
    nn::Conv1d conv2;
    std::optional<nn::BatchNorm1d> norm2;
    std::optional<nn::Conv1d> shortcut;  // 1x1 projection when shape changes
    std::optional<nn::BatchNorm1d> shortcut_norm;
  };

  EncoderConfig cfg_;
  std::vector<Block> blocks_;
  std::size_t num_params_ = 0;
  std::size_t num_stats_ = 0;
};

/// Flattened input -> dense -> activation -> dense.
class MlpEncoder final : public Encoder {
 public:
  explicit MlpEncoder(EncoderConfig cfg);

  const EncoderConfig& config() const override { return cfg_; }
  std::size_t num_params() const override { return net_.num_params(); }
  std::size_t num_stats() const override { return 0; }
  void init(std::span<double> params, Rng& rng) const override;
  void init_stats(std::span<double>) const override {}
  void forward(std::span<const double> params, std::span<const double> stats, std::span<const double> input,
               std::span<double> embedding) const override;
  void forward_batch(std::span<const double> params, const nn::Batch& inputs, nn::Batch& embeddings,
                     std::span<double> stats_update, EncoderTape* tape) const override;
  void backward_batch(std::span<const double> params, const EncoderTape& tape, const nn::Batch& d_embeddings,
                      std::span<double> grad) const override;

 private:
  EncoderConfig cfg_;
  nn::Mlp net_;
};

std::shared_ptr<const Encoder> make_encoder(const EncoderConfig& cfg);

enum class PredictorInit { random, identity };

PredictorInit parse_predictor_init(std::string_view name);
std::string_view to_string(PredictorInit p);

struct ModelConfig {
  EncoderConfig encoder;
  /// false drops the projector: u = e and h = d.
  bool subspace = true;
  MaskingStrategy masking = MaskingStrategy::dfm;
  /// Predictor hidden width; 0 means the subspace width h.
  std::size_t predictor_hidden = 0;
  nn::Activation predictor_activation = nn::Activation::softplus;
  PredictorInit predictor_init = PredictorInit::random;

  void validate() const;
};

/// All learnable state. Momentum copies are updated only by EMA.
struct FeiParams {
  std::vector<double> encoder;                 // theta
  std::vector<double> projector;               // phi
  std::vector<double> encoder_momentum;        // theta'
  std::vector<double> projector_momentum;      // phi'
  std::vector<double> mask_table;              // upsilon, rows x h
  std::vector<double> predictor_target;        // psi1
  std::vector<double> predictor_mask;          // psi2
  std::vector<double> encoder_stats;           // running statistics of theta
  std::vector<double> encoder_momentum_stats;  // running statistics of theta'

  static constexpr std::array<std::string_view, 9> blob_names = {
      "encoder",          "projector",      "encoder_momentum", "projector_momentum",    "mask_table",
      "predictor_target", "predictor_mask", "encoder_stats",    "encoder_momentum_stats"};

  std::vector<double>& blob(std::string_view name);
  const std::vector<double>& blob(std::string_view name) const;

  bool operator==(const FeiParams&) const = default;
};

/// Gradients of the trainable parameter groups.
struct FeiGradients {
  std::vector<double> encoder;
  std::vector<double> projector;
  std::vector<double> mask_table;
  std::vector<double> predictor_target;
  std::vector<double> predictor_mask;

  void zero();
  void add(const FeiGradients& other);
  double squared_norm() const;
  void scale(double factor);
};

/// Online (u) and optionally encoder-level (e) embeddings of one series.
struct Embedding {
  std::vector<double> e;
  std::vector<double> u;
};

class FeiModel {
 public:
  explicit FeiModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return *encoder_; }
  std::size_t series_length() const { return cfg_.encoder.input_length; }
  std::size_t series_channels() const { return cfg_.encoder.input_channels; }
  std::size_t embedding_dim() const { return cfg_.encoder.d; }
  std::size_t subspace_dim() const { return subspace_dim_; }
  std::size_t mask_positions() const { return mask_encoder_.rows(); }

  const std::optional<nn::Dense>& projector() const { return projector_; }
  const nn::Mlp& target_predictor() const { return target_predictor_; }
  const nn::Mlp& mask_predictor() const { return mask_predictor_; }
  const MaskEncoder& mask_encoder() const { return mask_encoder_; }

  /// Fresh parameters; momentum copies equal the online weights exactly.
  FeiParams init(std::uint64_t seed) const;
  FeiGradients zero_gradients() const;
  /// Throws InvalidInputError when any blob has the wrong size.
  void check(const FeiParams& params) const;
  /// Throws InvalidInputError when the series shape does not match the encoder.
  void check(const TimeSeries& series) const;

  /// u = s(e); copies e when the subspace projector is disabled.
  void project(std::span<const double> projector_params, std::span<const double> e, std::span<double> u) const;

  /// f followed by s with the given weights, in inference mode.
  Embedding embed(std::span<const double> encoder_params, std::span<const double> encoder_stats,
                  std::span<const double> projector_params, const TimeSeries& series) const;
  Embedding embed_online(const FeiParams& p, const TimeSeries& series) const {
    return embed(p.encoder, p.encoder_stats, p.projector, series);
  }
  Embedding embed_momentum(const FeiParams& p, const TimeSeries& series) const {
    return embed(p.encoder_momentum, p.encoder_momentum_stats, p.projector_momentum, series);
  }

 private:
  ModelConfig cfg_;
  std::shared_ptr<const Encoder> encoder_;
  std::size_t subspace_dim_ = 0;
  std::optional<nn::Dense> projector_;
  nn::Mlp target_predictor_;
  nn::Mlp mask_predictor_;
  MaskEncoder mask_encoder_;
};

/// momentum <- alpha * momentum + (1 - alpha) * online, elementwise.
void momentum_update(std::span<double> momentum, std::span<const double> online, double alpha);
/// Applies the EMA to the encoder and projector copies and to the running statistics.
void momentum_update(FeiParams& params, double alpha);

}  // namespace fei
