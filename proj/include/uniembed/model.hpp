#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "uniembed/rng.hpp"
#include "uniembed/types.hpp"

namespace uniembed {

struct ModelConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden;  // ReLU layers; empty = single linear layer
  std::size_t output_dim = 16;
};

/// Affine map y = x W + b with W stored input-major (in x out).
struct DenseLayer {
  Matrix weight;
  RowVector bias;
};

/// Feed-forward embedding network: affine layers with ReLU between them and
/// a final per-row unit normalization.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  explicit EmbeddingModel(std::vector<DenseLayer> layers);

  /// Gaussian weights with std 1/sqrt(fan_in), zero biases.
  static EmbeddingModel random(const ModelConfig& config, Rng& rng);

  /// Single square layer with W = I and b = 0.
  static EmbeddingModel identity(std::size_t dim);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  /// Unit-norm embeddings of the rows of `x`.
  Matrix embed(const Matrix& x) const;

  bool operator==(const EmbeddingModel& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Everything backward() needs from a forward pass.
struct ForwardPass {
  Matrix embeddings;                   // n x d_out, unit rows
  std::vector<Matrix> layer_inputs;    // input to each affine layer
  std::vector<Matrix> pre_activations; // output of each affine layer
  Vector norms;                        // row norms before normalization
};

ForwardPass forward(const EmbeddingModel& model, const Matrix& x);

struct ParamGrads {
  std::vector<Matrix> weight;
  std::vector<RowVector> bias;

  double max_abs() const;
};

/// Exact gradients of a scalar loss with respect to the parameters, given
/// dloss/dembeddings. The normalization step uses (I - s s^T) / |z| per row.
ParamGrads backward(const EmbeddingModel& model, const ForwardPass& pass, const Matrix& grad_embeddings);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are laid out like the model's layers.
class AdamOptimizer {
 public:
  AdamOptimizer(const EmbeddingModel& model, AdamConfig config);

  /// Throws NumericError (naming the offending layer) if any gradient is
  /// non-finite; the model is left untouched in that case.
  void step(EmbeddingModel& model, const ParamGrads& grads);

  std::int64_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  ParamGrads first_;
  ParamGrads second_;
};

nlohmann::json model_to_json(const EmbeddingModel& model);
EmbeddingModel model_from_json(const nlohmann::json& j);

/// Checkpoint file: model JSON plus an optional "meta" object.
void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
EmbeddingModel load_checkpoint(const std::filesystem::path& path);

}  // namespace uniembed
