#include "uniembed/model.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "uniembed/errors.hpp"
#include "uniembed/geometry.hpp"

namespace uniembed {

using nlohmann::json;

EmbeddingModel::EmbeddingModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InputError("EmbeddingModel: need at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.cols()) {
      throw InputError("EmbeddingModel: layer " + std::to_string(l) + " bias size mismatch");
    }
    if (l > 0 && layers_[l - 1].weight.cols() != layer.weight.rows()) {
      throw InputError("EmbeddingModel: layer " + std::to_string(l) + " input width mismatch");
    }
  }
}

EmbeddingModel EmbeddingModel::random(const ModelConfig& config, Rng& rng) {
  if (config.input_dim == 0 || config.output_dim == 0) {
    throw ConfigError("model: input and output dims must be positive");
  }
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.output_dim);

  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Matrix(in, out), RowVector::Zero(out)};
    for (Eigen::Index i = 0; i < in; ++i) {
      for (Eigen::Index j = 0; j < out; ++j) layer.weight(i, j) = stddev * rng.normal();
    }
    layers.push_back(std::move(layer));
  }
  return EmbeddingModel(std::move(layers));
}

EmbeddingModel EmbeddingModel::identity(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return EmbeddingModel({DenseLayer{Matrix::Identity(n, n), RowVector::Zero(n)}});
}

std::size_t EmbeddingModel::input_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.rows());
}

std::size_t EmbeddingModel::output_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.cols());
}

std::size_t EmbeddingModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) {
    total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return total;
}

Matrix EmbeddingModel::embed(const Matrix& x) const { return forward(*this, x).embeddings; }

bool EmbeddingModel::operator==(const EmbeddingModel& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

ForwardPass forward(const EmbeddingModel& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim()) {
    throw InputError("forward: input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  }
  ForwardPass pass;
  const auto& layers = model.layers();
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    pass.layer_inputs.push_back(h);
    Matrix z = h * layers[l].weight;
    z.rowwise() += layers[l].bias;
    pass.pre_activations.push_back(z);
    h = l + 1 < layers.size() ? Matrix(z.cwiseMax(0.0)) : z;
  }
  pass.norms = h.rowwise().norm();
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    if (!std::isfinite(pass.norms(i))) {
      throw NumericError("forward: output row " + std::to_string(i) + " is not finite");
    }
    if (!(pass.norms(i) >= 1e-30)) {
      throw DegenerateError("forward: output row " + std::to_string(i) + " is zero before normalization");
    }
  }
  pass.embeddings = h.array().colwise() / pass.norms.array();
  return pass;
}

double ParamGrads::max_abs() const {
  double m = 0.0;
  for (const auto& w : weight) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const auto& b : bias) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

ParamGrads backward(const EmbeddingModel& model, const ForwardPass& pass, const Matrix& grad_embeddings) {
  const auto& layers = model.layers();
  if (grad_embeddings.rows() != pass.embeddings.rows() || grad_embeddings.cols() != pass.embeddings.cols()) {
    throw InputError("backward: gradient shape does not match embeddings");
  }
  if (pass.layer_inputs.size() != layers.size()) {
    throw InputError("backward: forward pass does not belong to this model");
  }

  // Through the normalization: g_z = (g - s (s . g)) / |z|
  const Matrix& s = pass.embeddings;
  const Vector radial = (s.array() * grad_embeddings.array()).rowwise().sum();
  Matrix g = grad_embeddings - (s.array().colwise() * radial.array()).matrix();
  g = g.array().colwise() / pass.norms.array();

  ParamGrads out;
  out.weight.resize(layers.size());
  out.bias.resize(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    out.weight[l] = pass.layer_inputs[l].transpose() * g;
    out.bias[l] = g.colwise().sum();
    if (l == 0) break;
    g = g * layers[l].weight.transpose();
    g = (pass.pre_activations[l - 1].array() > 0.0).select(g, 0.0);
  }
  return out;
}

namespace {

ParamGrads zeros_like(const EmbeddingModel& model) {
  ParamGrads z;
  for (const auto& layer : model.layers()) {
    z.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    z.bias.push_back(RowVector::Zero(layer.bias.size()));
  }
  return z;
}

}  // namespace

AdamOptimizer::AdamOptimizer(const EmbeddingModel& model, AdamConfig config)
    : config_(config), first_(zeros_like(model)), second_(zeros_like(model)) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
}

void AdamOptimizer::step(EmbeddingModel& model, const ParamGrads& grads) {
  auto& layers = model.layers();
  if (grads.weight.size() != layers.size() || first_.weight.size() != layers.size()) {
    throw InputError("adam: gradient layout does not match model");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!grads.weight[l].allFinite() || !grads.bias[l].allFinite()) {
      throw NumericError("adam: non-finite gradient in layer " + std::to_string(l) + " at step " +
                         std::to_string(steps_ + 1));
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;

  const auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weight[l], first_.weight[l], second_.weight[l]);
    update(layers[l].bias, grads.bias[l], first_.bias[l], second_.bias[l]);
  }
}

json model_to_json(const EmbeddingModel& model) {
  json layers = json::array();
  for (const auto& layer : model.layers()) {
    json w = json::array();
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) w.push_back(layer.weight.data()[i]);
    json b = json::array();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) b.push_back(layer.bias(i));
    layers.push_back({{"rows", layer.weight.rows()}, {"cols", layer.weight.cols()}, {"weight", w}, {"bias", b}});
  }
  json widths = json::array({model.input_dim()});
  for (const auto& layer : model.layers()) widths.push_back(layer.weight.cols());
  return {{"format", "uniembed-model v1"},
          {"widths", widths},
          {"hidden_activation", "relu"},
          {"layers", layers}};
}

EmbeddingModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "uniembed-model v1") {
      throw ParseError("unsupported model format '" + j.at("format").get<std::string>() + "'", 1);
    }
    std::vector<DenseLayer> layers;
    for (const auto& jl : j.at("layers")) {
      const auto rows = jl.at("rows").get<Eigen::Index>();
      const auto cols = jl.at("cols").get<Eigen::Index>();
      const auto& w = jl.at("weight");
      const auto& b = jl.at("bias");
      if (rows <= 0 || cols <= 0 || static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != cols) {
        throw ParseError("layer parameter count does not match its shape", 1);
      }
      DenseLayer layer{Matrix(rows, cols), RowVector(cols)};
      for (Eigen::Index i = 0; i < rows * cols; ++i) layer.weight.data()[i] = w[i].get<double>();
      for (Eigen::Index i = 0; i < cols; ++i) layer.bias(i) = b[i].get<double>();
      layers.push_back(std::move(layer));
    }
    return EmbeddingModel(std::move(layers));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model json: ") + e.what(), 1);
  }
}

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path, const json& meta) {
  json j = model_to_json(model);
  if (!meta.empty()) j["meta"] = meta;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint ") + path.string() + ": " + e.what(), 1);
  }
  return model_from_json(j);
}

}  // namespace uniembed
