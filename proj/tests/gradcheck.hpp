#pragma once

#include <functional>

#include "support.hpp"
#include "uniembed/losses.hpp"
#include "uniembed/model.hpp"

namespace testsupport {

using EmbeddingLoss = std::function<uniembed::LossResult(const uniembed::Matrix& embeddings)>;

/// Max relative error between backward() parameter gradients and central
/// finite differences of loss(forward(model, x)) over every parameter.
inline double model_grad_error(const uniembed::EmbeddingModel& model, const uniembed::Matrix& x,
                               const EmbeddingLoss& loss, double h = 1e-6) {
  using namespace uniembed;
  const ForwardPass pass = forward(model, x);
  const ParamGrads grads = backward(model, pass, loss(pass.embeddings).grad);

  EmbeddingModel probe = model;
  const auto value = [&] { return loss(forward(probe, x).embeddings).loss; };
  double worst = 0.0;
  for (std::size_t l = 0; l < probe.layers().size(); ++l) {
    auto& layer = probe.layers()[l];
    Matrix fd_w(layer.weight.rows(), layer.weight.cols());
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      const double keep = layer.weight.data()[i];
      layer.weight.data()[i] = keep + h;
      const double up = value();
      layer.weight.data()[i] = keep - h;
      const double down = value();
      layer.weight.data()[i] = keep;
      fd_w.data()[i] = (up - down) / (2.0 * h);
    }
    Matrix fd_b(1, layer.bias.size());
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      const double keep = layer.bias(i);
      layer.bias(i) = keep + h;
      const double up = value();
      layer.bias(i) = keep - h;
      const double down = value();
      layer.bias(i) = keep;
      fd_b(0, i) = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, max_rel_error(grads.weight[l], fd_w));
    worst = std::max(worst, max_rel_error(Matrix(grads.bias[l]), fd_b));
  }
  return worst;
}

}  // namespace testsupport
