#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "gradcheck.hpp"
#include "support.hpp"
#include "uniembed/errors.hpp"
#include "uniembed/geometry.hpp"
#include "uniembed/losses.hpp"
#include "uniembed/model.hpp"

using namespace uniembed;
using testsupport::model_grad_error;
using testsupport::random_matrix;

namespace {

// Straight-line forward pass written without the library's helpers.
Matrix oracle_forward(const EmbeddingModel& model, const Matrix& x) {
  Matrix h = x;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    Matrix z(h.rows(), w.cols());
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        double s = layers[l].bias(j);
        for (Eigen::Index k = 0; k < w.rows(); ++k) s += h(i, k) * w(k, j);
        z(i, j) = (l + 1 < layers.size()) ? std::max(0.0, s) : s;
      }
    }
    h = z;
  }
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    double n = 0.0;
    for (Eigen::Index j = 0; j < h.cols(); ++j) n += h(i, j) * h(i, j);
    h.row(i) /= std::sqrt(n);
  }
  return h;
}

EmbeddingModel random_model(std::vector<std::size_t> hidden, Rng& rng) {
  ModelConfig cfg{5, std::move(hidden), 4};
  EmbeddingModel m = EmbeddingModel::random(cfg, rng);
  // Non-zero biases so their gradients are exercised.
  for (auto& layer : m.layers()) {
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j) layer.bias(j) = 0.3 * rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("identity model passes unit rows through") {
  Rng rng(1);
  const Matrix x = testsupport::random_unit_rows(6, 4, rng);
  const EmbeddingModel m = EmbeddingModel::identity(4);
  CHECK((m.embed(x) - x).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("forward output is unit norm and matches a straight-line oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingModel m = random_model({7}, rng);
    const Matrix x = random_matrix(9, 5, rng, 2.0);
    const Matrix e = m.embed(x);
    for (Eigen::Index i = 0; i < e.rows(); ++i) CHECK(std::abs(e.row(i).norm() - 1.0) < 1e-12);
    CHECK((e - oracle_forward(m, x)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward rejects zero outputs and wrong widths") {
  EmbeddingModel m({DenseLayer{Matrix::Zero(3, 2), RowVector::Zero(2)}});
  CHECK_THROWS_AS(m.embed(Matrix::Ones(2, 3)), DegenerateError);
  CHECK_THROWS_AS(m.embed(Matrix::Ones(2, 4)), InputError);
}

TEST_CASE("random init has weight std 1/sqrt(fan_in)") {
  Rng rng(3);
  const EmbeddingModel m = EmbeddingModel::random({64, {}, 64}, rng);
  const Matrix& w = m.layers().front().weight;
  const double var = w.array().square().mean();
  CHECK(var == doctest::Approx(1.0 / 64.0).epsilon(0.05));
  CHECK(m.layers().front().bias.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.parameter_count() == 64 * 64 + 64);
}

TEST_CASE("backward: zero and radial upstream gradients vanish") {
  Rng rng(4);
  const EmbeddingModel m = random_model({}, rng);
  const Matrix x = random_matrix(5, 5, rng);
  const ForwardPass pass = forward(m, x);
  CHECK(backward(m, pass, Matrix::Zero(5, 4)).max_abs() == 0.0);
  // Upstream gradient parallel to each output row lies in the normalization null-space.
  const Matrix radial = 2.5 * pass.embeddings;
  CHECK(backward(m, pass, radial).max_abs() < 1e-12);
  CHECK_THROWS_AS(backward(m, pass, Matrix::Zero(4, 4)), InputError);
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
  Rng rng(5);
  const std::vector<int> labels{0, 0, 0, 1, 1, 1};
  for (int trial = 0; trial < 10; ++trial) {
    const EmbeddingModel m = random_model(trial % 2 == 0 ? std::vector<std::size_t>{} : std::vector<std::size_t>{6},
                                          rng);
    const Matrix x = random_matrix(6, 5, rng);
    const Matrix t = random_matrix(6, 3, rng);
    const NeighborDistribution p = calibrated_neighbor_probs(pairwise_sq_dist(t), 3.0);
    CHECK(model_grad_error(m, x, [&](const Matrix& s) { return snd(p, s, 0.7); }) < 1e-4);
    CHECK(model_grad_error(m, x, [&](const Matrix& s) { return rkd_distance(t, s); }) < 1e-4);
    // Selection frozen at the unperturbed embeddings.
    const auto triplets = select_semihard_triplets(pairwise_sq_dist(m.embed(x)), labels);
    CHECK(model_grad_error(m, x, [&](const Matrix& s) { return triplet_loss(s, triplets, 0.5); }) < 1e-4);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(6);
  EmbeddingModel m = random_model({3}, rng);
  const EmbeddingModel before = m;
  AdamOptimizer adam(m, {});
  ParamGrads zero;
  for (const auto& l : m.layers()) {
    zero.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    zero.bias.push_back(RowVector::Zero(l.bias.size()));
  }
  for (int i = 0; i < 5; ++i) adam.step(m, zero);
  CHECK(m == before);
  CHECK(adam.steps() == 5);
}

TEST_CASE("adam: first step by hand") {
  EmbeddingModel m({DenseLayer{Matrix::Constant(1, 1, 0.5), RowVector::Constant(1, -1.0)}});
  AdamOptimizer adam(m, {0.01, 0.9, 0.999, 1e-8});
  ParamGrads g;
  g.weight.push_back(Matrix::Constant(1, 1, 0.3));
  g.bias.push_back(RowVector::Constant(1, -2.0));
  adam.step(m, g);
  // m1 = 0.1 g, v1 = 0.001 g^2; bias-corrected mhat = g, vhat = g^2.
  const double dw = 0.01 * 0.3 / (0.3 + 1e-8);
  const double db = 0.01 * -2.0 / (2.0 + 1e-8);
  CHECK(m.layers()[0].weight(0, 0) == doctest::Approx(0.5 - dw).epsilon(1e-15));
  CHECK(m.layers()[0].bias(0) == doctest::Approx(-1.0 - db).epsilon(1e-15));
}

TEST_CASE("adam: constant gradient gives steps of size lr") {
  EmbeddingModel m({DenseLayer{Matrix::Zero(1, 1), RowVector::Zero(1)}});
  const double lr = 1e-3;
  AdamOptimizer adam(m, {lr, 0.9, 0.999, 1e-8});
  ParamGrads g;
  g.weight.push_back(Matrix::Constant(1, 1, 0.37));
  g.bias.push_back(RowVector::Constant(1, -4.0));
  double prev_w = 0.0;
  double last_step = 0.0;
  // Closed form of the moment recursion under constant g: mhat = g and
  // vhat = g^2 at every step, so each update is lr * |g| / (|g| + eps).
  for (int t = 1; t <= 2000; ++t) {
    adam.step(m, g);
    last_step = prev_w - m.layers()[0].weight(0, 0);
    prev_w = m.layers()[0].weight(0, 0);
  }
  CHECK(std::abs(last_step - lr) < 0.01 * lr);
  CHECK(m.layers()[0].bias(0) == doctest::Approx(2000 * lr).epsilon(0.01));
}

TEST_CASE("adam: non-finite gradient is reported with its layer") {
  Rng rng(7);
  EmbeddingModel m = random_model({3}, rng);
  const EmbeddingModel before = m;
  AdamOptimizer adam(m, {});
  ParamGrads g;
  for (const auto& l : m.layers()) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(RowVector::Zero(l.bias.size()));
  }
  g.bias[1](0) = std::nan("");
  try {
    adam.step(m, g);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
  CHECK(m == before);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(8);
  const EmbeddingModel m = random_model({6}, rng);
  const auto path = std::filesystem::temp_directory_path() / "uniembed_model_roundtrip.json";
  save_checkpoint(m, path, {{"seed", 8}});
  const EmbeddingModel back = load_checkpoint(path);
  CHECK(back == m);
  std::filesystem::remove(path);

  nlohmann::json j = model_to_json(m);
  j["layers"][0]["weight"].erase(0);
  CHECK_THROWS_AS(model_from_json(j), ParseError);
  j = model_to_json(m);
  j["format"] = "something else";
  CHECK_THROWS_AS(model_from_json(j), ParseError);
}
