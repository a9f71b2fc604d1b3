#include "uniembed/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "uniembed/errors.hpp"

namespace uniembed {

HuberValue huber(double x, double delta) {
  const double ax = std::abs(x);
  if (ax <= delta) return {0.5 * x * x, x};
  return {delta * (ax - 0.5 * delta), x > 0.0 ? delta : -delta};
}

namespace {

double l1_derivative(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

NormalizedDistances normalized_distances(const Matrix& x) {
  const auto n = x.rows();
  if (n < 2) throw InputError("normalized_distances: need at least 2 rows");
  NormalizedDistances out;
  out.dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = (x.row(i) - x.row(j)).norm();
      out.dists.push_back(r);
      total += r;
    }
  }
  out.mu = total / static_cast<double>(out.dists.size());
  if (!(out.mu >= 1e-12)) {
    throw DegenerateError("normalized_distances: batch mean distance " + std::to_string(out.mu) +
                          " below 1e-12");
  }
  for (double& r : out.dists) r /= out.mu;
  return out;
}

std::vector<Triplet> select_semihard_triplets(const DistanceMatrix& d, std::span<const int> labels) {
  const auto n = d.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw InputError("select_semihard_triplets: label count does not match batch size");
  }
  std::vector<Triplet> out;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index p = 0; p < n; ++p) {
      if (p == a || labels[a] != labels[p]) continue;
      const double dap = d(a, p);
      Eigen::Index semihard = -1;
      Eigen::Index farthest = -1;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (labels[k] == labels[a]) continue;
        const double dan = d(a, k);
        if (dan > dap && (semihard < 0 || dan < d(a, semihard))) semihard = k;
        if (farthest < 0 || dan > d(a, farthest)) farthest = k;
      }
      if (farthest < 0) continue;
      out.push_back({a, p, semihard >= 0 ? semihard : farthest});
    }
  }
  return out;
}

LossResult triplet_loss(const Matrix& s, std::span<const Triplet> triplets, double margin) {
  if (triplets.empty()) {
    throw DegenerateError("triplet loss: batch has no valid anchor/positive pair with a negative");
  }
  LossResult out{0.0, Matrix::Zero(s.rows(), s.cols())};
  const double weight = 1.0 / static_cast<double>(triplets.size());
  for (const auto& t : triplets) {
    const RowVector ap = s.row(t.anchor) - s.row(t.positive);
    const RowVector an = s.row(t.anchor) - s.row(t.negative);
    const double violation = ap.squaredNorm() - an.squaredNorm() + margin;
    if (violation <= 0.0) continue;
    out.loss += weight * violation;
    // d/ds of |a-p|^2 - |a-n|^2
    out.grad.row(t.anchor) += weight * 2.0 * (ap - an);
    out.grad.row(t.positive) -= weight * 2.0 * ap;
    out.grad.row(t.negative) += weight * 2.0 * an;
  }
  return out;
}

LossResult triplet_semihard(const Matrix& s, std::span<const int> labels, double margin) {
  if (static_cast<Eigen::Index>(labels.size()) != s.rows()) {
    throw InputError("triplet_semihard: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(s.rows()) + " embeddings");
  }
  if (s.rows() < 2) throw DegenerateError("triplet_semihard: empty batch");
  const auto triplets = select_semihard_triplets(pairwise_sq_dist(s), labels);
  return triplet_loss(s, triplets, margin);
}

LossResult rkd_distance(const Matrix& teacher, const Matrix& student, RkdOptions options) {
  const auto n = student.rows();
  if (teacher.rows() != n) {
    throw InputError("rkd_distance: teacher has " + std::to_string(teacher.rows()) +
                     " rows, student " + std::to_string(n));
  }
  if (n < 3) throw InputError("rkd_distance: need at least 3 samples");
  if (options.penalty == RkdPenalty::kHuber && !(options.delta > 0.0)) {
    throw InputError("rkd_distance: huber delta must be positive");
  }

  const NormalizedDistances t = normalized_distances(teacher);
  const NormalizedDistances s = normalized_distances(student);
  const auto pairs = static_cast<double>(s.dists.size());

  std::vector<double> dl(s.dists.size());
  LossResult out{0.0, Matrix::Zero(n, student.cols())};
  double weighted_sum = 0.0;  // sum_ij l'(e_ij) * r_ij
  for (std::size_t k = 0; k < dl.size(); ++k) {
    const double e = t.dists[k] - s.dists[k];
    if (options.penalty == RkdPenalty::kHuber) {
      const auto h = huber(e, options.delta);
      out.loss += h.value;
      dl[k] = h.derivative;
    } else {
      out.loss += std::abs(e);
      dl[k] = l1_derivative(e);
    }
    weighted_sum += dl[k] * s.dists[k] * s.mu;
  }
  out.loss /= pairs;

  // dL/dr_kl = -l'_kl / (P mu) + sum_ij l'_ij r_ij / (P^2 mu^2)
  const double shared = weighted_sum / (pairs * pairs * s.mu * s.mu);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j, ++k) {
      const double r = s.dists[k] * s.mu;
      if (r < 1e-15) continue;
      const double g = -dl[k] / (pairs * s.mu) + shared;
      const RowVector dir = (student.row(i) - student.row(j)) / r;
      out.grad.row(i) += g * dir;
      out.grad.row(j) -= g * dir;
    }
  }
  return out;
}

Matrix student_log_probs(const Matrix& s, double tau) {
  if (!(tau > 0.0)) throw InputError("snd: tau must be positive");
  const DistanceMatrix d = pairwise_sq_dist(s);
  const auto n = d.rows();
  Matrix logq(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double max_exp = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) max_exp = std::max(max_exp, -d(i, j) / tau);
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) total += std::exp(-d(i, j) / tau - max_exp);
    }
    const double log_norm = max_exp + std::log(total);
    for (Eigen::Index j = 0; j < n; ++j) {
      logq(i, j) = j == i ? -std::numeric_limits<double>::infinity() : -d(i, j) / tau - log_norm;
    }
  }
  return logq;
}

LossResult snd(const Matrix& teacher_probs, const Matrix& s, double tau) {
  const auto n = s.rows();
  if (teacher_probs.rows() != n || teacher_probs.cols() != n) {
    throw InputError("snd: teacher distribution is " + std::to_string(teacher_probs.rows()) + "x" +
                     std::to_string(teacher_probs.cols()) + " but the student batch has " +
                     std::to_string(n) + " rows");
  }
  const Matrix logq = student_log_probs(s, tau);
  Matrix q(n, n);
  LossResult out{0.0, Matrix::Zero(n, s.cols())};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) {
        q(i, j) = 0.0;
        continue;
      }
      q(i, j) = std::exp(logq(i, j));
      const double p = teacher_probs(i, j);
      if (p > 1e-300) out.loss += p * (std::log(p) - logq(i, j));
    }
  }
  out.loss = std::max(out.loss, 0.0);  // KL >= 0; absorbs rounding
  const double scale = 2.0 / tau;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double coeff = teacher_probs(i, j) - q(i, j) + teacher_probs(j, i) - q(j, i);
      out.grad.row(i) += scale * coeff * (s.row(i) - s.row(j));
    }
  }
  return out;
}

LossResult snd(const NeighborDistribution& teacher, const Matrix& s, double tau) {
  return snd(teacher.probs, s, tau);
}

}  // namespace uniembed
