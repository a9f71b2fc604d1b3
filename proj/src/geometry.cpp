#include "uniembed/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "uniembed/errors.hpp"

namespace uniembed {

DistanceMatrix pairwise_sq_dist(const Matrix& x) {
  const auto n = x.rows();
  if (n < 2 || x.cols() < 1) {
    throw InputError("pairwise_sq_dist: need at least 2 rows and 1 column, got " +
                     std::to_string(n) + "x" + std::to_string(x.cols()));
  }
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Matrix unit_normalize(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm >= 1e-30)) {
      throw DegenerateError("unit_normalize: row " + std::to_string(i) + " has norm " +
                            std::to_string(norm));
    }
    out.row(i) = x.row(i) / norm;
  }
  return out;
}

namespace {

void check_sigma(double sigma, Eigen::Index row) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InputError("neighbor_probs: sigma for row " + std::to_string(row) +
                     " must be positive and finite");
  }
}

// Fills `out` with kernel weights normalized over `dists`, skipping `skip`.
template <typename Dists, typename Out>
void kernel_into(const Dists& dists, Eigen::Index count, Eigen::Index skip, double sigma, Out& out) {
  const double scale = 1.0 / (2.0 * sigma * sigma);
  double max_exp = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < count; ++j) {
    if (j != skip) max_exp = std::max(max_exp, -dists(j) * scale);
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < count; ++j) {
    if (j == skip) {
      out(j) = 0.0;
      continue;
    }
    const double w = std::exp(-dists(j) * scale - max_exp);
    out(j) = w;
    total += w;
  }
  for (Eigen::Index j = 0; j < count; ++j) out(j) /= total;
}

}  // namespace

NeighborDistribution neighbor_probs(const DistanceMatrix& d, std::span<const double> sigmas) {
  const auto n = d.rows();
  if (d.cols() != n || n < 2) {
    throw InputError("neighbor_probs: distance matrix must be square with n >= 2");
  }
  if (static_cast<Eigen::Index>(sigmas.size()) != n) {
    throw InputError("neighbor_probs: expected " + std::to_string(n) + " sigmas, got " +
                     std::to_string(sigmas.size()));
  }
  NeighborDistribution out{Matrix::Zero(n, n), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    check_sigma(sigmas[i], i);
    out.sigmas(i) = sigmas[i];
    auto row = out.probs.row(i);
    kernel_into(d.row(i), n, i, sigmas[i], row);
  }
  return out;
}

NeighborDistribution neighbor_probs(const DistanceMatrix& d, double sigma) {
  const std::vector<double> sigmas(static_cast<std::size_t>(d.rows()), sigma);
  return neighbor_probs(d, sigmas);
}

Vector kernel_row(std::span<const double> neighbor_sq_dists, double sigma) {
  check_sigma(sigma, 0);
  const auto count = static_cast<Eigen::Index>(neighbor_sq_dists.size());
  if (count < 1) throw InputError("kernel_row: empty row");
  Eigen::Map<const Vector> dists(neighbor_sq_dists.data(), count);
  Vector out(count);
  kernel_into(dists, count, -1, sigma, out);
  return out;
}

double row_perplexity(std::span<const double> p_row) {
  double total = 0.0;
  double entropy = 0.0;
  for (double p : p_row) {
    if (!(p >= 0.0) || p > 1.0 + 1e-12) {
      throw InputError("row_perplexity: entries must lie in [0, 1]");
    }
    total += p;
    if (p > 0.0) entropy -= p * std::log2(p);
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InputError("row_perplexity: row sums to " + std::to_string(total));
  }
  return std::exp2(entropy);
}

SigmaSearchResult search_sigma(std::span<const double> neighbor_sq_dists, double target_perplexity,
                               SigmaSearchOptions options) {
  const auto count = static_cast<double>(neighbor_sq_dists.size());
  if (neighbor_sq_dists.size() < 2) {
    throw InputError("search_sigma: need at least 2 neighbors");
  }
  if (!(target_perplexity > 1.0) || target_perplexity > count) {
    throw InputError("search_sigma: target perplexity " + std::to_string(target_perplexity) +
                     " outside (1, " + std::to_string(neighbor_sq_dists.size()) + "]");
  }
  const auto perplexity_at = [&](double sigma) {
    const Vector row = kernel_row(neighbor_sq_dists, sigma);
    return row_perplexity({row.data(), static_cast<std::size_t>(row.size())});
  };

  double lo = 1e-8;
  double hi = 1e8;
  for (int grow = 0; grow < 64 && perplexity_at(hi) < target_perplexity - options.tol; ++grow) {
    hi *= 10.0;
  }
  for (int grow = 0; grow < 64 && perplexity_at(lo) > target_perplexity + options.tol; ++grow) {
    lo /= 10.0;
  }

  SigmaSearchResult best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iter; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double perp = perplexity_at(mid);
    const double err = std::abs(perp - target_perplexity);
    if (err < best_err) {
      best_err = err;
      best = {mid, perp, it, false};
    }
    best.iterations = it;
    if (err <= options.tol) {
      best = {mid, perp, it, true};
      return best;
    }
    if (perp < target_perplexity) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return best;
}

NeighborDistribution calibrated_neighbor_probs(const DistanceMatrix& d, double target_perplexity,
                                               SigmaSearchOptions options) {
  const auto n = d.rows();
  if (d.cols() != n || n < 3) {
    throw InputError("calibrated_neighbor_probs: need a square distance matrix with n >= 3");
  }
  std::vector<double> sigmas(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) row[k++] = d(i, j);
    }
    sigmas[static_cast<std::size_t>(i)] = search_sigma(row, target_perplexity, options).sigma;
  }
  return neighbor_probs(d, sigmas);
}

SymmetricEigen jacobi_eigen(const Matrix& a, double tol, int max_sweeps) {
  const auto n = a.rows();
  if (a.cols() != n || n < 1) throw InputError("jacobi_eigen: matrix must be square");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
    throw InputError("jacobi_eigen: matrix is not symmetric");
  }
  Matrix m = 0.5 * (a + a.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double threshold = tol * std::max(1.0, m.norm());

  const auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * m(p, q) * m(p, q);
    }
    return std::sqrt(s);
  };

  int sweeps = 0;
  while (sweeps < max_sweeps && off_norm() > threshold) {
    ++sweeps;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        m(p, q) = 0.0;
        m(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return m(x, x) > m(y, y); });

  SymmetricEigen out{Vector(n), Matrix(n, n), sweeps};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = order[static_cast<std::size_t>(i)];
    out.values(i) = m(src, src);
    Vector col = v.col(src);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) col = -col;
    out.vectors.col(i) = col;
  }
  return out;
}

Matrix covariance(const Matrix& x) {
  if (x.rows() < 2) throw InputError("covariance: need at least 2 rows");
  const RowVector mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

PcaResult pca(const Matrix& x, std::size_t out_dim) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (n < 2 || out_dim < 1 || out_dim > std::min(n - 1, d)) {
    throw InputError("pca: out_dim " + std::to_string(out_dim) + " must lie in [1, min(n-1, d)] = [1, " +
                     std::to_string(n < 2 ? 0 : std::min(n - 1, d)) + "]");
  }
  const SymmetricEigen eig = jacobi_eigen(covariance(x));
  PcaResult out;
  out.eigenvalues = eig.values;
  out.projection = eig.vectors.leftCols(static_cast<Eigen::Index>(out_dim));
  out.mean = x.colwise().mean();
  return out;
}

}  // namespace uniembed
