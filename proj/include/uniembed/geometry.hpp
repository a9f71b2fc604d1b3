#pragma once

#include <cstddef>
#include <span>

#include "uniembed/types.hpp"

namespace uniembed {

/// Row-stochastic Gaussian-kernel neighbor distribution over n samples.
///
/// `probs(i, j)` is the probability that sample i picks j as its neighbor,
/// with `probs(i, i) == 0`. `sigmas[i]` is the kernel standard deviation used
/// for row i.
struct NeighborDistribution {
  Matrix probs;
  Vector sigmas;
};

/// D(i, j) = squared Euclidean distance between rows i and j of `x`.
/// Requires at least two rows and one column.
DistanceMatrix pairwise_sq_dist(const Matrix& x);

/// Scales every row to unit L2 norm. Throws DegenerateError when a row norm
/// falls below 1e-30.
Matrix unit_normalize(const Matrix& x);

/// Gaussian-kernel neighbor probabilities from squared distances:
///
///   p_ij = exp(-D_ij / (2 s_i^2)) / sum_{k != i} exp(-D_ik / (2 s_i^2))
///
/// The diagonal is excluded from numerator and denominator. Exponents are
/// shifted by their row maximum before exponentiation.
NeighborDistribution neighbor_probs(const DistanceMatrix& d, std::span<const double> sigmas);

/// Same as above with one sigma shared by every row.
NeighborDistribution neighbor_probs(const DistanceMatrix& d, double sigma);

/// Probabilities of one row given the squared distances to its neighbors
/// (self already removed).
Vector kernel_row(std::span<const double> neighbor_sq_dists, double sigma);

/// 2^H with H = -sum p log2 p. Rejects rows that are negative or do not sum
/// to 1 within 1e-9.
double row_perplexity(std::span<const double> p_row);

struct SigmaSearchResult {
  double sigma = 0.0;
  double perplexity = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct SigmaSearchOptions {
  double tol = 1e-3;
  int max_iter = 100;
};

/// Bisection on log(sigma) for the kernel width whose neighbor row reaches
/// `target_perplexity`. `neighbor_sq_dists` excludes the row's own entry.
///
/// The initial bracket is [1e-8, 1e8] and widens geometrically when the
/// target is not enclosed. When the target cannot be reached (for example all
/// neighbors equidistant), the closest bracket midpoint is returned with
/// `converged == false`.
SigmaSearchResult search_sigma(std::span<const double> neighbor_sq_dists, double target_perplexity,
                               SigmaSearchOptions options = {});

/// Per-row perplexity calibration over a full distance matrix.
NeighborDistribution calibrated_neighbor_probs(const DistanceMatrix& d, double target_perplexity,
                                               SigmaSearchOptions options = {});

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for a small symmetric matrix. Sweeps run in a
/// fixed (p, q) order and stop once the off-diagonal Frobenius norm drops
/// below `tol` times max(1, ||A||_F).
SymmetricEigen jacobi_eigen(const Matrix& a, double tol = 1e-12, int max_sweeps = 100);

struct PcaResult {
  Matrix projection;  // d x out_dim, orthonormal columns
  Vector eigenvalues; // all d eigenvalues, descending
  RowVector mean;     // subtracted before projecting
};

/// Principal components of the sample covariance (divisor n - 1).
/// Requires out_dim <= min(n - 1, d).
PcaResult pca(const Matrix& x, std::size_t out_dim);

/// Sample covariance of the rows of `x` (divisor n - 1).
Matrix covariance(const Matrix& x);

}  // namespace uniembed
