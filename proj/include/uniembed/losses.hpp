#pragma once

#include <span>
#include <vector>

#include "uniembed/geometry.hpp"
#include "uniembed/types.hpp"

namespace uniembed {

/// Scalar loss plus its gradient with respect to the student embeddings.
struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

struct HuberValue {
  double value = 0.0;
  double derivative = 0.0;
};

HuberValue huber(double x, double delta);

/// Pairwise root distances of the upper triangle (i < j, row-major order),
/// each divided by their mean `mu`.
struct NormalizedDistances {
  std::vector<double> dists;
  double mu = 0.0;
};

NormalizedDistances normalized_distances(const Matrix& x);

// ---------------------------------------------------------------------------
// Triplet semi-hard

struct Triplet {
  Eigen::Index anchor = 0;
  Eigen::Index positive = 0;
  Eigen::Index negative = 0;
};

/// For every ordered anchor/positive pair picks the closest negative that is
/// farther from the anchor than the positive; falls back to the farthest
/// negative when no such negative exists. Distances are squared Euclidean.
/// Ties go to the lowest index.
std::vector<Triplet> select_semihard_triplets(const DistanceMatrix& d, std::span<const int> labels);

/// Mean over anchor/positive pairs of max(0, d(a,p) - d(a,n) + margin), with
/// the subgradient taken at fixed negative selection.
LossResult triplet_semihard(const Matrix& s, std::span<const int> labels, double margin = 0.2);

/// Same objective evaluated on an explicit triplet list.
LossResult triplet_loss(const Matrix& s, std::span<const Triplet> triplets, double margin);

// ---------------------------------------------------------------------------
// Relational distance distillation

enum class RkdPenalty { kHuber, kL1 };

struct RkdOptions {
  RkdPenalty penalty = RkdPenalty::kHuber;
  double delta = 1.0;
};

/// Mean over unordered pairs of l(d_t - d_s), where d_t and d_s are root
/// distances divided by their batch means. The gradient includes the
/// dependence of the student batch mean on every student row. The teacher
/// receives no gradient.
LossResult rkd_distance(const Matrix& teacher, const Matrix& student, RkdOptions options = {});

// ---------------------------------------------------------------------------
// Stochastic neighbor distillation

/// Student-side neighbor distribution with the shared kernel denominator
/// tau = 2 sigma'^2, returned in log space (diagonal is -inf).
Matrix student_log_probs(const Matrix& s, double tau);

/// sum_i KL(P_i || Q_i) with Q built from `s` using kernel denominator `tau`.
///
/// grad_i = (2 / tau) sum_j (s_i - s_j)(p_ij - q_ij + p_ji - q_ji)
LossResult snd(const NeighborDistribution& teacher, const Matrix& s, double tau = 1.0);

/// Overload taking the teacher probabilities directly.
LossResult snd(const Matrix& teacher_probs, const Matrix& s, double tau = 1.0);

}  // namespace uniembed
