#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "uniembed/rng.hpp"
#include "uniembed/types.hpp"

namespace testsupport {

inline uniembed::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, uniembed::Rng& rng, double scale = 1.0) {
  uniembed::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline uniembed::Matrix random_unit_rows(Eigen::Index rows, Eigen::Index cols, uniembed::Rng& rng) {
  uniembed::Matrix m = random_matrix(rows, cols, rng);
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i).normalize();
  return m;
}

inline uniembed::Matrix random_orthogonal(Eigen::Index dim, uniembed::Rng& rng) {
  Eigen::HouseholderQR<uniembed::Matrix> qr(random_matrix(dim, dim, rng));
  return qr.householderQ();
}

/// Central finite differences of f at x, one coordinate at a time.
inline uniembed::Matrix numeric_grad(const std::function<double(const uniembed::Matrix&)>& f, uniembed::Matrix x,
                                     double h) {
  uniembed::Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f(x);
    x.data()[i] = keep - h;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max |a - b| / max(|a|, |b|, floor), entrywise.
inline double max_rel_error(const uniembed::Matrix& a, const uniembed::Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), floor});
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / scale);
  }
  return worst;
}

}  // namespace testsupport
