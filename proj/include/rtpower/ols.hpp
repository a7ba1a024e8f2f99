#pragma once

// Dense least squares and Gaussian log-likelihood kernels, templated on the
// scalar type of the Eigen expressions passed in.

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace rtpower {

template <typename Scalar>
struct LeastSquaresSolution {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector coefficients;
  Vector std_errors;
  Scalar rss = 0;
  Scalar sigma2 = 0;  // rss / (n - p)
  Eigen::Index rank = 0;
  // Columns found linearly dependent on earlier-pivoted ones (empty when
  // full rank).
  std::vector<Eigen::Index> dependent_columns;

  bool full_rank() const { return dependent_columns.empty(); }
};

// Column-pivoted Householder QR. Coefficients are only meaningful when
// full_rank(); the caller decides how to report rank deficiency.
template <typename DerivedX, typename DerivedY>
auto solve_least_squares(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedY>& y,
                         typename DerivedX::RealScalar threshold = 1e-10) {
  using Scalar = typename DerivedX::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  LeastSquaresSolution<Scalar> out;
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Eigen::ColPivHouseholderQR<Matrix> qr(X.derived());
  qr.setThreshold(threshold);
  out.rank = qr.rank();
  if (out.rank < p) {
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = out.rank; i < p; ++i) out.dependent_columns.push_back(perm[i]);
    return out;
  }
  out.coefficients = qr.solve(y.derived());
  const Vector residual = y.derived() - X.derived() * out.coefficients;
  out.rss = residual.squaredNorm();
  out.sigma2 = n > p ? out.rss / static_cast<Scalar>(n - p) : Scalar(0);

  // diag((X'X)^-1) = row norms of P R^-1.
  const Matrix r = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
  const Matrix r_inv = r.template triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
  out.std_errors.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    out.std_errors[qr.colsPermutation().indices()[i]] = std::sqrt(out.sigma2 * r_inv.row(i).squaredNorm());
  }
  return out;
}

// Per-observation Gaussian log-likelihood (nats):
//   -0.5 ln(2 pi sigma2) - r_i^2 / (2 sigma2).
template <typename Derived>
auto gaussian_llh(const Eigen::MatrixBase<Derived>& residuals, typename Derived::Scalar sigma2) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = Scalar(-0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * sigma2);
  return (norm - residuals.derived().array().square() / (Scalar(2) * sigma2)).matrix().eval();
}

}  // namespace rtpower
