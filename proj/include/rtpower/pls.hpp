#pragma once

// Penalized least squares
//   minimise ||y - X b||^2 + sum_j lambda_j b' S_j b
// with smoothing parameters chosen by GCV = n RSS / (n - edf)^2, where
// edf = tr((X'X + S_lambda)^-1 X'X).
//
// Works from the sufficient statistics X'X, X'y, y'y. The GCV search is
// coordinate-wise over a log10 grid: while lambda_j moves, M = X'X + the
// other penalties is fixed, and with M = L L', L^-1 S_j L^-T = U diag(e) U'
// every grid point costs O(p^2):
//   A^-1 = W diag(1 / (1 + lambda e)) W',  W = L^-T U.

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "rtpower/errors.hpp"

namespace rtpower {

struct GcvGrid {
  double log10_min = -3.0;
  double log10_max = 6.0;
  int points = 25;
  int sweeps = 2;
  // Starting log10 lambda for every penalty.
  double log10_start = 1.5;

  double value(int i) const {
    return points == 1 ? log10_min : log10_min + (log10_max - log10_min) * i / (points - 1);
  }
};

template <typename Scalar = double>
class PenalizedLeastSquares {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Solution {
    Vector coefficients;
    std::vector<Scalar> lambdas;
    Scalar rss = 0;
    Scalar edf = 0;
    Scalar gcv = 0;
    Vector edf_diagonal;  // diag of the influence map, sums to edf
  };

  PenalizedLeastSquares(Matrix gram, Vector xty, Scalar yty, Eigen::Index n, std::vector<Matrix> penalties)
      : gram_(std::move(gram)), xty_(std::move(xty)), yty_(yty), n_(n), penalties_(std::move(penalties)) {}

  std::size_t penalty_count() const { return penalties_.size(); }

  Solution solve(std::span<const Scalar> lambdas) const {
    const Matrix A = penalized(lambdas, penalties_.size());
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) fail("penalized normal equations are not positive definite");
    Solution s;
    s.lambdas.assign(lambdas.begin(), lambdas.end());
    s.coefficients = llt.solve(xty_);
    const Matrix influence = llt.solve(gram_);
    s.edf_diagonal = influence.diagonal();
    s.edf = s.edf_diagonal.sum();
    s.rss = rss(s.coefficients);
    s.gcv = gcv(s.rss, s.edf);
    return s;
  }

  Solution select_gcv(const GcvGrid& grid) const {
    std::vector<Scalar> lambdas(penalties_.size(), std::pow(Scalar(10), Scalar(grid.log10_start)));
    const Eigen::Index p = gram_.rows();
    for (int sweep = 0; sweep < grid.sweeps; ++sweep) {
      for (std::size_t j = 0; j < penalties_.size(); ++j) {
        const Matrix M = penalized(lambdas, j);
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() != Eigen::Success) fail("Gram matrix plus fixed penalties is not positive definite");
        const auto L = llt.matrixL();
        Matrix K = L.solve(penalties_[j]);
        K = L.solve(K.transpose()).eval();
        K = (K + K.transpose()).eval() / Scalar(2);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(K);
        if (eig.info() != Eigen::Success) fail("eigen-decomposition of the scaled penalty did not converge");
        const Vector e = eig.eigenvalues().cwiseMax(Scalar(0));
        const Matrix W = llt.matrixU().solve(eig.eigenvectors());
        const Vector b = W.transpose() * xty_;
        const Matrix H = W.transpose() * gram_ * W;
        const Vector h_diag = H.diagonal();

        Scalar best_score = std::numeric_limits<Scalar>::infinity();
        Scalar best_lambda = lambdas[j];
        Vector d(p);
        for (int g = 0; g < grid.points; ++g) {
          const Scalar lambda = std::pow(Scalar(10), Scalar(grid.value(g)));
          d = (Scalar(1) + lambda * e.array()).inverse().matrix();
          const Vector db = d.cwiseProduct(b);
          const Scalar fit_dot = db.dot(b);
          const Scalar quad = db.dot(H * db);
          const Scalar r = std::max(yty_ - Scalar(2) * fit_dot + quad, Scalar(0));
          const Scalar edf = d.dot(h_diag);
          const Scalar score = gcv(r, edf);
          if (score < best_score) {
            best_score = score;
            best_lambda = lambda;
          }
        }
        lambdas[j] = best_lambda;
      }
    }
    return solve(lambdas);
  }

  // GCV at explicit lambdas, for diagnostics and tests.
  Scalar gcv_at(std::span<const Scalar> lambdas) const { return solve(lambdas).gcv; }

 private:
  Matrix penalized(std::span<const Scalar> lambdas, std::size_t skip) const {
    Matrix A = gram_;
    for (std::size_t i = 0; i < penalties_.size(); ++i) {
      if (i != skip) A += lambdas[i] * penalties_[i];
    }
    return A;
  }

  Scalar rss(const Vector& beta) const {
    return std::max(yty_ - Scalar(2) * beta.dot(xty_) + beta.dot(gram_ * beta), Scalar(0));
  }

  Scalar gcv(Scalar rss, Scalar edf) const {
    const Scalar dof = static_cast<Scalar>(n_) - edf;
    if (!(dof > 0)) return std::numeric_limits<Scalar>::infinity();
    return static_cast<Scalar>(n_) * rss / (dof * dof);
  }

  [[noreturn]] void fail(const std::string& what) const {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_, Eigen::EigenvaluesOnly);
    const Scalar lo = eig.eigenvalues().minCoeff();
    const Scalar hi = eig.eigenvalues().maxCoeff();
    std::ostringstream msg;
    msg << what << " (p = " << gram_.rows() << ", n = " << n_ << ", X'X eigenvalues in [" << lo << ", " << hi
        << "], condition number " << (lo > 0 ? hi / lo : std::numeric_limits<Scalar>::infinity()) << ")";
    throw NumericError(msg.str());
  }

  Matrix gram_;
  Vector xty_;
  Scalar yty_;
  Eigen::Index n_;
  std::vector<Matrix> penalties_;
};

}  // namespace rtpower
