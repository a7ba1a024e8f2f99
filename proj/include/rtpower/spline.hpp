#pragma once

// Cubic regression spline ("cr") basis: natural cubic spline parameterised
// by its values at the knots.
//
// With knots x_0 < ... < x_{k-1} and spacings h_j = x_{j+1} - x_j, the
// second derivatives at the knots are delta = F beta with
//   F = [0; B^-1 D; 0],
//   D (k-2 x k):  D(i,i) = 1/h_i, D(i,i+1) = -1/h_i - 1/h_{i+1}, D(i,i+2) = 1/h_{i+1}
//   B (k-2 x k-2) tridiagonal: B(i,i) = (h_i + h_{i+1})/3, B(i,i+1) = B(i+1,i) = h_{i+1}/6
// and the integrated squared second derivative is beta' D' B^-1 D beta.
// Outside [x_0, x_{k-1}] the spline continues linearly.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace rtpower {

template <typename Scalar = double>
class CubicRegressionSpline {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  explicit CubicRegressionSpline(Vector knots) : knots_(std::move(knots)) {
    const Eigen::Index k = knots_.size();
    if (k < 3) throw std::invalid_argument("cr spline needs at least 3 knots");
    for (Eigen::Index i = 1; i < k; ++i) {
      if (!(knots_[i] > knots_[i - 1])) throw std::invalid_argument("cr spline knots must be strictly increasing");
    }
    const Vector h = knots_.tail(k - 1) - knots_.head(k - 1);
    Matrix D = Matrix::Zero(k - 2, k);
    Matrix B = Matrix::Zero(k - 2, k - 2);
    for (Eigen::Index i = 0; i < k - 2; ++i) {
      D(i, i) = Scalar(1) / h[i];
      D(i, i + 1) = -Scalar(1) / h[i] - Scalar(1) / h[i + 1];
      D(i, i + 2) = Scalar(1) / h[i + 1];
      B(i, i) = (h[i] + h[i + 1]) / Scalar(3);
      if (i + 1 < k - 2) {
        B(i, i + 1) = h[i + 1] / Scalar(6);
        B(i + 1, i) = h[i + 1] / Scalar(6);
      }
    }
    Eigen::LDLT<Matrix> b_ldlt(B);
    const Matrix b_inv_d = b_ldlt.solve(D);
    F_ = Matrix::Zero(k, k);
    F_.middleRows(1, k - 2) = b_inv_d;
    penalty_ = D.transpose() * b_inv_d;
    penalty_ = (penalty_ + penalty_.transpose()) / Scalar(2);
  }

  // Knots at evenly spaced quantiles of the distinct values. Throws when
  // there are fewer than k distinct values.
  static CubicRegressionSpline from_data(std::span<const Scalar> values, int k) {
    std::vector<Scalar> unique(values.begin(), values.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    if (k < 3) throw std::invalid_argument("cr spline needs k >= 3");
    if (static_cast<int>(unique.size()) < k) {
      throw std::invalid_argument("cr spline with k = " + std::to_string(k) + " needs at least k distinct values, got " +
                                  std::to_string(unique.size()));
    }
    Vector knots(k);
    const auto last = static_cast<Scalar>(unique.size() - 1);
    for (int j = 0; j < k; ++j) {
      const Scalar pos = last * static_cast<Scalar>(j) / static_cast<Scalar>(k - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, unique.size() - 1);
      knots[j] = unique[lo] + (pos - static_cast<Scalar>(lo)) * (unique[hi] - unique[lo]);
    }
    return CubicRegressionSpline(std::move(knots));
  }

  Eigen::Index size() const { return knots_.size(); }
  const Vector& knots() const { return knots_; }
  // Integrated squared second derivative, k x k, PSD with rank k - 2.
  const Matrix& penalty() const { return penalty_; }
  // Knot values -> knot second derivatives.
  const Matrix& second_derivative_map() const { return F_; }

  bool extrapolates(Scalar x) const { return x < knots_[0] || x > knots_[knots_.size() - 1]; }

  RowVector basis_row(Scalar x) const {
    const Eigen::Index k = knots_.size();
    RowVector row = RowVector::Zero(k);
    if (x < knots_[0] || x > knots_[k - 1]) {
      // Linear continuation from the nearest boundary: f(b) + f'(b) (x - b).
      const bool left = x < knots_[0];
      const Eigen::Index j = left ? 0 : k - 2;
      const Scalar h = knots_[j + 1] - knots_[j];
      const Scalar b = left ? knots_[0] : knots_[k - 1];
      // f'(x_j) = (beta_{j+1} - beta_j)/h - h/3 delta_j - h/6 delta_{j+1}
      // f'(x_{j+1}) = (beta_{j+1} - beta_j)/h + h/6 delta_j + h/3 delta_{j+1}
      RowVector slope = RowVector::Zero(k);
      slope[j] -= Scalar(1) / h;
      slope[j + 1] += Scalar(1) / h;
      if (left) {
        slope += -h / Scalar(3) * F_.row(j) - h / Scalar(6) * F_.row(j + 1);
      } else {
        slope += h / Scalar(6) * F_.row(j) + h / Scalar(3) * F_.row(j + 1);
      }
      row[left ? 0 : k - 1] = Scalar(1);
      row += (x - b) * slope;
      return row;
    }
    Eigen::Index j = static_cast<Eigen::Index>(
        std::upper_bound(knots_.data(), knots_.data() + k, x) - knots_.data()) - 1;
    j = std::clamp<Eigen::Index>(j, 0, k - 2);
    const Scalar h = knots_[j + 1] - knots_[j];
    const Scalar am = (knots_[j + 1] - x) / h;
    const Scalar ap = (x - knots_[j]) / h;
    const Scalar dm = knots_[j + 1] - x;
    const Scalar dp = x - knots_[j];
    const Scalar cm = (dm * dm * dm / h - h * dm) / Scalar(6);
    const Scalar cp = (dp * dp * dp / h - h * dp) / Scalar(6);
    row[j] += am;
    row[j + 1] += ap;
    row += cm * F_.row(j) + cp * F_.row(j + 1);
    return row;
  }

  template <typename Derived>
  Matrix design(const Eigen::MatrixBase<Derived>& x) const {
    Matrix X(x.size(), knots_.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) X.row(i) = basis_row(x.derived().coeff(i));
    return X;
  }

 private:
  Vector knots_;
  Matrix F_;
  Matrix penalty_;
};

// Row-wise Kronecker product: row i of the result is kron(A.row(i), B.row(i)),
// with the column index a * B.cols() + b.
template <typename DerivedA, typename DerivedB>
auto row_tensor(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& B) {
  using Scalar = typename DerivedA::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(A.rows(), A.cols() * B.cols());
  for (Eigen::Index a = 0; a < A.cols(); ++a) {
    out.middleCols(a * B.cols(), B.cols()) = B.derived().array().colwise() * A.derived().col(a).array();
  }
  return out;
}

// Kronecker product of two small dense matrices.
template <typename DerivedA, typename DerivedB>
auto kronecker(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& B) {
  using Scalar = typename DerivedA::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B.derived();
    }
  }
  return out;
}

}  // namespace rtpower
