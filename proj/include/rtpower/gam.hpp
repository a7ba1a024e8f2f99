#pragma once

// Additive models with penalized cubic regression spline smooths and
// tensor-product smooths, fitted by penalized least squares with GCV
// smoothing parameter selection.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtpower/pls.hpp"
#include "rtpower/predictors.hpp"
#include "rtpower/regression.hpp"
#include "rtpower/spline.hpp"

namespace rtpower {

// One column gives s(x) with k knots; two columns give te(x1, x2) with k knots
// per margin.
struct SmoothSpec {
  std::vector<std::string> columns;
  int k = 6;

  std::string label() const;
};

struct GamSpec {
  std::vector<std::string> linear;  // unpenalized columns
  std::vector<SmoothSpec> smooths;

  // Throws ValidationError for missing columns, unsupported smooth shapes and
  // columns used twice.
  void validate(const Design& design) const;
};

// rt ~ s(surprisal_t) + s(surprisal_t1) + te(frequency_t, length_t) + te(frequency_t1, length_t1)
GamSpec nonlinear_gam_spec(int k_surprisal = 6, int k_tensor = 5);
// rt ~ surprisal_t + surprisal_t1 + te(frequency_t, length_t) + te(frequency_t1, length_t1)
GamSpec linear_control_gam_spec(int k_tensor = 5);
// rt ~ te(frequency_t, length_t) + te(frequency_t1, length_t1)
GamSpec tensor_baseline_gam_spec(int k_tensor = 5);

// A smooth built on training data: marginal cr bases, the sum-to-zero
// constraint and the penalties in the constrained parameterisation.
class SmoothTerm {
 public:
  // Throws ValidationError when a margin has fewer than k distinct values.
  static SmoothTerm build(const Design& design, std::span<const Eigen::Index> rows, const SmoothSpec& spec);

  const SmoothSpec& spec() const { return spec_; }
  std::string label() const { return spec_.label(); }
  const std::vector<CubicRegressionSpline<double>>& margins() const { return margins_; }
  Eigen::Index raw_size() const { return constraint_.rows(); }
  Eigen::Index size() const { return constraint_.cols(); }
  // Raw coefficients = constraint() * constrained coefficients.
  const Eigen::MatrixXd& constraint() const { return constraint_; }
  // One penalty per margin, size() x size(), unscaled.
  const std::vector<Eigen::MatrixXd>& penalties() const { return penalties_; }

  Eigen::MatrixXd raw_design(const Design& design, std::span<const Eigen::Index> rows) const;
  Eigen::MatrixXd design(const Design& design, std::span<const Eigen::Index> rows) const;
  // Constrained basis row of a one-dimensional smooth at x.
  Eigen::RowVectorXd row(double x) const;
  bool extrapolates(double x) const;

 private:
  SmoothSpec spec_;
  std::vector<CubicRegressionSpline<double>> margins_;
  Eigen::MatrixXd constraint_;
  std::vector<Eigen::MatrixXd> penalties_;
};

struct GamTermSummary {
  std::string label;
  Eigen::Index offset = 0;  // first coefficient of the term
  Eigen::Index size = 0;
  std::vector<double> lambdas;  // smoothing parameters, one per penalty
  // Effective degrees of freedom including the constant absorbed by the
  // sum-to-zero constraint, so a cr smooth lies in [2, k].
  double edf = 0.0;
};

struct GamOptions {
  GcvGrid grid;
  // When set, one lambda per penalty (in term order) replaces GCV selection.
  std::optional<std::vector<double>> fixed_lambdas;
};

struct GamFit {
  GamSpec spec;
  std::vector<SmoothTerm> smooths;
  std::vector<GamTermSummary> terms;  // smooths only, in spec order
  std::vector<double> linear_means;   // training means of the linear columns
  std::vector<double> linear_min, linear_max;
  Eigen::VectorXd coefficients;  // intercept, linear columns, smooth blocks
  std::vector<double> lambdas;   // all penalties, in term order
  std::vector<double> penalty_scales;
  double gcv_score = 0.0;
  double rss = 0.0;
  double edf = 0.0;  // total, intercept included
  double sigma2 = 0.0;
  Eigen::Index n_train = 0;
  Eigen::VectorXd per_obs_llh;  // training rows, nats

  Eigen::MatrixXd model_matrix(const Design& design, std::span<const Eigen::Index> rows) const;
  Eigen::VectorXd predict(const Design& design, std::span<const Eigen::Index> rows = {}) const;
  // Coefficient of a linear column.
  double linear_coefficient(std::string_view column) const;
  const GamTermSummary& term(std::string_view label) const;

  // Centered partial effect of `column` at x: for s(column) the constrained
  // smooth contribution, for a linear column slope * (x - training mean).
  // Throws ValidationError when `column` is neither.
  double partial_effect(std::string_view column, double x) const;
  // Outside the knot range of s(column), or the training range of a linear
  // column.
  bool extrapolates(std::string_view column, double x) const;
  // Sum of the smooth's contribution over rows, for constraint checks.
  Eigen::VectorXd smooth_contribution(std::string_view label, const Design& design,
                                      std::span<const Eigen::Index> rows = {}) const;
};

// Throws ValidationError when there are not more training rows than
// coefficients and NumericError when the penalized system is singular.
GamFit fit_gam(const Design& design, const GamSpec& spec, std::span<const Eigen::Index> rows = {},
               const GamOptions& options = {});
GamFit fit_linear_control(const Design& design, std::span<const Eigen::Index> rows = {},
                          const GamOptions& options = {});

Eigen::VectorXd heldout_llh(const GamFit& fit, const Design& design, std::span<const Eigen::Index> rows = {});

struct CurvePoint {
  double surprisal = 0.0;
  double fit_ms = 0.0;  // mean across folds
  double lo = 0.0;      // 2.5th percentile across folds
  double hi = 0.0;      // 97.5th percentile across folds
  bool extrapolated = false;
};

struct Curve {
  std::string term;    // s(surprisal_t), linear(surprisal_t), ...
  std::string column;  // surprisal_t or surprisal_t1
  std::vector<CurvePoint> points;
};

// 0, 0.5, ..., 20 bits.
std::vector<double> default_surprisal_grid();

Curve predict_curve(std::span<const GamFit> fits, const std::string& column, std::span<const double> grid = {});

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<double> density;  // integrates to the in-range share
  std::size_t below = 0;
  std::size_t above = 0;
};

Histogram density_histogram(std::span<const double> values, double lo = 0.0, double hi = 20.0, int bins = 40);

struct LinearityOptions {
  int k = 10;
  std::uint64_t seed = 0;
  std::size_t n_perm = 10000;
  int k_surprisal = 6;
  int k_tensor = 5;
  GamOptions gam;
};

struct LinearityResult {
  DllhReport nonlinear;  // non-linear GAM vs tensor-only baseline
  DllhReport linear;     // linear control vs tensor-only baseline
  // Paired test on llh(non-linear) - llh(linear) against the alternative
  // that the non-linear model predicts better.
  PermutationResult comparison;
  // Same differences, two-sided.
  PermutationResult comparison_two_sided;
  std::vector<GamFit> nonlinear_fits;  // one per fold
  std::vector<GamFit> linear_fits;
};

// Needs surprisal, frequency and length for w_t and w_{t-1}.
LinearityResult linearity_dllh(const Design& design, const LinearityOptions& options = {});

}  // namespace rtpower
