#include "rtpower/gam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "rtpower/errors.hpp"
#include "rtpower/ols.hpp"
#include "rtpower/random.hpp"
#include "rtpower/stats.hpp"

namespace rtpower {

namespace {

std::vector<Eigen::Index> all_rows(const Design& design) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(design.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

std::vector<double> column_values(const Design& design, std::string_view column, std::span<const Eigen::Index> rows) {
  const auto c = design.column(column);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto r : rows) out.push_back(design.X(r, c));
  return out;
}

Eigen::VectorXd column_vector(const Design& design, std::string_view column, std::span<const Eigen::Index> rows) {
  const auto values = column_values(design, column, rows);
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

double floor_sigma2(double sigma2, double scale) { return std::max(sigma2, 1e-24 * (scale + 1.0)); }

// max |row sum| and max |column sum|.
double inf_norm(const Eigen::MatrixXd& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }
double one_norm(const Eigen::MatrixXd& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); }

std::uint64_t comparison_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x6c696e6561726974ULL); }

}  // namespace

std::string SmoothSpec::label() const {
  std::string out = columns.size() == 1 ? "s(" : "te(";
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  return out + ")";
}

void GamSpec::validate(const Design& design) const {
  std::set<std::string> seen;
  auto use = [&](const std::string& column) {
    if (!design.has_column(column)) throw ValidationError("GAM column '" + column + "' is not a design column");
    if (!seen.insert(column).second) throw ValidationError("GAM column '" + column + "' used twice");
  };
  for (const auto& c : linear) use(c);
  for (const auto& s : smooths) {
    if (s.columns.empty() || s.columns.size() > 2) {
      throw ValidationError("smooth " + s.label() + " must have one or two columns");
    }
    if (s.k < 3) throw ValidationError("smooth " + s.label() + " needs k >= 3");
    for (const auto& c : s.columns) use(c);
  }
}

GamSpec nonlinear_gam_spec(int k_surprisal, int k_tensor) {
  GamSpec spec;
  spec.smooths = {
      {{column_name(PredictorKind::surprisal, 0)}, k_surprisal},
      {{column_name(PredictorKind::surprisal, 1)}, k_surprisal},
      {{column_name(PredictorKind::frequency, 0), column_name(PredictorKind::length, 0)}, k_tensor},
      {{column_name(PredictorKind::frequency, 1), column_name(PredictorKind::length, 1)}, k_tensor},
  };
  return spec;
}

GamSpec linear_control_gam_spec(int k_tensor) {
  GamSpec spec = tensor_baseline_gam_spec(k_tensor);
  spec.linear = {column_name(PredictorKind::surprisal, 0), column_name(PredictorKind::surprisal, 1)};
  return spec;
}

GamSpec tensor_baseline_gam_spec(int k_tensor) {
  GamSpec spec;
  spec.smooths = {
      {{column_name(PredictorKind::frequency, 0), column_name(PredictorKind::length, 0)}, k_tensor},
      {{column_name(PredictorKind::frequency, 1), column_name(PredictorKind::length, 1)}, k_tensor},
  };
  return spec;
}

SmoothTerm SmoothTerm::build(const Design& design, std::span<const Eigen::Index> rows, const SmoothSpec& spec) {
  SmoothTerm term;
  term.spec_ = spec;
  for (const auto& column : spec.columns) {
    const auto values = column_values(design, column, rows);
    try {
      term.margins_.push_back(CubicRegressionSpline<double>::from_data(values, spec.k));
    } catch (const std::invalid_argument& e) {
      throw ValidationError("smooth " + spec.label() + ", column " + column + ": " + e.what());
    }
  }
  std::vector<Eigen::MatrixXd> raw_penalties;
  if (term.margins_.size() == 1) {
    raw_penalties.push_back(term.margins_[0].penalty());
  } else {
    const auto& a = term.margins_[0];
    const auto& b = term.margins_[1];
    raw_penalties.push_back(kronecker(a.penalty(), Eigen::MatrixXd::Identity(b.size(), b.size())));
    raw_penalties.push_back(kronecker(Eigen::MatrixXd::Identity(a.size(), a.size()), b.penalty()));
  }

  // Sum-to-zero over the training rows: columns of Z span the null space of
  // the column sums of the raw design.
  const Eigen::MatrixXd X = term.raw_design(design, rows);
  const Eigen::VectorXd sums = X.colwise().sum().transpose();
  const Eigen::Index m = X.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(sums);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
  term.constraint_ = Q.rightCols(m - 1);
  for (const auto& S : raw_penalties) {
    Eigen::MatrixXd P = term.constraint_.transpose() * S * term.constraint_;
    term.penalties_.push_back((P + P.transpose()) / 2.0);
  }
  return term;
}

Eigen::MatrixXd SmoothTerm::raw_design(const Design& design, std::span<const Eigen::Index> rows) const {
  const Eigen::MatrixXd first = margins_[0].design(column_vector(design, spec_.columns[0], rows));
  if (margins_.size() == 1) return first;
  const Eigen::MatrixXd second = margins_[1].design(column_vector(design, spec_.columns[1], rows));
  return row_tensor(first, second);
}

Eigen::MatrixXd SmoothTerm::design(const Design& design, std::span<const Eigen::Index> rows) const {
  return raw_design(design, rows) * constraint_;
}

Eigen::RowVectorXd SmoothTerm::row(double x) const {
  if (margins_.size() != 1) throw ValidationError("row(x) needs a one-dimensional smooth, got " + label());
  return margins_[0].basis_row(x) * constraint_;
}

bool SmoothTerm::extrapolates(double x) const { return margins_.size() == 1 && margins_[0].extrapolates(x); }

Eigen::MatrixXd GamFit::model_matrix(const Design& design, std::span<const Eigen::Index> rows) const {
  std::vector<Eigen::Index> every;
  if (rows.empty()) {
    every = all_rows(design);
    rows = every;
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(n, coefficients.size());
  X.col(0).setOnes();
  Eigen::Index offset = 1;
  for (const auto& column : spec.linear) X.col(offset++) = column_vector(design, column, rows);
  for (const auto& smooth : smooths) {
    X.middleCols(offset, smooth.size()) = smooth.design(design, rows);
    offset += smooth.size();
  }
  return X;
}

Eigen::VectorXd GamFit::predict(const Design& design, std::span<const Eigen::Index> rows) const {
  return model_matrix(design, rows) * coefficients;
}

double GamFit::linear_coefficient(std::string_view column) const {
  const auto it = std::find(spec.linear.begin(), spec.linear.end(), column);
  if (it == spec.linear.end()) throw ValidationError("GAM has no linear term '" + std::string(column) + "'");
  return coefficients[1 + (it - spec.linear.begin())];
}

const GamTermSummary& GamFit::term(std::string_view label) const {
  for (const auto& t : terms) {
    if (t.label == label) return t;
  }
  throw ValidationError("GAM has no smooth term '" + std::string(label) + "'");
}

double GamFit::partial_effect(std::string_view column, double x) const {
  for (std::size_t i = 0; i < smooths.size(); ++i) {
    const auto& s = smooths[i];
    if (s.spec().columns.size() == 1 && s.spec().columns[0] == column) {
      return s.row(x).dot(coefficients.segment(terms[i].offset, terms[i].size));
    }
  }
  const auto it = std::find(spec.linear.begin(), spec.linear.end(), column);
  if (it != spec.linear.end()) {
    const auto i = static_cast<std::size_t>(it - spec.linear.begin());
    return coefficients[static_cast<Eigen::Index>(i) + 1] * (x - linear_means[i]);
  }
  throw ValidationError("GAM has no one-dimensional term for '" + std::string(column) + "'");
}

bool GamFit::extrapolates(std::string_view column, double x) const {
  for (const auto& s : smooths) {
    if (s.spec().columns.size() == 1 && s.spec().columns[0] == column) return s.extrapolates(x);
  }
  const auto it = std::find(spec.linear.begin(), spec.linear.end(), column);
  if (it != spec.linear.end()) {
    const auto i = static_cast<std::size_t>(it - spec.linear.begin());
    return x < linear_min[i] || x > linear_max[i];
  }
  throw ValidationError("GAM has no one-dimensional term for '" + std::string(column) + "'");
}

Eigen::VectorXd GamFit::smooth_contribution(std::string_view label, const Design& design,
                                            std::span<const Eigen::Index> rows) const {
  std::vector<Eigen::Index> every;
  if (rows.empty()) {
    every = all_rows(design);
    rows = every;
  }
  for (std::size_t i = 0; i < smooths.size(); ++i) {
    if (smooths[i].label() == label) {
      return smooths[i].design(design, rows) * coefficients.segment(terms[i].offset, terms[i].size);
    }
  }
  throw ValidationError("GAM has no smooth term '" + std::string(label) + "'");
}

GamFit fit_gam(const Design& design, const GamSpec& spec, std::span<const Eigen::Index> rows,
               const GamOptions& options) {
  spec.validate(design);
  std::vector<Eigen::Index> every;
  if (rows.empty()) {
    every = all_rows(design);
    rows = every;
  }
  GamFit fit;
  fit.spec = spec;
  for (const auto& s : spec.smooths) fit.smooths.push_back(SmoothTerm::build(design, rows, s));

  Eigen::Index p = 1 + static_cast<Eigen::Index>(spec.linear.size());
  for (const auto& s : fit.smooths) p += s.size();
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n <= p) {
    throw ValidationError("GAM needs more rows than coefficients: n = " + std::to_string(n) +
                          ", p = " + std::to_string(p));
  }
  fit.coefficients = Eigen::VectorXd::Zero(p);
  const Eigen::MatrixXd X = fit.model_matrix(design, rows);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = design.y[rows[static_cast<std::size_t>(i)]];
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;

  for (std::size_t i = 0; i < spec.linear.size(); ++i) {
    const auto col = X.col(static_cast<Eigen::Index>(i) + 1);
    fit.linear_means.push_back(col.mean());
    fit.linear_min.push_back(col.minCoeff());
    fit.linear_max.push_back(col.maxCoeff());
  }

  // Penalties embedded in the full coefficient vector, scaled so that
  // lambda = 1 is comparable across terms.
  std::vector<Eigen::MatrixXd> penalties;
  Eigen::Index offset = 1 + static_cast<Eigen::Index>(spec.linear.size());
  for (const auto& s : fit.smooths) {
    GamTermSummary summary;
    summary.label = s.label();
    summary.offset = offset;
    summary.size = s.size();
    const double ma_xx = std::pow(inf_norm(X.middleCols(offset, s.size())), 2);
    for (const auto& S : s.penalties()) {
      const double norm = one_norm(S);
      const double scale = norm > 0 ? ma_xx / norm : 1.0;
      Eigen::MatrixXd full = Eigen::MatrixXd::Zero(p, p);
      full.block(offset, offset, s.size(), s.size()) = scale * S;
      penalties.push_back(std::move(full));
      fit.penalty_scales.push_back(scale);
    }
    fit.terms.push_back(std::move(summary));
    offset += s.size();
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  const Eigen::VectorXd xty = X.transpose() * yc;
  const PenalizedLeastSquares<double> pls(gram, xty, yc.squaredNorm(), n, std::move(penalties));

  PenalizedLeastSquares<double>::Solution solution;
  if (options.fixed_lambdas) {
    if (options.fixed_lambdas->size() != pls.penalty_count()) {
      throw ValidationError("fixed_lambdas needs " + std::to_string(pls.penalty_count()) + " values, got " +
                            std::to_string(options.fixed_lambdas->size()));
    }
    for (const double l : *options.fixed_lambdas) {
      if (!(l >= 0)) throw ValidationError("smoothing parameters must be non-negative");
    }
    solution = pls.solve(*options.fixed_lambdas);
  } else {
    solution = pls.select_gcv(options.grid);
  }
  if (!std::isfinite(solution.gcv)) throw NumericError("GCV score is not finite (edf >= n)");

  fit.coefficients = solution.coefficients;
  fit.coefficients[0] += y_mean;
  fit.lambdas = solution.lambdas;
  fit.gcv_score = solution.gcv;
  fit.rss = solution.rss;
  fit.edf = solution.edf;
  fit.n_train = n;
  fit.sigma2 = floor_sigma2(solution.rss / (static_cast<double>(n) - solution.edf), y.squaredNorm() / n);
  std::size_t penalty = 0;
  for (std::size_t i = 0; i < fit.terms.size(); ++i) {
    auto& t = fit.terms[i];
    t.edf = solution.edf_diagonal.segment(t.offset, t.size).sum() + 1.0;
    for (std::size_t j = 0; j < fit.smooths[i].penalties().size(); ++j) t.lambdas.push_back(fit.lambdas[penalty++]);
  }
  fit.per_obs_llh = gaussian_llh((y - X * fit.coefficients).eval(), fit.sigma2);
  return fit;
}

GamFit fit_linear_control(const Design& design, std::span<const Eigen::Index> rows, const GamOptions& options) {
  return fit_gam(design, linear_control_gam_spec(), rows, options);
}

Eigen::VectorXd heldout_llh(const GamFit& fit, const Design& design, std::span<const Eigen::Index> rows) {
  std::vector<Eigen::Index> every;
  if (rows.empty()) {
    every = all_rows(design);
    rows = every;
  }
  const Eigen::VectorXd predicted = fit.predict(design, rows);
  Eigen::VectorXd residual(predicted.size());
  for (Eigen::Index i = 0; i < predicted.size(); ++i) {
    residual[i] = design.y[rows[static_cast<std::size_t>(i)]] - predicted[i];
  }
  return gaussian_llh(residual, fit.sigma2);
}

std::vector<double> default_surprisal_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(0.5 * i);
  return grid;
}

Curve predict_curve(std::span<const GamFit> fits, const std::string& column, std::span<const double> grid) {
  if (fits.empty()) throw ValidationError("predict_curve needs at least one fit");
  std::vector<double> default_grid;
  if (grid.empty()) {
    default_grid = default_surprisal_grid();
    grid = default_grid;
  }
  Curve curve;
  curve.column = column;
  const auto& linear = fits.front().spec.linear;
  curve.term = (std::find(linear.begin(), linear.end(), column) != linear.end() ? "linear(" : "s(") + column + ")";
  std::vector<double> values(fits.size());
  for (const double x : grid) {
    CurvePoint point;
    point.surprisal = x;
    for (std::size_t f = 0; f < fits.size(); ++f) {
      values[f] = fits[f].partial_effect(column, x);
      point.extrapolated = point.extrapolated || fits[f].extrapolates(column, x);
    }
    point.fit_ms = mean(values);
    point.lo = percentile(values, 0.025);
    point.hi = percentile(values, 0.975);
    curve.points.push_back(point);
  }
  return curve;
}

Histogram density_histogram(std::span<const double> values, double lo, double hi, int bins) {
  if (!(hi > lo) || bins < 1) throw ValidationError("histogram needs hi > lo and bins >= 1");
  Histogram h;
  const double width = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + width * i);
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (const double v : values) {
    if (v < lo) {
      ++h.below;
    } else if (v > hi) {
      ++h.above;
    } else {
      const auto b = std::min(static_cast<int>((v - lo) / width), bins - 1);
      ++counts[static_cast<std::size_t>(b)];
    }
  }
  const double total = values.empty() ? 1.0 : static_cast<double>(values.size());
  for (const auto c : counts) h.density.push_back(static_cast<double>(c) / (total * width));
  return h;
}

LinearityResult linearity_dllh(const Design& design, const LinearityOptions& options) {
  const auto nonlinear = nonlinear_gam_spec(options.k_surprisal, options.k_tensor);
  const auto linear = linear_control_gam_spec(options.k_tensor);
  const auto baseline = tensor_baseline_gam_spec(options.k_tensor);
  nonlinear.validate(design);
  linear.validate(design);

  const auto n = static_cast<std::size_t>(design.rows());
  const auto folds = assign_folds(n, options.k, options.seed);
  Eigen::VectorXd llh_nl(static_cast<Eigen::Index>(n)), llh_lin(static_cast<Eigen::Index>(n)),
      llh_base(static_cast<Eigen::Index>(n));
  LinearityResult result;
  std::vector<Eigen::Index> train, test;
  for (int f = 0; f < options.k; ++f) {
    train.clear();
    test.clear();
    for (std::size_t i = 0; i < n; ++i) (folds[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
    auto fit_nl = fit_gam(design, nonlinear, train, options.gam);
    auto fit_lin = fit_gam(design, linear, train, options.gam);
    const auto fit_base = fit_gam(design, baseline, train, options.gam);
    const auto a = heldout_llh(fit_nl, design, test);
    const auto b = heldout_llh(fit_lin, design, test);
    const auto c = heldout_llh(fit_base, design, test);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto r = test[i];
      const auto j = static_cast<Eigen::Index>(i);
      llh_nl[r] = a[j];
      llh_lin[r] = b[j];
      llh_base[r] = c[j];
    }
    result.nonlinear_fits.push_back(std::move(fit_nl));
    result.linear_fits.push_back(std::move(fit_lin));
  }

  CrossValOptions cv;
  cv.k = options.k;
  cv.seed = options.seed;
  cv.n_perm = options.n_perm;
  result.nonlinear = summarize_dllh(llh_nl, llh_base, folds, options.k, cv, "nonlinear vs tensor baseline");
  result.linear = summarize_dllh(llh_lin, llh_base, folds, options.k, cv, "linear vs tensor baseline");
  const Eigen::VectorXd diff = llh_nl - llh_lin;
  const std::span<const double> d(diff.data(), n);
  result.comparison = paired_permutation(d, options.n_perm, comparison_seed(options.seed), 1, Alternative::greater);
  result.comparison_two_sided = paired_permutation(d, options.n_perm, comparison_seed(options.seed));
  return result;
}

}  // namespace rtpower
