#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "rtpower/errors.hpp"
#include "rtpower/gam.hpp"
#include "rtpower/pls.hpp"
#include "rtpower/random.hpp"
#include "rtpower/spline.hpp"
#include "support/synthetic.hpp"

using namespace rtpower;

namespace {

using Spline = CubicRegressionSpline<double>;

Spline test_spline() {
  Eigen::VectorXd knots(6);
  knots << 0.0, 0.7, 1.5, 2.0, 3.6, 5.0;
  return Spline(knots);
}

GamSpec single_smooth(const std::string& column, int k = 6) { return GamSpec{{}, {SmoothSpec{{column}, k}}}; }

double rms(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

}  // namespace

TEST_CASE("cr penalty vanishes exactly on affine coefficient vectors") {
  const auto s = test_spline();
  const Eigen::VectorXd affine = (2.0 - 0.5 * s.knots().array()).matrix();
  CHECK(std::abs(affine.dot(s.penalty() * affine)) < 1e-12);
  Eigen::VectorXd bent = affine;
  bent[3] += 0.1;
  CHECK(bent.dot(s.penalty() * bent) > 1e-4);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.penalty());
  CHECK(std::abs(eig.eigenvalues()[0]) < 1e-10);
  CHECK(std::abs(eig.eigenvalues()[1]) < 1e-10);
  CHECK(eig.eigenvalues()[2] > 1e-6);
}

TEST_CASE("cr penalty equals the integral of the squared second derivative") {
  // f'' is piecewise linear between knots, so the integral is
  // sum_j h_j / 3 (d_j^2 + d_j d_{j+1} + d_{j+1}^2).
  const auto s = test_spline();
  Eigen::VectorXd beta(6);
  beta << 1.0, -0.4, 2.2, 0.3, 1.7, -1.0;
  const Eigen::VectorXd d = s.second_derivative_map() * beta;
  double integral = 0.0;
  for (int j = 0; j < 5; ++j) {
    const double h = s.knots()[j + 1] - s.knots()[j];
    integral += h / 3.0 * (d[j] * d[j] + d[j] * d[j + 1] + d[j + 1] * d[j + 1]);
  }
  CHECK(beta.dot(s.penalty() * beta) == doctest::Approx(integral).epsilon(1e-12));
  CHECK(d[0] == 0.0);
  CHECK(d[5] == 0.0);
}

TEST_CASE("cr basis interpolates at the knots and is C2 in between") {
  const auto s = test_spline();
  Eigen::VectorXd beta(6);
  for (int j = 0; j < 6; ++j) beta[j] = std::sin(1.3 * s.knots()[j]) + 0.2 * s.knots()[j];
  for (int j = 0; j < 6; ++j) CHECK(std::abs(s.basis_row(s.knots()[j]).dot(beta) - beta[j]) < 1e-10);
  auto f = [&](double x) { return s.basis_row(x).dot(beta); };
  const double e = 1e-4;
  for (int j = 1; j < 5; ++j) {
    const double x = s.knots()[j];
    const double left = (f(x) - 2 * f(x - e) + f(x - 2 * e)) / (e * e);
    const double right = (f(x + 2 * e) - 2 * f(x + e) + f(x)) / (e * e);
    CHECK(left == doctest::Approx(right).epsilon(1e-2));
    const double dl = (f(x) - f(x - e)) / e, dr = (f(x + e) - f(x)) / e;
    CHECK(dl == doctest::Approx(dr).epsilon(1e-3));
  }
}

TEST_CASE("cr basis reproduces straight lines everywhere, extrapolation included") {
  const auto s = test_spline();
  const Eigen::VectorXd line = (0.5 + 3.0 * s.knots().array()).matrix();
  for (const double x : {-2.0, 0.0, 0.33, 2.5, 4.99, 7.0}) {
    CHECK(s.basis_row(x).dot(line) == doctest::Approx(0.5 + 3.0 * x).epsilon(1e-12));
  }
  CHECK(s.extrapolates(-0.1));
  CHECK(s.extrapolates(5.1));
  CHECK_FALSE(s.extrapolates(2.0));
  CHECK(s.basis_row(1.1).sum() == doctest::Approx(1.0));
}

TEST_CASE("knots sit at evenly spaced quantiles") {
  std::vector<double> x(1000);
  for (int i = 0; i < 1000; ++i) x[static_cast<std::size_t>(i)] = i / 999.0;
  const auto s = Spline::from_data(x, 6);
  REQUIRE(s.size() == 6);
  for (int j = 0; j < 6; ++j) CHECK(s.knots()[j] == doctest::Approx(0.2 * j).epsilon(1e-12));
  const std::vector<double> few{1, 2, 2, 3, 3, 4};
  CHECK_THROWS_AS(Spline::from_data(few, 6), std::invalid_argument);
}

TEST_CASE("row tensor and kronecker agree") {
  Eigen::MatrixXd A(2, 2), B(2, 3);
  A << 1, 2, 3, 4;
  B << 5, 6, 7, 8, 9, 10;
  const auto T = row_tensor(A, B);
  CHECK(T.cols() == 6);
  CHECK(T(1, 4) == 4 * 9);
  const auto K = kronecker(A.row(1), B.row(1));
  CHECK((K.row(0) - T.row(1)).norm() == 0.0);
}

TEST_CASE("GCV choice is no worse than either end of the grid") {
  synthetic::Generator g;
  g.n = 1500;
  g.curvature = 0.1;
  const auto d = synthetic::make_design(g);
  std::vector<Eigen::Index> rows(1500);
  std::iota(rows.begin(), rows.end(), 0);
  const auto term = SmoothTerm::build(d, rows, SmoothSpec{{"surprisal_t"}, 6});
  Eigen::MatrixXd X(1500, 1 + term.size());
  X.col(0).setOnes();
  X.rightCols(term.size()) = term.design(d, rows);
  std::vector<Eigen::MatrixXd> S;
  Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  s0.bottomRightCorner(term.size(), term.size()) = term.penalties()[0];
  S.push_back(s0);
  const PenalizedLeastSquares<double> pls(X.transpose() * X, X.transpose() * d.y, d.y.squaredNorm(), 1500, S);
  const auto best = pls.select_gcv(GcvGrid{});
  const std::vector<double> lo{1e-3}, hi{1e6};
  CHECK(best.gcv <= pls.gcv_at(lo) + 1e-12);
  CHECK(best.gcv <= pls.gcv_at(hi) + 1e-12);
  CHECK(best.edf == doctest::Approx(best.edf_diagonal.sum()));
  CHECK(best.gcv == doctest::Approx(1500.0 * best.rss / ((1500.0 - best.edf) * (1500.0 - best.edf))));
  // Unpenalized fit reaches the full parameter count.
  CHECK(pls.solve(std::vector<double>{0.0}).edf == doctest::Approx(static_cast<double>(X.cols())).epsilon(1e-8));
}

TEST_CASE("smooth terms are centred over the training rows") {
  synthetic::Generator g;
  g.n = 2000;
  g.curvature = 0.15;
  const auto d = synthetic::make_design(g);
  std::vector<Eigen::Index> train;
  for (Eigen::Index i = 0; i < 2000; ++i) {
    if (i % 5) train.push_back(i);
  }
  const auto fit = fit_gam(d, nonlinear_gam_spec(), train);
  for (const auto& t : fit.terms) {
    const auto contribution = fit.smooth_contribution(t.label, d, train);
    CHECK(std::abs(contribution.mean()) < 1e-8);
  }
  CHECK(fit.terms.size() == 4);
  CHECK(fit.smooths[2].raw_size() == 25);
  CHECK(fit.smooths[2].size() == 24);
  CHECK(fit.smooths[2].penalties().size() == 2);
  for (const double l : fit.lambdas) CHECK(l > 0.0);
  CHECK(std::isfinite(fit.gcv_score));
}

TEST_CASE("a near-linear truth gives a smooth with about two degrees of freedom") {
  synthetic::Generator g;
  g.n = 3000;
  const auto d = synthetic::make_design(g);
  const auto fit = fit_gam(d, nonlinear_gam_spec());
  const auto& term = fit.term("s(surprisal_t)");
  CHECK(term.edf >= 2.0 - 1e-9);
  CHECK(term.edf < 2.6);
  const auto lin = fit_linear_control(d);
  CHECK(lin.linear_coefficient("surprisal_t") == doctest::Approx(3.75).epsilon(0.08));
}

TEST_CASE("a linear control recovers the generator slope") {
  synthetic::Generator g;
  g.n = 3000;
  g.slope_t = 3.0;
  g.seed = 5;
  const auto fit = fit_linear_control(synthetic::make_design(g));
  CHECK(fit.linear_coefficient("surprisal_t") == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("an infinite smoothing penalty collapses the smooth onto the linear control") {
  synthetic::Generator g;
  g.n = 2000;
  g.curvature = 0.1;
  const auto d = synthetic::make_design(g);
  GamOptions stiff;
  stiff.fixed_lambdas = std::vector<double>{1e12, 1e12, 10, 10, 10, 10};
  GamOptions tensor_only;
  tensor_only.fixed_lambdas = std::vector<double>{10, 10, 10, 10};
  const auto a = fit_gam(d, nonlinear_gam_spec(), {}, stiff);
  const auto b = fit_linear_control(d, {}, tensor_only);
  CHECK(rms(a.predict(d), b.predict(d)) < 0.1);
}

TEST_CASE("with equal shared penalties the smooth fits the training data at least as well") {
  synthetic::Generator g;
  g.n = 1500;
  g.curvature = 0.05;
  const auto d = synthetic::make_design(g);
  GamOptions free_smooth;
  free_smooth.fixed_lambdas = std::vector<double>{1e-2, 1e-2, 3, 3, 3, 3};
  GamOptions shared;
  shared.fixed_lambdas = std::vector<double>{3, 3, 3, 3};
  const auto a = fit_gam(d, nonlinear_gam_spec(), {}, free_smooth);
  const auto b = fit_linear_control(d, {}, shared);
  CHECK(a.rss <= b.rss);
}

TEST_CASE("the fitted curve follows a quadratic truth") {
  synthetic::Generator g;
  g.n = 5000;
  g.curvature = 0.15;
  const auto d = synthetic::make_design(g);
  const auto fit = fit_gam(d, nonlinear_gam_spec());
  // Compare shapes relative to x = 5 over the well-populated range.
  auto truth = [&](double x) { return g.slope_t * x + g.curvature * x * x; };
  double sq = 0.0;
  int n = 0;
  for (double x = 1.0; x <= 16.0; x += 0.5) {
    const double fitted = fit.partial_effect("surprisal_t", x) - fit.partial_effect("surprisal_t", 5.0);
    const double expected = truth(x) - truth(5.0);
    sq += (fitted - expected) * (fitted - expected);
    ++n;
  }
  CHECK(std::sqrt(sq / n) < g.noise_sd);
  CHECK(std::sqrt(sq / n) < 3.0);
}

TEST_CASE("curves: linear control is a straight line, identical folds give zero-width bands") {
  synthetic::Generator g;
  g.n = 1200;
  const auto d = synthetic::make_design(g);
  const auto lin = fit_linear_control(d);
  const std::vector<GamFit> same{lin, lin, lin};
  const auto curve = predict_curve(same, "surprisal_t");
  REQUIRE(curve.points.size() == 41);
  CHECK(curve.points.front().surprisal == 0.0);
  CHECK(curve.points.back().surprisal == 20.0);
  const double slope = lin.linear_coefficient("surprisal_t");
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    CHECK((curve.points[i].fit_ms - curve.points[i - 1].fit_ms) == doctest::Approx(0.5 * slope).epsilon(1e-9));
  }
  for (const auto& p : curve.points) {
    CHECK(p.lo == doctest::Approx(p.fit_ms));
    CHECK(p.hi == doctest::Approx(p.fit_ms));
  }
  CHECK(curve.points.front().extrapolated);

  const auto smooth = fit_gam(d, nonlinear_gam_spec());
  const std::vector<GamFit> fits{smooth};
  const auto sc = predict_curve(fits, "surprisal_t");
  CHECK(sc.term == "s(surprisal_t)");
  CHECK(sc.points.front().extrapolated == smooth.extrapolates("surprisal_t", 0.0));
  CHECK_THROWS_AS(predict_curve(fits, "length_t"), ValidationError);
}

TEST_CASE("density histogram") {
  const std::vector<double> v{-1.0, 0.1, 0.2, 0.7, 19.9, 25.0};
  const auto h = density_histogram(v);
  REQUIRE(h.edges.size() == 41);
  REQUIRE(h.density.size() == 40);
  CHECK(h.below == 1);
  CHECK(h.above == 1);
  double mass = 0.0;
  for (std::size_t b = 0; b < 40; ++b) mass += h.density[b] * (h.edges[b + 1] - h.edges[b]);
  CHECK(mass == doctest::Approx(4.0 / 6.0));
  CHECK(h.density[0] == doctest::Approx(2.0 / 6.0 / 0.5));
}

TEST_CASE("GAM validation") {
  synthetic::Generator g;
  g.n = 300;
  auto d = synthetic::make_design(g);
  CHECK_THROWS_AS(fit_gam(d, single_smooth("nope")), ValidationError);
  CHECK_THROWS_AS(fit_gam(d, GamSpec{{"surprisal_t"}, {SmoothSpec{{"surprisal_t"}, 6}}}), ValidationError);
  CHECK_THROWS_AS(fit_gam(d, GamSpec{{}, {SmoothSpec{{"a", "b", "c"}, 5}}}), ValidationError);
  d.X.col(d.column("length_t")).setConstant(3.0);
  CHECK_THROWS_AS(fit_gam(d, single_smooth("length_t")), ValidationError);
  std::vector<Eigen::Index> few{0, 1, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_AS(fit_gam(d, nonlinear_gam_spec(), few), ValidationError);
}

TEST_CASE("linearity comparison") {
  synthetic::Generator g;
  g.n = 3000;
  g.curvature = 0.4;
  LinearityOptions opt;
  opt.n_perm = 999;
  opt.seed = 3;
  const auto d = synthetic::make_design(g);
  const auto strong = linearity_dllh(d, opt);
  CHECK(strong.comparison.p_value < 0.01);
  CHECK(strong.comparison.statistic > 0.0);
  CHECK(strong.nonlinear.mean_dllh > strong.linear.mean_dllh);
  CHECK(strong.nonlinear_fits.size() == 10);
  CHECK(strong.nonlinear.fold_means.size() == 10);

  const Eigen::VectorXd& a = strong.nonlinear.per_obs_dllh;
  const std::vector<double> av(a.data(), a.data() + a.size());
  CHECK(two_sample_dllh_permutation(av, av, {}, 999, 1).p_value == 1.0);

  const auto again = linearity_dllh(d, opt);
  CHECK(again.comparison.p_value == strong.comparison.p_value);
  CHECK(again.nonlinear.mean_dllh == strong.nonlinear.mean_dllh);
}
