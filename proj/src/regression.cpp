#include "rtpower/regression.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "rtpower/errors.hpp"
#include "rtpower/ols.hpp"
#include "rtpower/random.hpp"

namespace rtpower {

void RegressionSpec::validate(const Design& design) const {
  std::set<std::string> seen;
  for (const auto& name : predictors) {
    if (!seen.insert(name).second) throw ValidationError("duplicate predictor '" + name + "'");
    if (!design.has_column(name)) throw ValidationError("predictor '" + name + "' is not a design column");
  }
}

double FitResult::coefficient(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("fit has no coefficient '" + std::string(name) + "'");
  return coefficients[it - names.begin()];
}

double FitResult::std_error(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("fit has no coefficient '" + std::string(name) + "'");
  return std_errors[it - names.begin()];
}

std::map<std::string, double> FitResult::coefficient_map() const {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = coefficients[static_cast<Eigen::Index>(i)];
  return out;
}

namespace {

std::vector<Eigen::Index> all_rows(const Design& design) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(design.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

Eigen::MatrixXd model_matrix(const Design& design, std::span<const std::string> predictors,
                             std::span<const Eigen::Index> rows) {
  std::vector<Eigen::Index> cols;
  cols.reserve(predictors.size());
  for (const auto& name : predictors) cols.push_back(design.column(name));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()) + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    for (std::size_t c = 0; c < cols.size(); ++c) X(r, static_cast<Eigen::Index>(c) + 1) = design.X(rows[i], cols[c]);
  }
  return X;
}

// sigma2 is floored so that an exact fit still yields finite likelihoods.
double floor_sigma2(double sigma2, const Eigen::VectorXd& y) {
  const double scale = y.size() > 0 ? y.squaredNorm() / static_cast<double>(y.size()) : 1.0;
  return std::max(sigma2, 1e-24 * (scale + 1.0));
}

std::uint64_t permutation_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x7065726d75746531ULL); }

}  // namespace

Eigen::VectorXd FitResult::predict(const Design& design) const {
  const auto rows = all_rows(design);
  return predict(design, rows);
}

Eigen::VectorXd FitResult::predict(const Design& design, std::span<const Eigen::Index> rows) const {
  const std::span<const std::string> predictors(names.data() + 1, names.size() - 1);
  return model_matrix(design, predictors, rows) * coefficients;
}

FitResult fit_ols(const Design& design, const RegressionSpec& spec, std::span<const Eigen::Index> rows) {
  spec.validate(design);
  std::vector<Eigen::Index> every;
  if (rows.empty()) {
    every = all_rows(design);
    rows = every;
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(spec.predictors.size()) + 1;
  if (n <= p) {
    throw ValidationError("OLS needs more rows than coefficients: n = " + std::to_string(n) +
                          ", p = " + std::to_string(p));
  }
  const Eigen::MatrixXd X = model_matrix(design, spec.predictors, rows);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = design.y[rows[static_cast<std::size_t>(i)]];

  const auto solution = solve_least_squares(X, y);
  FitResult fit;
  fit.names.emplace_back(kIntercept);
  fit.names.insert(fit.names.end(), spec.predictors.begin(), spec.predictors.end());
  if (!solution.full_rank()) {
    std::string cols;
    for (const auto c : solution.dependent_columns) cols += (cols.empty() ? "" : ", ") + fit.names[static_cast<std::size_t>(c)];
    throw NumericError("design matrix is rank deficient (rank " + std::to_string(solution.rank) + " of " +
                       std::to_string(p) + "); collinear column(s): " + cols);
  }
  fit.coefficients = solution.coefficients;
  fit.std_errors = solution.std_errors;
  fit.rss = solution.rss;
  fit.sigma2 = floor_sigma2(solution.sigma2, y);
  fit.n_train = n;
  return fit;
}

Eigen::VectorXd heldout_llh(const FitResult& fit, const Design& design, std::span<const Eigen::Index> rows) {
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

std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed, std::span<const std::string> strata) {
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    throw ValidationError("fold count k = " + std::to_string(k) + " must satisfy 2 <= k <= n = " + std::to_string(n));
  }
  if (!strata.empty() && strata.size() != n) throw ValidationError("strata must label every row");
  std::vector<int> folds(n, 0);
  std::map<std::string, std::vector<std::size_t>> groups;
  if (strata.empty()) {
    auto& g = groups[""];
    g.resize(n);
    std::iota(g.begin(), g.end(), std::size_t{0});
  } else {
    for (std::size_t i = 0; i < n; ++i) groups[strata[i]].push_back(i);
  }
  std::size_t dealt = 0;
  std::uint64_t stream = 0;
  for (auto& [name, members] : groups) {
    auto rng = make_rng(seed, stream++);
    shuffle(std::span<std::size_t>(members), rng);
    for (const auto idx : members) folds[idx] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  }
  return folds;
}

DllhReport summarize_dllh(const Eigen::VectorXd& target_llh, const Eigen::VectorXd& baseline_llh,
                          std::span<const int> folds, int k, const CrossValOptions& options,
                          const std::string& comparison_id) {
  if (target_llh.size() != baseline_llh.size() || static_cast<std::size_t>(target_llh.size()) != folds.size()) {
    throw ValidationError("summarize_dllh: misaligned inputs");
  }
  DllhReport report;
  report.comparison_id = comparison_id;
  report.per_obs_dllh = target_llh - baseline_llh;
  report.n_obs = static_cast<std::size_t>(report.per_obs_dllh.size());
  report.mean_dllh = report.per_obs_dllh.mean();
  report.folds.assign(folds.begin(), folds.end());
  report.seed = options.seed;
  report.n_perm = options.n_perm;

  std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    sums[static_cast<std::size_t>(folds[i])] += report.per_obs_dllh[static_cast<Eigen::Index>(i)];
    ++counts[static_cast<std::size_t>(folds[i])];
  }
  for (int f = 0; f < k; ++f) {
    const auto c = counts[static_cast<std::size_t>(f)];
    report.fold_means.push_back(c ? sums[static_cast<std::size_t>(f)] / static_cast<double>(c) : 0.0);
  }

  const std::span<const double> diffs(report.per_obs_dllh.data(), report.n_obs);
  const auto ci = options.ci == CiMethod::t_over_folds ? fold_ci(report.fold_means)
                                                       : bootstrap_ci(diffs, options.n_boot, options.seed);
  report.ci_lo = ci.lo;
  report.ci_hi = ci.hi;
  const auto perm = options.permutation_unit == PermutationUnit::observation
                        ? paired_permutation(diffs, options.n_perm, permutation_seed(options.seed))
                        : paired_permutation(report.fold_means, options.n_perm, permutation_seed(options.seed));
  report.p_value = perm.p_value;
  return report;
}

DllhReport crossval_dllh(const Design& design, const RegressionSpec& target, const RegressionSpec& baseline,
                         const CrossValOptions& options, const std::string& comparison_id) {
  target.validate(design);
  baseline.validate(design);
  const auto n = static_cast<std::size_t>(design.rows());
  std::vector<std::string> strata;
  if (options.stratify_by_language) {
    for (const auto& key : design.keys) strata.push_back(key.language);
  }
  const auto folds = assign_folds(n, options.k, options.seed, strata);

  Eigen::VectorXd llh_target(static_cast<Eigen::Index>(n));
  Eigen::VectorXd llh_base(static_cast<Eigen::Index>(n));
  std::vector<FitResult> target_fits, baseline_fits;
  std::vector<Eigen::Index> train, test;
  for (int f = 0; f < options.k; ++f) {
    train.clear();
    test.clear();
    for (std::size_t i = 0; i < n; ++i) (folds[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
    auto fit_t = fit_ols(design, target, train);
    auto fit_b = fit_ols(design, baseline, train);
    const auto lt = heldout_llh(fit_t, design, test);
    const auto lb = heldout_llh(fit_b, design, test);
    for (std::size_t i = 0; i < test.size(); ++i) {
      llh_target[test[i]] = lt[static_cast<Eigen::Index>(i)];
      llh_base[test[i]] = lb[static_cast<Eigen::Index>(i)];
    }
    target_fits.push_back(std::move(fit_t));
    baseline_fits.push_back(std::move(fit_b));
  }
  const std::string id = comparison_id.empty() ? "target vs baseline" : comparison_id;
  auto report = summarize_dllh(llh_target, llh_base, folds, options.k, options, id);
  report.target_fits = std::move(target_fits);
  report.baseline_fits = std::move(baseline_fits);
  return report;
}

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::surprisal: return "surprisal";
    case Scenario::entropy_replace: return "entropy_replace";
    case Scenario::entropy_add: return "entropy_add";
  }
  return "unknown";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "surprisal") return Scenario::surprisal;
  if (name == "entropy_replace" || name == "replace") return Scenario::entropy_replace;
  if (name == "entropy_add" || name == "add") return Scenario::entropy_add;
  throw ValidationError("unknown scenario '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> columns_of(const Design& design, std::initializer_list<PredictorKind> kinds) {
  std::vector<std::string> out;
  for (int lag = 0; lag < kRegressorWords; ++lag) {
    for (const auto kind : kinds) {
      const auto name = column_name(kind, lag);
      if (design.has_column(name)) out.push_back(name);
    }
  }
  return out;
}

}  // namespace

ScenarioSpecs scenario_specs(Scenario scenario, const Design& design) {
  using K = PredictorKind;
  if (columns_of(design, {K::surprisal}).empty()) throw ValidationError("design has no surprisal columns");
  if (scenario != Scenario::surprisal && columns_of(design, {K::entropy}).empty()) {
    throw ValidationError("scenario " + to_string(scenario) + " needs entropy columns");
  }
  ScenarioSpecs specs;
  switch (scenario) {
    case Scenario::surprisal:
      specs.baseline.predictors = columns_of(design, {K::frequency, K::length});
      specs.target.predictors = columns_of(design, {K::surprisal, K::frequency, K::length});
      break;
    case Scenario::entropy_replace:
      specs.baseline.predictors = columns_of(design, {K::surprisal, K::frequency, K::length});
      specs.target.predictors = columns_of(design, {K::entropy, K::frequency, K::length});
      break;
    case Scenario::entropy_add:
      specs.baseline.predictors = columns_of(design, {K::surprisal, K::frequency, K::length});
      specs.target.predictors = columns_of(design, {K::surprisal, K::entropy, K::frequency, K::length});
      break;
  }
  return specs;
}

DllhReport run_scenario(Scenario scenario, const Design& design, const CrossValOptions& options) {
  const auto specs = scenario_specs(scenario, design);
  return crossval_dllh(design, specs.target, specs.baseline, options, to_string(scenario));
}

RegressionSpec full_spec(const Design& design) { return RegressionSpec{design.columns}; }

std::string pooled_column(const std::string& column, const std::string& language) {
  return column + "@" + language;
}

PooledDesign pool_designs(std::span<const Design> designs, std::size_t min_rows_per_language) {
  PooledDesign out;
  const Design all = concat_designs(designs);
  out.columns = all.columns;
  const std::size_t needed = min_rows_per_language ? min_rows_per_language : all.columns.size() + 2;
  std::map<std::string, std::size_t> counts;
  for (const auto& key : all.keys) ++counts[key.language];
  for (const auto& [lang, count] : counts) {
    if (count < needed) {
      out.warnings.push_back("language " + lang + " dropped from pooled fit: " + std::to_string(count) +
                             " rows, need " + std::to_string(needed));
    } else {
      out.languages.push_back(lang);
    }
  }
  std::map<std::string, std::size_t> lang_index;
  for (std::size_t i = 0; i < out.languages.size(); ++i) lang_index[out.languages[i]] = i;

  auto& d = out.design;
  d.metadata = all.metadata;
  d.metadata["pooled"] = "true";
  for (std::size_t l = 1; l < out.languages.size(); ++l) d.columns.push_back("lang@" + out.languages[l]);
  for (const auto& col : all.columns) {
    for (const auto& lang : out.languages) d.columns.push_back(pooled_column(col, lang));
  }
  std::vector<Eigen::Index> kept;
  for (Eigen::Index r = 0; r < all.rows(); ++r) {
    if (lang_index.contains(all.keys[static_cast<std::size_t>(r)].language)) kept.push_back(r);
  }
  const auto n_lang = static_cast<Eigen::Index>(out.languages.size());
  const auto n_dummy = std::max<Eigen::Index>(n_lang - 1, 0);
  d.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(d.columns.size()));
  d.y.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto r = kept[i];
    const auto row = static_cast<Eigen::Index>(i);
    const auto& key = all.keys[static_cast<std::size_t>(r)];
    const auto l = static_cast<Eigen::Index>(lang_index.at(key.language));
    if (l > 0) d.X(row, l - 1) = 1.0;
    for (Eigen::Index c = 0; c < all.X.cols(); ++c) d.X(row, n_dummy + c * n_lang + l) = all.X(r, c);
    d.y[row] = all.y[r];
    d.keys.push_back(key);
  }
  return out;
}

RegressionSpec pooled_spec(const RegressionSpec& spec, std::span<const std::string> languages) {
  RegressionSpec out;
  for (std::size_t l = 1; l < languages.size(); ++l) out.predictors.push_back("lang@" + languages[l]);
  for (const auto& col : spec.predictors) {
    for (const auto& lang : languages) out.predictors.push_back(pooled_column(col, lang));
  }
  return out;
}

FitResult pooled_fit(std::span<const Design> designs, const RegressionSpec& spec, bool allow_single_language,
                     std::vector<std::string>* warnings) {
  const Design all = concat_designs(designs);
  spec.validate(all);
  auto single = [&](const std::string& why) {
    if (!allow_single_language) throw ValidationError("pooled fit needs >= 2 languages: " + why);
    return fit_ols(all, spec);
  };
  if (all.languages().size() < 2) return single("only one language supplied");
  auto pooled = pool_designs(designs);
  if (warnings) warnings->insert(warnings->end(), pooled.warnings.begin(), pooled.warnings.end());
  if (pooled.languages.size() < 2) return single("only one language left after dropping small ones");
  return fit_ols(pooled.design, pooled_spec(spec, pooled.languages));
}

}  // namespace rtpower
