#pragma once

// Linear reading-time regressions, held-out Gaussian log-likelihood and
// cross-validated delta log-likelihood (Δllh) between a target and a
// baseline predictor set.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtpower/predictors.hpp"
#include "rtpower/stats.hpp"

namespace rtpower {

inline constexpr std::string_view kIntercept = "(intercept)";

struct RegressionSpec {
  std::vector<std::string> predictors;  // an intercept is always added

  // Throws ValidationError for duplicates or names missing from `design`.
  void validate(const Design& design) const;
};

struct FitResult {
  std::vector<std::string> names;  // "(intercept)" first, then the predictors
  Eigen::VectorXd coefficients;    // ms per predictor unit
  Eigen::VectorXd std_errors;
  double sigma2 = 0.0;  // rss / (n - p) on the training rows
  double rss = 0.0;
  Eigen::Index n_train = 0;

  double coefficient(std::string_view name) const;
  double std_error(std::string_view name) const;
  std::map<std::string, double> coefficient_map() const;
  // Fitted values for all rows of `design` (columns looked up by name).
  Eigen::VectorXd predict(const Design& design) const;
  Eigen::VectorXd predict(const Design& design, std::span<const Eigen::Index> rows) const;
};

// Ordinary least squares on the given rows (all rows when empty). Throws
// ValidationError when n <= p + 1 and NumericError naming the collinear
// columns when the design is rank deficient.
FitResult fit_ols(const Design& design, const RegressionSpec& spec, std::span<const Eigen::Index> rows = {});

// Per-observation log-likelihood (nats) of `rows` under `fit`, using the
// training-fold sigma2.
Eigen::VectorXd heldout_llh(const FitResult& fit, const Design& design, std::span<const Eigen::Index> rows = {});

// Fold id in [0, k) per row: rows are shuffled with `seed` and dealt round
// robin. With `strata`, each stratum (in sorted order) is shuffled and dealt
// separately, continuing the round robin, so every fold gets its share of
// every stratum. Throws ValidationError unless 2 <= k <= n.
std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed,
                              std::span<const std::string> strata = {});

enum class CiMethod { t_over_folds, observation_bootstrap };
enum class PermutationUnit { observation, fold };

struct CrossValOptions {
  int k = 10;
  std::uint64_t seed = 0;
  std::size_t n_perm = 10000;
  bool stratify_by_language = false;
  CiMethod ci = CiMethod::t_over_folds;
  PermutationUnit permutation_unit = PermutationUnit::observation;
  std::size_t n_boot = 2000;
};

struct DllhReport {
  std::string comparison_id;
  double mean_dllh = 0.0;  // nats per word
  std::vector<double> fold_means;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
  std::size_t n_obs = 0;
  std::size_t n_perm = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd per_obs_dllh;  // aligned to design rows
  std::vector<int> folds;
  std::vector<FitResult> target_fits;  // one per fold
  std::vector<FitResult> baseline_fits;
};

// Summarises aligned per-observation log-likelihoods of two models into a
// report (fold means, CI, permutation p). Shared with the GAM comparisons.
DllhReport summarize_dllh(const Eigen::VectorXd& target_llh, const Eigen::VectorXd& baseline_llh,
                          std::span<const int> folds, int k, const CrossValOptions& options,
                          const std::string& comparison_id);

DllhReport crossval_dllh(const Design& design, const RegressionSpec& target, const RegressionSpec& baseline,
                         const CrossValOptions& options, const std::string& comparison_id = "");

enum class Scenario { surprisal, entropy_replace, entropy_add };
std::string to_string(Scenario scenario);
Scenario parse_scenario(std::string_view name);

struct ScenarioSpecs {
  RegressionSpec target;
  RegressionSpec baseline;
};

// surprisal:        baseline = frequency + length, target adds surprisal
// entropy_replace:  baseline = frequency + length + surprisal, target swaps
//                   surprisal for entropy
// entropy_add:      same baseline, target adds entropy
// Each kind enters for every regressor word present in the design.
ScenarioSpecs scenario_specs(Scenario scenario, const Design& design);

DllhReport run_scenario(Scenario scenario, const Design& design, const CrossValOptions& options);

// All design columns, i.e. the full coefficient model.
RegressionSpec full_spec(const Design& design);

// Pooled multi-language design: per-language intercept dummies (`lang@xx`,
// first language is the reference) and per-language slopes (`column@xx`).
struct PooledDesign {
  Design design;
  std::vector<std::string> languages;
  std::vector<std::string> columns;  // the original predictor columns
  std::vector<std::string> warnings;
};

// Languages with too few rows for their own slopes are dropped with a
// warning.
PooledDesign pool_designs(std::span<const Design> designs, std::size_t min_rows_per_language = 0);
RegressionSpec pooled_spec(const RegressionSpec& spec, std::span<const std::string> languages);
std::string pooled_column(const std::string& column, const std::string& language);

// Fits the pooled model. A single language throws ValidationError unless
// `allow_single_language`, in which case it reduces to fit_ols.
FitResult pooled_fit(std::span<const Design> designs, const RegressionSpec& spec,
                     bool allow_single_language = false, std::vector<std::string>* warnings = nullptr);

}  // namespace rtpower
