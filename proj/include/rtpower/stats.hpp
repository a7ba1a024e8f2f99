#pragma once

// Significance machinery: sign-flip paired permutation tests, fold and
// bootstrap confidence intervals, Pearson correlation.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rtpower {

struct PermutationResult {
  double statistic = 0.0;  // mean of the paired differences
  double p_value = 1.0;
  std::size_t n_perm = 0;
  std::uint64_t seed = 0;
};

enum class Alternative { two_sided, greater, less };

// Sign-flip test of mean(differences) = 0. Two-sided:
//   p = (1 + #{|flipped mean| >= |observed mean|}) / (n_perm + 1);
// `greater` counts flipped means >= the observed one, `less` <=.
// Flips are drawn in fixed-size batches, batch b from substream b of `seed`,
// so the result does not depend on `threads`.
PermutationResult paired_permutation(std::span<const double> differences, std::size_t n_perm = 10000,
                                     std::uint64_t seed = 0, unsigned threads = 1,
                                     Alternative alternative = Alternative::two_sided);

// Paired test between two models scored on the same observations. The shared
// baseline cancels out of the Δllh difference, so it is only checked for
// alignment (pass an empty span to skip).
PermutationResult two_sample_dllh_permutation(std::span<const double> llh_a, std::span<const double> llh_b,
                                              std::span<const double> baseline_llh, std::size_t n_perm = 10000,
                                              std::uint64_t seed = 0);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// mean ± t_{(1+level)/2, k-1} · sd / sqrt(k).
Interval fold_ci(std::span<const double> fold_means, double level = 0.95);

// Percentile interval of the mean under resampling observations.
Interval bootstrap_ci(std::span<const double> values, std::size_t n_boot = 2000, std::uint64_t seed = 0,
                      double level = 0.95);

// Two-sided Student-t quantile helper, exposed for reports and tests.
double student_t_quantile(double probability, double df);

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Pearson r with a two-sided p from t = r sqrt(n-2) / sqrt(1-r^2).
// Throws ValidationError for n < 3 or a constant margin.
Correlation pearson(std::span<const double> x, std::span<const double> y);

struct LanguagePoint {
  std::string language;
  double dllh = 0.0;
  double perplexity = 0.0;
};

struct FamilyPoint {
  std::string family;
  double dllh = 0.0;
  double perplexity = 0.0;
  std::size_t n_languages = 0;
};

// Unweighted within-family means. Languages missing from `family_of` form
// their own family.
std::vector<FamilyPoint> family_means(std::span<const LanguagePoint> points,
                                      const std::map<std::string, std::string>& family_of);

double mean(std::span<const double> values);
double sample_sd(std::span<const double> values);
double percentile(std::vector<double> values, double q);  // linear interpolation, q in [0, 1]

}  // namespace rtpower
