#include "rtpower/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "rtpower/errors.hpp"
#include "rtpower/random.hpp"

namespace rtpower {

namespace {

constexpr std::size_t kBatch = 1024;

// Number of flipped sums in [first, last) batches at least as extreme as the
// observed one.
std::size_t count_extreme(std::span<const double> d, double total, double tolerance, Alternative alternative,
                          std::uint64_t seed, std::size_t n_perm, std::size_t first_batch, std::size_t last_batch) {
  std::size_t hits = 0;
  const std::size_t n = d.size();
  for (std::size_t b = first_batch; b < last_batch; ++b) {
    auto rng = make_rng(seed, b);
    const std::size_t begin = b * kBatch;
    const std::size_t end = std::min(n_perm, begin + kBatch);
    for (std::size_t perm = begin; perm < end; ++perm) {
      // Flipping the observations in set F gives total - 2 * sum_F(d).
      double flipped = 0.0;
      std::size_t i = 0;
      while (i < n) {
        std::uint64_t bits = rng();
        const std::size_t stop = std::min(n, i + 64);
        for (; i < stop; ++i, bits >>= 1) {
          if (bits & 1U) flipped += d[i];
        }
      }
      const double sum = total - 2.0 * flipped;
      switch (alternative) {
        case Alternative::two_sided: hits += std::abs(sum) >= std::abs(total) - tolerance; break;
        case Alternative::greater: hits += sum >= total - tolerance; break;
        case Alternative::less: hits += sum <= total + tolerance; break;
      }
    }
  }
  return hits;
}

}  // namespace

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (const double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PermutationResult paired_permutation(std::span<const double> differences, std::size_t n_perm, std::uint64_t seed,
                                     unsigned threads, Alternative alternative) {
  PermutationResult result;
  result.n_perm = n_perm;
  result.seed = seed;
  for (const double v : differences) {
    if (!std::isfinite(v)) throw ValidationError("paired permutation: non-finite difference");
  }
  if (differences.empty()) return result;
  const double total = std::accumulate(differences.begin(), differences.end(), 0.0);
  result.statistic = total / static_cast<double>(differences.size());
  if (n_perm == 0) return result;

  // Sums that differ from |total| only by rounding count as ties.
  double scale = 0.0;
  for (const double v : differences) scale += std::abs(v);
  const double tolerance = 1e-12 * scale;

  const std::size_t n_batches = (n_perm + kBatch - 1) / kBatch;
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(n_batches)));
  std::size_t hits = 0;
  if (threads == 1) {
    hits = count_extreme(differences, total, tolerance, alternative, seed, n_perm, 0, n_batches);
  } else {
    std::vector<std::size_t> partial(threads, 0);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t first = n_batches * t / threads;
      const std::size_t last = n_batches * (t + 1) / threads;
      pool.emplace_back([&, t, first, last] {
        partial[t] = count_extreme(differences, total, tolerance, alternative, seed, n_perm, first, last);
      });
    }
    for (auto& th : pool) th.join();
    hits = std::accumulate(partial.begin(), partial.end(), std::size_t{0});
  }
  result.p_value = static_cast<double>(1 + hits) / static_cast<double>(n_perm + 1);
  return result;
}

PermutationResult two_sample_dllh_permutation(std::span<const double> llh_a, std::span<const double> llh_b,
                                              std::span<const double> baseline_llh, std::size_t n_perm,
                                              std::uint64_t seed) {
  if (llh_a.size() != llh_b.size() || (!baseline_llh.empty() && baseline_llh.size() != llh_a.size())) {
    throw ValidationError("two-sample permutation: log-likelihood vectors are not aligned");
  }
  std::vector<double> diff(llh_a.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = llh_a[i] - llh_b[i];
  return paired_permutation(diff, n_perm, seed);
}

double student_t_quantile(double probability, double df) {
  boost::math::students_t dist(df);
  return boost::math::quantile(dist, probability);
}

Interval fold_ci(std::span<const double> fold_means, double level) {
  if (fold_means.size() < 2) throw ValidationError("fold_ci needs at least 2 folds");
  const double m = mean(fold_means);
  const double sd = sample_sd(fold_means);
  const auto k = static_cast<double>(fold_means.size());
  const double half = student_t_quantile(0.5 + level / 2.0, k - 1.0) * sd / std::sqrt(k);
  return {m - half, m + half};
}

Interval bootstrap_ci(std::span<const double> values, std::size_t n_boot, std::uint64_t seed, double level) {
  if (values.size() < 2) throw ValidationError("bootstrap_ci needs at least 2 values");
  auto rng = make_rng(seed, 0xB007);
  std::vector<double> means;
  means.reserve(n_boot);
  const auto n = values.size();
  for (std::size_t b = 0; b < n_boot; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[static_cast<std::size_t>(uniform_index(rng, n))];
    means.push_back(s / static_cast<double>(n));
  }
  const double alpha = 1.0 - level;
  return {percentile(means, alpha / 2.0), percentile(means, 1.0 - alpha / 2.0)};
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: margins differ in length");
  if (x.size() < 3) throw ValidationError("pearson needs at least 3 pairs");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw ValidationError("pearson: zero variance in a margin");
  Correlation c;
  c.n = x.size();
  c.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(c.n) - 2.0;
  if (std::abs(c.rho) >= 1.0) {
    c.p_value = 0.0;
  } else {
    const double t = c.rho * std::sqrt(df / (1.0 - c.rho * c.rho));
    boost::math::students_t dist(df);
    c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

std::vector<FamilyPoint> family_means(std::span<const LanguagePoint> points,
                                      const std::map<std::string, std::string>& family_of) {
  std::map<std::string, FamilyPoint> acc;
  for (const auto& p : points) {
    const auto it = family_of.find(p.language);
    const std::string family = it == family_of.end() ? p.language : it->second;
    auto& f = acc[family];
    f.family = family;
    f.dllh += p.dllh;
    f.perplexity += p.perplexity;
    ++f.n_languages;
  }
  std::vector<FamilyPoint> out;
  for (auto& [name, f] : acc) {
    f.dllh /= static_cast<double>(f.n_languages);
    f.perplexity /= static_cast<double>(f.n_languages);
    out.push_back(f);
  }
  return out;
}

}  // namespace rtpower
