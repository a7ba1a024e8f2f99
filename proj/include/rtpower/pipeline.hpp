#pragma once

// End-to-end experiment: ingest, language model scoring, design assembly,
// Δllh scenarios, coefficients, GAM curves and the perplexity correlation,
// collected into a Bundle that the report module turns into files.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtpower/corpus.hpp"
#include "rtpower/gam.hpp"
#include "rtpower/ngram.hpp"
#include "rtpower/predictors.hpp"
#include "rtpower/regression.hpp"
#include "rtpower/stats.hpp"

namespace rtpower {

inline constexpr const char* kCacheEnv = "RTPOWER_CACHE_DIR";
inline constexpr const char* kBuiltinModelId = "kn-ngram";

// True for ISO 639-1 codes and the MECO file aliases (du, ge, gr, sp, ee, no).
bool is_known_language(std::string_view code);

struct LanguageInput {
  std::string code;
  std::string family;
  // Either raw fixations (ingested) or an already ingested word table.
  std::string fixations;
  std::string fixation_columns = "canonical";  // canonical | meco
  std::string words;
  // Optional TokenScore tables from external language models.
  std::vector<std::string> scores;
  // Built-in n-gram model: training corpus and optional held-out corpus for
  // its perplexity.
  std::string lm_corpus;
  std::string lm_heldout;
  // Frequency table; when empty, relative frequencies of lm_corpus are used.
  std::string frequencies;
  // Test perplexities of external models, keyed by model_id.
  std::map<std::string, double> perplexity;
};

struct ExperimentConfig {
  std::vector<LanguageInput> languages;
  std::vector<Measure> measures{Measure::gaze_duration};
  std::vector<std::string> model_ids;  // empty: every available model
  std::vector<ContextMode> context_modes{ContextMode::long_context};
  std::vector<Scenario> scenarios{Scenario::surprisal, Scenario::entropy_replace, Scenario::entropy_add};
  int k_folds = 10;
  std::size_t n_perm = 10000;
  std::uint64_t seed = 0;
  int ngram_order = 5;
  SpilloverPolicy spillover = SpilloverPolicy::drop;
  bool exclude_text_edges = false;
  CiMethod ci = CiMethod::t_over_folds;
  PermutationUnit permutation_unit = PermutationUnit::observation;
  bool gam = true;
  unsigned threads = 1;
  std::string output_dir = "rtpower-out";
  std::string cache_dir;  // falls back to $RTPOWER_CACHE_DIR; empty disables caching

  // Relative paths are resolved against `base_dir`. Throws ValidationError
  // on unknown keys or malformed values.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
  // FNV-1a of the canonical JSON dump (output_dir, cache_dir and threads
  // excluded).
  std::uint64_t hash() const;
  // Languages non-empty, known and unique; referenced files exist; numeric
  // settings in range. Throws ValidationError.
  void validate() const;
};

struct CoefficientRow {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct CellResult {
  std::string language;
  Measure measure = Measure::gaze_duration;
  std::string model_id;
  ContextMode context_mode = ContextMode::long_context;
  Scenario scenario = Scenario::surprisal;
  std::uint64_t seed = 0;
  double mean_dllh = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
  std::size_t n_obs = 0;
  std::size_t n_perm = 0;
  std::vector<double> fold_means;
  // Target model refitted on all rows.
  std::vector<CoefficientRow> coefficients;
};

struct CurveResult {
  std::string language;
  Measure measure = Measure::gaze_duration;
  std::string model_id;
  ContextMode context_mode = ContextMode::long_context;
  std::string model;  // nonlinear | linear
  Curve curve;
};

struct HistogramResult {
  std::string language;
  Measure measure = Measure::gaze_duration;
  std::string model_id;
  ContextMode context_mode = ContextMode::long_context;
  std::string column;
  Histogram histogram;
};

struct LinearityRow {
  std::string language;
  Measure measure = Measure::gaze_duration;
  std::string model_id;
  ContextMode context_mode = ContextMode::long_context;
  std::uint64_t seed = 0;
  double nonlinear_dllh = 0.0, nonlinear_ci_lo = 0.0, nonlinear_ci_hi = 0.0, nonlinear_p = 1.0;
  double linear_dllh = 0.0, linear_ci_lo = 0.0, linear_ci_hi = 0.0, linear_p = 1.0;
  double comparison_p = 1.0;  // one-sided: non-linear better than linear
  double comparison_two_sided_p = 1.0;
  std::size_t n_obs = 0;
};

struct PerplexityRow {
  std::string language;
  std::string model_id;
  double perplexity = 0.0;
};

struct CorrelationRow {
  Measure measure = Measure::gaze_duration;
  std::string model_id;
  ContextMode context_mode = ContextMode::long_context;
  Scenario scenario = Scenario::surprisal;
  std::string level;  // language | family
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

struct Failure {
  std::string cell;
  std::string stage;
  std::string kind;  // validation | data | numeric | other
  std::string message;
};

struct Bundle {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<CellResult> cells;
  std::vector<CurveResult> curves;
  std::vector<HistogramResult> histograms;
  std::vector<LinearityRow> linearity;
  std::vector<PerplexityRow> perplexities;
  std::vector<CorrelationRow> correlations;
  std::vector<Failure> failures;
  std::vector<std::string> warnings;

  bool empty() const { return cells.empty() && curves.empty() && linearity.empty() && correlations.empty(); }
  nlohmann::json to_json() const;
  static Bundle from_json(const nlohmann::json& j);
};

// Per-cell seed: splitmix64(master seed ^ FNV-1a(cell id)).
std::uint64_t cell_seed(std::uint64_t master_seed, const std::string& cell_id);

// Validates, then runs every (language, measure, model, context) cell. A
// failing cell is recorded in Bundle::failures and the others proceed.
Bundle run_pipeline(const ExperimentConfig& config);

// Cache directory from the config or the environment; empty when disabled.
std::string resolve_cache_dir(const ExperimentConfig& config);

// Trains (or loads from the cache) the built-in n-gram model.
NgramModel cached_ngram(const std::vector<Sentence>& corpus, int order, const std::string& cache_dir);

}  // namespace rtpower
