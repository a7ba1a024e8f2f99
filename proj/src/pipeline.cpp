#include "rtpower/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "rtpower/errors.hpp"
#include "rtpower/io.hpp"
#include "rtpower/random.hpp"

namespace rtpower {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kIso639_1 =
    "aa ab ae af ak am an ar as av ay az ba be bg bh bi bm bn bo br bs ca ce ch co cr cs cu cv cy da de dv dz ee "
    "el en eo es et eu fa ff fi fj fo fr fy ga gd gl gn gu gv ha he hi ho hr ht hu hy hz ia id ie ig ii ik io is "
    "it iu ja jv ka kg ki kj kk kl km kn ko kr ks ku kv kw ky la lb lg li ln lo lt lu lv mg mh mi mk ml mn mr ms "
    "mt my na nb nd ne ng nl nn no nr nv ny oc oj om or os pa pi pl ps pt qu rm rn ro ru rw sa sc sd se sg si sk "
    "sl sm sn so sq sr ss st su sv sw ta te tg th ti tk tl tn to tr ts tt tw ty ug uk ur uz ve vi vo wa wo xh yi "
    "yo za zh zu";
constexpr std::string_view kMecoAliases = "du ge gr sp ee no";

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + where);
    }
  }
}

std::string ci_name(CiMethod m) { return m == CiMethod::t_over_folds ? "t_over_folds" : "bootstrap"; }
CiMethod parse_ci(std::string_view s) {
  if (s == "t_over_folds" || s == "t") return CiMethod::t_over_folds;
  if (s == "bootstrap" || s == "observation_bootstrap") return CiMethod::observation_bootstrap;
  throw ValidationError("unknown ci method '" + std::string(s) + "'");
}
std::string unit_name(PermutationUnit u) { return u == PermutationUnit::observation ? "observation" : "fold"; }
PermutationUnit parse_unit(std::string_view s) {
  if (s == "observation") return PermutationUnit::observation;
  if (s == "fold") return PermutationUnit::fold;
  throw ValidationError("unknown permutation unit '" + std::string(s) + "'");
}
std::string spill_name(SpilloverPolicy p) { return p == SpilloverPolicy::drop ? "drop" : "zero"; }

std::string failure_kind(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  return "other";
}

void run_tasks(std::vector<std::function<void()>>& tasks, unsigned threads) {
  if (threads <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < std::min<std::size_t>(threads, tasks.size()); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) tasks[i]();
    });
  }
  for (auto& t : pool) t.join();
}

struct LanguageData {
  std::vector<WordRecord> words;
  std::vector<TokenScore> scores;
  FrequencyTable frequencies;
  std::vector<std::string> model_ids;
};

LanguageData load_language(const LanguageInput& input, const ExperimentConfig& config, const std::string& cache_dir,
                           Bundle& bundle) {
  LanguageData data;
  if (!input.words.empty()) {
    data.words = read_words_file(input.words);
  } else {
    std::ifstream in(input.fixations);
    if (!in) throw DataError("cannot open " + input.fixations);
    const auto columns = input.fixation_columns == "meco" ? ColumnMap::meco() : ColumnMap::canonical();
    const auto fixations = read_fixations(in, input.fixations, input.code, columns);
    auto result = ingest(fixations);
    for (auto& w : result.warnings) bundle.warnings.push_back(input.code + ": " + w);
    data.words = std::move(result.words);
  }
  for (auto& w : data.words) w.language = input.code;
  if (data.words.empty()) throw DataError(input.code + ": no words");

  std::vector<Sentence> corpus;
  if (!input.lm_corpus.empty()) corpus = read_corpus_file(input.lm_corpus);
  if (!input.frequencies.empty()) {
    data.frequencies = read_frequency_table_file(input.frequencies, input.code);
  } else if (!corpus.empty()) {
    data.frequencies = frequency_from_corpus(corpus, input.code);
  } else {
    throw DataError(input.code + ": no frequency table and no lm_corpus to derive one from");
  }

  std::set<std::string> available;
  for (const auto& path : input.scores) {
    auto scores = read_token_scores_file(path);
    for (auto& s : scores) {
      if (s.language != input.code) continue;
      available.insert(s.model_id);
      data.scores.push_back(std::move(s));
    }
  }
  const auto wanted = [&](const std::string& id) {
    return config.model_ids.empty() ||
           std::find(config.model_ids.begin(), config.model_ids.end(), id) != config.model_ids.end();
  };
  if (!corpus.empty() && wanted(kBuiltinModelId)) {
    const auto model = cached_ngram(corpus, config.ngram_order, cache_dir);
    for (const auto mode : config.context_modes) {
      auto scores = score_words(model, data.words, mode, kBuiltinModelId);
      data.scores.insert(data.scores.end(), scores.begin(), scores.end());
    }
    available.insert(kBuiltinModelId);
    if (!input.lm_heldout.empty()) {
      const auto heldout = read_corpus_file(input.lm_heldout);
      bundle.perplexities.push_back({input.code, kBuiltinModelId, model.perplexity(heldout)});
    }
  }
  for (const auto& [id, ppl] : input.perplexity) {
    if (wanted(id)) bundle.perplexities.push_back({input.code, id, ppl});
  }
  for (const auto& id : available) {
    if (wanted(id)) data.model_ids.push_back(id);
  }
  for (const auto& id : config.model_ids) {
    if (!available.contains(id)) bundle.warnings.push_back(input.code + ": model '" + id + "' has no scores");
  }
  return data;
}

struct CellOutput {
  std::vector<CellResult> cells;
  std::vector<CurveResult> curves;
  std::vector<HistogramResult> histograms;
  std::vector<LinearityRow> linearity;
  std::vector<Failure> failures;
};

std::string cell_prefix(const std::string& lang, Measure m, const std::string& model, ContextMode mode) {
  return lang + "/" + to_string(m) + "/" + model + "/" + to_string(mode);
}

void run_cell(const LanguageData& data, const std::string& lang, Measure measure, const std::string& model_id,
              ContextMode mode, const ExperimentConfig& config, CellOutput& out) {
  const auto prefix = cell_prefix(lang, measure, model_id, mode);
  Design design;
  try {
    DesignOptions options;
    options.measure = measure;
    options.spillover = config.spillover;
    options.exclude_text_edges = config.exclude_text_edges;
    options.model_id = model_id;
    options.context_mode = mode;
    design = build_design(data.words, data.scores, data.frequencies, options);
  } catch (const std::exception& e) {
    out.failures.push_back({prefix, "build_design", failure_kind(e), e.what()});
    return;
  }
  for (const auto scenario : config.scenarios) {
    const auto id = prefix + "/" + to_string(scenario);
    try {
      CrossValOptions cv;
      cv.k = config.k_folds;
      cv.n_perm = config.n_perm;
      cv.seed = cell_seed(config.seed, id);
      cv.ci = config.ci;
      cv.permutation_unit = config.permutation_unit;
      const auto specs = scenario_specs(scenario, design);
      const auto report = crossval_dllh(design, specs.target, specs.baseline, cv, to_string(scenario));
      CellResult cell;
      cell.language = lang;
      cell.measure = measure;
      cell.model_id = model_id;
      cell.context_mode = mode;
      cell.scenario = scenario;
      cell.seed = cv.seed;
      cell.mean_dllh = report.mean_dllh;
      cell.ci_lo = report.ci_lo;
      cell.ci_hi = report.ci_hi;
      cell.p_value = report.p_value;
      cell.n_obs = report.n_obs;
      cell.n_perm = report.n_perm;
      cell.fold_means = report.fold_means;
      const auto full = fit_ols(design, specs.target);
      for (std::size_t i = 0; i < full.names.size(); ++i) {
        const auto j = static_cast<Eigen::Index>(i);
        cell.coefficients.push_back({full.names[i], full.coefficients[j], full.std_errors[j]});
      }
      out.cells.push_back(std::move(cell));
    } catch (const std::exception& e) {
      out.failures.push_back({id, "scenario", failure_kind(e), e.what()});
    }
  }
  if (!config.gam) return;
  const auto id = prefix + "/gam";
  try {
    LinearityOptions options;
    options.k = config.k_folds;
    options.n_perm = config.n_perm;
    options.seed = cell_seed(config.seed, id);
    const auto result = linearity_dllh(design, options);
    LinearityRow row;
    row.language = lang;
    row.measure = measure;
    row.model_id = model_id;
    row.context_mode = mode;
    row.seed = options.seed;
    row.nonlinear_dllh = result.nonlinear.mean_dllh;
    row.nonlinear_ci_lo = result.nonlinear.ci_lo;
    row.nonlinear_ci_hi = result.nonlinear.ci_hi;
    row.nonlinear_p = result.nonlinear.p_value;
    row.linear_dllh = result.linear.mean_dllh;
    row.linear_ci_lo = result.linear.ci_lo;
    row.linear_ci_hi = result.linear.ci_hi;
    row.linear_p = result.linear.p_value;
    row.comparison_p = result.comparison.p_value;
    row.comparison_two_sided_p = result.comparison_two_sided.p_value;
    row.n_obs = result.nonlinear.n_obs;
    out.linearity.push_back(row);
    for (const auto* column : {"surprisal_t", "surprisal_t1"}) {
      out.curves.push_back({lang, measure, model_id, mode, "nonlinear", predict_curve(result.nonlinear_fits, column)});
      out.curves.push_back({lang, measure, model_id, mode, "linear", predict_curve(result.linear_fits, column)});
      const auto c = design.column(column);
      const std::vector<double> values(design.X.col(c).data(), design.X.col(c).data() + design.rows());
      out.histograms.push_back({lang, measure, model_id, mode, column, density_histogram(values)});
    }
  } catch (const std::exception& e) {
    out.failures.push_back({id, "gam", failure_kind(e), e.what()});
  }
}

void add_correlations(const ExperimentConfig& config, Bundle& bundle) {
  std::map<std::string, std::string> family_of;
  for (const auto& l : config.languages) {
    if (!l.family.empty()) family_of[l.code] = l.family;
  }
  std::map<std::pair<std::string, std::string>, double> ppl;
  std::set<std::string> models;
  for (const auto& p : bundle.perplexities) {
    ppl[{p.language, p.model_id}] = p.perplexity;
    models.insert(p.model_id);
  }
  for (const auto measure : config.measures) {
    for (const auto& model : models) {
      for (const auto mode : config.context_modes) {
        for (const auto scenario : config.scenarios) {
          std::vector<LanguagePoint> points;
          for (const auto& c : bundle.cells) {
            if (c.measure != measure || c.model_id != model || c.context_mode != mode || c.scenario != scenario) continue;
            const auto it = ppl.find({c.language, model});
            if (it != ppl.end()) points.push_back({c.language, c.mean_dllh, it->second});
          }
          if (points.size() < 3) continue;
          const auto label = to_string(measure) + "/" + model + "/" + to_string(mode) + "/" + to_string(scenario);
          auto add = [&](const std::string& level, const std::vector<double>& x, const std::vector<double>& y) {
            try {
              const auto r = pearson(x, y);
              bundle.correlations.push_back({measure, model, mode, scenario, level, r.rho, r.p_value, r.n});
            } catch (const ValidationError& e) {
              bundle.warnings.push_back("correlation " + label + " (" + level + "): " + e.what());
            }
          };
          std::vector<double> x, y;
          for (const auto& p : points) {
            x.push_back(p.perplexity);
            y.push_back(p.dllh);
          }
          add("language", x, y);
          if (!family_of.empty()) {
            const auto families = family_means(points, family_of);
            if (families.size() >= 3) {
              x.clear();
              y.clear();
              for (const auto& f : families) {
                x.push_back(f.perplexity);
                y.push_back(f.dllh);
              }
              add("family", x, y);
            }
          }
        }
      }
    }
  }
}

}  // namespace

bool is_known_language(std::string_view code) {
  if (code.size() != 2) return false;
  return kIso639_1.find(code) != std::string_view::npos || kMecoAliases.find(code) != std::string_view::npos;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::string& base_dir) {
  check_keys(j,
             {"languages", "measures", "model_ids", "context_modes", "scenarios", "k_folds", "n_perm", "seed",
              "ngram_order", "spillover", "exclude_text_edges", "ci", "permutation_unit", "gam", "threads",
              "output_dir", "cache_dir"},
             "config");
  ExperimentConfig c;
  if (j.contains("languages")) {
    if (!j.at("languages").is_array()) throw ValidationError("config 'languages' must be an array");
    for (const auto& lj : j.at("languages")) {
      check_keys(lj,
                 {"code", "family", "fixations", "fixation_columns", "words", "scores", "lm_corpus", "lm_heldout",
                  "frequencies", "perplexity"},
                 "language entry");
      LanguageInput l;
      l.code = get_or<std::string>(lj, "code", "");
      l.family = get_or<std::string>(lj, "family", "");
      l.fixations = resolve(get_or<std::string>(lj, "fixations", ""), base_dir);
      l.fixation_columns = get_or<std::string>(lj, "fixation_columns", "canonical");
      l.words = resolve(get_or<std::string>(lj, "words", ""), base_dir);
      for (const auto& s : get_or<std::vector<std::string>>(lj, "scores", {})) l.scores.push_back(resolve(s, base_dir));
      l.lm_corpus = resolve(get_or<std::string>(lj, "lm_corpus", ""), base_dir);
      l.lm_heldout = resolve(get_or<std::string>(lj, "lm_heldout", ""), base_dir);
      l.frequencies = resolve(get_or<std::string>(lj, "frequencies", ""), base_dir);
      l.perplexity = get_or<std::map<std::string, double>>(lj, "perplexity", {});
      c.languages.push_back(std::move(l));
    }
  }
  if (j.contains("measures")) {
    c.measures.clear();
    for (const auto& m : get_or<std::vector<std::string>>(j, "measures", {})) c.measures.push_back(parse_measure(m));
  }
  c.model_ids = get_or<std::vector<std::string>>(j, "model_ids", {});
  if (j.contains("context_modes")) {
    c.context_modes.clear();
    for (const auto& m : get_or<std::vector<std::string>>(j, "context_modes", {})) {
      c.context_modes.push_back(parse_context_mode(m));
    }
  }
  if (j.contains("scenarios")) {
    c.scenarios.clear();
    for (const auto& s : get_or<std::vector<std::string>>(j, "scenarios", {})) c.scenarios.push_back(parse_scenario(s));
  }
  c.k_folds = get_or<int>(j, "k_folds", c.k_folds);
  c.n_perm = get_or<std::size_t>(j, "n_perm", c.n_perm);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.ngram_order = get_or<int>(j, "ngram_order", c.ngram_order);
  c.spillover = parse_spillover_policy(get_or<std::string>(j, "spillover", "drop"));
  c.exclude_text_edges = get_or<bool>(j, "exclude_text_edges", c.exclude_text_edges);
  c.ci = parse_ci(get_or<std::string>(j, "ci", "t_over_folds"));
  c.permutation_unit = parse_unit(get_or<std::string>(j, "permutation_unit", "observation"));
  c.gam = get_or<bool>(j, "gam", c.gam);
  c.threads = get_or<unsigned>(j, "threads", c.threads);
  c.output_dir = resolve(get_or<std::string>(j, "output_dir", c.output_dir), base_dir);
  c.cache_dir = resolve(get_or<std::string>(j, "cache_dir", ""), base_dir);
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return from_json(j, fs::path(path).parent_path().string());
}

json ExperimentConfig::to_json() const {
  json j;
  j["languages"] = json::array();
  for (const auto& l : languages) {
    json lj = {{"code", l.code},           {"family", l.family},
               {"fixations", l.fixations}, {"fixation_columns", l.fixation_columns},
               {"words", l.words},         {"scores", l.scores},
               {"lm_corpus", l.lm_corpus}, {"lm_heldout", l.lm_heldout},
               {"frequencies", l.frequencies}};
    lj["perplexity"] = l.perplexity;
    j["languages"].push_back(lj);
  }
  j["measures"] = json::array();
  for (const auto m : measures) j["measures"].push_back(to_string(m));
  j["model_ids"] = model_ids;
  j["context_modes"] = json::array();
  for (const auto m : context_modes) j["context_modes"].push_back(to_string(m));
  j["scenarios"] = json::array();
  for (const auto s : scenarios) j["scenarios"].push_back(to_string(s));
  j["k_folds"] = k_folds;
  j["n_perm"] = n_perm;
  j["seed"] = seed;
  j["ngram_order"] = ngram_order;
  j["spillover"] = spill_name(spillover);
  j["exclude_text_edges"] = exclude_text_edges;
  j["ci"] = ci_name(ci);
  j["permutation_unit"] = unit_name(permutation_unit);
  j["gam"] = gam;
  j["threads"] = threads;
  j["output_dir"] = output_dir;
  j["cache_dir"] = cache_dir;
  return j;
}

std::uint64_t ExperimentConfig::hash() const {
  auto j = to_json();
  j.erase("output_dir");
  j.erase("cache_dir");
  j.erase("threads");
  return fnv1a(j.dump());
}

void ExperimentConfig::validate() const {
  if (languages.empty()) throw ValidationError("config lists no languages");
  std::set<std::string> seen;
  for (const auto& l : languages) {
    if (!is_known_language(l.code)) throw ValidationError("unknown language code '" + l.code + "'");
    if (!seen.insert(l.code).second) throw ValidationError("language '" + l.code + "' listed twice");
    if (l.words.empty() && l.fixations.empty()) {
      throw ValidationError(l.code + ": needs either 'words' or 'fixations'");
    }
    if (l.fixation_columns != "canonical" && l.fixation_columns != "meco") {
      throw ValidationError(l.code + ": fixation_columns must be canonical or meco");
    }
    if (l.scores.empty() && l.lm_corpus.empty()) {
      throw ValidationError(l.code + ": needs 'scores' or an 'lm_corpus' for the built-in model");
    }
    std::vector<std::string> files{l.fixations, l.words, l.lm_corpus, l.lm_heldout, l.frequencies};
    files.insert(files.end(), l.scores.begin(), l.scores.end());
    for (const auto& f : files) {
      if (!f.empty() && !fs::exists(f)) throw ValidationError(l.code + ": input file not found: " + f);
    }
    for (const auto& [id, p] : l.perplexity) {
      if (!(p > 0)) throw ValidationError(l.code + ": perplexity of " + id + " must be positive");
    }
  }
  if (measures.empty()) throw ValidationError("config lists no measures");
  if (context_modes.empty()) throw ValidationError("config lists no context modes");
  if (k_folds < 2) throw ValidationError("k_folds must be >= 2");
  if (n_perm < 1) throw ValidationError("n_perm must be >= 1");
  if (ngram_order < 1) throw ValidationError("ngram_order must be >= 1");
}

std::uint64_t cell_seed(std::uint64_t master_seed, const std::string& cell_id) {
  return splitmix64(master_seed ^ fnv1a(cell_id));
}

std::string resolve_cache_dir(const ExperimentConfig& config) {
  if (!config.cache_dir.empty()) return config.cache_dir;
  const char* env = std::getenv(kCacheEnv);
  return env ? std::string(env) : std::string();
}

NgramModel cached_ngram(const std::vector<Sentence>& corpus, int order, const std::string& cache_dir) {
  if (cache_dir.empty()) return NgramModel::train(corpus, order);
  std::uint64_t h = fnv1a("order=" + std::to_string(order) + "\n");
  for (const auto& sentence : corpus) h = fnv1a(join(sentence, " ") + "\n", h);
  const auto path = fs::path(cache_dir) / ("ngram-" + hex64(h) + ".tsv");
  if (fs::exists(path)) {
    std::ifstream in(path);
    return NgramModel::load(in, path.string());
  }
  auto model = NgramModel::train(corpus, order);
  std::error_code ec;
  fs::create_directories(cache_dir, ec);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (out) model.save(out);
  }
  fs::rename(tmp, path, ec);
  return model;
}

Bundle run_pipeline(const ExperimentConfig& config) {
  config.validate();
  Bundle bundle;
  bundle.config_hash = hex64(config.hash());
  bundle.seed = config.seed;
  const auto cache_dir = resolve_cache_dir(config);

  std::vector<std::pair<std::string, LanguageData>> loaded;
  for (const auto& input : config.languages) {
    try {
      loaded.emplace_back(input.code, load_language(input, config, cache_dir, bundle));
    } catch (const std::exception& e) {
      bundle.failures.push_back({input.code, "load", failure_kind(e), e.what()});
    }
  }

  struct Job {
    const LanguageData* data;
    std::string language;
    Measure measure;
    std::string model_id;
    ContextMode mode;
  };
  std::vector<Job> jobs;
  for (const auto& [code, data] : loaded) {
    for (const auto measure : config.measures) {
      for (const auto& model : data.model_ids) {
        for (const auto mode : config.context_modes) jobs.push_back({&data, code, measure, model, mode});
      }
    }
  }
  std::vector<CellOutput> outputs(jobs.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    tasks.emplace_back([&, i] {
      const auto& job = jobs[i];
      try {
        run_cell(*job.data, job.language, job.measure, job.model_id, job.mode, config, outputs[i]);
      } catch (const std::exception& e) {
        outputs[i].failures.push_back({cell_prefix(job.language, job.measure, job.model_id, job.mode), "cell",
                                       failure_kind(e), e.what()});
      }
    });
  }
  run_tasks(tasks, config.threads);
  for (auto& o : outputs) {
    std::move(o.cells.begin(), o.cells.end(), std::back_inserter(bundle.cells));
    std::move(o.curves.begin(), o.curves.end(), std::back_inserter(bundle.curves));
    std::move(o.histograms.begin(), o.histograms.end(), std::back_inserter(bundle.histograms));
    std::move(o.linearity.begin(), o.linearity.end(), std::back_inserter(bundle.linearity));
    std::move(o.failures.begin(), o.failures.end(), std::back_inserter(bundle.failures));
  }
  add_correlations(config, bundle);
  return bundle;
}

// Bundle serialisation.

namespace {

json curve_json(const Curve& c) {
  json points = json::array();
  for (const auto& p : c.points) {
    points.push_back({{"surprisal", p.surprisal}, {"fit_ms", p.fit_ms}, {"lo", p.lo}, {"hi", p.hi},
                      {"extrapolated", p.extrapolated}});
  }
  return {{"term", c.term}, {"column", c.column}, {"points", points}};
}

Curve curve_from(const json& j) {
  Curve c;
  c.term = j.at("term").get<std::string>();
  c.column = j.at("column").get<std::string>();
  for (const auto& p : j.at("points")) {
    c.points.push_back({p.at("surprisal").get<double>(), p.at("fit_ms").get<double>(), p.at("lo").get<double>(),
                        p.at("hi").get<double>(), p.at("extrapolated").get<bool>()});
  }
  return c;
}

}  // namespace

json Bundle::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["cells"] = json::array();
  for (const auto& c : cells) {
    json coefs = json::array();
    for (const auto& r : c.coefficients) {
      coefs.push_back({{"name", r.name}, {"estimate", r.estimate}, {"std_error", r.std_error}});
    }
    j["cells"].push_back({{"language", c.language},
                          {"measure", to_string(c.measure)},
                          {"model_id", c.model_id},
                          {"context_mode", to_string(c.context_mode)},
                          {"scenario", to_string(c.scenario)},
                          {"seed", c.seed},
                          {"mean_dllh", c.mean_dllh},
                          {"ci_lo", c.ci_lo},
                          {"ci_hi", c.ci_hi},
                          {"p", c.p_value},
                          {"n_obs", c.n_obs},
                          {"n_perm", c.n_perm},
                          {"fold_means", c.fold_means},
                          {"coefficients", coefs}});
  }
  j["curves"] = json::array();
  for (const auto& c : curves) {
    j["curves"].push_back({{"language", c.language},
                           {"measure", to_string(c.measure)},
                           {"model_id", c.model_id},
                           {"context_mode", to_string(c.context_mode)},
                           {"model", c.model},
                           {"curve", curve_json(c.curve)}});
  }
  j["histograms"] = json::array();
  for (const auto& h : histograms) {
    j["histograms"].push_back({{"language", h.language},
                               {"measure", to_string(h.measure)},
                               {"model_id", h.model_id},
                               {"context_mode", to_string(h.context_mode)},
                               {"column", h.column},
                               {"edges", h.histogram.edges},
                               {"density", h.histogram.density},
                               {"below", h.histogram.below},
                               {"above", h.histogram.above}});
  }
  j["linearity"] = json::array();
  for (const auto& r : linearity) {
    j["linearity"].push_back({{"language", r.language},
                              {"measure", to_string(r.measure)},
                              {"model_id", r.model_id},
                              {"context_mode", to_string(r.context_mode)},
                              {"seed", r.seed},
                              {"nonlinear", {{"mean_dllh", r.nonlinear_dllh}, {"ci_lo", r.nonlinear_ci_lo},
                                             {"ci_hi", r.nonlinear_ci_hi}, {"p", r.nonlinear_p}}},
                              {"linear", {{"mean_dllh", r.linear_dllh}, {"ci_lo", r.linear_ci_lo},
                                          {"ci_hi", r.linear_ci_hi}, {"p", r.linear_p}}},
                              {"comparison_p", r.comparison_p},
                              {"comparison_two_sided_p", r.comparison_two_sided_p},
                              {"n_obs", r.n_obs}});
  }
  j["perplexities"] = json::array();
  for (const auto& p : perplexities) {
    j["perplexities"].push_back({{"language", p.language}, {"model_id", p.model_id}, {"perplexity", p.perplexity}});
  }
  j["correlations"] = json::array();
  for (const auto& c : correlations) {
    j["correlations"].push_back({{"measure", to_string(c.measure)},
                                 {"model_id", c.model_id},
                                 {"context_mode", to_string(c.context_mode)},
                                 {"scenario", to_string(c.scenario)},
                                 {"level", c.level},
                                 {"rho", c.rho},
                                 {"p", c.p_value},
                                 {"n", c.n}});
  }
  j["failures"] = json::array();
  for (const auto& f : failures) {
    j["failures"].push_back({{"cell", f.cell}, {"stage", f.stage}, {"kind", f.kind}, {"message", f.message}});
  }
  j["warnings"] = warnings;
  return j;
}

Bundle Bundle::from_json(const json& j) {
  try {
    Bundle b;
    b.config_hash = j.at("config_hash").get<std::string>();
    b.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.value("cells", json::array())) {
      CellResult r;
      r.language = c.at("language").get<std::string>();
      r.measure = parse_measure(c.at("measure").get<std::string>());
      r.model_id = c.at("model_id").get<std::string>();
      r.context_mode = parse_context_mode(c.at("context_mode").get<std::string>());
      r.scenario = parse_scenario(c.at("scenario").get<std::string>());
      r.seed = c.at("seed").get<std::uint64_t>();
      r.mean_dllh = c.at("mean_dllh").get<double>();
      r.ci_lo = c.at("ci_lo").get<double>();
      r.ci_hi = c.at("ci_hi").get<double>();
      r.p_value = c.at("p").get<double>();
      r.n_obs = c.at("n_obs").get<std::size_t>();
      r.n_perm = c.at("n_perm").get<std::size_t>();
      r.fold_means = c.at("fold_means").get<std::vector<double>>();
      for (const auto& k : c.at("coefficients")) {
        r.coefficients.push_back(
            {k.at("name").get<std::string>(), k.at("estimate").get<double>(), k.at("std_error").get<double>()});
      }
      b.cells.push_back(std::move(r));
    }
    for (const auto& c : j.value("curves", json::array())) {
      b.curves.push_back({c.at("language").get<std::string>(), parse_measure(c.at("measure").get<std::string>()),
                          c.at("model_id").get<std::string>(),
                          parse_context_mode(c.at("context_mode").get<std::string>()),
                          c.at("model").get<std::string>(), curve_from(c.at("curve"))});
    }
    for (const auto& h : j.value("histograms", json::array())) {
      HistogramResult r;
      r.language = h.at("language").get<std::string>();
      r.measure = parse_measure(h.at("measure").get<std::string>());
      r.model_id = h.at("model_id").get<std::string>();
      r.context_mode = parse_context_mode(h.at("context_mode").get<std::string>());
      r.column = h.at("column").get<std::string>();
      r.histogram.edges = h.at("edges").get<std::vector<double>>();
      r.histogram.density = h.at("density").get<std::vector<double>>();
      r.histogram.below = h.at("below").get<std::size_t>();
      r.histogram.above = h.at("above").get<std::size_t>();
      b.histograms.push_back(std::move(r));
    }
    for (const auto& l : j.value("linearity", json::array())) {
      LinearityRow r;
      r.language = l.at("language").get<std::string>();
      r.measure = parse_measure(l.at("measure").get<std::string>());
      r.model_id = l.at("model_id").get<std::string>();
      r.context_mode = parse_context_mode(l.at("context_mode").get<std::string>());
      r.seed = l.at("seed").get<std::uint64_t>();
      const auto& nl = l.at("nonlinear");
      r.nonlinear_dllh = nl.at("mean_dllh").get<double>();
      r.nonlinear_ci_lo = nl.at("ci_lo").get<double>();
      r.nonlinear_ci_hi = nl.at("ci_hi").get<double>();
      r.nonlinear_p = nl.at("p").get<double>();
      const auto& li = l.at("linear");
      r.linear_dllh = li.at("mean_dllh").get<double>();
      r.linear_ci_lo = li.at("ci_lo").get<double>();
      r.linear_ci_hi = li.at("ci_hi").get<double>();
      r.linear_p = li.at("p").get<double>();
      r.comparison_p = l.at("comparison_p").get<double>();
      r.comparison_two_sided_p = l.at("comparison_two_sided_p").get<double>();
      r.n_obs = l.at("n_obs").get<std::size_t>();
      b.linearity.push_back(std::move(r));
    }
    for (const auto& p : j.value("perplexities", json::array())) {
      b.perplexities.push_back(
          {p.at("language").get<std::string>(), p.at("model_id").get<std::string>(), p.at("perplexity").get<double>()});
    }
    for (const auto& c : j.value("correlations", json::array())) {
      b.correlations.push_back({parse_measure(c.at("measure").get<std::string>()), c.at("model_id").get<std::string>(),
                                parse_context_mode(c.at("context_mode").get<std::string>()),
                                parse_scenario(c.at("scenario").get<std::string>()), c.at("level").get<std::string>(),
                                c.at("rho").get<double>(), c.at("p").get<double>(), c.at("n").get<std::size_t>()});
    }
    for (const auto& f : j.value("failures", json::array())) {
      b.failures.push_back({f.at("cell").get<std::string>(), f.at("stage").get<std::string>(),
                            f.at("kind").get<std::string>(), f.at("message").get<std::string>()});
    }
    b.warnings = j.value("warnings", std::vector<std::string>{});
    return b;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed bundle: ") + e.what());
  }
}

}  // namespace rtpower
