// rtpower: command-line front end.
//
// Exit codes: 0 success, 1 validation error, 2 data error, 3 numeric failure.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtpower/corpus.hpp"
#include "rtpower/errors.hpp"
#include "rtpower/gam.hpp"
#include "rtpower/io.hpp"
#include "rtpower/ngram.hpp"
#include "rtpower/pipeline.hpp"
#include "rtpower/predictors.hpp"
#include "rtpower/regression.hpp"
#include "rtpower/report.hpp"
#include "rtpower/stats.hpp"

using namespace rtpower;
using nlohmann::json;

namespace {

// "-" means stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw DataError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::vector<std::string> list_option(const std::string& text) {
  std::vector<std::string> out;
  for (auto& item : split(text, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json report_json(const DllhReport& r) {
  return {{"comparison", r.comparison_id}, {"mean_dllh", r.mean_dllh}, {"ci_lo", r.ci_lo},
          {"ci_hi", r.ci_hi},              {"p", r.p_value},           {"stars", significance_stars(r.p_value)},
          {"n_obs", r.n_obs},              {"n_perm", r.n_perm},       {"seed", r.seed},
          {"fold_means", r.fold_means}};
}

std::string design_language(const Design& d) {
  const auto langs = d.languages();
  return langs.size() == 1 ? langs.front() : "pooled";
}

// Subcommand settings live here so the callbacks can read them after parsing.
struct Settings {
  std::string input, output = "-", language, columns = "canonical";
  std::string corpus, heldout, model, words, scores, frequencies, freq_corpus, design;
  std::string context = "long", model_id, measure = "gaze_duration", spillover = "drop";
  std::string predictors, target, baseline, scenario = "surprisal", ci = "t_over_folds", unit = "observation";
  std::string config, output_dir, format = "tsv,json,svg", measures, scenarios, context_modes, model_ids, cache_dir,
      bundle, tsv_output;
  int order = 5, k = 10, threads = 0;
  std::size_t n_perm = 10000;
  std::uint64_t seed = 0;
  bool exclude_edges = false, no_gam = false, stratify = false;
  bool seed_set = false, n_perm_set = false, k_set = false;
};

void cmd_ingest(const Settings& s) {
  auto in = open_input(s.input);
  const auto columns = s.columns == "meco" ? ColumnMap::meco() : ColumnMap::canonical();
  const auto fixations = read_fixations(in, s.input, s.language, columns);
  const auto result = ingest(fixations);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  Output out(s.output);
  write_words(out.stream(), result.words);
}

void cmd_train_lm(const Settings& s) {
  const auto corpus = read_corpus_file(s.corpus);
  const auto model = NgramModel::train(corpus, s.order);
  if (!s.output.empty() && s.output != "-") {
    Output out(s.output);
    model.save(out.stream());
  }
  std::cerr << "trained order-" << s.order << " model, vocabulary " << model.vocab_size() << "\n";
  if (!s.heldout.empty()) {
    const auto heldout = read_corpus_file(s.heldout);
    std::cout << json{{"perplexity", model.perplexity(heldout)}, {"order", s.order}}.dump() << "\n";
  }
}

void cmd_score(const Settings& s) {
  auto in = open_input(s.model);
  const auto model = NgramModel::load(in, s.model);
  const auto words = read_words_file(s.words);
  const auto mode = parse_context_mode(s.context);
  const auto scores = score_words(model, words, mode, s.model_id.empty() ? kBuiltinModelId : s.model_id);
  Output out(s.output);
  write_token_scores(out.stream(), scores);
}

void cmd_build_design(const Settings& s) {
  const auto words = read_words_file(s.words);
  const auto scores = read_token_scores_file(s.scores);
  FrequencyTable freq;
  if (!s.frequencies.empty()) {
    freq = read_frequency_table_file(s.frequencies);
  } else if (!s.freq_corpus.empty()) {
    freq = frequency_from_corpus(read_corpus_file(s.freq_corpus));
  } else {
    throw ValidationError("build-design needs --frequencies or --freq-corpus");
  }
  DesignOptions options;
  options.measure = parse_measure(s.measure);
  options.spillover = parse_spillover_policy(s.spillover);
  options.exclude_text_edges = s.exclude_edges;
  options.model_id = s.model_id;
  options.context_mode = parse_context_mode(s.context);
  if (!s.predictors.empty()) {
    options.predictors.clear();
    for (const auto& p : list_option(s.predictors)) options.predictors.insert(parse_predictor(p));
  }
  const auto design = build_design(words, scores, freq, options);
  Output out(s.output);
  write_design(out.stream(), design);
}

void cmd_fit(const Settings& s) {
  const auto design = read_design_file(s.design);
  RegressionSpec spec = s.predictors.empty() ? full_spec(design) : RegressionSpec{list_option(s.predictors)};
  const auto fit = fit_ols(design, spec);
  Output out(s.output);
  auto& o = out.stream();
  o << "# n=" << fit.n_train << " sigma2=" << format_double(fit.sigma2) << " rss=" << format_double(fit.rss) << "\n";
  write_tsv_row(o, {"term", "estimate", "std_error", "t"});
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    write_tsv_row(o, {fit.names[i], format_double(fit.coefficients[j]), format_double(fit.std_errors[j]),
                      format_double(fit.coefficients[j] / fit.std_errors[j])});
  }
}

CrossValOptions cv_options(const Settings& s) {
  CrossValOptions cv;
  cv.k = s.k;
  cv.seed = s.seed;
  cv.n_perm = s.n_perm;
  cv.stratify_by_language = s.stratify;
  if (s.ci == "bootstrap") cv.ci = CiMethod::observation_bootstrap;
  else if (s.ci != "t_over_folds") throw ValidationError("--ci must be t_over_folds or bootstrap");
  if (s.unit == "fold") cv.permutation_unit = PermutationUnit::fold;
  else if (s.unit != "observation") throw ValidationError("--permutation-unit must be observation or fold");
  return cv;
}

void cmd_compare(const Settings& s) {
  const auto design = read_design_file(s.design);
  const auto cv = cv_options(s);
  DllhReport report;
  std::string scenario_name;
  if (!s.target.empty() || !s.baseline.empty()) {
    if (s.target.empty() || s.baseline.empty()) throw ValidationError("--target and --baseline go together");
    scenario_name = "custom";
    report = crossval_dllh(design, RegressionSpec{list_option(s.target)}, RegressionSpec{list_option(s.baseline)}, cv,
                           scenario_name);
  } else {
    const auto scenario = parse_scenario(s.scenario);
    scenario_name = to_string(scenario);
    report = run_scenario(scenario, design, cv);
  }
  Output out(s.output);
  out.stream() << report_json(report).dump(2) << "\n";
  if (!s.tsv_output.empty()) {
    CellResult cell;
    cell.language = design_language(design);
    cell.measure = design.metadata.contains("measure") ? parse_measure(design.metadata.at("measure"))
                                                       : Measure::gaze_duration;
    cell.model_id = design.metadata.contains("model_id") ? design.metadata.at("model_id") : "";
    cell.context_mode = design.metadata.contains("context_mode")
                            ? parse_context_mode(design.metadata.at("context_mode"))
                            : ContextMode::long_context;
    if (scenario_name != "custom") cell.scenario = parse_scenario(scenario_name);
    cell.mean_dllh = report.mean_dllh;
    cell.ci_lo = report.ci_lo;
    cell.ci_hi = report.ci_hi;
    cell.p_value = report.p_value;
    Output tsv(s.tsv_output);
    write_dllh_tsv(tsv.stream(), std::span<const CellResult>(&cell, 1), "none", s.seed);
  }
}

void cmd_gam(const Settings& s) {
  const auto design = read_design_file(s.design);
  LinearityOptions options;
  options.k = s.k;
  options.seed = s.seed;
  options.n_perm = s.n_perm;
  const auto result = linearity_dllh(design, options);
  const auto lang = design_language(design);
  const auto model_id = design.metadata.contains("model_id") ? design.metadata.at("model_id") : "";
  const auto mode = design.metadata.contains("context_mode") ? parse_context_mode(design.metadata.at("context_mode"))
                                                             : ContextMode::long_context;
  std::vector<CurveResult> curves;
  std::vector<HistogramResult> hists;
  for (const auto* column : {"surprisal_t", "surprisal_t1"}) {
    curves.push_back({lang, Measure::gaze_duration, model_id, mode, "nonlinear",
                      predict_curve(result.nonlinear_fits, column)});
    curves.push_back({lang, Measure::gaze_duration, model_id, mode, "linear", predict_curve(result.linear_fits, column)});
    const auto c = design.column(column);
    const std::vector<double> values(design.X.col(c).data(), design.X.col(c).data() + design.rows());
    hists.push_back({lang, Measure::gaze_duration, model_id, mode, column, density_histogram(values)});
  }
  const json summary = {{"nonlinear", report_json(result.nonlinear)},
                        {"linear", report_json(result.linear)},
                        {"comparison", {{"statistic", result.comparison.statistic},
                                        {"p", result.comparison.p_value},
                                        {"n_perm", result.comparison.n_perm},
                                        {"seed", result.comparison.seed},
                                        {"alternative", "nonlinear > linear"},
                                        {"p_two_sided", result.comparison_two_sided.p_value}}},
                        {"seed", s.seed}};
  if (s.output_dir.empty()) {
    write_curve_tsv(std::cout, curves, "none", s.seed);
    std::cerr << summary.dump(2) << "\n";
    return;
  }
  std::filesystem::create_directories(s.output_dir);
  const auto stem = std::filesystem::path(s.output_dir) / (lang + "_gam");
  {
    Output out(stem.string() + "_curve.tsv");
    write_curve_tsv(out.stream(), curves, "none", s.seed);
  }
  {
    Output out(stem.string() + "_linearity.json");
    out.stream() << summary.dump(2) << "\n";
  }
  {
    Output out(stem.string() + ".svg");
    out.stream() << curve_svg(curves, hists, lang + " GAM", "none", s.seed);
  }
}

void cmd_permtest(const Settings& s) {
  auto in = open_input(s.input);
  const auto table = read_tsv(in, s.input);
  std::vector<double> diffs;
  if (table.has_column("diff")) {
    const auto c = table.column("diff");
    for (const auto& row : table.rows) diffs.push_back(parse_double(row[c], "diff"));
  } else {
    const auto a = table.column("llh_target");
    const auto b = table.column("llh_baseline");
    for (const auto& row : table.rows) {
      diffs.push_back(parse_double(row[a], "llh_target") - parse_double(row[b], "llh_baseline"));
    }
  }
  const auto r = paired_permutation(diffs, s.n_perm, s.seed, s.threads > 0 ? static_cast<unsigned>(s.threads) : 1);
  Output out(s.output);
  out.stream() << json{{"statistic", r.statistic}, {"p", r.p_value}, {"n_perm", r.n_perm}, {"seed", r.seed},
                       {"n", diffs.size()}}
                      .dump(2)
               << "\n";
}

void cmd_correlate(const Settings& s) {
  auto in = open_input(s.input);
  const auto table = read_tsv(in, s.input);
  const auto c_lang = table.column("language");
  const auto c_dllh = table.column("dllh");
  const auto c_ppl = table.column("perplexity");
  std::vector<LanguagePoint> points;
  std::map<std::string, std::string> family_of;
  for (const auto& row : table.rows) {
    points.push_back({row[c_lang], parse_double(row[c_dllh], "dllh"), parse_double(row[c_ppl], "perplexity")});
    if (table.has_column("family")) family_of[row[c_lang]] = row[table.column("family")];
  }
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(p.perplexity);
    y.push_back(p.dllh);
  }
  const auto r = pearson(x, y);
  json doc = {{"level", "language"}, {"rho", r.rho}, {"p", r.p_value}, {"n", r.n}};
  if (!family_of.empty()) {
    const auto families = family_means(points, family_of);
    std::vector<double> fx, fy;
    for (const auto& f : families) {
      fx.push_back(f.perplexity);
      fy.push_back(f.dllh);
    }
    if (families.size() >= 3) {
      const auto fr = pearson(fx, fy);
      doc["family"] = {{"rho", fr.rho}, {"p", fr.p_value}, {"n", fr.n}};
    }
  }
  Output out(s.output);
  out.stream() << doc.dump(2) << "\n";
}

void print_emit(const EmitResult& emitted, const Bundle& bundle, const std::string& dir) {
  for (const auto& w : emitted.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : bundle.failures) std::cerr << "failed: " << f.cell << " [" << f.kind << "] " << f.message << "\n";
  std::cerr << "wrote " << emitted.files.size() << " file(s) to " << dir << "\n";
}

void cmd_run(const Settings& s) {
  ExperimentConfig config = ExperimentConfig::from_file(s.config);
  if (s.seed_set) config.seed = s.seed;
  if (s.n_perm_set) config.n_perm = s.n_perm;
  if (s.k_set) config.k_folds = s.k;
  if (s.threads > 0) config.threads = static_cast<unsigned>(s.threads);
  if (!s.output_dir.empty()) config.output_dir = s.output_dir;
  if (!s.cache_dir.empty()) config.cache_dir = s.cache_dir;
  if (s.no_gam) config.gam = false;
  if (!s.measures.empty()) {
    config.measures.clear();
    for (const auto& m : list_option(s.measures)) config.measures.push_back(parse_measure(m));
  }
  if (!s.scenarios.empty()) {
    config.scenarios.clear();
    for (const auto& m : list_option(s.scenarios)) config.scenarios.push_back(parse_scenario(m));
  }
  if (!s.context_modes.empty()) {
    config.context_modes.clear();
    for (const auto& m : list_option(s.context_modes)) config.context_modes.push_back(parse_context_mode(m));
  }
  if (!s.model_ids.empty()) config.model_ids = list_option(s.model_ids);
  const auto bundle = run_pipeline(config);
  const auto emitted = emit_report(bundle, config.output_dir, ReportFormats::parse(s.format));
  print_emit(emitted, bundle, config.output_dir);
}

void cmd_report(const Settings& s) {
  auto in = open_input(s.bundle);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(s.bundle + ": " + e.what());
  }
  const auto bundle = Bundle::from_json(j);
  const auto dir = s.output_dir.empty() ? std::string(".") : s.output_dir;
  const auto emitted = emit_report(bundle, dir, ReportFormats::parse(s.format));
  print_emit(emitted, bundle, dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rtpower: predictive power of surprisal and entropy for reading times"};
  app.require_subcommand(1);
  Settings s;

  auto* ingest = app.add_subcommand("ingest", "fixation rows -> per-word reading measures");
  ingest->add_option("--fixations,-i", s.input, "fixation TSV")->required();
  ingest->add_option("--language,-l", s.language, "language code")->required();
  ingest->add_option("--columns", s.columns, "column layout: canonical or meco")->check(CLI::IsMember({"canonical", "meco"}));
  ingest->add_option("--output,-o", s.output, "word TSV ('-' for stdout)");

  auto* train = app.add_subcommand("train-lm", "train the built-in Kneser-Ney n-gram model");
  train->add_option("--corpus,-c", s.corpus, "training corpus, one sentence per line")->required();
  train->add_option("--order", s.order, "n-gram order")->check(CLI::Range(1, 10));
  train->add_option("--heldout", s.heldout, "held-out corpus; prints its perplexity");
  train->add_option("--output,-o", s.output, "model file");

  auto* score = app.add_subcommand("score", "score words with a trained n-gram model");
  score->add_option("--model,-m", s.model, "model file from train-lm")->required();
  score->add_option("--words,-w", s.words, "word TSV")->required();
  score->add_option("--context", s.context, "short or long")->check(CLI::IsMember({"short", "long"}));
  score->add_option("--model-id", s.model_id, "model_id column value");
  score->add_option("--output,-o", s.output, "TokenScore TSV");

  auto* build = app.add_subcommand("build-design", "assemble a regression design");
  build->add_option("--words,-w", s.words, "word TSV")->required();
  build->add_option("--scores,-s", s.scores, "TokenScore TSV")->required();
  build->add_option("--frequencies", s.frequencies, "frequency TSV (word, per_billion)");
  build->add_option("--freq-corpus", s.freq_corpus, "corpus to derive frequencies from");
  build->add_option("--measure", s.measure, "first_fixation, gaze_duration or total_fixation");
  build->add_option("--model-id", s.model_id, "select scores of this model");
  build->add_option("--context", s.context, "short or long");
  build->add_option("--spillover", s.spillover, "drop or zero");
  build->add_option("--predictors", s.predictors, "comma list of surprisal,entropy,frequency,length");
  build->add_flag("--exclude-edges", s.exclude_edges, "drop the first and last word of every text");
  build->add_option("--output,-o", s.output, "design TSV");

  auto* fit = app.add_subcommand("fit", "OLS coefficients on a design");
  fit->add_option("--design,-d", s.design, "design TSV")->required();
  fit->add_option("--predictors", s.predictors, "comma list of columns (default: all)");
  fit->add_option("--output,-o", s.output, "coefficient TSV");

  auto add_cv = [&](CLI::App* cmd) {
    cmd->add_option("--k", s.k, "folds")->check(CLI::Range(2, 1000));
    cmd->add_option("--n-perm", s.n_perm, "permutations");
    cmd->add_option("--seed", s.seed, "seed");
  };
  auto* compare = app.add_subcommand("compare", "cross-validated delta llh between two predictor sets");
  compare->add_option("--design,-d", s.design, "design TSV")->required();
  compare->add_option("--scenario", s.scenario, "surprisal, entropy_replace or entropy_add");
  compare->add_option("--target", s.target, "comma list of target columns");
  compare->add_option("--baseline", s.baseline, "comma list of baseline columns");
  compare->add_option("--ci", s.ci, "t_over_folds or bootstrap");
  compare->add_option("--permutation-unit", s.unit, "observation or fold");
  compare->add_flag("--stratify", s.stratify, "stratify folds by language");
  compare->add_option("--tsv", s.tsv_output, "also write the 9-column TSV row here");
  compare->add_option("--output,-o", s.output, "report JSON");
  add_cv(compare);

  auto* gam = app.add_subcommand("gam", "GAM curves and the linearity comparison");
  gam->add_option("--design,-d", s.design, "design TSV")->required();
  gam->add_option("--output-dir", s.output_dir, "directory for curve TSV, JSON and SVG");
  add_cv(gam);

  auto* perm = app.add_subcommand("permtest", "paired sign-flip permutation test");
  perm->add_option("--input,-i", s.input, "TSV with a diff column or llh_target and llh_baseline")->required();
  perm->add_option("--n-perm", s.n_perm, "permutations");
  perm->add_option("--seed", s.seed, "seed");
  perm->add_option("--threads", s.threads, "worker threads");
  perm->add_option("--output,-o", s.output, "JSON output");

  auto* corr = app.add_subcommand("correlate", "Pearson correlation of delta llh and perplexity");
  corr->add_option("--input,-i", s.input, "TSV with language, dllh, perplexity[, family]")->required();
  corr->add_option("--output,-o", s.output, "JSON output");

  auto* run = app.add_subcommand("run", "full pipeline from a JSON config");
  run->add_option("--config,-c", s.config, "config JSON")->required();
  run->add_option("--output-dir", s.output_dir, "overrides output_dir");
  run->add_option("--seed", s.seed, "overrides seed")->each([&](const std::string&) { s.seed_set = true; });
  run->add_option("--n-perm", s.n_perm, "overrides n_perm")->each([&](const std::string&) { s.n_perm_set = true; });
  run->add_option("--k-folds", s.k, "overrides k_folds")->each([&](const std::string&) { s.k_set = true; });
  run->add_option("--threads", s.threads, "overrides threads");
  run->add_option("--measures", s.measures, "overrides measures (comma list)");
  run->add_option("--scenarios", s.scenarios, "overrides scenarios (comma list)");
  run->add_option("--context-modes", s.context_modes, "overrides context_modes (comma list)");
  run->add_option("--model-ids", s.model_ids, "overrides model_ids (comma list)");
  run->add_option("--cache-dir", s.cache_dir, std::string("overrides cache_dir and $") + kCacheEnv);
  run->add_flag("--no-gam", s.no_gam, "skip the GAM analyses");
  run->add_option("--format", s.format, "comma list of tsv, json, svg");

  auto* report = app.add_subcommand("report", "re-emit report files from bundle.json");
  report->add_option("--bundle,-b", s.bundle, "bundle.json from a previous run")->required();
  report->add_option("--output-dir", s.output_dir, "output directory");
  report->add_option("--format", s.format, "comma list of tsv, json, svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*ingest) cmd_ingest(s);
    else if (*train) cmd_train_lm(s);
    else if (*score) cmd_score(s);
    else if (*build) cmd_build_design(s);
    else if (*fit) cmd_fit(s);
    else if (*compare) cmd_compare(s);
    else if (*gam) cmd_gam(s);
    else if (*perm) cmd_permtest(s);
    else if (*corr) cmd_correlate(s);
    else if (*run) cmd_run(s);
    else if (*report) cmd_report(s);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
