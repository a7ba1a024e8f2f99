#pragma once

// Report emission: TSV tables, JSON documents and SVG panels from a Bundle.
// Every file carries the config hash and seed (TSV: a leading
// `# config_hash=... seed=...` line).

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rtpower/pipeline.hpp"

namespace rtpower {

// "***" for p < 0.001, "**" for p < 0.01, "*" for p < 0.05, "" otherwise.
std::string significance_stars(double p);

struct ReportFormats {
  bool tsv = true;
  bool json = true;
  bool svg = true;

  // Comma separated subset of tsv, json, svg. Throws ValidationError.
  static ReportFormats parse(std::string_view list);
};

struct EmitResult {
  std::vector<std::string> files;  // written, in order
  std::vector<std::string> warnings;
};

// Columns: language, scenario, measure, model_id, context_mode, mean_dllh,
// ci_lo, ci_hi, p.
void write_dllh_tsv(std::ostream& out, std::span<const CellResult> cells, const std::string& config_hash,
                    std::uint64_t seed);
// Columns: language, model_id, context_mode, term, surprisal_grid, fit_ms,
// lo, hi, extrapolated.
void write_curve_tsv(std::ostream& out, std::span<const CurveResult> curves, const std::string& config_hash,
                     std::uint64_t seed);

std::string dllh_svg(std::span<const CellResult> cells, const std::string& title, const std::string& config_hash,
                     std::uint64_t seed);
std::string curve_svg(std::span<const CurveResult> curves, std::span<const HistogramResult> histograms,
                      const std::string& title, const std::string& config_hash, std::uint64_t seed);

// Writes `{lang}_{measure}_{scenario}.{tsv,json,svg}` per Δllh cell group,
// `{lang}_{measure}_gam_curve.tsv`, `{lang}_{measure}_gam.svg`,
// `{lang}_{measure}_linearity.tsv`, `coefficients.tsv`, `perplexity.tsv`,
// `correlation.{tsv,json}`, the failures manifest `failures.json` and
// `bundle.json`. An empty bundle only produces the manifest and a warning.
// Throws DataError when the directory cannot be written.
EmitResult emit_report(const Bundle& bundle, const std::string& directory, const ReportFormats& formats = {});

}  // namespace rtpower
