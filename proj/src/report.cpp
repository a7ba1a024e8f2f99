#include "rtpower/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "rtpower/errors.hpp"
#include "rtpower/io.hpp"

namespace rtpower {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string provenance(const std::string& hash, std::uint64_t seed) {
  return "config_hash=" + hash + " seed=" + std::to_string(seed);
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << v;
  auto out = s.str();
  while (out.size() > 1 && out.back() == '0') out.pop_back();
  if (out.back() == '.') out.pop_back();
  return out;
}

class FileWriter {
 public:
  FileWriter(fs::path dir, EmitResult& result) : dir_(std::move(dir)), result_(result) {}

  void write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("error writing " + path.string());
    result_.files.push_back(path.string());
  }

 private:
  fs::path dir_;
  EmitResult& result_;
};

struct SvgCanvas {
  double width;
  double height;
  std::ostringstream body;

  std::string finish(const std::string& title, const std::string& meta) const {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<!-- " << xml_escape(meta) << " -->\n";
    s << "<metadata>" << xml_escape(meta) << "</metadata>\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(title)
      << "</text>\n";
    s << body.str() << "</svg>\n";
    return s.str();
  }
};

struct Axis {
  double lo, hi, px_lo, px_hi;
  double operator()(double v) const { return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo); }
};

}  // namespace

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

ReportFormats ReportFormats::parse(std::string_view list) {
  ReportFormats f{false, false, false};
  for (const auto& item : split(list, ',')) {
    if (item == "tsv") f.tsv = true;
    else if (item == "json") f.json = true;
    else if (item == "svg") f.svg = true;
    else if (!item.empty()) throw ValidationError("unknown report format '" + item + "'");
  }
  return f;
}

void write_dllh_tsv(std::ostream& out, std::span<const CellResult> cells, const std::string& config_hash,
                    std::uint64_t seed) {
  out << "# " << provenance(config_hash, seed) << "\n";
  write_tsv_row(out, {"language", "scenario", "measure", "model_id", "context_mode", "mean_dllh", "ci_lo", "ci_hi", "p"});
  for (const auto& c : cells) {
    write_tsv_row(out, {c.language, to_string(c.scenario), to_string(c.measure), c.model_id, to_string(c.context_mode),
                        format_double(c.mean_dllh), format_double(c.ci_lo), format_double(c.ci_hi),
                        format_double(c.p_value)});
  }
}

void write_curve_tsv(std::ostream& out, std::span<const CurveResult> curves, const std::string& config_hash,
                     std::uint64_t seed) {
  out << "# " << provenance(config_hash, seed) << "\n";
  write_tsv_row(out, {"language", "model_id", "context_mode", "term", "surprisal_grid", "fit_ms", "lo", "hi",
                      "extrapolated"});
  for (const auto& c : curves) {
    for (const auto& p : c.curve.points) {
      write_tsv_row(out, {c.language, c.model_id, to_string(c.context_mode), c.curve.term, format_double(p.surprisal),
                          format_double(p.fit_ms), format_double(p.lo), format_double(p.hi),
                          p.extrapolated ? "1" : "0"});
    }
  }
}

std::string dllh_svg(std::span<const CellResult> cells, const std::string& title, const std::string& config_hash,
                     std::uint64_t seed) {
  const double bar = 46, gap = 18, left = 70, top = 40, plot_h = 220;
  SvgCanvas svg{left + 20 + std::max<double>(1, static_cast<double>(cells.size())) * (bar + gap), top + plot_h + 70, {}};
  double lo = 0.0, hi = 0.0;
  for (const auto& c : cells) {
    lo = std::min({lo, c.ci_lo, c.mean_dllh});
    hi = std::max({hi, c.ci_hi, c.mean_dllh});
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double pad = 0.15 * (hi - lo);
  const Axis y{lo - (lo < 0 ? pad : 0), hi + pad, top + plot_h, top};
  auto& b = svg.body;
  b << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << svg.width - 10 << "\" y2=\"" << y(0)
    << "\" stroke=\"black\"/>\n";
  b << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = y.lo + (y.hi - y.lo) * t / 4.0;
    b << "<text x=\"" << left - 4 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  b << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 " << top + plot_h / 2
    << ")\" text-anchor=\"middle\">delta llh (nats/word)</text>\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const double x = left + gap + static_cast<double>(i) * (bar + gap);
    const double y0 = y(std::max(0.0, c.mean_dllh));
    const double h = std::abs(y(c.mean_dllh) - y(0));
    b << "<rect x=\"" << x << "\" y=\"" << y0 << "\" width=\"" << bar << "\" height=\"" << h
      << "\" fill=\"#4c72b0\"/>\n";
    const double cx = x + bar / 2;
    b << "<line x1=\"" << cx << "\" y1=\"" << y(c.ci_lo) << "\" x2=\"" << cx << "\" y2=\"" << y(c.ci_hi)
      << "\" stroke=\"black\"/>\n";
    for (const double v : {c.ci_lo, c.ci_hi}) {
      b << "<line x1=\"" << cx - 6 << "\" y1=\"" << y(v) << "\" x2=\"" << cx + 6 << "\" y2=\"" << y(v)
        << "\" stroke=\"black\"/>\n";
    }
    b << "<text x=\"" << cx << "\" y=\"" << y(std::max(c.ci_hi, c.mean_dllh)) - 5 << "\" text-anchor=\"middle\">"
      << significance_stars(c.p_value) << "</text>\n";
    b << "<text x=\"" << cx << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">"
      << xml_escape(c.model_id) << "</text>\n";
    b << "<text x=\"" << cx << "\" y=\"" << top + plot_h + 30 << "\" text-anchor=\"middle\">"
      << to_string(c.context_mode) << "</text>\n";
  }
  b << "<text x=\"" << left << "\" y=\"" << svg.height - 8 << "\">* p &lt; .05  ** p &lt; .01  *** p &lt; .001</text>\n";
  return svg.finish(title, provenance(config_hash, seed));
}

std::string curve_svg(std::span<const CurveResult> curves, std::span<const HistogramResult> histograms,
                      const std::string& title, const std::string& config_hash, std::uint64_t seed) {
  const double panel_w = 300, panel_h = 200, hist_h = 50, left = 60, top = 40, gap = 50;
  std::map<std::string, std::vector<const CurveResult*>> by_column;
  for (const auto& c : curves) by_column[c.curve.column].push_back(&c);
  const auto n_panels = std::max<std::size_t>(1, by_column.size());
  SvgCanvas svg{left + static_cast<double>(n_panels) * (panel_w + gap), top + panel_h + hist_h + 60, {}};
  auto& b = svg.body;
  const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};
  std::size_t panel = 0;
  for (const auto& [column, list] : by_column) {
    const double x0 = left + static_cast<double>(panel) * (panel_w + gap);
    double lo = 0, hi = 0, gx_lo = 0, gx_hi = 20;
    for (const auto* c : list) {
      for (const auto& p : c->curve.points) {
        lo = std::min(lo, p.lo);
        hi = std::max(hi, p.hi);
        gx_lo = std::min(gx_lo, p.surprisal);
        gx_hi = std::max(gx_hi, p.surprisal);
      }
    }
    if (hi - lo < 1e-12) hi = lo + 1;
    const Axis x{gx_lo, gx_hi, x0, x0 + panel_w};
    const Axis y{lo, hi, top + panel_h, top};
    b << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << panel_w << "\" height=\"" << panel_h
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
    b << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << top - 6 << "\" text-anchor=\"middle\">"
      << xml_escape(column) << "</text>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = lo + (hi - lo) * t / 4.0;
      b << "<text x=\"" << x0 - 4 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
    }
    std::size_t series = 0;
    for (const auto* c : list) {
      const auto* color = colors[series++ % 4];
      std::ostringstream band, line;
      for (const auto& p : c->curve.points) band << x(p.surprisal) << "," << y(p.hi) << " ";
      for (auto it = c->curve.points.rbegin(); it != c->curve.points.rend(); ++it) {
        band << x(it->surprisal) << "," << y(it->lo) << " ";
      }
      for (const auto& p : c->curve.points) line << x(p.surprisal) << "," << y(p.fit_ms) << " ";
      b << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.2\"/>\n";
      b << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
      b << "<text x=\"" << x0 + 6 << "\" y=\"" << top + 14 * static_cast<double>(series) << "\" fill=\"" << color
        << "\">" << xml_escape(c->model + " " + c->curve.term + " " + c->model_id + "/" + to_string(c->context_mode))
        << "</text>\n";
    }
    for (const auto& h : histograms) {
      if (h.column != column || h.histogram.density.empty()) continue;
      const double max_d = *std::max_element(h.histogram.density.begin(), h.histogram.density.end());
      const double base = top + panel_h + hist_h + 10;
      for (std::size_t i = 0; i < h.histogram.density.size(); ++i) {
        const double a = std::clamp(x(h.histogram.edges[i]), x0, x0 + panel_w);
        const double z = std::clamp(x(h.histogram.edges[i + 1]), x0, x0 + panel_w);
        const double hh = max_d > 0 ? h.histogram.density[i] / max_d * hist_h : 0;
        b << "<rect x=\"" << a << "\" y=\"" << base - hh << "\" width=\"" << std::max(0.0, z - a) << "\" height=\""
          << hh << "\" fill=\"#999\"/>\n";
      }
      break;
    }
    for (int t = 0; t <= 4; ++t) {
      const double v = gx_lo + (gx_hi - gx_lo) * t / 4.0;
      b << "<text x=\"" << x(v) << "\" y=\"" << top + panel_h + hist_h + 26 << "\" text-anchor=\"middle\">" << num(v)
        << "</text>\n";
    }
    b << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << top + panel_h + hist_h + 42
      << "\" text-anchor=\"middle\">surprisal (bits)</text>\n";
    ++panel;
  }
  return svg.finish(title, provenance(config_hash, seed));
}

EmitResult emit_report(const Bundle& bundle, const std::string& directory, const ReportFormats& formats) {
  EmitResult result;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec || !fs::is_directory(directory)) {
    throw DataError("cannot create output directory " + directory + (ec ? ": " + ec.message() : ""));
  }
  FileWriter files(directory, result);
  const auto& hash = bundle.config_hash;
  const auto seed = bundle.seed;
  auto meta_json = [&](json j) {
    j["config_hash"] = hash;
    j["seed"] = seed;
    return j;
  };

  json manifest = meta_json(json::object());
  manifest["failures"] = json::array();
  for (const auto& f : bundle.failures) {
    manifest["failures"].push_back({{"cell", f.cell}, {"stage", f.stage}, {"kind", f.kind}, {"message", f.message}});
  }
  manifest["warnings"] = bundle.warnings;
  if (bundle.empty()) {
    result.warnings.push_back("bundle is empty: no results to report");
    files.write("failures.json", manifest.dump(2) + "\n");
    return result;
  }

  // Δllh tables per (language, measure, scenario).
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<CellResult>> groups;
  for (const auto& c : bundle.cells) groups[{c.language, to_string(c.measure), to_string(c.scenario)}].push_back(c);
  for (const auto& [key, cells] : groups) {
    const auto& [lang, measure, scenario] = key;
    const auto stem = lang + "_" + measure + "_" + scenario;
    if (formats.tsv) {
      std::ostringstream s;
      write_dllh_tsv(s, cells, hash, seed);
      files.write(stem + ".tsv", s.str());
    }
    if (formats.json) {
      json rows = json::array();
      for (const auto& c : cells) {
        json coefs = json::array();
        for (const auto& r : c.coefficients) {
          coefs.push_back({{"name", r.name}, {"estimate", r.estimate}, {"std_error", r.std_error}});
        }
        rows.push_back({{"model_id", c.model_id},
                        {"context_mode", to_string(c.context_mode)},
                        {"mean_dllh", c.mean_dllh},
                        {"ci_lo", c.ci_lo},
                        {"ci_hi", c.ci_hi},
                        {"p", c.p_value},
                        {"stars", significance_stars(c.p_value)},
                        {"n_obs", c.n_obs},
                        {"n_perm", c.n_perm},
                        {"cell_seed", c.seed},
                        {"fold_means", c.fold_means},
                        {"coefficients", coefs}});
      }
      const json doc = meta_json({{"language", lang}, {"measure", measure}, {"scenario", scenario}, {"results", rows}});
      files.write(stem + ".json", doc.dump(2) + "\n");
    }
    if (formats.svg) files.write(stem + ".svg", dllh_svg(cells, lang + " " + measure + " " + scenario, hash, seed));
  }

  if (formats.tsv && !bundle.cells.empty()) {
    std::ostringstream s;
    s << "# " << provenance(hash, seed) << "\n";
    write_tsv_row(s, {"language", "measure", "model_id", "context_mode", "scenario", "term", "estimate", "std_error"});
    for (const auto& c : bundle.cells) {
      for (const auto& r : c.coefficients) {
        write_tsv_row(s, {c.language, to_string(c.measure), c.model_id, to_string(c.context_mode),
                          to_string(c.scenario), r.name, format_double(r.estimate), format_double(r.std_error)});
      }
    }
    files.write("coefficients.tsv", s.str());
  }

  // GAM curves and linearity per (language, measure).
  std::map<std::pair<std::string, std::string>, std::vector<CurveResult>> curve_groups;
  for (const auto& c : bundle.curves) curve_groups[{c.language, to_string(c.measure)}].push_back(c);
  for (const auto& [key, list] : curve_groups) {
    const auto stem = key.first + "_" + key.second + "_gam";
    if (formats.tsv) {
      std::ostringstream s;
      write_curve_tsv(s, list, hash, seed);
      files.write(stem + "_curve.tsv", s.str());
    }
    if (formats.svg) {
      std::vector<HistogramResult> hists;
      for (const auto& h : bundle.histograms) {
        if (h.language == key.first && to_string(h.measure) == key.second) hists.push_back(h);
      }
      files.write(stem + ".svg", curve_svg(list, hists, key.first + " " + key.second + " GAM", hash, seed));
    }
  }
  std::map<std::pair<std::string, std::string>, std::vector<LinearityRow>> lin_groups;
  for (const auto& r : bundle.linearity) lin_groups[{r.language, to_string(r.measure)}].push_back(r);
  for (const auto& [key, rows] : lin_groups) {
    const auto stem = key.first + "_" + key.second + "_linearity";
    if (formats.tsv) {
      std::ostringstream s;
      s << "# " << provenance(hash, seed) << "\n";
      write_tsv_row(s, {"language", "measure", "model_id", "context_mode", "model", "mean_dllh", "ci_lo", "ci_hi", "p",
                        "comparison_p", "comparison_two_sided_p"});
      for (const auto& r : rows) {
        write_tsv_row(s, {r.language, to_string(r.measure), r.model_id, to_string(r.context_mode), "nonlinear",
                          format_double(r.nonlinear_dllh), format_double(r.nonlinear_ci_lo),
                          format_double(r.nonlinear_ci_hi), format_double(r.nonlinear_p),
                          format_double(r.comparison_p), format_double(r.comparison_two_sided_p)});
        write_tsv_row(s, {r.language, to_string(r.measure), r.model_id, to_string(r.context_mode), "linear",
                          format_double(r.linear_dllh), format_double(r.linear_ci_lo), format_double(r.linear_ci_hi),
                          format_double(r.linear_p), format_double(r.comparison_p),
                          format_double(r.comparison_two_sided_p)});
      }
      files.write(stem + ".tsv", s.str());
    }
  }

  if (formats.tsv && !bundle.perplexities.empty()) {
    std::ostringstream s;
    s << "# " << provenance(hash, seed) << "\n";
    write_tsv_row(s, {"language", "model_id", "perplexity"});
    for (const auto& p : bundle.perplexities) write_tsv_row(s, {p.language, p.model_id, format_double(p.perplexity)});
    files.write("perplexity.tsv", s.str());
  }
  if (!bundle.correlations.empty()) {
    if (formats.tsv) {
      std::ostringstream s;
      s << "# " << provenance(hash, seed) << "\n";
      write_tsv_row(s, {"measure", "model_id", "context_mode", "scenario", "level", "rho", "p", "n"});
      for (const auto& c : bundle.correlations) {
        write_tsv_row(s, {to_string(c.measure), c.model_id, to_string(c.context_mode), to_string(c.scenario), c.level,
                          format_double(c.rho), format_double(c.p_value), std::to_string(c.n)});
      }
      files.write("correlation.tsv", s.str());
    }
    if (formats.json) {
      json rows = json::array();
      for (const auto& c : bundle.correlations) {
        rows.push_back({{"measure", to_string(c.measure)}, {"model_id", c.model_id},
                        {"context_mode", to_string(c.context_mode)}, {"scenario", to_string(c.scenario)},
                        {"level", c.level}, {"rho", c.rho}, {"p", c.p_value}, {"n", c.n}});
      }
      files.write("correlation.json", meta_json({{"correlations", rows}}).dump(2) + "\n");
    }
  }
  files.write("failures.json", manifest.dump(2) + "\n");
  files.write("bundle.json", bundle.to_json().dump(2) + "\n");
  return result;
}

}  // namespace rtpower
