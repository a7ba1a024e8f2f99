#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rtpower/errors.hpp"
#include "rtpower/io.hpp"
#include "rtpower/report.hpp"
#include "support/fixture.hpp"

using namespace rtpower;
namespace fs = std::filesystem;

namespace {

CellResult cell(const std::string& lang, Scenario s, double dllh, double p) {
  CellResult c;
  c.language = lang;
  c.model_id = "m";
  c.scenario = s;
  c.mean_dllh = dllh;
  c.ci_lo = dllh - 0.01;
  c.ci_hi = dllh + 0.01;
  c.p_value = p;
  c.n_obs = 100;
  c.n_perm = 999;
  return c;
}

}  // namespace

TEST_CASE("significance stars") {
  CHECK(significance_stars(0.0004) == "***");
  CHECK(significance_stars(0.001) == "**");
  CHECK(significance_stars(0.009) == "**");
  CHECK(significance_stars(0.04) == "*");
  CHECK(significance_stars(0.05) == "");
  CHECK(significance_stars(0.5) == "");
}

TEST_CASE("formats parse") {
  const auto f = ReportFormats::parse("tsv,svg");
  CHECK(f.tsv);
  CHECK_FALSE(f.json);
  CHECK(f.svg);
  CHECK_THROWS_AS(ReportFormats::parse("tsv,pdf"), ValidationError);
}

TEST_CASE("delta llh TSV has nine columns and the provenance line") {
  const std::vector<CellResult> cells{cell("en", Scenario::surprisal, 0.02, 0.0001),
                                      cell("en", Scenario::entropy_add, -0.001, 0.4)};
  std::stringstream out;
  write_dllh_tsv(out, cells, "abc123", 42);
  std::string first;
  std::getline(out, first);
  CHECK(first == "# config_hash=abc123 seed=42");
  out.seekg(0);
  const auto table = read_tsv(out, "mem");
  CHECK(table.header.size() == 9);
  REQUIRE(table.rows.size() == 2);
  for (const auto& row : table.rows) CHECK(row.size() == 9);
  CHECK(table.rows[0][0] == "en");
  CHECK(table.rows[0][1] == "surprisal");
  CHECK(parse_double(table.rows[0][5], "dllh") == 0.02);
}

TEST_CASE("an empty bundle writes only the failure manifest and warns") {
  const auto dir = fixture::temp_dir("empty_report");
  Bundle bundle;
  bundle.config_hash = "00";
  bundle.failures.push_back({"en/gaze_duration", "ingest", "data", "broken"});
  const auto result = emit_report(bundle, dir.string());
  REQUIRE(result.files.size() == 1);
  CHECK(fs::path(result.files[0]).filename() == "failures.json");
  CHECK_FALSE(result.warnings.empty());
  std::ifstream in(dir / "failures.json");
  const auto manifest = nlohmann::json::parse(in);
  CHECK(manifest.at("failures").size() == 1);
}

TEST_CASE("unwritable output locations raise a data error") {
  const auto dir = fixture::temp_dir("unwritable");
  {
    std::ofstream blocker(dir / "file");
    blocker << "x";
  }
  Bundle bundle;
  bundle.cells.push_back(cell("en", Scenario::surprisal, 0.02, 0.0001));
  CHECK_THROWS_AS(emit_report(bundle, (dir / "file" / "sub").string()), DataError);
}

TEST_CASE("svg panels carry bars, whiskers and stars") {
  const std::vector<CellResult> cells{cell("en", Scenario::surprisal, 0.02, 0.0001),
                                      cell("de", Scenario::surprisal, 0.01, 0.03),
                                      cell("fi", Scenario::surprisal, -0.002, 0.6)};
  const auto svg = dllh_svg(cells, "panel", "h", 1);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("***") != std::string::npos);
  CHECK(svg.find(">*<") != std::string::npos);
  CHECK(svg.find("config_hash=h") != std::string::npos);
}
