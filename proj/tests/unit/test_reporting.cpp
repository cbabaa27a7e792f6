#include <adacusum/reporting.hpp>

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace adacusum;
using Catch::Approx;

namespace {

experiment_result small_result() {
    auto man = parse_manifest(nlohmann::json::parse(R"({
        "id": "rep",
        "grid": {"n": [30], "delta": [0.5, 1.0], "tau": [0.3, 1.0]},
        "estimators": [{"label": "i", "g": "i"}, {"label": "iv", "g": "iv"}],
        "M": 200, "outputs": ["mse", "density"]
    })"));
    return run_experiment(man, true, true);
}

std::size_t count(const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
    return n;
}

} // namespace

TEST_CASE("number formatting round trips") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(3.0) == "3");
    CHECK(parse_double_exact(format_number(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_fixed(0.123456789, 4) == "0.1235");
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(split_csv_line("a,\"b,c\",\"d\"\"e\"") == std::vector<std::string>{"a", "b,c", "d\"e"});
    CHECK_THROWS_AS(parse_double_exact("1.5x"), invalid_input_error);
}

TEST_CASE("mse csv is deterministic and parses back") {
    const auto a = mse_csv(small_result());
    const auto b = mse_csv(small_result());
    CHECK(a == b);
    std::istringstream in(a);
    const auto rows = parse_mse_csv(in);
    REQUIRE(rows.size() == 8);
    const auto r = small_result();
    for (std::size_t j = 0; j < rows.size(); ++j) {
        CHECK(rows[j].estimator == r.rows[j].estimator);
        CHECK(rows[j].mse == r.rows[j].mse);
        CHECK(rows[j].replications == 200);
    }
    CHECK(count(a, ",NA\n") == 4);  // H0 cells have no MSE

    std::istringstream bad("noise,n\n");
    CHECK_THROWS_AS(parse_mse_csv(bad), invalid_input_error);
}

TEST_CASE("density csv layout") {
    const auto csv = density_csv(small_result());
    CHECK(csv.rfind("noise,n,delta,tau,estimator,x,f\n", 0) == 0);
    CHECK(count(csv, "\n") == 1 + 8 * 512);
}

TEST_CASE("table csv") {
    critical_value_table t(3, 1000, quantile_method::finite_sample);
    t.insert({0.5, 100, 0.95, 3.0, 0.02, 1000, 3});
    CHECK(table_csv(t) == "gamma,n,alpha,value,stderr,M,seed\n0.5,100,0.95,3,0.02,1000,3\n");
}

TEST_CASE("plot validation") {
    plot_spec spec;
    CHECK_THROWS_AS(validate(spec), invalid_input_error);
    spec.series.push_back({"a", {1, 2}, {1}});
    CHECK_THROWS_AS(validate(spec), invalid_input_error);
    spec.series[0] = {"a", {}, {}};
    CHECK_THROWS_AS(validate(spec), invalid_input_error);
    spec.series[0] = {"a", {1, 2}, {1, NAN}};
    CHECK_THROWS_AS(validate(spec), invalid_input_error);
    spec.series[0] = {"a", {1, 2}, {1, 2}};
    CHECK_NOTHROW(validate(spec));
}

TEST_CASE("critical lines peak at c times one quarter to the gamma") {
    const auto spec = critical_lines_spec({{0.0, 1.36}, {0.5, 3.2}});
    REQUIRE(spec.series.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) {
        const auto& y = spec.series[j].y;
        const double peak = *std::max_element(y.begin(), y.end());
        CHECK(peak == Approx(j == 0 ? 1.36 : 1.6));
        CHECK(y.front() == Approx(y.back()));
    }
}

TEST_CASE("svg output") {
    const auto r = small_result();
    const auto panels = mse_panels(r);
    REQUIRE_FALSE(panels.empty());
    const auto svg = render_svg(panels);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(count(svg, "<polyline") >= 2);
    CHECK(svg == render_svg(mse_panels(r)));

    auto spec = critical_lines_spec({{0.25, 2.0}});
    spec.title = "a < b & c";
    const auto escaped = render_svg(spec);
    CHECK(escaped.find("a &lt; b &amp; c") != std::string::npos);

    const auto dir = std::filesystem::temp_directory_path() / "adacusum_reporting_test";
    std::filesystem::create_directories(dir);
    const auto path = artifact_path(dir, "rep", "density", "svg");
    CHECK(path.filename() == "rep_density.svg");
    emit_plot(density_panels(r), path);
    CHECK(std::filesystem::file_size(path) > 1000);
    emit_csv(r, artifact_path(dir, "rep", "mse", "csv"));
    std::ifstream in(artifact_path(dir, "rep", "mse", "csv"));
    CHECK(parse_mse_csv(in).size() == 8);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(write_text_file("/nonexistent/dir/x.csv", "x"), io_error);
}
