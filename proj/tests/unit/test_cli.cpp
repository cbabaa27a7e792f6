#include <adacusum/cli.hpp>

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace adacusum;
namespace fs = std::filesystem;

namespace {

struct result {
    int code;
    std::string out;
    std::string err;
};

result run(std::vector<std::string> args) {
    args.insert(args.begin(), "adacusum");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string data(const char* name) { return std::string(ADACUSUM_TEST_DATA) + "/" + name; }

fs::path scratch(const char* name) {
    const auto dir = fs::temp_directory_path() / "adacusum_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST_CASE("series reader") {
    std::istringstream bare("1\n2\n3\n");
    CHECK(cli::read_series_csv(bare, "x").size() == 3);
    std::istringstream header("x\n1\n2\n");
    CHECK(cli::read_series_csv(header, "x").size() == 2);
    std::istringstream pairs("index,value\n1,0.5\n2,0.7\n");
    const auto s = cli::read_series_csv(pairs, "x");
    CHECK(s[1] == 0.7);
    std::istringstream bad("1\n2\nfoo\n");
    try {
        (void)cli::read_series_csv(bad, "in.csv");
        FAIL("expected invalid input");
    } catch (const invalid_input_error& e) {
        CHECK(std::string(e.what()).find("in.csv:3") != std::string::npos);
    }
}

TEST_CASE("estimate") {
    auto r = run({"estimate", data("step.csv"), "--gamma", "0.5"});
    REQUIRE(r.code == cli::kExitOk);
    const auto doc = nlohmann::json::parse(r.out);
    CHECK(doc["m_hat"] == 3);
    CHECK(doc["n"] == 5);
    CHECK(doc["statistic"].get<double>() == Catch::Approx(4.38178).epsilon(1e-6));
    CHECK_FALSE(doc.contains("tau_prelim"));

    r = run({"estimate", data("indexed.csv"), "--g", "iv"});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(nlohmann::json::parse(r.out)["m_hat"] == 3);
    CHECK(nlohmann::json::parse(r.out).contains("tau_prelim"));

    r = run({"estimate", data("step.csv"), "--g", "ii"});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(nlohmann::json::parse(r.out)["gamma_used"].get<double>() == Catch::Approx(0.1));
    CHECK(nlohmann::json::parse(r.out)["m_hat"] == 3);

    const auto fixed = nlohmann::json::parse(run({"estimate", data("step.csv"), "--gamma", "0"}).out);
    const auto viaI = nlohmann::json::parse(run({"estimate", data("step.csv"), "--g", "i"}).out);
    CHECK(viaI["m_hat"] == fixed["m_hat"]);
    CHECK(viaI["statistic"] == fixed["statistic"]);
    CHECK(viaI["gamma_used"] == 0.0);

    r = run({"estimate", data("trapezoid.csv"), "--g", data("trapezoid.csv")});
    CHECK(r.code == cli::kExitOk);

    CHECK(run({"estimate", data("step.csv")}).code == cli::kExitInvalidInput);
    CHECK(run({"estimate", data("step.csv"), "--g", "iv", "--gamma", "0.1"}).code ==
          cli::kExitInvalidInput);
    CHECK(run({"estimate", data("step.csv"), "--gamma", "0.7"}).code == cli::kExitInvalidInput);
    CHECK(run({"estimate", data("step.csv"), "--g", "nope"}).code == cli::kExitFailure);
    r = run({"estimate", data("malformed.csv"), "--gamma", "0"});
    CHECK(r.code == cli::kExitInvalidInput);
    CHECK(r.err.find(":3:") != std::string::npos);
    CHECK(run({"estimate", data("constant.csv"), "--gamma", "0", "--studentize"}).code ==
          cli::kExitDegenerateVariance);
    CHECK(run({"estimate", "/nonexistent.csv", "--gamma", "0"}).code == cli::kExitFailure);
    CHECK(run({}).code == cli::kExitInvalidInput);
    CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("test subcommand") {
    const auto dir = scratch("test");
    std::string strong;
    for (int i = 0; i < 100; ++i) strong += (i < 50 ? "0" : "4") + std::string(i % 2 ? ".1\n" : ".3\n");
    write(dir / "strong.csv", strong);

    auto r = run({"test", (dir / "strong.csv").string(), "--g", "tent"});
    CHECK(r.code == cli::kExitReject);
    const auto doc = nlohmann::json::parse(r.out);
    CHECK(doc["reject"] == true);
    CHECK(doc["source"] == "kolmogorov");
    CHECK(doc["critical_value"].get<double>() == Catch::Approx(1.3581).margin(1e-4));

    r = run({"test", data("constant.csv"), "--g", "i"});
    CHECK(r.code == cli::kExitOk);

    r = run({"test", (dir / "strong.csv").string(), "--g", "iv"});
    CHECK(r.code == cli::kExitH0Incompatible);
    CHECK(r.err.find("g(0)=g(1)=0") != std::string::npos);

    CHECK(run({"test", (dir / "strong.csv").string(), "--g", "iv", "--quantile-source", "table"})
              .code == cli::kExitInvalidInput);
    CHECK(run({"test", (dir / "strong.csv").string(), "--g", "i", "--quantile-source", "magic"})
              .code == cli::kExitInvalidInput);

    const auto table = (dir / "t.json").string();
    REQUIRE(run({"quantile", "--gamma", "grid", "--n", "100", "--M", "1000", "--out", table})
                .code == cli::kExitOk);
    r = run({"test", (dir / "strong.csv").string(), "--g", "iv", "--quantile-source", "table",
             "--table", table});
    CHECK(r.code == cli::kExitReject);
    CHECK(nlohmann::json::parse(r.out)["source"].get<std::string>().rfind("table:", 0) == 0);
    CHECK(run({"test", (dir / "strong.csv").string(), "--g", "iv", "--quantile-source", "table",
               "--table", table, "--alpha", "0.1"})
              .code == cli::kExitMissingQuantile);
    CHECK(run({"test", data("step.csv"), "--g", "iv", "--quantile-source", "table", "--table",
               table})
              .code == cli::kExitMissingQuantile);
}

TEST_CASE("quantile subcommand is idempotent") {
    const auto dir = scratch("quantile");
    const auto table = (dir / "t.json").string();
    auto r = run({"quantile", "--gamma", "0,0.25", "--n", "50,60", "--alpha", "0.9,0.95", "--M",
                  "1000", "--seed", "9", "--out", table});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 8);
    std::ifstream first(table);
    const std::string before((std::istreambuf_iterator<char>(first)), {});

    r = run({"quantile", "--gamma", "0.25", "--n", "50", "--M", "1000", "--seed", "9", "--out",
             table});
    CHECK(r.code == cli::kExitOk);
    std::ifstream second(table);
    CHECK(std::string((std::istreambuf_iterator<char>(second)), {}) == before);

    r = run({"quantile", "--gamma", "0.25", "--n", "50", "--M", "1000", "--seed", "10", "--out",
             table});
    CHECK(r.code == cli::kExitTableConflict);
    r = run({"quantile", "--gamma", "0.25", "--n", "50", "--M", "1000", "--seed", "10", "--out",
             table, "--force"});
    CHECK(r.code == cli::kExitOk);
    CHECK(critical_value_table::load(table).find(0.25, 50, 0.95)->seed == 10);
    CHECK(critical_value_table::load(table).find(0.0, 50, 0.95)->seed == 9);

    CHECK(run({"quantile", "--gamma", "0.25", "--n", "50", "--M", "1000", "--out", table,
               "--method", "bridge"})
              .code == cli::kExitTableConflict);
    CHECK(run({"quantile", "--gamma", "0.25", "--n", "50", "--M", "10", "--out",
               (dir / "u.json").string()})
              .code == cli::kExitInvalidInput);
    CHECK(run({"quantile", "--gamma", "0.8", "--n", "50", "--M", "1000", "--out",
               (dir / "u.json").string()})
              .code == cli::kExitInvalidInput);

    const auto svg = dir / "lines.svg";
    r = run({"quantile", "--gamma", "0,0.5", "--n", "50", "--M", "1000", "--seed", "9", "--out",
             (dir / "v.json").string(), "--plot", svg.string()});
    CHECK(r.code == cli::kExitOk);
    CHECK(fs::exists(svg));
}

TEST_CASE("quantile seed comes from the environment") {
    const auto dir = scratch("env");
    setenv("ADACUSUM_SEED", "77", 1);
    const auto r = run({"quantile", "--gamma", "0", "--n", "20", "--M", "1000", "--out",
                        (dir / "t.json").string()});
    unsetenv("ADACUSUM_SEED");
    REQUIRE(r.code == cli::kExitOk);
    CHECK(critical_value_table::load((dir / "t.json").string()).seed() == 77);
}

TEST_CASE("simulate subcommand") {
    const auto dir = scratch("simulate");
    write(dir / "m.json", R"({"id": "cli", "grid": {"n": [30], "delta": [1.0], "tau": [0.5, 1.0]},
        "estimators": [{"label": "i", "g": "i"}, {"label": "vi", "g": "vi"}],
        "M": 200, "outputs": ["mse", "density"]})");
    auto r = run({"simulate", "--manifest", (dir / "m.json").string(), "--out-dir",
                  (dir / "out").string()});
    REQUIRE(r.code == cli::kExitOk);
    for (auto f : {"cli_mse.csv", "cli_mse.svg", "cli_density.csv", "cli_density.svg"}) {
        CHECK(fs::exists(dir / "out" / f));
    }
    CHECK(r.out.find("NA (H0)") != std::string::npos);

    r = run({"simulate", "--manifest", (dir / "m.json").string(), "--out-dir",
             (dir / "out2").string(), "--M", "50"});
    CHECK(r.code == cli::kExitInvalidInput);
    CHECK(r.err.find("/M") != std::string::npos);

    write(dir / "bad.json", R"({"grid": {"n": [30], "tau": [0.5]}, "estimators": [{"label": "x"}], "M": 200})");
    r = run({"simulate", "--manifest", (dir / "bad.json").string()});
    CHECK(r.code == cli::kExitInvalidInput);
    CHECK(r.err.find("/estimators/0") != std::string::npos);

    write(dir / "broken.json", "{not json");
    CHECK(run({"simulate", "--manifest", (dir / "broken.json").string()}).code ==
          cli::kExitInvalidInput);
    CHECK(run({"simulate", "--manifest", (dir / "missing.json").string()}).code ==
          cli::kExitFailure);
}
