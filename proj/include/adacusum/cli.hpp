#pragma once

#include <adacusum/adaptive.hpp>
#include <adacusum/core_stats.hpp>
#include <adacusum/error.hpp>
#include <adacusum/reporting.hpp>
#include <adacusum/simulation.hpp>
#include <adacusum/testing.hpp>
#include <adacusum/weighting.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace adacusum::cli {

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitDegenerateVariance = 3;
inline constexpr int kExitH0Incompatible = 4;
inline constexpr int kExitTableConflict = 5;
inline constexpr int kExitMissingQuantile = 6;
inline constexpr int kExitReject = 10;

/// Reads a bare numeric column or `index,value` rows (index ignored). A
/// non-numeric first line is taken as a header; any later malformed line is
/// reported with its 1-based line number.
inline time_series read_series_csv(std::istream& in, const std::string& origin) {
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto fields = split_csv_line(line);
        std::optional<double> parsed;
        if (fields.size() == 1 || fields.size() == 2) {
            std::string f = fields.back();
            const auto b = f.find_first_not_of(" \t");
            const auto e = f.find_last_not_of(" \t");
            f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
            try {
                parsed = parse_double_exact(f);
                if (fields.size() == 2) {
                    (void)std::stod(fields.front());
                }
            } catch (const std::exception&) {
                parsed.reset();
            }
        }
        if (!parsed) {
            if (first_content) {
                first_content = false;
                continue;
            }
            throw invalid_input_error(origin + ":" + std::to_string(line_no) +
                                      ": expected a number or an index,value pair");
        }
        if (!std::isfinite(*parsed)) {
            throw invalid_input_error(origin + ":" + std::to_string(line_no) +
                                      ": non-finite value");
        }
        first_content = false;
        values.push_back(*parsed);
    }
    return time_series(std::move(values));
}

inline time_series read_series_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(path, "cannot open series file");
    return read_series_csv(in, path);
}

namespace detail {

inline std::vector<double> parse_number_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(parse_double_exact(item));
        } catch (const error&) {
            throw invalid_input_error(flag + ": malformed number '" + item + "'");
        }
    }
    if (out.empty()) throw invalid_input_error(flag + ": expected at least one value");
    return out;
}

inline std::uint64_t default_seed() {
    if (const char* env = std::getenv("ADACUSUM_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw invalid_input_error("ADACUSUM_SEED must be an unsigned integer");
    }
    return 1;
}

inline void print_json(std::ostream& out, const nlohmann::ordered_json& doc) {
    out << doc.dump(2) << '\n';
}

} // namespace detail

struct estimate_options {
    std::string input;
    std::string g;
    std::optional<double> gamma;
    bool studentize = false;
};

inline int cmd_estimate(const estimate_options& o, std::ostream& out) {
    const auto x = read_series_file(o.input);
    const auto p = cusum_profile(x);
    const double sigma = o.studentize ? sample_std(x) : 0.0;

    nlohmann::ordered_json doc;
    doc["n"] = x.size();
    doc["theta_hat"] = p.theta_hat;
    change_point_estimate est;
    double statistic = 0.0;
    if (o.gamma) {
        est = argmax_estimator(p, weight_exponent(*o.gamma));
        statistic = o.studentize ? est.statistic / sigma : est.statistic;
    } else {
        const auto r = adaptive_estimate(p, resolve_curve(o.g), sigma);
        doc["tau_prelim"] = r.tau_prelim;
        est = r.estimate;
        statistic = r.t_adaptive;
    }
    doc["gamma_used"] = est.gamma.value();
    doc["m_hat"] = est.m_hat;
    doc["tau_hat"] = est.tau_hat;
    doc["statistic"] = statistic;
    doc["studentized"] = o.studentize;
    detail::print_json(out, doc);
    return kExitOk;
}

struct test_options {
    std::string input;
    std::string g;
    double alpha = 0.05;
    std::string source = "kolmogorov";
    std::string table;
};

inline int cmd_test(const test_options& o, std::ostream& out) {
    const auto g = resolve_curve(o.g);
    quantile_source source;
    if (o.source == "kolmogorov") {
        source = quantile_source::kolmogorov;
    } else if (o.source == "table") {
        source = quantile_source::table;
    } else {
        throw invalid_input_error("--quantile-source must be kolmogorov or table");
    }
    if (source == quantile_source::kolmogorov && !g.h0_compatible()) {
        throw configuration_error("curve '" + g.name() +
                                  "' violates g(0)=g(1)=0, required for the Kolmogorov quantile");
    }
    std::optional<critical_value_table> table;
    if (source == quantile_source::table) {
        if (o.table.empty()) throw invalid_input_error("--quantile-source table needs --table");
        table = critical_value_table::load(o.table);
    }
    const auto x = read_series_file(o.input);
    const auto d = adaptive_test(x, g, o.alpha, source, table ? &*table : nullptr);
    nlohmann::ordered_json doc;
    doc["statistic"] = d.statistic;
    doc["critical_value"] = d.critical_value;
    doc["alpha"] = d.alpha;
    doc["reject"] = d.reject;
    doc["source"] = d.source;
    doc["gamma_hat"] = d.gamma_hat.value();
    detail::print_json(out, doc);
    return d.reject ? kExitReject : kExitOk;
}

struct quantile_options {
    std::string gamma = "grid";
    std::string n;
    std::string alpha = "0.95";
    std::size_t replications = 100000;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    std::string method = "finite_sample";
    std::size_t bridge_resolution = 20000;
    std::size_t workers = 0;
    std::string plot;
};

inline int cmd_quantile(const quantile_options& o, std::ostream& out, std::ostream& err) {
    const std::vector<double> gammas =
        o.gamma == "grid" ? default_gamma_grid() : detail::parse_number_list(o.gamma, "--gamma");
    for (double g : gammas) (void)weight_exponent(g);
    std::vector<std::size_t> ns;
    for (double v : detail::parse_number_list(o.n, "--n")) {
        if (v < 1 || v != std::floor(v)) throw invalid_input_error("--n: expected integers");
        ns.push_back(static_cast<std::size_t>(v));
    }
    const auto levels = detail::parse_number_list(o.alpha, "--alpha");
    for (double a : levels) {
        if (!(a > 0.0 && a < 1.0)) throw invalid_input_error("--alpha must lie in (0, 1)");
    }

    mc_settings settings;
    settings.replications = o.replications;
    settings.seed = o.seed ? *o.seed : detail::default_seed();
    settings.method = parse_quantile_method(o.method);
    settings.bridge_resolution = o.bridge_resolution;
    settings.workers = o.workers;
    for (auto n : ns) adacusum::detail::validate_mc(n, settings.replications);

    critical_value_table table(settings.seed, settings.replications, settings.method);
    if (std::filesystem::exists(o.out)) {
        table = critical_value_table::load(o.out);
        if (table.method() != settings.method) {
            err << "error: " << o.out << " holds " << to_string(table.method())
                << " critical values; refusing to mix in " << to_string(settings.method) << '\n';
            return kExitTableConflict;
        }
    }

    // Conflicts are detected before any simulation runs.
    for (auto n : ns) {
        for (double g : gammas) {
            for (double a : levels) {
                const auto* e = table.find(g, n, a);
                if (e != nullptr && (e->replications != settings.replications ||
                                     e->seed != settings.seed) && !o.force) {
                    err << "error: entry (gamma=" << g << ", n=" << n << ", alpha=" << a
                        << ") exists with M=" << e->replications << ", seed=" << e->seed
                        << "; use --force to replace it\n";
                    return kExitTableConflict;
                }
            }
        }
    }

    critical_value_table built(settings.seed, settings.replications, settings.method);
    for (auto n : ns) {
        std::vector<double> todo;
        for (double g : gammas) {
            for (double a : levels) {
                const auto* e = table.find(g, n, a);
                if (e == nullptr || e->replications != settings.replications ||
                    e->seed != settings.seed) {
                    todo.push_back(g);
                    break;
                }
            }
        }
        if (!todo.empty()) {
            for (const auto& e : mc_quantiles(n, todo, levels, settings)) {
                table.insert(e, o.force);
            }
        }
        for (double g : gammas) {
            for (double a : levels) built.insert(*table.find(g, n, a));
        }
    }
    table.save(o.out);
    out << table_csv(built);

    if (!o.plot.empty()) {
        std::vector<std::pair<double, double>> lines;
        for (const auto& e : built.entries()) {
            if (e.n == ns.front() && std::fabs(e.alpha - levels.front()) < 1e-12) {
                lines.emplace_back(e.gamma, e.value);
            }
        }
        auto spec = critical_lines_spec(lines);
        spec.title = "critical boundary, n=" + std::to_string(ns.front()) +
                     ", level=" + format_number(levels.front());
        spec.output_path = o.plot;
        emit_plot(spec);
    }
    return kExitOk;
}

struct simulate_options {
    std::string manifest;
    std::string out_dir = ".";
    std::optional<std::size_t> replications;
    std::size_t workers = 0;
};

inline int cmd_simulate(const simulate_options& o, std::ostream& out) {
    std::ifstream in(o.manifest, std::ios::binary);
    if (!in) throw io_error(o.manifest, "cannot open manifest");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw manifest_error("", std::string("invalid JSON: ") + e.what());
    }
    if (doc.is_object()) {
        if (o.replications) doc["M"] = *o.replications;
        if (!doc.contains("seed") && std::getenv("ADACUSUM_SEED") != nullptr) {
            doc["seed"] = detail::default_seed();
        }
    }
    auto man = parse_manifest(doc, std::filesystem::path(o.manifest).parent_path());
    man.workers = o.workers;

    const auto result = run_experiment(man, man.want_mse, man.want_density);
    std::filesystem::create_directories(o.out_dir);
    if (man.want_mse) {
        emit_csv(result, artifact_path(o.out_dir, man.id, "mse", "csv"));
        const auto panels = mse_panels(result);
        if (!panels.empty()) emit_plot(panels, artifact_path(o.out_dir, man.id, "mse", "svg"));
    }
    if (man.want_density) {
        emit_density_csv(result, artifact_path(o.out_dir, man.id, "density", "csv"));
        emit_plot(density_panels(result), artifact_path(o.out_dir, man.id, "density", "svg"));
    }

    out << "experiment " << man.id << " (M=" << man.replications << ", seed=" << man.seed
        << ")\n";
    out << std::left << std::setw(14) << "noise" << std::setw(7) << "n" << std::setw(8)
        << "delta" << std::setw(7) << "tau" << std::setw(12) << "estimator"
        << "mse\n";
    for (const auto& row : result.rows) {
        out << std::left << std::setw(14) << to_string(row.cell.noise) << std::setw(7)
            << row.cell.n << std::setw(8) << format_number(row.cell.delta) << std::setw(7)
            << format_number(row.cell.tau) << std::setw(12) << row.estimator
            << (row.mse ? format_fixed(*row.mse, 6) : std::string(row.h0 ? "NA (H0)" : "-"))
            << '\n';
    }
    return kExitOk;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Weighted CUSUM change-point estimation with data-driven weights"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    estimate_options est;
    auto* estimate = app.add_subcommand("estimate", "Estimate the change point of a series");
    estimate->add_option("input", est.input, "CSV: one numeric column or index,value pairs")
        ->required();
    auto* est_g = estimate->add_option("--g", est.g,
                                       "g-curve: i|ii|iii|iv|v|vi|tent or an x,g CSV file");
    auto* est_gamma = estimate->add_option("--gamma", est.gamma, "Fixed weight exponent in [0, 0.5]");
    est_g->excludes(est_gamma);
    estimate->add_flag("--studentize", est.studentize, "Divide the statistic by the sample sd");

    test_options tst;
    auto* test = app.add_subcommand(
        "test", "Adaptive weighted CUSUM test (exit 0: no change, 10: reject)");
    test->add_option("input", tst.input, "CSV: one numeric column or index,value pairs")
        ->required();
    test->add_option("--g", tst.g, "g-curve: i|ii|iii|iv|v|vi|tent or an x,g CSV file")
        ->required();
    test->add_option("--alpha", tst.alpha, "Significance level")->default_val(0.05);
    test->add_option("--quantile-source", tst.source, "kolmogorov or table")
        ->default_val("kolmogorov");
    test->add_option("--table", tst.table, "Critical value table (JSON) for --quantile-source table");

    quantile_options q;
    auto* quantile = app.add_subcommand("quantile", "Build or extend a Monte Carlo critical value table");
    quantile->add_option("--gamma", q.gamma, "Weight exponent(s): value, comma list or 'grid'")
        ->default_val("grid");
    quantile->add_option("--n", q.n, "Sample size(s), comma separated")->required();
    quantile->add_option("--alpha", q.alpha, "Quantile level(s), comma separated")
        ->default_val("0.95");
    quantile->add_option("--M", q.replications, "Monte Carlo replications (>= 1000)")
        ->default_val(100000);
    quantile->add_option("--seed", q.seed, "Seed (default: $ADACUSUM_SEED or 1)");
    quantile->add_option("--out", q.out, "Table file (JSON), created or extended")->required();
    quantile->add_flag("--force", q.force, "Replace entries built with another seed or M");
    quantile->add_option("--method", q.method, "finite_sample (studentized) or bridge (limit process)")
        ->default_val("finite_sample");
    quantile->add_option("--bridge-resolution", q.bridge_resolution,
                         "Minimum grid points of the simulated bridge")
        ->default_val(20000);
    quantile->add_option("--workers", q.workers, "Worker threads (0: all cores)")->default_val(0);
    quantile->add_option("--plot", q.plot, "Also write an SVG of the critical boundaries");

    simulate_options sim;
    auto* simulate = app.add_subcommand("simulate", "Run an experiment manifest");
    simulate->add_option("--manifest", sim.manifest, "Experiment manifest (JSON)")->required();
    simulate->add_option("--out-dir", sim.out_dir, "Output directory")->default_val(".");
    simulate->add_option("--M", sim.replications, "Override the manifest replication count");
    simulate->add_option("--workers", sim.workers, "Worker threads (0: all cores)")->default_val(0);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInvalidInput;
    }

    try {
        if (*estimate) {
            if (est.g.empty() && !est.gamma) {
                err << "error: estimate needs --g or --gamma\n";
                return kExitInvalidInput;
            }
            return cmd_estimate(est, out);
        }
        if (*test) return cmd_test(tst, out);
        if (*quantile) return cmd_quantile(q, out, err);
        if (*simulate) return cmd_simulate(sim, out);
    } catch (const manifest_error& e) {
        err << "error: invalid manifest at " << (e.pointer().empty() ? "/" : e.pointer()) << ": "
            << e.what() << '\n';
        return kExitInvalidInput;
    } catch (const degenerate_variance_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitDegenerateVariance;
    } catch (const missing_quantile_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitMissingQuantile;
    } catch (const configuration_error& e) {
        err << "error: " << e.what() << '\n';
        return *test ? kExitH0Incompatible : kExitInvalidInput;
    } catch (const io_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const error& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalidInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace adacusum::cli
