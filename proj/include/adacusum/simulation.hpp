#pragma once

#include <adacusum/adaptive.hpp>
#include <adacusum/core_stats.hpp>
#include <adacusum/error.hpp>
#include <adacusum/parallel.hpp>
#include <adacusum/philox.hpp>
#include <adacusum/weighting.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace adacusum {

// ---------------------------------------------------------------------------
// Noise and AMOC samples
// ---------------------------------------------------------------------------

enum class noise_family { gaussian, exponential1, poisson1, uniform01 };

inline std::string to_string(noise_family f) {
    switch (f) {
    case noise_family::gaussian: return "gaussian";
    case noise_family::exponential1: return "exponential1";
    case noise_family::poisson1: return "poisson1";
    case noise_family::uniform01: return "uniform01";
    }
    return "gaussian";
}

inline std::optional<noise_family> parse_noise_family(std::string_view s) {
    if (s == "gaussian") return noise_family::gaussian;
    if (s == "exponential1") return noise_family::exponential1;
    if (s == "poisson1") return noise_family::poisson1;
    if (s == "uniform01") return noise_family::uniform01;
    return std::nullopt;
}

/// Centred draw: N(0,1), Exp(1)-1, Poi(1)-1 or U[0,1]-1/2.
inline double noise_draw(noise_family family, substream& rng) noexcept {
    switch (family) {
    case noise_family::gaussian: return rng.normal();
    case noise_family::exponential1: return -std::log(rng.uniform()) - 1.0;
    case noise_family::poisson1: {
        // Inversion with rate 1; the loop bound only guards u == 1 - 2^-54.
        const double u = rng.uniform();
        double p = std::exp(-1.0);
        double cdf = p;
        int k = 0;
        while (u > cdf && k < 64) {
            ++k;
            p /= k;
            cdf += p;
        }
        return static_cast<double>(k) - 1.0;
    }
    case noise_family::uniform01: return rng.uniform() - 0.5;
    }
    return 0.0;
}

struct amoc_spec {
    std::size_t n = 50;
    double mu = 0.0;
    double delta = 0.0;
    double tau = 1.0;
    noise_family noise = noise_family::gaussian;

    void validate() const {
        if (n < 2) throw invalid_input_error("AMOC sample size must be at least 2");
        if (!(tau > 0.0 && tau <= 1.0)) {
            throw invalid_input_error("AMOC tau must lie in (0, 1], got " + std::to_string(tau));
        }
        if (!std::isfinite(mu) || !std::isfinite(delta)) {
            throw invalid_input_error("AMOC mu and delta must be finite");
        }
    }

    /// m = floor(tau n); products that land within 1e-9 below an integer
    /// (0.3 * 50 and friends) count as that integer.
    std::size_t change_index() const noexcept {
        const double raw = tau * static_cast<double>(n);
        const double m = std::floor(raw + 1e-9);
        return static_cast<std::size_t>(std::min(m, static_cast<double>(n)));
    }

    bool is_h0() const noexcept { return tau >= 1.0 || delta == 0.0; }
};

namespace detail {

inline void fill_sample(const amoc_spec& spec, substream& rng, std::span<double> out) noexcept {
    const std::size_t m = spec.change_index();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double level = (i + 1 <= m) ? spec.mu : spec.mu + spec.delta;
        out[i] = level + noise_draw(spec.noise, rng);
    }
}

} // namespace detail

/// x_i = mu + eps_i for i <= m and mu + delta + eps_i afterwards, using the
/// (seed, rep) substream.
inline time_series generate_sample(const amoc_spec& spec, std::uint64_t seed, std::uint64_t rep) {
    spec.validate();
    std::vector<double> x(spec.n);
    substream rng(seed, rep);
    detail::fill_sample(spec, rng, x);
    return time_series(std::move(x));
}

// ---------------------------------------------------------------------------
// Kernel density estimation on [0, 1]
// ---------------------------------------------------------------------------

struct density_curve {
    std::vector<double> x;
    std::vector<double> f;
    double bandwidth = 0.0;
};

namespace detail {

/// Sample quantile, R type 7, of sorted data.
inline double quantile_type7(std::span<const double> sorted, double p) noexcept {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace detail

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) m^(-1/5), with R's
/// bw.nrd0 fallbacks when the spread estimates vanish.
inline double silverman_bandwidth(std::span<const double> data) {
    if (data.size() < 2) throw invalid_input_error("bandwidth needs at least 2 points");
    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    const double sd = detail::sample_std(sorted);
    const double iqr = detail::quantile_type7(sorted, 0.75) - detail::quantile_type7(sorted, 0.25);
    double lo = std::min(sd, iqr / 1.34);
    if (lo <= 0.0) lo = sd;
    if (lo <= 0.0) lo = std::fabs(sorted.front());
    if (lo <= 0.0) lo = 1.0;
    return 0.9 * lo * std::pow(static_cast<double>(data.size()), -0.2);
}

/// Gaussian-kernel density of data in [0, 1] on `grid` equispaced points,
/// reflected at both boundaries. The bandwidth is floored at two grid steps so
/// the trapezoid rule on the output grid stays accurate for very peaked data.
inline density_curve reflected_kde(std::span<const double> data, std::size_t grid = 512) {
    if (grid < 2) throw invalid_input_error("density grid needs at least 2 points");
    const double step = 1.0 / static_cast<double>(grid - 1);
    density_curve out;
    out.bandwidth = std::max(silverman_bandwidth(data), 2.0 * step);
    out.x.resize(grid);
    out.f.assign(grid, 0.0);

    // Estimates live on a k/n lattice, so collapse duplicates first.
    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::pair<double, double>> atoms;
    for (double v : sorted) {
        if (!atoms.empty() && atoms.back().first == v) {
            atoms.back().second += 1.0;
        } else {
            atoms.emplace_back(v, 1.0);
        }
    }

    const double h = out.bandwidth;
    const double norm = 1.0 / (static_cast<double>(data.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    const auto kernel = [h](double d) { return std::exp(-0.5 * (d / h) * (d / h)); };
    for (std::size_t j = 0; j < grid; ++j) {
        const double x = j + 1 == grid ? 1.0 : static_cast<double>(j) * step;
        out.x[j] = x;
        double acc = 0.0;
        for (const auto& [v, count] : atoms) {
            acc += count * (kernel(x - v) + kernel(x + v) + kernel(x - (2.0 - v)));
        }
        out.f[j] = acc * norm;
    }
    return out;
}

/// Trapezoid integral of the curve over [lo, hi] (clipped to the grid), with
/// linear interpolation inside partially covered cells.
inline double density_mass(const density_curve& d, double lo = 0.0, double hi = 1.0) {
    double total = 0.0;
    for (std::size_t j = 1; j < d.x.size(); ++j) {
        const double a = std::max(lo, d.x[j - 1]);
        const double b = std::min(hi, d.x[j]);
        if (b <= a) continue;
        const double width = d.x[j] - d.x[j - 1];
        const auto at = [&](double t) {
            return d.f[j - 1] + (d.f[j] - d.f[j - 1]) * (t - d.x[j - 1]) / width;
        };
        total += 0.5 * (at(a) + at(b)) * (b - a);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Experiment manifests
// ---------------------------------------------------------------------------

/// Manifest validation failure; `pointer` is the JSON pointer of the field.
class manifest_error : public invalid_input_error {
public:
    manifest_error(std::string pointer, const std::string& what)
        : invalid_input_error(pointer + ": " + what), pointer_(std::move(pointer)) {}

    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

struct estimator_spec {
    std::string label;
    g_curve curve;
};

struct experiment_manifest {
    static constexpr std::size_t kMinReplications = 100;

    std::string id = "experiment";
    std::vector<noise_family> noise{noise_family::gaussian};
    std::vector<std::size_t> n{50};
    std::vector<double> delta{0.4};
    std::vector<double> tau{0.5};
    double mu = 0.0;
    std::vector<estimator_spec> estimators;
    std::size_t replications = 10000;
    std::uint64_t seed = 1;
    bool want_mse = true;
    bool want_density = false;
    std::size_t workers = 0;
};

/// Default delta grid 0.3, 0.4, ..., 1.1.
inline std::vector<double> default_delta_grid() {
    std::vector<double> grid;
    for (int j = 3; j <= 11; ++j) grid.push_back(static_cast<double>(j) / 10.0);
    return grid;
}

namespace detail {

template <typename T, typename Check>
std::vector<T> read_list(const nlohmann::json& doc, const std::string& pointer, Check&& check) {
    if (!doc.is_array() || doc.empty()) throw manifest_error(pointer, "expected a non-empty array");
    std::vector<T> out;
    for (std::size_t j = 0; j < doc.size(); ++j) {
        const std::string at = pointer + "/" + std::to_string(j);
        out.push_back(check(doc[j], at));
    }
    return out;
}

inline double read_number(const nlohmann::json& v, const std::string& pointer) {
    if (!v.is_number()) throw manifest_error(pointer, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw manifest_error(pointer, "expected a finite number");
    return d;
}

inline std::uint64_t read_unsigned(const nlohmann::json& v, const std::string& pointer) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw manifest_error(pointer, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

inline bool valid_slug(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
               c == '_' || c == '-';
    });
}

} // namespace detail

/// Reads a manifest document. Custom curve files are resolved relative to
/// `base_dir`.
///
/// {
///   "id": "gaussian_n50",
///   "grid": {"noise": ["gaussian"], "n": [50], "delta": [0.3, ...], "tau": [0.15, 0.5]},
///   "mu": 0.0,
///   "estimators": [{"label": "i", "g": "i"},
///                  {"label": "knee", "knots": [[0, 0.5], [0.5, 0], [1, 0.5]]},
///                  {"label": "file", "csv": "curve.csv"}],
///   "M": 10000, "seed": 1, "outputs": ["mse", "density"]
/// }
inline experiment_manifest parse_manifest(const nlohmann::json& doc,
                                          const std::filesystem::path& base_dir = {}) {
    if (!doc.is_object()) throw manifest_error("", "manifest must be a JSON object");
    experiment_manifest man;

    if (doc.contains("id")) {
        if (!doc["id"].is_string() || !detail::valid_slug(doc["id"].get<std::string>())) {
            throw manifest_error("/id", "expected a slug of letters, digits, '_' or '-'");
        }
        man.id = doc["id"].get<std::string>();
    }

    if (!doc.contains("grid") || !doc["grid"].is_object()) {
        throw manifest_error("/grid", "missing grid object");
    }
    const auto& grid = doc["grid"];
    if (!grid.contains("n")) throw manifest_error("/grid/n", "missing");
    man.n = detail::read_list<std::size_t>(grid["n"], "/grid/n",
                                           [](const nlohmann::json& v, const std::string& at) {
                                               const auto n = detail::read_unsigned(v, at);
                                               if (n < 2) throw manifest_error(at, "n must be >= 2");
                                               return static_cast<std::size_t>(n);
                                           });
    man.delta = grid.contains("delta")
                    ? detail::read_list<double>(grid["delta"], "/grid/delta", detail::read_number)
                    : default_delta_grid();
    if (!grid.contains("tau")) throw manifest_error("/grid/tau", "missing");
    man.tau = detail::read_list<double>(grid["tau"], "/grid/tau",
                                        [](const nlohmann::json& v, const std::string& at) {
                                            const double t = detail::read_number(v, at);
                                            if (!(t > 0.0 && t <= 1.0)) {
                                                throw manifest_error(at, "tau must lie in (0, 1]");
                                            }
                                            return t;
                                        });
    if (grid.contains("noise")) {
        man.noise = detail::read_list<noise_family>(
            grid["noise"], "/grid/noise", [](const nlohmann::json& v, const std::string& at) {
                if (!v.is_string()) throw manifest_error(at, "expected a noise family name");
                const auto f = parse_noise_family(v.get<std::string>());
                if (!f) {
                    throw manifest_error(at, "unknown noise family '" + v.get<std::string>() +
                                                 "' (gaussian|exponential1|poisson1|uniform01)");
                }
                return *f;
            });
    }

    if (doc.contains("mu")) man.mu = detail::read_number(doc["mu"], "/mu");

    if (!doc.contains("estimators")) throw manifest_error("/estimators", "missing");
    man.estimators = detail::read_list<estimator_spec>(
        doc["estimators"], "/estimators", [&](const nlohmann::json& v, const std::string& at) {
            if (!v.is_object()) throw manifest_error(at, "expected an object");
            if (!v.contains("label") || !v["label"].is_string() ||
                v["label"].get<std::string>().empty()) {
                throw manifest_error(at + "/label", "expected a non-empty string");
            }
            const auto label = v["label"].get<std::string>();
            if (v.contains("g")) {
                if (!v["g"].is_string()) throw manifest_error(at + "/g", "expected a name");
                auto c = builtin_curve(v["g"].get<std::string>());
                if (!c) {
                    throw manifest_error(at + "/g", "unknown builtin curve '" +
                                                        v["g"].get<std::string>() + "'");
                }
                return estimator_spec{label, *c};
            }
            if (v.contains("knots")) {
                std::vector<knot> knots;
                const auto& arr = v["knots"];
                if (!arr.is_array()) throw manifest_error(at + "/knots", "expected an array");
                for (std::size_t j = 0; j < arr.size(); ++j) {
                    const std::string kat = at + "/knots/" + std::to_string(j);
                    if (!arr[j].is_array() || arr[j].size() != 2) {
                        throw manifest_error(kat, "expected an [x, g] pair");
                    }
                    knots.push_back({detail::read_number(arr[j][0], kat + "/0"),
                                     detail::read_number(arr[j][1], kat + "/1")});
                }
                try {
                    return estimator_spec{label, g_curve::from_knots(std::move(knots))};
                } catch (const configuration_error& e) {
                    throw manifest_error(at + "/knots", e.what());
                }
            }
            if (v.contains("csv")) {
                if (!v["csv"].is_string()) throw manifest_error(at + "/csv", "expected a path");
                const std::filesystem::path p = base_dir / v["csv"].get<std::string>();
                try {
                    return estimator_spec{label, load_curve_csv(p.string())};
                } catch (const error& e) {
                    throw manifest_error(at + "/csv", e.what());
                }
            }
            throw manifest_error(at, "estimator needs one of 'g', 'knots' or 'csv'");
        });
    for (std::size_t a = 0; a < man.estimators.size(); ++a) {
        for (std::size_t b = 0; b < a; ++b) {
            if (man.estimators[a].label == man.estimators[b].label) {
                throw manifest_error("/estimators/" + std::to_string(a) + "/label",
                                     "duplicate estimator label");
            }
        }
    }

    if (!doc.contains("M")) throw manifest_error("/M", "missing");
    man.replications = detail::read_unsigned(doc["M"], "/M");
    if (man.replications < experiment_manifest::kMinReplications) {
        throw manifest_error("/M", "M must be at least " +
                                       std::to_string(experiment_manifest::kMinReplications));
    }
    if (doc.contains("seed")) man.seed = detail::read_unsigned(doc["seed"], "/seed");

    if (doc.contains("outputs")) {
        man.want_mse = false;
        man.want_density = false;
        detail::read_list<int>(doc["outputs"], "/outputs",
                               [&](const nlohmann::json& v, const std::string& at) {
                                   if (v == "mse") {
                                       man.want_mse = true;
                                   } else if (v == "density") {
                                       man.want_density = true;
                                   } else {
                                       throw manifest_error(at, "expected 'mse' or 'density'");
                                   }
                                   return 0;
                               });
    }
    return man;
}

inline experiment_manifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(path, "cannot open manifest");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw manifest_error("", std::string("invalid JSON: ") + e.what());
    }
    return parse_manifest(doc, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Experiment engine
// ---------------------------------------------------------------------------

struct experiment_cell {
    noise_family noise = noise_family::gaussian;
    std::size_t n = 0;
    double delta = 0.0;
    double tau = 0.0;

    bool is_h0() const noexcept { return tau >= 1.0 || delta == 0.0; }

    auto key() const { return std::make_tuple(to_string(noise), n, delta, tau); }
};

struct cell_result {
    experiment_cell cell;
    std::string estimator;
    std::size_t count = 0;
    bool h0 = false;
    std::optional<double> mse;  // empty for H0 cells: there is no true tau to compare with
    std::optional<density_curve> density;
};

struct experiment_result {
    std::string id;
    std::size_t replications = 0;
    std::vector<cell_result> rows;  // cells in key order, estimators in manifest order
};

/// Grid cells sorted lexicographically on (noise name, n, delta, tau).
inline std::vector<experiment_cell> expand_cells(const experiment_manifest& man) {
    std::vector<experiment_cell> cells;
    for (auto f : man.noise) {
        for (auto n : man.n) {
            for (double d : man.delta) {
                for (double t : man.tau) cells.push_back({f, n, d, t});
            }
        }
    }
    std::sort(cells.begin(), cells.end(),
              [](const experiment_cell& a, const experiment_cell& b) { return a.key() < b.key(); });
    cells.erase(std::unique(cells.begin(), cells.end(),
                            [](const experiment_cell& a, const experiment_cell& b) {
                                return a.key() == b.key();
                            }),
                cells.end());
    return cells;
}

/// tau_hat[e][rep] for every estimator in one cell. Replication rep of every
/// cell draws from substream(seed, rep), so cells share noise paths.
inline std::vector<std::vector<double>> simulate_cell(const experiment_cell& cell, double mu,
                                                      const std::vector<estimator_spec>& estimators,
                                                      std::size_t replications, std::uint64_t seed,
                                                      std::size_t workers = 0) {
    const amoc_spec spec{cell.n, mu, cell.delta, cell.tau, cell.noise};
    spec.validate();
    const auto half_weights = detail::grid_weights(cell.n, 0.5);
    std::vector<std::vector<double>> out(estimators.size(), std::vector<double>(replications));
    parallel_chunks(replications, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
        std::vector<double> x(cell.n);
        std::vector<double> s(cell.n - 1);
        for (std::size_t rep = begin; rep < end; ++rep) {
            substream rng(seed, rep);
            detail::fill_sample(spec, rng, x);
            detail::profile_into(x, s);
            const auto prelim = detail::weighted_argmax(s, half_weights);
            const double tau_prelim =
                static_cast<double>(prelim.index) / static_cast<double>(cell.n);
            for (std::size_t e = 0; e < estimators.size(); ++e) {
                const double gamma = estimators[e].curve(tau_prelim);
                const auto best = gamma == 0.5 ? detail::weighted_argmax(s, half_weights)
                                               : detail::weighted_argmax(s, cell.n, gamma);
                out[e][rep] = static_cast<double>(best.index) / static_cast<double>(cell.n);
            }
        }
    });
    return out;
}

inline experiment_result run_experiment(const experiment_manifest& man, bool want_mse,
                                        bool want_density) {
    if (man.replications < experiment_manifest::kMinReplications) {
        throw configuration_error("experiment needs M >= 100");
    }
    if (man.estimators.empty()) throw configuration_error("experiment needs an estimator");
    experiment_result result;
    result.id = man.id;
    result.replications = man.replications;
    for (const auto& cell : expand_cells(man)) {
        const auto tau_hats =
            simulate_cell(cell, man.mu, man.estimators, man.replications, man.seed, man.workers);
        for (std::size_t e = 0; e < man.estimators.size(); ++e) {
            cell_result row;
            row.cell = cell;
            row.estimator = man.estimators[e].label;
            row.count = man.replications;
            row.h0 = cell.is_h0();
            if (want_mse && !row.h0) {
                long double acc = 0.0L;
                for (double t : tau_hats[e]) {
                    const long double d = static_cast<long double>(t) - cell.tau;
                    acc += d * d;
                }
                row.mse = static_cast<double>(acc / static_cast<long double>(tau_hats[e].size()));
            }
            if (want_density) row.density = reflected_kde(tau_hats[e]);
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

inline experiment_result run_mse_experiment(const experiment_manifest& man) {
    return run_experiment(man, true, false);
}

inline experiment_result run_density_experiment(const experiment_manifest& man) {
    return run_experiment(man, false, true);
}

} // namespace adacusum
