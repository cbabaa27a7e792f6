#pragma once

#include <adacusum/core_stats.hpp>
#include <adacusum/error.hpp>
#include <adacusum/parallel.hpp>
#include <adacusum/philox.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace adacusum {

// ---------------------------------------------------------------------------
// Kolmogorov distribution (law of the supremum of a Brownian bridge)
// ---------------------------------------------------------------------------

struct kolmogorov_quantile_t {
    double alpha = 0.0;  // quantile level, e.g. 0.95
    double value = 0.0;
};

namespace detail {

struct series_result {
    double value = 0.0;
    int terms = 0;
};

/// Kolmogorov CDF. Below x = 1 the theta-function form
/// K(x) = sqrt(2 pi)/x sum_{j>=1} exp(-(2j-1)^2 pi^2 / (8 x^2)) is used (all
/// terms positive, no cancellation near 0); above it the alternating form
/// K(x) = 1 - 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2). Both stop once a term
/// drops below 1e-16.
inline series_result kolmogorov_series(double x) noexcept {
    if (x <= 0.04) return {0.0, 0};
    int j = 1;
    if (x < 1.0) {
        const double c = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
        double sum = 0.0;
        for (; j < 100000; ++j) {
            const double odd = 2.0 * j - 1.0;
            const double term = std::exp(-odd * odd * c);
            sum += term;
            if (term < 1e-16 * sum || term == 0.0) break;
        }
        return {std::clamp(std::sqrt(2.0 * std::numbers::pi) / x * sum, 0.0, 1.0), j};
    }
    double sum = 0.0;
    for (; j < 100000; ++j) {
        const double term = std::exp(-2.0 * j * j * x * x);
        sum += (j % 2 == 1) ? term : -term;
        if (term < 1e-16) break;
    }
    return {std::clamp(1.0 - 2.0 * sum, 0.0, 1.0), j};
}

} // namespace detail

inline double kolmogorov_cdf(double x) { return detail::kolmogorov_series(x).value; }

/// Inverts kolmogorov_cdf by bisection on [0.04, 10].
inline kolmogorov_quantile_t kolmogorov_quantile(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw domain_error("quantile level must lie in (0, 1), got " + std::to_string(alpha));
    }
    double lo = 0.04;
    double hi = 10.0;
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (kolmogorov_cdf(mid) < alpha) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return {alpha, 0.5 * (lo + hi)};
}

// ---------------------------------------------------------------------------
// Monte Carlo critical values
// ---------------------------------------------------------------------------

/// finite_sample: n i.i.d. N(0,1) draws, statistic T_n(gamma) / sigma_hat.
/// bridge: Brownian bridge on a fine grid (a multiple of n, at least
/// `bridge_resolution` points), sup of w_gamma(t)|B(t)| over t in [1/n, 1-1/n].
enum class quantile_method { finite_sample, bridge };

inline std::string to_string(quantile_method m) {
    return m == quantile_method::bridge ? "bridge" : "finite_sample";
}

inline quantile_method parse_quantile_method(std::string_view s) {
    if (s == "finite_sample" || s == "finite") return quantile_method::finite_sample;
    if (s == "bridge") return quantile_method::bridge;
    throw configuration_error("unknown quantile method '" + std::string(s) +
                              "' (expected finite_sample or bridge)");
}

struct mc_settings {
    std::size_t replications = 100000;
    std::uint64_t seed = 1;
    quantile_method method = quantile_method::finite_sample;
    std::size_t bridge_resolution = 20000;
    std::size_t workers = 0;
};

struct table_entry {
    double gamma = 0.0;
    std::size_t n = 0;
    double alpha = 0.0;  // quantile level
    double value = 0.0;
    double standard_error = 0.0;
    std::size_t replications = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const table_entry&, const table_entry&) = default;
};

inline constexpr std::size_t kMinReplications = 1000;
inline constexpr std::size_t kMinSampleSize = 10;

namespace detail {

inline std::size_t bridge_grid_size(std::size_t n, std::size_t resolution) {
    const std::size_t per_step = std::max<std::size_t>(1, (resolution + n - 1) / n);
    return n * per_step;
}

inline void validate_mc(std::size_t n, std::size_t replications) {
    if (n < kMinSampleSize) {
        throw configuration_error("Monte Carlo critical values need n >= " +
                                  std::to_string(kMinSampleSize) + ", got " + std::to_string(n));
    }
    if (replications < kMinReplications) {
        throw configuration_error("Monte Carlo critical values need M >= " +
                                  std::to_string(kMinReplications) + ", got " +
                                  std::to_string(replications));
    }
}

/// 1-based rank of the empirical quantile: ceil(M * level).
inline std::size_t quantile_rank(std::size_t m, double level) {
    const double raw = std::ceil(static_cast<double>(m) * level - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, m);
}

inline double sorted_quantile(const std::vector<double>& sorted, double level) {
    return sorted[quantile_rank(sorted.size(), level) - 1];
}

/// Distribution-free standard error: half the distance between the order
/// statistics one binomial standard deviation either side of the quantile rank.
inline double quantile_standard_error(const std::vector<double>& sorted, double level) {
    const double m = static_cast<double>(sorted.size());
    const double centre = m * level;
    const double spread = std::sqrt(m * level * (1.0 - level));
    const auto rank = [&](double r) {
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(std::ceil(r), 1.0)), 1,
                                       sorted.size());
    };
    return 0.5 * (sorted[rank(centre + spread) - 1] - sorted[rank(centre - spread) - 1]);
}

} // namespace detail

/// Null statistics for every gamma in `gammas` from the same M simulated
/// paths; result[g][rep]. Replication rep always uses substream(seed, rep).
inline std::vector<std::vector<double>> simulate_null_statistics(
    std::size_t n, const std::vector<double>& gammas, const mc_settings& settings) {
    detail::validate_mc(n, settings.replications);
    for (double g : gammas) (void)weight_exponent(g);

    const bool bridge = settings.method == quantile_method::bridge;
    const std::size_t path_len = bridge ? detail::bridge_grid_size(n, settings.bridge_resolution) : n;
    const std::size_t first = bridge ? path_len / n : 1;
    const std::size_t last = bridge ? path_len - path_len / n : path_len - 1;

    std::vector<std::vector<double>> weights;
    weights.reserve(gammas.size());
    for (double g : gammas) weights.push_back(detail::grid_weights(path_len, g));

    const std::size_t m = settings.replications;
    std::vector<std::vector<double>> out(gammas.size(), std::vector<double>(m));
    parallel_chunks(m, settings.workers, [&](std::size_t begin, std::size_t end, std::size_t) {
        std::vector<double> path(path_len);
        std::vector<double> profile(path_len - 1);
        for (std::size_t rep = begin; rep < end; ++rep) {
            substream rng(settings.seed, rep);
            for (auto& v : path) v = rng.normal();
            detail::profile_into(path, profile);
            const double scale = bridge ? 1.0 : 1.0 / detail::sample_std(path);
            for (std::size_t g = 0; g < gammas.size(); ++g) {
                const auto& w = weights[g];
                double best = 0.0;
                for (std::size_t k = first; k <= last; ++k) {
                    best = std::max(best, w[k - 1] * profile[k - 1]);
                }
                out[g][rep] = best * scale;
            }
        }
    });
    return out;
}

/// Critical values for every (gamma, level) pair at sample size n.
inline std::vector<table_entry> mc_quantiles(std::size_t n, const std::vector<double>& gammas,
                                             const std::vector<double>& levels,
                                             const mc_settings& settings) {
    for (double a : levels) {
        if (!(a > 0.0 && a < 1.0)) {
            throw domain_error("quantile level must lie in (0, 1), got " + std::to_string(a));
        }
    }
    auto stats = simulate_null_statistics(n, gammas, settings);
    std::vector<table_entry> entries;
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        auto& sample = stats[g];
        std::sort(sample.begin(), sample.end());
        for (double a : levels) {
            entries.push_back({gammas[g], n, a, detail::sorted_quantile(sample, a),
                               detail::quantile_standard_error(sample, a), settings.replications,
                               settings.seed});
        }
    }
    return entries;
}

inline table_entry mc_quantile(weight_exponent gamma, std::size_t n, double alpha,
                               std::size_t replications, std::uint64_t seed,
                               quantile_method method = quantile_method::finite_sample,
                               std::size_t workers = 0) {
    mc_settings s;
    s.replications = replications;
    s.seed = seed;
    s.method = method;
    s.workers = workers;
    return mc_quantiles(n, {gamma.value()}, {alpha}, s).front();
}

inline std::vector<double> default_gamma_grid() {
    std::vector<double> grid;
    for (int j = 0; j <= 10; ++j) grid.push_back(static_cast<double>(j) / 20.0);
    return grid;
}

// ---------------------------------------------------------------------------
// Critical value table
// ---------------------------------------------------------------------------

enum class insert_outcome { inserted, identical, conflict, replaced };

class critical_value_table {
public:
    static constexpr int kSchemaVersion = 1;
    static constexpr double kKeyTolerance = 1e-12;

    critical_value_table() = default;
    critical_value_table(std::uint64_t seed, std::size_t replications, quantile_method method)
        : seed_(seed), replications_(replications), method_(method) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t replications() const noexcept { return replications_; }
    quantile_method method() const noexcept { return method_; }
    bool studentized() const noexcept { return method_ == quantile_method::finite_sample; }
    const std::vector<table_entry>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }

    const table_entry* find(double gamma, std::size_t n, double alpha) const noexcept {
        for (const auto& e : entries_) {
            if (same_key(e, gamma, n, alpha)) return &e;
        }
        return nullptr;
    }

    /// Same key with the same (M, seed) is a no-op; a different (M, seed) is a
    /// conflict unless `force` is set.
    insert_outcome insert(const table_entry& e, bool force = false) {
        for (auto& existing : entries_) {
            if (!same_key(existing, e.gamma, e.n, e.alpha)) continue;
            if (existing.replications == e.replications && existing.seed == e.seed) {
                return insert_outcome::identical;
            }
            if (!force) return insert_outcome::conflict;
            existing = e;
            return insert_outcome::replaced;
        }
        entries_.push_back(e);
        std::sort(entries_.begin(), entries_.end(), [](const table_entry& a, const table_entry& b) {
            return std::tie(a.gamma, a.n, a.alpha) < std::tie(b.gamma, b.n, b.alpha);
        });
        return insert_outcome::inserted;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json doc;
        doc["schema_version"] = kSchemaVersion;
        doc["seed"] = seed_;
        doc["M"] = replications_;
        doc["noise"] = "gaussian";
        doc["studentized"] = studentized();
        doc["method"] = to_string(method_);
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : entries_) {
            nlohmann::ordered_json row;
            row["gamma"] = e.gamma;
            row["n"] = e.n;
            row["alpha"] = e.alpha;
            row["value"] = e.value;
            row["stderr"] = e.standard_error;
            row["M"] = e.replications;
            row["seed"] = e.seed;
            arr.push_back(std::move(row));
        }
        doc["entries"] = std::move(arr);
        return doc;
    }

    static critical_value_table from_json(const nlohmann::json& doc) {
        try {
            if (doc.at("schema_version").get<int>() != kSchemaVersion) {
                throw invalid_input_error("unsupported critical value table schema version");
            }
            if (doc.at("noise").get<std::string>() != "gaussian") {
                throw invalid_input_error("critical value table noise must be 'gaussian'");
            }
            const auto method = doc.contains("method")
                                    ? parse_quantile_method(doc.at("method").get<std::string>())
                                    : quantile_method::finite_sample;
            critical_value_table t(doc.at("seed").get<std::uint64_t>(),
                                   doc.at("M").get<std::size_t>(), method);
            for (const auto& row : doc.at("entries")) {
                table_entry e;
                e.gamma = row.at("gamma").get<double>();
                e.n = row.at("n").get<std::size_t>();
                e.alpha = row.at("alpha").get<double>();
                e.value = row.at("value").get<double>();
                e.standard_error = row.at("stderr").get<double>();
                e.replications = row.value("M", t.replications_);
                e.seed = row.value("seed", t.seed_);
                t.insert(e, true);
            }
            return t;
        } catch (const nlohmann::json::exception& ex) {
            throw invalid_input_error(std::string("malformed critical value table: ") + ex.what());
        }
    }

    std::string dump() const { return to_json().dump(2) + "\n"; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error(path, "cannot open critical value table for writing");
        out << dump();
        if (!out) throw io_error(path, "failed writing critical value table");
    }

    static critical_value_table load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw io_error(path, "cannot open critical value table");
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& ex) {
            throw io_error(path, std::string("invalid JSON: ") + ex.what());
        }
    }

private:
    static bool same_key(const table_entry& e, double gamma, std::size_t n, double alpha) noexcept {
        return e.n == n && std::fabs(e.gamma - gamma) <= kKeyTolerance &&
               std::fabs(e.alpha - alpha) <= kKeyTolerance;
    }

    std::uint64_t seed_ = 0;
    std::size_t replications_ = 0;
    quantile_method method_ = quantile_method::finite_sample;
    std::vector<table_entry> entries_;
};

/// Nearest gamma grid point among entries with exactly this (n, alpha);
/// equidistant candidates resolve to the larger (more conservative) gamma.
inline const table_entry& table_lookup(const critical_value_table& t, double gamma, std::size_t n,
                                       double alpha) {
    const table_entry* best = nullptr;
    double best_dist = 0.0;
    for (const auto& e : t.entries()) {
        if (e.n != n || std::fabs(e.alpha - alpha) > critical_value_table::kKeyTolerance) continue;
        const double dist = std::fabs(e.gamma - gamma);
        if (best == nullptr || dist < best_dist - critical_value_table::kKeyTolerance ||
            (std::fabs(dist - best_dist) <= critical_value_table::kKeyTolerance &&
             e.gamma > best->gamma)) {
            best = &e;
            best_dist = dist;
        }
    }
    if (best == nullptr) {
        std::ostringstream msg;
        msg << "no critical value for (gamma=" << gamma << ", n=" << n << ", alpha=" << alpha
            << ")";
        throw missing_quantile_error(msg.str());
    }
    return *best;
}

} // namespace adacusum
