#pragma once

#include <adacusum/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace adacusum {

enum class g_kind { i, ii, iii, iv, v, vi, tent, custom };

struct knot {
    double x;
    double g;
};

/// Map g: [0,1] -> [0, 1/2] from a preliminary change location to a weight
/// exponent. Builtins i)-vi) plus "tent" and piecewise-linear custom curves.
class g_curve {
public:
    static constexpr double kRangeSlack = 1e-9;
    static constexpr double kEndpointTolerance = 1e-12;

    explicit g_curve(g_kind kind) : kind_(kind) {
        if (kind == g_kind::custom) {
            throw configuration_error("custom g-curves must be built from knots");
        }
        finish();
    }

    /// Piecewise-linear curve through `knots`. Knots must start at x=0, end at
    /// x=1, be strictly increasing in x, and stay in [0, 1/2]; values outside
    /// the range by at most 1e-9 are clamped, anything further is rejected.
    static g_curve from_knots(std::vector<knot> knots) {
        if (knots.size() < 2) throw configuration_error("custom g-curve needs at least 2 knots");
        if (knots.front().x != 0.0 || knots.back().x != 1.0) {
            throw configuration_error("custom g-curve knots must start at x=0 and end at x=1");
        }
        for (std::size_t j = 0; j < knots.size(); ++j) {
            auto& kn = knots[j];
            if (!std::isfinite(kn.x) || !std::isfinite(kn.g)) {
                throw configuration_error("custom g-curve knot " + std::to_string(j) +
                                          " is not finite");
            }
            if (j > 0 && !(kn.x > knots[j - 1].x)) {
                throw configuration_error("custom g-curve knots must be strictly increasing in x");
            }
            if (kn.g < 0.0) {
                if (kn.g < -kRangeSlack) {
                    throw configuration_error("custom g-curve value " + std::to_string(kn.g) +
                                              " at x=" + std::to_string(kn.x) +
                                              " is below 0");
                }
                kn.g = 0.0;
            } else if (kn.g > 0.5) {
                if (kn.g > 0.5 + kRangeSlack) {
                    throw configuration_error("custom g-curve value " + std::to_string(kn.g) +
                                              " at x=" + std::to_string(kn.x) +
                                              " is above 0.5");
                }
                kn.g = 0.5;
            }
        }
        g_curve c;
        c.kind_ = g_kind::custom;
        c.knots_ = std::move(knots);
        c.finish();
        // Interpolation cannot leave the knot hull, but keep the grid check
        // as the stated contract for custom curves.
        for (int j = 0; j <= 10000; ++j) {
            const double v = c(static_cast<double>(j) / 10000.0);
            if (v < 0.0 || v > 0.5) {
                throw configuration_error("custom g-curve leaves [0, 0.5]");
            }
        }
        return c;
    }

    g_kind kind() const noexcept { return kind_; }
    const std::vector<knot>& knots() const noexcept { return knots_; }

    /// True iff g(0) = g(1) = 0, the condition under which the adaptive
    /// statistic shares the Kolmogorov limit of the unweighted one.
    bool h0_compatible() const noexcept { return h0_compatible_; }

    double operator()(double x) const {
        if (!(x >= 0.0 && x <= 1.0)) {
            throw domain_error("g-curve argument must lie in [0, 1], got " + std::to_string(x));
        }
        return eval_unchecked(x);
    }

    std::string name() const {
        switch (kind_) {
        case g_kind::i: return "i";
        case g_kind::ii: return "ii";
        case g_kind::iii: return "iii";
        case g_kind::iv: return "iv";
        case g_kind::v: return "v";
        case g_kind::vi: return "vi";
        case g_kind::tent: return "tent";
        case g_kind::custom: return "custom";
        }
        return "custom";
    }

    /// Exact Lipschitz constant of a custom curve (largest knot-to-knot slope).
    std::optional<double> exact_lipschitz() const {
        if (kind_ != g_kind::custom) return std::nullopt;
        double best = 0.0;
        for (std::size_t j = 1; j < knots_.size(); ++j) {
            best = std::max(best, std::fabs(knots_[j].g - knots_[j - 1].g) /
                                      (knots_[j].x - knots_[j - 1].x));
        }
        return best;
    }

private:
    g_curve() = default;

    void finish() {
        h0_compatible_ = std::fabs(eval_unchecked(0.0)) <= kEndpointTolerance &&
                         std::fabs(eval_unchecked(1.0)) <= kEndpointTolerance;
    }

    double eval_unchecked(double x) const noexcept {
        switch (kind_) {
        case g_kind::i: return 0.0;
        case g_kind::ii: return std::fabs(x - 0.5);
        case g_kind::iii: return 0.5 - 2.0 * x * (1.0 - x);
        case g_kind::iv: return 0.5 - std::sqrt(x * (1.0 - x));
        case g_kind::v: {
            const double q = x * (1.0 - x);
            return 0.5 - 128.0 * (q * q) * (q * q);
        }
        case g_kind::vi: return 0.5;
        case g_kind::tent: return std::min({2.0 * x, 2.0 * (1.0 - x), 0.5});
        case g_kind::custom: return interpolate(x);
        }
        return 0.0;
    }

    double interpolate(double x) const noexcept {
        auto hi = std::upper_bound(knots_.begin(), knots_.end(), x,
                                   [](double v, const knot& k) { return v < k.x; });
        if (hi == knots_.end()) return knots_.back().g;
        if (hi == knots_.begin()) return knots_.front().g;
        const auto lo = std::prev(hi);
        const double t = (x - lo->x) / (hi->x - lo->x);
        return lo->g + t * (hi->g - lo->g);
    }

    g_kind kind_ = g_kind::i;
    std::vector<knot> knots_;
    bool h0_compatible_ = false;
};

inline double eval_g(const g_curve& g, double x) { return g(x); }

/// Largest absolute slope between adjacent points of a uniform grid on [0,1].
inline double lipschitz_estimate(const g_curve& g, std::size_t grid_size) {
    if (grid_size < 2) throw configuration_error("lipschitz grid needs at least 2 points");
    const double step = 1.0 / static_cast<double>(grid_size - 1);
    double prev = g(0.0);
    double best = 0.0;
    for (std::size_t j = 1; j < grid_size; ++j) {
        const double x = j + 1 == grid_size ? 1.0 : static_cast<double>(j) * step;
        const double cur = g(x);
        best = std::max(best, std::fabs(cur - prev) / step);
        prev = cur;
    }
    return best;
}

inline constexpr std::array<std::string_view, 7> builtin_curve_names{"i",  "ii", "iii", "iv",
                                                                     "v",  "vi", "tent"};

inline std::optional<g_curve> builtin_curve(std::string_view name) {
    static constexpr std::array<g_kind, 7> kinds{g_kind::i, g_kind::ii, g_kind::iii, g_kind::iv,
                                                 g_kind::v, g_kind::vi, g_kind::tent};
    for (std::size_t j = 0; j < builtin_curve_names.size(); ++j) {
        if (builtin_curve_names[j] == name) return g_curve(kinds[j]);
    }
    return std::nullopt;
}

/// Parses `x,g` rows (header line required) into a custom curve.
inline g_curve parse_curve_csv(std::istream& in, const std::string& origin = "<stream>") {
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::vector<knot> knots;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (!header_seen) {
            std::string compact;
            for (char c : line) {
                if (c != ' ' && c != '\t' && c != '"') compact += c;
            }
            if (compact != "x,g") {
                throw invalid_input_error(origin + ":" + std::to_string(line_no) +
                                          ": expected header 'x,g'");
            }
            header_seen = true;
            continue;
        }
        std::istringstream row(line);
        std::string xs;
        std::string gs;
        if (!std::getline(row, xs, ',') || !std::getline(row, gs)) {
            throw invalid_input_error(origin + ":" + std::to_string(line_no) +
                                      ": expected two comma-separated values");
        }
        try {
            std::size_t used_x = 0;
            std::size_t used_g = 0;
            const double x = std::stod(xs, &used_x);
            const double g = std::stod(gs, &used_g);
            if (xs.find_first_not_of(" \t", used_x) != std::string::npos ||
                gs.find_first_not_of(" \t", used_g) != std::string::npos) {
                throw std::invalid_argument("trailing characters");
            }
            knots.push_back({x, g});
        } catch (const std::logic_error&) {
            throw invalid_input_error(origin + ":" + std::to_string(line_no) +
                                      ": malformed number");
        }
    }
    if (!header_seen) throw invalid_input_error(origin + ": empty curve file");
    return g_curve::from_knots(std::move(knots));
}

inline g_curve load_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error(path, "cannot open g-curve file");
    return parse_curve_csv(in, path);
}

/// Builtin name (`i|ii|iii|iv|v|vi|tent`) or path to an `x,g` CSV file.
inline g_curve resolve_curve(const std::string& selector) {
    if (auto builtin = builtin_curve(selector)) return *builtin;
    return load_curve_csv(selector);
}

} // namespace adacusum
