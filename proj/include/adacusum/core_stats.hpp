#pragma once

#include <adacusum/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adacusum {

/// Observed sample X_1..X_n. Holds at least two finite values.
class time_series {
public:
    explicit time_series(std::vector<double> values) : values_(std::move(values)) {
        if (values_.size() < 2) {
            throw invalid_input_error("time series needs at least 2 observations, got " +
                                      std::to_string(values_.size()));
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw invalid_input_error("non-finite observation at position " +
                                          std::to_string(i + 1));
            }
        }
    }

    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    bool is_constant() const noexcept {
        return std::all_of(values_.begin(), values_.end(),
                           [first = values_.front()](double v) { return v == first; });
    }

private:
    std::vector<double> values_;
};

/// Weight exponent gamma, always in [0, 1/2].
class weight_exponent {
public:
    constexpr weight_exponent() = default;

    explicit weight_exponent(double gamma) : gamma_(gamma) {
        if (!(gamma >= 0.0 && gamma <= 0.5)) {
            throw domain_error("weight exponent must lie in [0, 0.5], got " + std::to_string(gamma));
        }
    }

    constexpr double value() const noexcept { return gamma_; }

    friend constexpr bool operator==(weight_exponent, weight_exponent) = default;

private:
    double gamma_ = 0.0;
};

/// CUSUM profile s[k-1] = S_n(k) for k = 1..n-1, centred at theta_hat.
struct cusum_profile_t {
    std::vector<double> s;
    double theta_hat = 0.0;
    std::size_t n = 0;
};

struct change_point_estimate {
    std::size_t m_hat = 0;
    double tau_hat = 0.0;
    double statistic = 0.0;
    weight_exponent gamma;
};

namespace detail {

inline double mean_of(std::span<const double> x) noexcept {
    long double sum = 0.0L;
    for (double v : x) sum += v;
    const double mean = static_cast<double>(sum / static_cast<long double>(x.size()));
    // Constant input: centre exactly so that every partial sum is exactly zero.
    if (std::all_of(x.begin(), x.end(), [first = x.front()](double v) { return v == first; })) {
        return x.front();
    }
    return mean;
}

/// Writes S_n(k) for k = 1..n-1 into `out` (size n-1) and returns theta_hat.
/// No validation; callers guarantee n >= 2 and finite input.
inline double profile_into(std::span<const double> x, std::span<double> out) noexcept {
    const std::size_t n = x.size();
    const double theta = mean_of(x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    long double partial = 0.0L;
    for (std::size_t k = 1; k < n; ++k) {
        partial += static_cast<long double>(x[k - 1]) - static_cast<long double>(theta);
        out[k - 1] = static_cast<double>(std::fabs(partial)) * scale;
    }
    return theta;
}

/// log(s) + log(1 - s); every weight in the library is derived from this.
inline double log_boundary(double s) noexcept { return std::log(s) + std::log1p(-s); }

inline double weight_from_log(double log_boundary_value, double gamma) noexcept {
    return std::exp(-gamma * log_boundary_value);
}

inline double grid_weight(std::size_t k, std::size_t n, double gamma) noexcept {
    return weight_from_log(log_boundary(static_cast<double>(k) / static_cast<double>(n)), gamma);
}

/// Weights w_gamma(k/n) for k = 1..n-1.
inline std::vector<double> grid_weights(std::size_t n, double gamma) {
    std::vector<double> w(n - 1);
    for (std::size_t k = 1; k < n; ++k) w[k - 1] = grid_weight(k, n, gamma);
    return w;
}

struct argmax_result {
    std::size_t index = 0;  // 1-based k
    double value = 0.0;
};

/// Smallest k maximising weights[k-1] * s[k-1].
inline argmax_result weighted_argmax(std::span<const double> s,
                                     std::span<const double> weights) noexcept {
    argmax_result best{1, weights[0] * s[0]};
    for (std::size_t k = 2; k <= s.size(); ++k) {
        const double v = weights[k - 1] * s[k - 1];
        if (v > best.value) best = {k, v};
    }
    return best;
}

/// Same as weighted_argmax but computes the weights on the fly.
inline argmax_result weighted_argmax(std::span<const double> s, std::size_t n,
                                     double gamma) noexcept {
    if (gamma == 0.0) {
        argmax_result best{1, s[0]};
        for (std::size_t k = 2; k <= s.size(); ++k) {
            if (s[k - 1] > best.value) best = {k, s[k - 1]};
        }
        return best;
    }
    argmax_result best{1, grid_weight(1, n, gamma) * s[0]};
    for (std::size_t k = 2; k <= s.size(); ++k) {
        const double v = grid_weight(k, n, gamma) * s[k - 1];
        if (v > best.value) best = {k, v};
    }
    return best;
}

inline double sample_std(std::span<const double> x) noexcept {
    const double mean = mean_of(x);
    long double ss = 0.0L;
    for (double v : x) {
        const long double d = static_cast<long double>(v) - mean;
        ss += d * d;
    }
    return static_cast<double>(std::sqrt(ss / static_cast<long double>(x.size() - 1)));
}

} // namespace detail

inline cusum_profile_t cusum_profile(const time_series& x) {
    cusum_profile_t p;
    p.n = x.size();
    p.s.resize(p.n - 1);
    p.theta_hat = detail::profile_into(x.values(), p.s);
    return p;
}

/// w_gamma(s) = (s(1-s))^(-gamma), evaluated in log space.
inline double weight(double s, weight_exponent gamma) {
    if (!(s > 0.0 && s < 1.0)) {
        throw domain_error("weight argument must lie in (0, 1), got " + std::to_string(s));
    }
    return detail::weight_from_log(detail::log_boundary(s), gamma.value());
}

/// T_n(gamma) = max_{1<=k<n} w_gamma(k/n) S_n(k).
inline double weighted_statistic(const cusum_profile_t& p, weight_exponent gamma) {
    return detail::weighted_argmax(p.s, p.n, gamma.value()).value;
}

/// Weighted argmax change-point estimator; ties go to the smallest k.
inline change_point_estimate argmax_estimator(const cusum_profile_t& p, weight_exponent gamma) {
    const auto best = detail::weighted_argmax(p.s, p.n, gamma.value());
    return {best.index, static_cast<double>(best.index) / static_cast<double>(p.n), best.value,
            gamma};
}

/// Bias-corrected sample standard deviation (divisor n-1).
inline double sample_std(const time_series& x) {
    if (x.is_constant()) {
        throw degenerate_variance_error("sample standard deviation of a constant series is zero");
    }
    return detail::sample_std(x.values());
}

} // namespace adacusum
