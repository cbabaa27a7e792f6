#pragma once

#include <adacusum/core_stats.hpp>
#include <adacusum/error.hpp>
#include <adacusum/testing.hpp>
#include <adacusum/weighting.hpp>

#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace adacusum {

struct plugin_result {
    double tau_prelim = 0.0;
    weight_exponent gamma_hat;
    change_point_estimate estimate;
    double t_adaptive = 0.0;
    bool studentized = false;
};

enum class quantile_source { kolmogorov, table };

struct test_decision {
    double statistic = 0.0;
    double critical_value = 0.0;
    double alpha = 0.0;
    bool reject = false;
    std::string source;
    weight_exponent gamma_hat;
};

/// Preliminary location tau_hat = m_hat(1/2) / n.
inline double plugin_tau(const cusum_profile_t& p) {
    return argmax_estimator(p, weight_exponent(0.5)).tau_hat;
}

inline double plugin_tau(const time_series& x) { return plugin_tau(cusum_profile(x)); }

inline weight_exponent plugin_gamma(const cusum_profile_t& p, const g_curve& g) {
    return weight_exponent(g(plugin_tau(p)));
}

inline weight_exponent plugin_gamma(const time_series& x, const g_curve& g) {
    return plugin_gamma(cusum_profile(x), g);
}

/// Estimate from an already computed profile; `sigma` divides the statistic
/// when given (> 0).
inline plugin_result adaptive_estimate(const cusum_profile_t& p, const g_curve& g,
                                       double sigma = 0.0) {
    plugin_result r;
    r.tau_prelim = plugin_tau(p);
    r.gamma_hat = weight_exponent(g(r.tau_prelim));
    r.estimate = argmax_estimator(p, r.gamma_hat);
    r.studentized = sigma > 0.0;
    r.t_adaptive = r.studentized ? r.estimate.statistic / sigma : r.estimate.statistic;
    return r;
}

/// Full plug-in pipeline: tau_hat at gamma=1/2, gamma_hat = g(tau_hat), then the
/// weighted argmax at gamma_hat. The estimator itself is never rescaled.
inline plugin_result adaptive_estimate(const time_series& x, const g_curve& g,
                                       bool studentized = false) {
    const double sigma = studentized ? sample_std(x) : 0.0;
    return adaptive_estimate(cusum_profile(x), g, sigma);
}

namespace detail {

inline std::string describe_entry(const table_entry& e) {
    std::ostringstream s;
    s << "table:gamma=" << e.gamma << ",n=" << e.n << ",alpha=" << e.alpha;
    return s.str();
}

inline test_decision decide(double statistic, weight_exponent gamma_hat, std::size_t n,
                            const g_curve& g, double alpha, quantile_source source,
                            const critical_value_table* table) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw domain_error("significance level must lie in (0, 1), got " + std::to_string(alpha));
    }
    test_decision d;
    d.statistic = statistic;
    d.alpha = alpha;
    d.gamma_hat = gamma_hat;
    if (source == quantile_source::kolmogorov) {
        if (!g.h0_compatible()) {
            throw configuration_error("the Kolmogorov quantile requires a g-curve with "
                                      "g(0)=g(1)=0; curve '" + g.name() + "' has g(0)=" +
                                      std::to_string(g(0.0)) + ", g(1)=" + std::to_string(g(1.0)));
        }
        d.critical_value = kolmogorov_quantile(1.0 - alpha).value;
        d.source = "kolmogorov";
    } else {
        if (table == nullptr) throw configuration_error("table quantile source needs a table");
        const auto& e = table_lookup(*table, gamma_hat.value(), n, 1.0 - alpha);
        d.critical_value = e.value;
        d.source = describe_entry(e);
    }
    d.reject = d.statistic > d.critical_value;
    return d;
}

} // namespace detail

/// Adaptive test at significance level `alpha`: rejects when the studentized
/// T_n(gamma_hat) exceeds the (1 - alpha) quantile of the chosen source.
/// A constant series has statistic 0 and is never rejected.
inline test_decision adaptive_test(const time_series& x, const g_curve& g, double alpha,
                                   quantile_source source,
                                   const critical_value_table* table = nullptr) {
    if (source == quantile_source::kolmogorov && !g.h0_compatible()) {
        // Fail before doing any work.
        (void)detail::decide(0.0, weight_exponent(0.0), x.size(), g, alpha, source, table);
    }
    const auto p = cusum_profile(x);
    const double sigma = x.is_constant() ? 0.0 : detail::sample_std(x.values());
    const auto r = adaptive_estimate(p, g, sigma);
    const double statistic = sigma > 0.0 ? r.t_adaptive : 0.0;
    return detail::decide(statistic, r.gamma_hat, x.size(), g, alpha, source, table);
}

} // namespace adacusum
