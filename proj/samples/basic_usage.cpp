// Estimate a mean shift near the start of a series with a data-driven weight.
#include <adacusum/adacusum.hpp>

#include <iostream>

int main() {
    using namespace adacusum;

    amoc_spec spec;
    spec.n = 200;
    spec.delta = 1.0;
    spec.tau = 0.1;
    const auto x = generate_sample(spec, 7, 0);

    const auto g = *builtin_curve("iv");
    const auto r = adaptive_estimate(x, g);
    std::cout << "preliminary tau: " << r.tau_prelim << '\n'
              << "gamma_hat:       " << r.gamma_hat.value() << '\n'
              << "change at k =    " << r.estimate.m_hat << " (true " << spec.change_index()
              << ")\n";

    // The Kolmogorov limit only holds for curves vanishing at both ends.
    const auto tent = *builtin_curve("tent");
    const auto d = adaptive_test(x, tent, 0.05, quantile_source::kolmogorov);
    std::cout << "T = " << d.statistic << ", critical = " << d.critical_value
              << (d.reject ? ", reject H0\n" : ", keep H0\n");
}
