#include <adacusum/weighting.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace adacusum;
using Catch::Approx;

namespace {
g_curve curve(const char* name) { return *builtin_curve(name); }
} // namespace

TEST_CASE("builtin curves at selected points") {
    CHECK(curve("i")(0.3) == 0.0);
    CHECK(curve("ii")(0.1) == Approx(0.4));
    CHECK(curve("iii")(0.5) == Approx(0.0));
    CHECK(curve("iii")(0.1) == Approx(0.32));
    CHECK(curve("iv")(0.5) == Approx(0.0).margin(1e-15));
    CHECK(curve("iv")(0.1) == Approx(0.2));
    CHECK(curve("v")(0.5) == Approx(0.0).margin(1e-15));
    CHECK(curve("v")(0.1) == Approx(0.5 - 128 * std::pow(0.09, 4)));
    CHECK(curve("vi")(0.77) == 0.5);
    CHECK(curve("tent")(0.1) == Approx(0.2));
    CHECK(curve("tent")(0.5) == 0.5);
    CHECK(curve("tent")(0.9) == Approx(0.2));
    CHECK_FALSE(builtin_curve("vii").has_value());
}

TEST_CASE("curves stay in range and are symmetric") {
    for (auto name : builtin_curve_names) {
        const auto g = *builtin_curve(name);
        for (int j = 0; j <= 1000; ++j) {
            const double x = j / 1000.0;
            const double v = g(x);
            CHECK(v >= 0.0);
            CHECK(v <= 0.5);
            CHECK(v == Approx(g(1.0 - x)).margin(1e-12));
        }
        CHECK(g.name() == name);
    }
}

TEST_CASE("h0 compatibility") {
    CHECK(curve("i").h0_compatible());
    CHECK(curve("tent").h0_compatible());
    for (auto name : {"ii", "iii", "iv", "v", "vi"}) CHECK_FALSE(curve(name).h0_compatible());
    CHECK(g_curve::from_knots({{0, 0}, {0.5, 0.5}, {1, 0}}).h0_compatible());
    CHECK_FALSE(g_curve::from_knots({{0, 0.1}, {1, 0}}).h0_compatible());
}

TEST_CASE("domain errors outside the unit interval") {
    CHECK_THROWS_AS(curve("iv")(-0.01), domain_error);
    CHECK_THROWS_AS(curve("iv")(1.01), domain_error);
    CHECK_THROWS_AS(curve("iv")(NAN), domain_error);
    CHECK_THROWS_AS(g_curve(g_kind::custom), configuration_error);
}

TEST_CASE("custom knots") {
    const auto g = g_curve::from_knots({{0, 0}, {0.25, 0.5}, {0.75, 0.5}, {1, 0}});
    CHECK(g.kind() == g_kind::custom);
    CHECK(g(0.125) == Approx(0.25));
    CHECK(g(0.5) == 0.5);
    CHECK(g(1.0) == 0.0);
    CHECK(*g.exact_lipschitz() == Approx(2.0));
    CHECK(lipschitz_estimate(g, 10001) == Approx(2.0).epsilon(1e-3));

    // Clamping within tolerance, rejection beyond it.
    const auto c = g_curve::from_knots({{0, -1e-10}, {1, 0.5 + 1e-10}});
    CHECK(c(0.0) == 0.0);
    CHECK(c(1.0) == 0.5);
    CHECK_THROWS_AS(g_curve::from_knots({{0, -1e-6}, {1, 0}}), configuration_error);
    CHECK_THROWS_AS(g_curve::from_knots({{0, 0}, {1, 0.6}}), configuration_error);
    CHECK_THROWS_AS(g_curve::from_knots({{0.1, 0}, {1, 0}}), configuration_error);
    CHECK_THROWS_AS(g_curve::from_knots({{0, 0}, {0.9, 0}}), configuration_error);
    CHECK_THROWS_AS(g_curve::from_knots({{0, 0}, {0.5, 0}, {0.5, 0.1}, {1, 0}}),
                    configuration_error);
    CHECK_THROWS_AS(g_curve::from_knots({{0, 0}}), configuration_error);
    CHECK_THROWS_AS(g_curve::from_knots({{0, NAN}, {1, 0}}), configuration_error);
}

TEST_CASE("lipschitz estimates of builtin curves") {
    CHECK(lipschitz_estimate(curve("i"), 1001) == 0.0);
    CHECK(lipschitz_estimate(curve("ii"), 1001) == Approx(1.0));
    CHECK(lipschitz_estimate(curve("iii"), 1001) == Approx(2.0).epsilon(1e-2));
    CHECK(lipschitz_estimate(curve("tent"), 1001) == Approx(2.0));
    CHECK_FALSE(curve("ii").exact_lipschitz().has_value());
    CHECK_THROWS_AS(lipschitz_estimate(curve("ii"), 1), configuration_error);
    // iv has an infinite slope at the ends; finer grids keep growing.
    CHECK(lipschitz_estimate(curve("iv"), 100001) > lipschitz_estimate(curve("iv"), 1001));
}

TEST_CASE("curve csv parsing") {
    const auto g = resolve_curve(ADACUSUM_TEST_DATA "/trapezoid.csv");
    CHECK(g(0.5) == 0.5);
    CHECK(g.knots().size() == 4);

    std::istringstream crlf("x,g\r\n0,0.5\r\n1,0.5\r\n");
    CHECK(parse_curve_csv(crlf)(0.3) == 0.5);

    std::istringstream no_header("0,0\n1,0\n");
    CHECK_THROWS_AS(parse_curve_csv(no_header), invalid_input_error);
    try {
        (void)resolve_curve(ADACUSUM_TEST_DATA "/bad_curve.csv");
        FAIL("expected an error");
    } catch (const invalid_input_error& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    CHECK_THROWS_AS(resolve_curve("/nonexistent/curve.csv"), io_error);
}
