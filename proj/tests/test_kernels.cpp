#include "catch_amalgamated.hpp"

#include "dppfit/errors.hpp"
#include "dppfit/kernels.hpp"
#include "dppfit/rng.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include <cmath>
#include <numbers>

using namespace dppfit;
using Catch::Approx;

namespace {

const double kBoundary = 1.0 / (10.0 * std::sqrt(std::numbers::pi));

// F(C)(k) for an isotropic C in the plane: 2 pi int_0^inf r C(r) J0(2 pi k r) dr.
double hankel_oracle(const KernelModel& m, double k) {
    boost::math::quadrature::tanh_sinh<double> ts;
    auto f = [&](double r) {
        return 2 * std::numbers::pi * r * kernel_value(m, r) * boost::math::cyl_bessel_j(0, 2 * std::numbers::pi * k * r);
    };
    return ts.integrate(f, 0.0, 20 * m.theta[0]);
}

}  // namespace

TEST_CASE("gaussian correlation values", "[kernels]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    CHECK(correlation(m, 0.0) == 1.0);
    CHECK(correlation(m, 0.03) == Approx(0.36787944117144233).epsilon(1e-14));
    // e^-9 to 17 digits
    CHECK(correlation(m, 0.09) == Approx(1.2340980408667956e-4).epsilon(1e-13));
    CHECK(kernel_value(m, 0.0) == 100.0);
    for (double r = 1e-4; r < 1.0; r *= 1.3) CHECK(std::abs(correlation(m, r)) < 1.0);
}

TEST_CASE("gaussian spectral density", "[kernels]") {
    const auto edge = KernelModel::gaussian(2, 100, kBoundary);
    const double zero[2] = {0, 0};
    CHECK(spectral_density(edge, zero) == Approx(1.0).epsilon(1e-14));

    const auto m = KernelModel::gaussian(2, 100, 0.03);
    CHECK(spectral_density(m, zero) == Approx(100 * std::numbers::pi * 0.0009).epsilon(1e-14));
    for (double k : {0.0, 3.0, 10.0, 25.0}) {
        CHECK(spectral_density_radial(m, k) == Approx(hankel_oracle(m, k)).epsilon(1e-8));
    }
    double prev = spectral_density_radial(m, 0.0);
    for (double k = 0.5; k < 200; k += 0.5) {
        const double v = spectral_density_radial(m, k);
        CHECK(v >= 0.0);
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("validation", "[kernels]") {
    CHECK(validate(KernelModel::gaussian(2, 100, 0.03)).ok);
    CHECK(validate(KernelModel::gaussian(2, 100, kBoundary)).ok);

    const auto bad = validate(KernelModel::gaussian(2, 100, 0.06));
    CHECK_FALSE(bad.ok);
    CHECK(bad.condition == "F(C) > 1");
    CHECK(bad.value == Approx(100 * std::numbers::pi * 0.0036).epsilon(1e-12));
    CHECK(bad.witness_k == 0.0);
    CHECK_THROWS_AS(require_valid(KernelModel::gaussian(2, 100, 0.06)), ValidationError);

    CHECK_FALSE(validate(KernelModel::gaussian(2, -1, 0.03)).ok);
    CHECK_FALSE(validate(KernelModel::gaussian(2, 100, -0.01)).ok);

    auto rng = make_rng(3);
    for (int i = 0; i < 20; ++i) {
        const auto mm = KernelModel::gaussian(2, 100, kBoundary * (0.05 + 0.95 * uniform01(rng)));
        const auto v = validate(mm);
        REQUIRE(v.ok);
        CHECK(v.max_spectral <= 1 + 1e-12);
        CHECK(integral_kernel_squared(mm) < mm.rho);
    }
}

TEST_CASE("correlation derivatives", "[kernels]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    CHECK(correlation_grad(m, 0.0)[0] == 0.0);
    CHECK(correlation_hess(m, 0.0)(0, 0) == 0.0);
    CHECK(correlation_grad(m, 0.03)[0] == Approx(2 * 0.0009 / 2.7e-5 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(correlation_grad(m, 0.03)[0] == Approx(24.525296078096157).epsilon(1e-12));

    auto rng = make_rng(5);
    for (int i = 0; i < 50; ++i) {
        const double a = 0.005 + 0.05 * uniform01(rng);
        const double r = 3 * a * uniform01(rng);
        const double h = 1e-6 * a;
        const auto mp = KernelModel::gaussian(2, 100, a + h);
        const auto mn = KernelModel::gaussian(2, 100, a - h);
        const auto m0 = KernelModel::gaussian(2, 100, a);
        const double fd = (correlation(mp, r) - correlation(mn, r)) / (2 * h);
        const double fd2 = (correlation_grad(mp, r)[0] - correlation_grad(mn, r)[0]) / (2 * h);
        const double g = correlation_grad(m0, r)[0];
        const double H = correlation_hess(m0, r)(0, 0);
        const double sg = std::max(std::abs(g), 1e-3 / a);
        const double sh = std::max(std::abs(H), 1e-3 / (a * a));
        CHECK(std::abs(fd - g) <= 1e-6 * sg);
        CHECK(std::abs(fd2 - H) <= 1e-6 * sh);
    }
}

TEST_CASE("parameter space", "[kernels]") {
    const auto box = param_space(Family::Gaussian, 100, 2);
    REQUIRE(box.dim() == 1);
    CHECK(box.box[0].lo == 1e-4);
    CHECK(box.box[0].hi == Approx(0.0564190).margin(5e-8));
    CHECK(box.box[0].hi == Approx(kBoundary).epsilon(1e-15));
    const auto box4 = param_space(Family::Gaussian, 400, 2);
    CHECK(box4.box[0].hi == Approx(0.0282095).margin(5e-8));
    CHECK(box4.box[0].hi == Approx(box.box[0].hi / 2).epsilon(1e-15));

    Eigen::VectorXd t(1);
    t << 1.0;
    CHECK(box.project(t)[0] == box.box[0].hi);
    CHECK_FALSE(box.contains(t));
}

TEST_CASE("model spec strings", "[kernels]") {
    const auto m = parse_model_spec("family=gaussian dim=2 rho=100 alpha=0.03");
    CHECK(m.dim == 2);
    CHECK(m.rho == 100.0);
    CHECK(m.theta[0] == 0.03);
    const auto back = parse_model_spec(format_model_spec(m));
    CHECK(back.theta[0] == m.theta[0]);
    CHECK_THROWS_AS(parse_model_spec("family=cauchy rho=1 alpha=1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_model_spec("rho=1"), std::invalid_argument);
}

TEST_CASE("correlation range", "[kernels]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    const double r = correlation_range(m, 1e-5);
    CHECK(r == Approx(0.03 * std::sqrt(std::log(1e5))).epsilon(1e-6));
}
