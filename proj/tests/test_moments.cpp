#include "catch_amalgamated.hpp"

#include "dppfit/contrast.hpp"
#include "dppfit/errors.hpp"
#include "dppfit/moments.hpp"
#include "dppfit/rng.hpp"
#include "dppfit/sampler.hpp"

#include "oracles.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

using namespace dppfit;
using Catch::Approx;

namespace {

constexpr double pi = std::numbers::pi;
const double kBoundary = 1.0 / (10.0 * std::sqrt(pi));

using GK = boost::math::quadrature::gauss_kronrod<double, 31>;

// Cartesian adaptive quadrature of int_{B(0,t)} f(|x|^2) dx in the plane,
// with x = t sin(phi) to smooth the chord length at the rim.
double disk_integral(const std::function<double(double)>& f, double t) {
    auto inner = [&](double phi) {
        const double x = t * std::sin(phi);
        const double h = t * std::cos(phi);
        return h > 0 ? t * std::cos(phi) * GK::integrate([&](double y) { return f(x * x + y * y); }, -h, h, 8, 1e-12)
                     : 0.0;
    };
    return GK::integrate(inner, -pi / 2, pi / 2, 8, 1e-12);
}

}  // namespace

TEST_CASE("pair correlation closed form", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    CHECK(g_theory(m, 0.0) == 0.0);
    CHECK(g_theory(m, 0.03) == Approx(1 - std::exp(-2.0)).epsilon(1e-14));
    CHECK(g_theory(m, 0.03) == Approx(0.864665).margin(5e-7));
    CHECK(g_theory(m, 10.0) == 1.0);
    for (double t = 0; t < 0.3; t += 0.001) {
        CHECK(g_theory(m, t) >= 0.0);
        CHECK(g_theory(m, t) <= 1.0);
    }
}

TEST_CASE("K closed form against adaptive quadrature", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    CHECK(K_theory(m, 0.0) == 0.0);
    const double hand = pi * 0.01 - pi * 0.00045 * (1 - std::exp(-200.0 / 9.0));
    CHECK(K_theory(m, 0.1) == Approx(hand).epsilon(1e-13));
    CHECK(K_theory(m, 0.1) == Approx(0.0300022).margin(5e-8));
    const double a2 = 0.03 * 0.03;
    for (double t : {0.01, 0.05, 0.1, 0.2}) {
        const double oracle = disk_integral([&](double r2) { return 1 - std::exp(-2 * r2 / a2); }, t);
        CHECK(K_theory(m, t) == Approx(oracle).epsilon(1e-10));
    }
    const auto tiny = KernelModel::gaussian(2, 100, 1e-7);
    CHECK(K_theory(tiny, 0.1) == Approx(pi * 0.01).epsilon(1e-10));

    double prev = 0.0;
    for (double t = 0.0; t < 0.4; t += 0.002) {
        const double k = K_theory(m, t);
        CHECK(k <= ball_volume(2, t));
        CHECK(k >= prev);
        prev = k;
    }
}

TEST_CASE("K and g gradients against finite differences", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    CHECK(K_grad(m, 0.0)[0] == 0.0);
    CHECK(std::abs(g_grad(m, 1.0)[0]) < 1e-300);

    auto rng = make_rng(21);
    for (int i = 0; i < 50; ++i) {
        const double a = 0.005 + 0.05 * uniform01(rng);
        const double t = 0.005 + 0.3 * uniform01(rng);
        const double h = 1e-5 * a;
        const auto mp = KernelModel::gaussian(2, 100, a + h);
        const auto mn = KernelModel::gaussian(2, 100, a - h);
        const auto m0 = KernelModel::gaussian(2, 100, a);
        auto rel = [](double x, double y, double scale) { return std::abs(x - y) / scale; };

        const double fdK = (K_theory(mp, t) - K_theory(mn, t)) / (2 * h);
        const double gK = K_grad(m0, t)[0];
        CHECK(rel(fdK, gK, std::max(std::abs(gK), 1e-6)) <= 1e-6);

        const double fdg = (g_theory(mp, t) - g_theory(mn, t)) / (2 * h);
        const double gg = g_grad(m0, t)[0];
        CHECK(std::abs(fdg - gg) <= 1e-6 * std::max(std::abs(gg), 1e-3 / a));

        const double fdHK = (K_grad(mp, t)[0] - K_grad(mn, t)[0]) / (2 * h);
        const double HK = K_hess(m0, t)(0, 0);
        CHECK(std::abs(fdHK - HK) <= 1e-6 * std::max(std::abs(HK), 1e-6 / a));

        const double fdHg = (g_grad(mp, t)[0] - g_grad(mn, t)[0]) / (2 * h);
        const double Hg = g_hess(m0, t)(0, 0);
        CHECK(std::abs(fdHg - Hg) <= 1e-6 * std::max(std::abs(Hg), 1e-3 / (a * a)));
    }
}

TEST_CASE("cumulant densities", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    const auto c = cumulants(m);
    const double o[2] = {0, 0};
    CHECK(c.c2(o) == -10000.0);
    CHECK(c.c3(o, o) == 2e6);
    CHECK_THROWS_AS(cumulants(KernelModel::gaussian(2, 100, 0.06)), ValidationError);

    auto rng = make_rng(99);
    const oracle::Point zero{0, 0};
    for (int i = 0; i < 20; ++i) {
        const auto u = oracle::random_point(rng, 0.04), v = oracle::random_point(rng, 0.04), w = oracle::random_point(rng, 0.04);
        const double k2 = oracle::partition_cumulant(m, {zero, u});
        const double k3 = oracle::partition_cumulant(m, {zero, u, v});
        const double k4 = oracle::partition_cumulant(m, {zero, u, v, w});
        CHECK(c.c2(u) == Approx(k2).epsilon(1e-10));
        CHECK(c.c3(u, v) == Approx(k3).epsilon(1e-10));
        CHECK(c.c4(u, v, w) == Approx(k4).epsilon(1e-10));
        CHECK(c.c2(u) <= 0.0);
        CHECK(c.c3(u, v) == Approx(c.c3(v, u)).epsilon(1e-14));
        CHECK(c.c4(u, v, w) == Approx(c.c4(w, u, v)).epsilon(1e-12));
    }
}

TEST_CASE("intensity CLT variance", "[moments]") {
    CHECK(intensity_clt_variance(KernelModel::gaussian(2, 100, 0.03)) ==
          Approx(100 - 10000 * pi * 0.00045).epsilon(1e-13));
    CHECK(intensity_clt_variance(KernelModel::gaussian(2, 100, 0.03)) == Approx(85.863).margin(5e-4));
    CHECK(intensity_clt_variance(KernelModel::gaussian(2, 100, kBoundary)) == Approx(50.0).epsilon(1e-12));
    CHECK(intensity_clt_variance(KernelModel::gaussian(2, 100, 1e-8)) == Approx(100.0).epsilon(1e-10));
}

TEST_CASE("B matrix", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    ContrastSpec g = default_spec(Statistic::g, Window::cube(2, 0, 1));
    const double Bg = B_matrix(m, g)(0, 0);
    CHECK(Bg > 0.0);

    ContrastSpec g2 = g;
    g2.weight = [](double) { return 2.0; };
    CHECK(B_matrix(m, g2)(0, 0) == Approx(2 * Bg).epsilon(1e-14));

    ContrastSpec k = default_spec(Statistic::K, Window::cube(2, 0, 1));
    const double B513 = B_matrix(m, k)(0, 0);
    k.grid_points = 1025;
    const double B1025 = B_matrix(m, k)(0, 0);
    CHECK(std::abs(B513 - B1025) <= 1e-8 * std::abs(B1025));

    // independent quadrature of w K^{2c-2} K'^2
    const double oracle = GK::integrate(
        [&](double t) {
            const double K = K_theory(m, t);
            const double d = K_grad(m, t)[0];
            return d * d / K;
        },
        0.01, 0.25, 10, 1e-12);
    CHECK(B1025 == Approx(oracle).epsilon(1e-8));

    ContrastSpec bad = default_spec(Statistic::K, Window::cube(2, 0, 1));
    bad.r_min = 0.0;
    bad.c = 2.0;
    CHECK(B_matrix(m, bad)(0, 0) > 0.0);
}

TEST_CASE("Sigma with a zero kernel reduces to the intensity terms", "[moments]") {
    const double rho = 100.0, lo = 0.01, hi = 0.25, mval = 0.02;
    // f = 1/(2 pi) on the annulus lo <= |x| <= hi
    const double f0 = 1.0 / (2 * pi);
    SigmaInputs in{2, rho, [](double) { return 0.0; }, RadialProfile(lo, hi, Eigen::MatrixXd::Constant(1, 65, f0)),
                   Eigen::VectorXd::Constant(1, mval)};
    const double area = pi * (hi * hi - lo * lo);
    const double ff = f0 * f0 * area;
    const double Phi = f0 * area;
    const double hand = (2 * rho * rho * ff + 4 * rho * rho * rho * (Phi - mval) * (Phi - mval)) / std::pow(rho, 4);
    const auto est = sigma_from_inputs(in, SigmaOptions{});
    CHECK(est.sigma(0, 0) == Approx(hand).epsilon(1e-9));
    CHECK(est.std_error(0, 0) == 0.0);
}

TEST_CASE("Sigma Monte Carlo error", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    for (Statistic s : {Statistic::K, Statistic::g}) {
        const auto spec = default_spec(s, Window::cube(2, 0, 3));
        const auto est = s == Statistic::K ? sigma_K(m, spec) : sigma_g(m, spec);
        INFO("statistic " << to_string(s) << " Sigma " << est.sigma(0, 0) << " stderr " << est.std_error(0, 0));
        CHECK(est.sigma(0, 0) > 0.0);
        CHECK(est.std_error(0, 0) <= 0.05 * std::abs(est.sigma(0, 0)));

        SigmaOptions other;
        other.seed = 2;
        other.threads = 3;
        const auto est2 = s == Statistic::K ? sigma_K(m, spec, other) : sigma_g(m, spec, other);
        const double se = std::hypot(est.std_error(0, 0), est2.std_error(0, 0));
        CHECK(std::abs(est.sigma(0, 0) - est2.sigma(0, 0)) <= 4 * se);

        SigmaOptions threaded;
        threaded.threads = 4;
        const auto est3 = s == Statistic::K ? sigma_K(m, spec, threaded) : sigma_g(m, spec, threaded);
        CHECK(est3.sigma(0, 0) == est.sigma(0, 0));
    }
}

TEST_CASE("Sigma standard error decays like 1/sqrt(N)", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    const auto spec = default_spec(Statistic::g, Window::cube(2, 0, 1));
    std::vector<double> lx, ly;
    for (std::size_t n : {10000u, 31623u, 100000u, 316228u, 1000000u}) {
        SigmaOptions o;
        o.samples = n;
        const auto est = sigma_g(m, spec, o);
        lx.push_back(std::log(static_cast<double>(n)));
        ly.push_back(std::log(est.std_error(0, 0)));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(lx.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    const double slope = sxy / sxx;
    INFO("slope " << slope);
    CHECK(slope == Approx(-0.5).margin(0.1));
}

TEST_CASE("asymptotic covariance assembly", "[moments]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    const auto spec = default_spec(Statistic::g, Window::cube(2, 0, 3));
    const auto rep = asymptotic_covariance(m, spec);
    CHECK(rep.covariance(0, 0) == Approx(rep.Sigma(0, 0) / (rep.B(0, 0) * rep.B(0, 0))).epsilon(1e-12));
    CHECK(rep.covariance(0, 0) > 0.0);
    CHECK(rep.condition_number == 1.0);

    ContrastSpec scaled = spec;
    scaled.weight = [](double) { return 3.0; };
    const auto rep3 = asymptotic_covariance(m, scaled);
    CHECK(rep3.B(0, 0) == Approx(3 * rep.B(0, 0)).epsilon(1e-13));
    CHECK(rep3.Sigma(0, 0) == Approx(9 * rep.Sigma(0, 0)).epsilon(1e-9));
    CHECK(rep3.covariance(0, 0) == Approx(rep.covariance(0, 0)).epsilon(1e-9));
}

namespace {

// Linear functional sqrt|D| int (J_hat - J) j dt of 500 replicates on [0,3]^2,
// shared by the two simulation checks below.
struct FunctionalSample {
    std::vector<double> K;
    std::vector<double> g;
};

const FunctionalSample& functional_sample() {
    static const FunctionalSample s = [] {
        const auto m = KernelModel::gaussian(2, 100, 0.03);
        const Window w = Window::cube(2, 0, 3);
        FunctionalSample out;
        const auto specK = default_spec(Statistic::K, w);
        const auto specg = default_spec(Statistic::g, w);
        const auto gridK = specK.grid();
        const auto gridg = specg.grid();
        const auto wK = simpson_weights(gridK.size(), specK.spacing());
        const auto wg = simpson_weights(gridg.size(), specg.spacing());
        const auto jK = j_weights(m, specK);
        const auto jg = j_weights(m, specg);
        const auto KT = theoretical_curve(Statistic::K, m, gridK);
        const auto gT = theoretical_curve(Statistic::g, m, gridg);
        for (std::size_t r = 0; r < 500; ++r) {
            SamplerConfig cfg;
            cfg.seed = derive_seed(2024, {r});
            const PointPattern p = sample_dpp(m, w, cfg);
            const auto Kh = empirical_curve(p, specK);
            const auto gh = empirical_curve(p, specg);
            double vK = 0, vg = 0;
            for (std::size_t i = 0; i < gridK.size(); ++i)
                vK += wK[i] * (Kh.values[i] - KT.values[i]) * jK(0, static_cast<Eigen::Index>(i));
            for (std::size_t i = 0; i < gridg.size(); ++i)
                vg += wg[i] * (gh.values[i] - gT.values[i]) * jg(0, static_cast<Eigen::Index>(i));
            out.K.push_back(3.0 * vK);
            out.g.push_back(3.0 * vg);
        }
        return out;
    }();
    return s;
}

void compare_with_sigma(const std::vector<double>& v, const SigmaEstimate& est) {
    const auto n = static_cast<double>(v.size());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = ss / (n - 1);
    const double se = std::hypot(var * std::sqrt(2.0 / (n - 1)), est.std_error(0, 0));
    INFO("empirical variance " << var << ", Sigma " << est.sigma(0, 0) << ", combined stderr " << se);
    CHECK(std::abs(var - est.sigma(0, 0)) <= 3 * se);
}

}  // namespace

// g_hat smooths pairs with the Stoyan bandwidth 0.015, comparable to r_min,
// so the simulated functional has pair profile f * k_b rather than f. The
// oracle feeds that profile to the same Sigma terms.
TEST_CASE("Sigma_g matches the simulated variance of the g functional", "[moments][simulation]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    const auto spec = default_spec(Statistic::g, Window::cube(2, 0, 3));
    const SigmaInputs base = sigma_inputs(Statistic::g, m, spec);
    const auto grid = spec.grid();
    const auto wq = simpson_weights(grid.size(), spec.spacing());
    const Eigen::MatrixXd j = j_weights(m, spec);
    const double b = 0.15 / std::sqrt(m.rho);
    const double lo = spec.r_min - b, hi = spec.r_max + b;
    const int nodes = 8193;
    Eigen::MatrixXd fb(1, nodes);
    for (int k = 0; k < nodes; ++k) {
        const double r = lo + (hi - lo) * k / (nodes - 1);
        double acc = 0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double u = (grid[i] - r) / b;
            if (std::abs(u) < 1)
                acc += wq[i] * 0.75 * (1 - u * u) / b * j(0, static_cast<Eigen::Index>(i)) /
                       (2 * std::numbers::pi * grid[i]);
        }
        fb(0, k) = acc;
    }
    const SigmaInputs smoothed{base.dim, base.rho, base.kernel, RadialProfile(lo, hi, fb), base.m};
    compare_with_sigma(functional_sample().g, sigma_from_inputs(smoothed, SigmaOptions{}));

    // The zero-bandwidth limit sits about 30% higher.
    const double limit = sigma_g(m, spec).sigma(0, 0);
    CHECK(limit > 1.2 * sigma_from_inputs(smoothed, SigmaOptions{}).sigma(0, 0));
}

// The minus-sampled K_hat with r_max a quarter of the side keeps a
// finite-window variance far above Sigma_K (about 30x on [0,3]^2).
TEST_CASE("Sigma_K matches the simulated variance of the K functional", "[moments][simulation][!shouldfail]") {
    const auto m = KernelModel::gaussian(2, 100, 0.03);
    compare_with_sigma(functional_sample().K, sigma_K(m, default_spec(Statistic::K, Window::cube(2, 0, 3))));
}
