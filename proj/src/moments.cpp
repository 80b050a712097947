#include "dppfit/moments.hpp"

#include "dppfit/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <sstream>

namespace dppfit {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

double radial_integral(int dim, double t, const std::function<double(double)>& f) {
    if (t <= 0.0) return 0.0;
    const double sd = sphere_area(dim);
    auto g = [&](double r) { return sd * std::pow(r, dim - 1) * f(r); };
    return GK::integrate(g, 0.0, t, 8, 1e-11);
}

double norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

double dist(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
}

}  // namespace

double g_theory(const KernelModel& m, double t) {
    const double R = correlation(m, t);
    return 1.0 - R * R;
}

double K_theory(const KernelModel& m, double t) {
    if (t <= 0.0) return 0.0;
    const auto& fam = m.impl();
    double r2 = 0.0;
    if (auto closed = fam.ball_integral_r2(t, m.theta, m.dim)) {
        r2 = *closed;
    } else {
        r2 = radial_integral(m.dim, t, [&](double r) {
            const double R = fam.correlation(r, m.theta);
            return R * R;
        });
    }
    return ball_volume(m.dim, t) - r2;
}

Eigen::VectorXd g_grad(const KernelModel& m, double t) {
    return -2.0 * correlation(m, t) * correlation_grad(m, t);
}

Eigen::VectorXd K_grad(const KernelModel& m, double t) {
    const int p = m.num_params();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
    if (t <= 0.0) return out;
    for (int i = 0; i < p; ++i) {
        out[i] = -2.0 * radial_integral(m.dim, t, [&](double r) {
            return correlation(m, r) * correlation_grad(m, r)[i];
        });
    }
    return out;
}

Eigen::MatrixXd g_hess(const KernelModel& m, double t) {
    const double R = correlation(m, t);
    const Eigen::VectorXd dR = correlation_grad(m, t);
    return -2.0 * (dR * dR.transpose() + R * correlation_hess(m, t));
}

Eigen::MatrixXd K_hess(const KernelModel& m, double t) {
    const int p = m.num_params();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
    if (t <= 0.0) return out;
    for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
            out(i, j) = -2.0 * radial_integral(m.dim, t, [&](double r) {
                const Eigen::VectorXd dR = correlation_grad(m, r);
                return dR[i] * dR[j] + correlation(m, r) * correlation_hess(m, r)(i, j);
            });
            out(j, i) = out(i, j);
        }
    }
    return out;
}

double J_theory(Statistic s, const KernelModel& m, double t) {
    return s == Statistic::K ? K_theory(m, t) : g_theory(m, t);
}

Eigen::VectorXd J_grad(Statistic s, const KernelModel& m, double t) {
    return s == Statistic::K ? K_grad(m, t) : g_grad(m, t);
}

Eigen::MatrixXd J_hess(Statistic s, const KernelModel& m, double t) {
    return s == Statistic::K ? K_hess(m, t) : g_hess(m, t);
}

SummaryCurve theoretical_curve(Statistic s, const KernelModel& m, std::span<const double> grid) {
    SummaryCurve c;
    c.kind = s;
    c.grid.assign(grid.begin(), grid.end());
    c.values.reserve(grid.size());
    for (double t : grid) c.values.push_back(J_theory(s, m, t));
    return c;
}

double CumulantDensities::C(std::span<const double> x) const { return kernel_value(model_, norm(x)); }

double CumulantDensities::C(std::span<const double> x, std::span<const double> y) const {
    return kernel_value(model_, dist(x, y));
}

double CumulantDensities::c2(std::span<const double> u) const {
    const double c = C(u);
    return -c * c;
}

double CumulantDensities::c3(std::span<const double> u, std::span<const double> v) const {
    return 2.0 * C(u) * C(v) * C(v, u);
}

double CumulantDensities::c4(std::span<const double> u, std::span<const double> v,
                             std::span<const double> w) const {
    const double cu = C(u), cv = C(v), cw = C(w);
    const double cuv = C(u, v), cuw = C(u, w), cvw = C(v, w);
    return -2.0 * (cu * cv * cuw * cvw + cu * cw * cuv * cvw + cv * cw * cuv * cuw);
}

CumulantDensities cumulants(const KernelModel& m) {
    require_valid(m);
    return CumulantDensities(m);
}

double intensity_clt_variance(const KernelModel& m) { return m.rho - integral_kernel_squared(m); }

Eigen::MatrixXd j_weights(const KernelModel& m, const ContrastSpec& spec) {
    validate_spec(spec);
    const auto grid = spec.grid();
    const int p = m.num_params();
    Eigen::MatrixXd j(p, static_cast<Eigen::Index>(grid.size()));
    const double e = 2.0 * spec.c - 2.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        const double J = J_theory(spec.statistic, m, t);
        double pw = 1.0;
        if (e != 0.0) {
            if (J <= 0.0 && e < 0.0) {
                std::ostringstream os;
                os << "theoretical " << to_string(spec.statistic) << "(" << t << ") = " << J
                   << " is not positive but 2c-2 < 0";
                throw NonPositiveStatistic(os.str());
            }
            pw = std::pow(J, e);
        }
        j.col(static_cast<Eigen::Index>(i)) = spec.w(t) * pw * J_grad(spec.statistic, m, t);
    }
    return j;
}

Eigen::MatrixXd B_matrix(const KernelModel& m, const ContrastSpec& spec) {
    validate_spec(spec);
    const auto grid = spec.grid();
    const auto wq = simpson_weights(grid.size(), spec.spacing());
    const int p = m.num_params();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p, p);
    const double e = 2.0 * spec.c - 2.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        const double J = J_theory(spec.statistic, m, t);
        if (e < 0.0 && J <= 0.0) {
            std::ostringstream os;
            os << "theoretical " << to_string(spec.statistic) << "(" << t << ") = " << J
               << " is not positive but 2c-2 < 0";
            throw NonPositiveStatistic(os.str());
        }
        const double pw = e == 0.0 ? 1.0 : std::pow(J, e);
        const Eigen::VectorXd d = J_grad(spec.statistic, m, t);
        B += wq[i] * spec.w(t) * pw * d * d.transpose();
    }
    return B;
}

}  // namespace dppfit
