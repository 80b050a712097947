#include "dppfit/contrast.hpp"

#include "dppfit/errors.hpp"
#include "dppfit/rng.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dppfit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double power(double x, double c) {
    if (c == 1.0) return x;
    if (c == 0.5) return std::sqrt(x);
    if (c == 2.0) return x * x;
    return std::pow(x, c);
}

bool integer_valued(double c) { return std::floor(c) == c; }

void check_grid(const SummaryCurve& curve, const ContrastSpec& spec) {
    const auto grid = spec.grid();
    if (curve.grid.size() != grid.size() || curve.values.size() != grid.size())
        throw std::invalid_argument("curve is not tabulated on the contrast grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::abs(curve.grid[i] - grid[i]) > 1e-12 * (1.0 + std::abs(grid[i])))
            throw std::invalid_argument("curve is not tabulated on the contrast grid");
    }
}

/// U(theta) with J_hat^c and the quadrature weights precomputed.
class Objective {
public:
    Objective(const SummaryCurve& curve, const StatisticModel& J, const ContrastSpec& spec)
        : J_(J), c_(spec.c), grid_(spec.grid()) {
        validate_spec(spec);
        check_grid(curve, spec);
        const auto wq = simpson_weights(grid_.size(), spec.spacing());
        target_.resize(grid_.size());
        weight_.resize(grid_.size());
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double v = curve.values[i];
            if ((v < 0.0 && !integer_valued(c_)) || (v == 0.0 && c_ < 0.0)) {
                std::ostringstream os;
                os << "empirical " << to_string(curve.kind) << "(" << grid_[i] << ") = " << v
                   << " cannot be raised to the power c=" << c_;
                throw NegativeStatistic(os.str());
            }
            target_[i] = power(v, c_);
            weight_[i] = wq[i] * spec.w(grid_[i]);
        }
    }

    double operator()(const Eigen::VectorXd& theta) const {
        ++evaluations_;
        const auto vals = J_.values(grid_, theta);
        double s = 0.0;
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double diff = target_[i] - power(vals[i], c_);
            s += weight_[i] * diff * diff;
        }
        return std::isfinite(s) ? s : kInf;
    }

    [[nodiscard]] int evaluations() const noexcept { return evaluations_; }

private:
    const StatisticModel& J_;
    double c_;
    std::vector<double> grid_;
    std::vector<double> target_;
    std::vector<double> weight_;
    mutable int evaluations_{0};
};

struct Candidate {
    Eigen::VectorXd x;
    double f{kInf};
    bool converged{false};
};

bool better(const Candidate& a, const Candidate& b) {
    if (std::abs(a.f - b.f) <= 1e-10 * (1.0 + std::abs(b.f)) && std::isfinite(a.f) && std::isfinite(b.f)) {
        return std::lexicographical_compare(a.x.data(), a.x.data() + a.x.size(), b.x.data(), b.x.data() + b.x.size());
    }
    return a.f < b.f;
}

Candidate minimize_1d(const Objective& U, const ParamSpace& box, const OptimizerOptions& opts) {
    const double lo = box.box[0].lo, hi = box.box[0].hi;
    Eigen::VectorXd x(1);
    auto f = [&](double v) {
        x[0] = std::clamp(v, lo, hi);
        return U(x);
    };
    Candidate best;
    best.x = Eigen::VectorXd::Constant(1, lo);
    if (!(hi > lo)) {
        best.f = f(lo);
        best.converged = true;
        return best;
    }
    const int n = std::max(opts.scan_points, 3);
    std::vector<double> xs(static_cast<std::size_t>(n)), fs(static_cast<std::size_t>(n));
    std::size_t ib = 0;
    for (int i = 0; i < n; ++i) {
        xs[i] = i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1);
        fs[i] = f(xs[i]);
        if (fs[i] < fs[ib]) ib = static_cast<std::size_t>(i);
    }
    best.x[0] = xs[ib];
    best.f = fs[ib];
    if (!std::isfinite(best.f)) return best;
    const double a = xs[ib > 0 ? ib - 1 : 0];
    const double b = xs[std::min<std::size_t>(ib + 1, xs.size() - 1)];
    const int bits = std::numeric_limits<double>::digits / 2;
    std::uintmax_t iters = static_cast<std::uintmax_t>(std::max(opts.max_evaluations - n, 1));
    const std::uintmax_t budget = iters;
    const auto r = boost::math::tools::brent_find_minima(f, a, b, bits, iters);
    best.converged = iters < budget;
    Candidate refined;
    refined.x = Eigen::VectorXd::Constant(1, std::clamp(r.first, lo, hi));
    refined.f = r.second;
    if (refined.f <= best.f) {
        refined.converged = best.converged;
        best = refined;
    }
    return best;
}

Candidate nelder_mead(const Objective& U, const ParamSpace& box, Eigen::VectorXd start, const OptimizerOptions& opts,
                      int budget) {
    const int p = box.dim();
    const Eigen::VectorXd lo = box.lower(), hi = box.upper();
    const Eigen::VectorXd width = (hi - lo).cwiseMax(1e-300);
    auto eval = [&](Eigen::VectorXd& v) {
        v = box.project(v);
        return U(v);
    };
    std::vector<Eigen::VectorXd> s(static_cast<std::size_t>(p + 1), box.project(start));
    std::vector<double> f(static_cast<std::size_t>(p + 1));
    for (int i = 0; i < p; ++i) {
        auto& v = s[static_cast<std::size_t>(i + 1)];
        const double step = 0.1 * width[i];
        v[i] += v[i] + step <= hi[i] ? step : -step;
    }
    for (std::size_t i = 0; i < s.size(); ++i) f[i] = eval(s[i]);
    int used = p + 1;
    Candidate out;
    while (used < budget) {
        std::vector<std::size_t> ord(s.size());
        std::iota(ord.begin(), ord.end(), 0);
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
        std::vector<Eigen::VectorXd> s2;
        std::vector<double> f2;
        for (auto i : ord) {
            s2.push_back(s[i]);
            f2.push_back(f[i]);
        }
        s.swap(s2);
        f.swap(f2);
        double extent = 0.0;
        for (std::size_t i = 1; i < s.size(); ++i) extent = std::max(extent, ((s[i] - s[0]).cwiseQuotient(width)).cwiseAbs().maxCoeff());
        if (std::abs(f.back() - f.front()) <= opts.f_tolerance * (1.0 + std::abs(f.front())) && extent <= opts.x_tolerance) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
        for (int i = 0; i < p; ++i) centroid += s[static_cast<std::size_t>(i)];
        centroid /= p;
        Eigen::VectorXd xr = centroid + (centroid - s.back());
        const double fr = eval(xr);
        ++used;
        if (fr < f.front()) {
            Eigen::VectorXd xe = centroid + 2.0 * (centroid - s.back());
            const double fe = eval(xe);
            ++used;
            if (fe < fr) {
                s.back() = xe;
                f.back() = fe;
            } else {
                s.back() = xr;
                f.back() = fr;
            }
        } else if (fr < f[f.size() - 2]) {
            s.back() = xr;
            f.back() = fr;
        } else {
            const bool outside = fr < f.back();
            Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                         : Eigen::VectorXd(centroid + 0.5 * (s.back() - centroid));
            const double fc = eval(xc);
            ++used;
            if (fc < (outside ? fr : f.back())) {
                s.back() = xc;
                f.back() = fc;
            } else {
                for (std::size_t i = 1; i < s.size(); ++i) {
                    s[i] = s[0] + 0.5 * (s[i] - s[0]);
                    f[i] = eval(s[i]);
                    ++used;
                }
            }
        }
    }
    const auto ib = static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
    out.x = s[ib];
    out.f = f[ib];
    return out;
}

}  // namespace

Eigen::MatrixXd StatisticModel::hess(double t, const Eigen::VectorXd& theta) const {
    const int p = num_params();
    Eigen::MatrixXd H(p, p);
    for (int i = 0; i < p; ++i) {
        const double h = 1e-5 * std::max(std::abs(theta[i]), 1e-3);
        Eigen::VectorXd a = theta, b = theta;
        a[i] += h;
        b[i] -= h;
        H.col(i) = (grad(t, a) - grad(t, b)) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

std::vector<double> StatisticModel::values(std::span<const double> grid, const Eigen::VectorXd& theta) const {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = value(grid[i], theta);
    return out;
}

DppStatistic::DppStatistic(Statistic s, int dim, Family family) : stat_(s), dim_(dim), family_(family) {}

KernelModel DppStatistic::model(const Eigen::VectorXd& theta) const {
    KernelModel m;
    m.dim = dim_;
    m.family = family_;
    m.rho = 1.0;
    m.theta = theta;
    return m;
}

int DppStatistic::num_params() const { return family_impl(family_).num_params(); }

double DppStatistic::value(double t, const Eigen::VectorXd& theta) const { return J_theory(stat_, model(theta), t); }

Eigen::VectorXd DppStatistic::grad(double t, const Eigen::VectorXd& theta) const {
    return J_grad(stat_, model(theta), t);
}

Eigen::MatrixXd DppStatistic::hess(double t, const Eigen::VectorXd& theta) const {
    return J_hess(stat_, model(theta), t);
}

std::vector<double> DppStatistic::values(std::span<const double> grid, const Eigen::VectorXd& theta) const {
    const auto m = model(theta);
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = J_theory(stat_, m, grid[i]);
    return out;
}

double contrast_value(const SummaryCurve& curve, const StatisticModel& J, const Eigen::VectorXd& theta,
                      const ContrastSpec& spec) {
    return Objective(curve, J, spec)(theta);
}

double contrast_value(const SummaryCurve& curve, const KernelModel& m, const ContrastSpec& spec) {
    return contrast_value(curve, DppStatistic(spec.statistic, m.dim, m.family), m.theta, spec);
}

SummaryCurve empirical_curve(const PointPattern& p, const ContrastSpec& spec, const SmoothingKernel& k,
                             const BandwidthRule& bw) {
    validate_spec(spec);
    const auto grid = spec.grid();
    return spec.statistic == Statistic::K ? K_hat(p, grid) : g_hat(p, grid, k, bw);
}

FitReport fit_generic(const SummaryCurve& curve, const StatisticModel& J, const ParamSpace& box,
                      const ContrastSpec& spec, const OptimizerOptions& opts) {
    const int p = box.dim();
    if (p != J.num_params()) throw std::invalid_argument("parameter box and statistic disagree on dimension");
    const Objective U(curve, J, spec);
    Candidate best;
    if (p == 1) {
        best = minimize_1d(U, box, opts);
    } else {
        Rng rng = make_rng(opts.seed);
        const int budget = std::max(opts.max_evaluations / std::max(opts.restarts, 1), 4 * (p + 1));
        for (int r = 0; r < std::max(opts.restarts, 1); ++r) {
            Eigen::VectorXd start(p);
            for (int i = 0; i < p; ++i) {
                const auto& iv = box.box[static_cast<std::size_t>(i)];
                start[i] = r == 0 ? 0.5 * (iv.lo + iv.hi) : iv.lo + uniform01(rng) * (iv.hi - iv.lo);
            }
            const Candidate c = nelder_mead(U, box, start, opts, budget);
            if (r == 0 || better(c, best)) best = c;
        }
    }
    if (!std::isfinite(best.f)) throw OptimizerFailure("contrast is not finite anywhere on the parameter box");

    FitReport rep;
    rep.theta_hat = best.x;
    rep.objective = U(best.x);
    rep.iterations = U.evaluations();
    rep.converged = best.converged;
    for (int i = 0; i < p; ++i) {
        const auto& iv = box.box[static_cast<std::size_t>(i)];
        const double tol = 1e-6 * (iv.hi - iv.lo);
        if (best.x[i] - iv.lo <= tol || iv.hi - best.x[i] <= tol) rep.bound_active = true;
    }
    return rep;
}

FitReport fit_curve(const SummaryCurve& curve, double rho_hat, int dim, Family family, const ContrastSpec& spec,
                    const FitOptions& opts) {
    if (!(rho_hat > 0.0)) throw ZeroIntensity("intensity estimate is zero");
    const auto box = param_space(family, rho_hat, dim);
    const DppStatistic J(spec.statistic, dim, family);
    FitReport rep = fit_generic(curve, J, box, spec, opts.optimizer);
    rep.rho_hat = rho_hat;
    if (opts.asymptotics) {
        KernelModel m;
        m.dim = dim;
        m.family = family;
        m.rho = rho_hat;
        m.theta = rep.theta_hat;
        rep.asymptotics = asymptotic_covariance(m, spec, opts.sigma);
    }
    return rep;
}

FitReport fit(const PointPattern& p, Family family, const ContrastSpec& spec, const FitOptions& opts) {
    validate_spec(spec);
    if (p.empty()) throw ZeroIntensity("cannot fit an empty pattern");
    const double rho = intensity_hat(p);
    const auto curve = empirical_curve(p, spec, opts.smoothing, opts.bandwidth);
    return fit_curve(curve, rho, p.dim(), family, spec, opts);
}

}  // namespace dppfit
