#include "dppfit/moments.hpp"

#include "dppfit/errors.hpp"
#include "dppfit/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>
#include <vector>

namespace dppfit {

namespace {

constexpr int kMaxP = 4;
constexpr int kMaxDim = 6;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxP, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxP, kMaxP>;
using Point = std::array<double, kMaxDim>;

double norm(const Point& x, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

Point add(const Point& a, const Point& b, int d) {
    Point c{};
    for (int i = 0; i < d; ++i) c[i] = a[i] + b[i];
    return c;
}

Point sub(const Point& a, const Point& b, int d) {
    Point c{};
    for (int i = 0; i < d; ++i) c[i] = a[i] - b[i];
    return c;
}

/// Isotropic density on the shell lo <= |x| <= hi, piecewise constant over
/// radial bins. Bin masses follow int |h| over the annulus, mixed with a
/// small uniform share so that every bin stays reachable.
class RadialDensity {
public:
    RadialDensity(int dim, double lo, double hi, int bins, const std::function<double(double)>& h,
                  double uniform_share = 0.02)
        : dim_(dim), lo_(lo), hi_(hi), step_((hi - lo) / bins), cdf_(static_cast<std::size_t>(bins) + 1, 0.0),
          density_(static_cast<std::size_t>(bins), 0.0) {
        const double sd = sphere_area(dim);
        std::vector<double> mass(static_cast<std::size_t>(bins)), vol(static_cast<std::size_t>(bins));
        double mass_sum = 0.0, vol_sum = 0.0;
        constexpr int kSub = 8;
        for (int b = 0; b < bins; ++b) {
            const double a = edge(b), e = edge(b + 1);
            double s = 0.0;
            for (int k = 0; k < kSub; ++k) {
                const double r = a + (k + 0.5) * (e - a) / kSub;
                s += std::pow(r, dim - 1) * std::abs(h(r));
            }
            mass[b] = sd * s * (e - a) / kSub;
            vol[b] = sd / dim * (std::pow(e, dim) - std::pow(a, dim));
            mass_sum += mass[b];
            vol_sum += vol[b];
        }
        const double share = mass_sum > 0.0 ? uniform_share : 1.0;
        for (int b = 0; b < bins; ++b) {
            const double prob = (1.0 - share) * (mass_sum > 0.0 ? mass[b] / mass_sum : 0.0) + share * vol[b] / vol_sum;
            cdf_[b + 1] = cdf_[b] + prob;
            density_[b] = prob / vol[b];
        }
        const double total = cdf_.back();
        for (auto& c : cdf_) c /= total;
        for (auto& v : density_) v /= total;
    }

    Point sample(Rng& rng) const {
        const double u = uniform01(rng);
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        std::size_t b = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cdf_.begin() - 1, 0));
        b = std::min(b, density_.size() - 1);
        while (density_[b] == 0.0 && b + 1 < density_.size()) ++b;
        const double a = std::pow(edge(static_cast<int>(b)), dim_);
        const double e = std::pow(edge(static_cast<int>(b) + 1), dim_);
        const double r = std::pow(a + uniform01(rng) * (e - a), 1.0 / dim_);
        Point x{};
        if (dim_ == 1) {
            x[0] = uniform01(rng) < 0.5 ? -r : r;
        } else if (dim_ == 2) {
            const double phi = 2.0 * std::numbers::pi * uniform01(rng);
            x[0] = r * std::cos(phi);
            x[1] = r * std::sin(phi);
        } else {
            double s = 0.0;
            for (int i = 0; i < dim_; ++i) {
                x[i] = standard_normal(rng);
                s += x[i] * x[i];
            }
            s = std::sqrt(s);
            for (int i = 0; i < dim_; ++i) x[i] *= r / s;
        }
        return x;
    }

    [[nodiscard]] double pdf(double r) const {
        if (r < lo_ || r > hi_) return 0.0;
        const auto b = std::min(static_cast<std::size_t>((r - lo_) / step_), density_.size() - 1);
        return density_[b];
    }

private:
    [[nodiscard]] double edge(int b) const { return b == static_cast<int>(density_.size()) ? hi_ : lo_ + b * step_; }

    int dim_;
    double lo_, hi_, step_;
    std::vector<double> cdf_;
    std::vector<double> density_;
};

struct TermStats {
    Mat mean_raw;
    Mat var_of_mean;  // of the symmetrized mean
};

/// Averages a p x p valued sample function over n draws. Draws are grouped
/// in fixed blocks, each with its own seed, and block sums are reduced in
/// block order so the result does not depend on the thread count.
template <class Sampler>
TermStats run_term(std::uint64_t seed, std::uint64_t term, int p, const SigmaOptions& opts, Sampler sampler) {
    const std::size_t n = std::max<std::size_t>(opts.samples, 2);
    const std::size_t bs = std::max<std::size_t>(opts.block_size, 1);
    const std::size_t blocks = (n + bs - 1) / bs;
    std::vector<Mat> sum(blocks, Mat::Zero(p, p)), sum_sq(blocks, Mat::Zero(p, p));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        Mat x(p, p), s(p, p);
        for (std::size_t b; (b = next.fetch_add(1)) < blocks;) {
            Rng rng = make_rng(derive_seed(seed, {term, b}));
            const std::size_t count = std::min(bs, n - b * bs);
            Mat acc = Mat::Zero(p, p), acc_sq = Mat::Zero(p, p);
            for (std::size_t i = 0; i < count; ++i) {
                sampler(rng, x);
                s = 0.5 * (x + x.transpose());
                acc += x;
                acc_sq += s.cwiseProduct(s);
            }
            sum[b] = acc;
            sum_sq[b] = acc_sq;
        }
    };
    const int threads = static_cast<int>(std::min<std::size_t>(std::max(opts.threads, 1), blocks));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    Mat s1 = Mat::Zero(p, p), s2 = Mat::Zero(p, p);
    for (std::size_t b = 0; b < blocks; ++b) {
        s1 += sum[b];
        s2 += sum_sq[b];
    }
    const double nn = static_cast<double>(n);
    TermStats out;
    out.mean_raw = s1 / nn;
    const Mat mean_sym = 0.5 * (out.mean_raw + out.mean_raw.transpose());
    out.var_of_mean = ((s2 / nn - mean_sym.cwiseProduct(mean_sym)).cwiseMax(0.0)) / (nn - 1.0);
    return out;
}

double truncation_radius(const std::function<double(double)>& C, double c0, double tol, double cap) {
    double hi = 1e-12;
    while (std::abs(C(hi)) > tol * c0) {
        hi *= 2.0;
        if (hi > 2.0 * cap) break;
    }
    double lo = hi / 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::abs(C(mid)) > tol * c0 ? lo : hi) = mid;
    }
    if (hi > cap) {
        std::ostringstream os;
        os << "truncation radius " << hi << " exceeds the cap " << cap << " (|C(r)/C(0)| >= " << tol << ")";
        throw TruncationFailure(os.str());
    }
    return hi;
}

/// j(t) = w J^{2c-2} J'(t) at a single t.
Eigen::VectorXd j_at(const KernelModel& m, const ContrastSpec& spec, double t) {
    const double J = J_theory(spec.statistic, m, t);
    const double e = 2.0 * spec.c - 2.0;
    if (e < 0.0 && J <= 0.0) throw NonPositiveStatistic("theoretical statistic is not positive on [r_min, r_max]");
    const double pw = e == 0.0 ? 1.0 : std::pow(J, e);
    return spec.w(t) * pw * J_grad(spec.statistic, m, t);
}

}  // namespace

RadialProfile::RadialProfile(double lo, double hi, Eigen::MatrixXd values)
    : lo_(lo), hi_(hi), step_(0.0), values_(std::move(values)) {
    if (!(hi > lo) || values_.cols() < 2) throw std::invalid_argument("radial profile needs hi > lo and two nodes");
    step_ = (hi - lo) / static_cast<double>(values_.cols() - 1);
}

void RadialProfile::eval(double r, double* out) const noexcept {
    const int p = params();
    if (r < lo_ || r > hi_) {
        for (int i = 0; i < p; ++i) out[i] = 0.0;
        return;
    }
    const double u = (r - lo_) / step_;
    auto k = static_cast<Eigen::Index>(u);
    if (k >= values_.cols() - 1) k = values_.cols() - 2;
    const double w = u - static_cast<double>(k);
    for (int i = 0; i < p; ++i) out[i] = (1.0 - w) * values_(i, k) + w * values_(i, k + 1);
}

double RadialProfile::squared_norm(double r) const noexcept {
    std::array<double, kMaxP> v{};
    eval(r, v.data());
    double s = 0.0;
    for (int i = 0; i < params(); ++i) s += v[i] * v[i];
    return s;
}

SigmaInputs sigma_inputs(Statistic s, const KernelModel& m, const ContrastSpec& spec_in, int profile_nodes) {
    ContrastSpec spec = spec_in;
    spec.statistic = s;
    validate_spec(spec);
    require_valid(m);
    if (m.num_params() > kMaxP) throw std::invalid_argument("too many shape parameters for the covariance engine");
    if (m.dim > kMaxDim) throw std::invalid_argument("dimension too large for the covariance engine");
    const int p = m.num_params();
    const int nodes = std::max(profile_nodes | 1, 3);

    // m = int J j dt on the contrast grid.
    const auto grid = spec.grid();
    const auto wq = simpson_weights(grid.size(), spec.spacing());
    const Eigen::MatrixXd j = j_weights(m, spec);
    Eigen::VectorXd mv = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < grid.size(); ++i)
        mv += wq[i] * J_theory(s, m, grid[i]) * j.col(static_cast<Eigen::Index>(i));

    const double sd = sphere_area(m.dim);
    Eigen::MatrixXd values(p, nodes);
    double lo = 0.0;
    if (s == Statistic::g) {
        lo = spec.r_min;
        const double h = (spec.r_max - lo) / (nodes - 1);
        for (int i = 0; i < nodes; ++i) {
            const double t = i == nodes - 1 ? spec.r_max : lo + i * h;
            values.col(i) = j_at(m, spec, t) / (sd * std::pow(t, m.dim - 1));
        }
    } else {
        // F(r) = int_{max(r, r_min)}^{r_max} j(t) dt, accumulated from the top
        // with five-point Gauss-Legendre on each node interval.
        static constexpr std::array<double, 5> x{0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                                 0.9061798459386640};
        static constexpr std::array<double, 5> w{0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                                 0.2369268850561891, 0.2369268850561891};
        const double h = spec.r_max / (nodes - 1);
        values.col(nodes - 1).setZero();
        for (int i = nodes - 2; i >= 0; --i) {
            const double a = std::max(i * h, spec.r_min);
            const double b = i + 1 == nodes - 1 ? spec.r_max : (i + 1) * h;
            Eigen::VectorXd I = Eigen::VectorXd::Zero(p);
            if (b > a) {
                const double c = 0.5 * (a + b), r = 0.5 * (b - a);
                for (std::size_t k = 0; k < x.size(); ++k) I += w[k] * r * j_at(m, spec, c + r * x[k]);
            }
            values.col(i) = values.col(i + 1) + I;
        }
    }
    const double hi = spec.r_max;
    const KernelModel km = m;
    return SigmaInputs{m.dim, m.rho, [km](double r) { return kernel_value(km, r); }, RadialProfile(lo, hi, std::move(values)),
                       std::move(mv)};
}

SigmaEstimate sigma_from_inputs(const SigmaInputs& in, const SigmaOptions& opts) {
    const int d = in.dim;
    const int p = in.f.params();
    if (p < 1 || p > kMaxP || d < 1 || d > kMaxDim || in.m.size() != p || !in.kernel)
        throw std::invalid_argument("inconsistent covariance inputs");
    const double rho = in.rho;
    const auto& C = in.kernel;
    const auto& f = in.f;
    const double sd = sphere_area(d);

    // Radial integrals of the profile: Phi = int f, A2 = -int f C^2, T1 = 2 int f f^T (rho^2 - C^2).
    const auto wq = simpson_weights(static_cast<std::size_t>(f.nodes()), f.step());
    Vec Phi = Vec::Zero(p), A2 = Vec::Zero(p);
    Mat T1 = Mat::Zero(p, p);
    for (Eigen::Index i = 0; i < f.nodes(); ++i) {
        const double r = f.node(i);
        const double c = C(r);
        const double shell = wq[static_cast<std::size_t>(i)] * sd * std::pow(r, d - 1);
        const Vec v = f.values().col(i);
        Phi += shell * v;
        A2 -= shell * c * c * v;
        T1 += 2.0 * shell * (rho * rho - c * c) * v * v.transpose();
    }
    const Vec m = in.m;

    const double c0 = std::abs(C(0.0));
    double R = 0.0, S2 = 0.0;
    if (c0 > 0.0) {
        R = truncation_radius(C, c0, opts.trunc_tol, opts.trunc_cap);
        auto g = [&](double r) {
            const double c = C(r);
            return sd * std::pow(r, d - 1) * c * c;
        };
        S2 = -boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, 0.0, R, 8, 1e-11);
    }

    Mat raw = T1;
    raw += 8.0 * rho * Phi * A2.transpose() + 4.0 * rho * rho * rho * Phi * Phi.transpose();
    raw += 4.0 * rho * rho * S2 * Phi * Phi.transpose();
    raw -= 8.0 * rho * rho * S2 * Phi * m.transpose();
    raw -= 8.0 * rho * (A2 + rho * rho * Phi) * m.transpose();
    raw += 4.0 * rho * rho * (rho + S2) * m * m.transpose();

    Mat var = Mat::Zero(p, p);
    if (c0 > 0.0) {
        const int bins = std::max(opts.radial_bins, 16);
        const RadialDensity pC(d, 0.0, R, bins, [&](double r) { return C(r); });
        const RadialDensity pC2(d, 0.0, R, bins, [&](double r) { return C(r) * C(r); });
        const RadialDensity pF(d, f.lo(), f.hi(), bins, [&](double r) { return std::sqrt(f.squared_norm(r)); });

        auto fv = [&](const Point& x) {
            Vec v(p);
            f.eval(norm(x, d), v.data());
            return v;
        };
        auto Cx = [&](const Point& x) { return C(norm(x, d)); };
        auto pc = [&](const Point& x) { return pC.pdf(norm(x, d)); };

        std::vector<TermStats> terms;
        // 4 int int f(x) f(y-x)^T c3(x,y), with u = y - x.
        terms.push_back(run_term(opts.seed, 1, p, opts, [&](Rng& rng, Mat& out) {
            const Point x = pC.sample(rng), u = pC.sample(rng);
            const double wgt = 8.0 * Cx(x) * Cx(u) * Cx(add(x, u, d)) / (pc(x) * pc(u));
            out = wgt * fv(x) * fv(u).transpose();
        }));
        // 4 rho int int f(x) f(y-x)^T c2(y).
        terms.push_back(run_term(opts.seed, 2, p, opts, [&](Rng& rng, Mat& out) {
            const Point y = pC2.sample(rng), x = pF.sample(rng);
            const double cy = Cx(y);
            const double wgt = -4.0 * rho * cy * cy / (pC2.pdf(norm(y, d)) * pF.pdf(norm(x, d)));
            out = wgt * fv(x) * fv(sub(y, x, d)).transpose();
        }));
        // P3 = int int f(x) c3(x,y) enters as 4 rho (Phi P3^T - P3 m^T).
        terms.push_back(run_term(opts.seed, 3, p, opts, [&](Rng& rng, Mat& out) {
            const Point x = pC.sample(rng), y = pC.sample(rng);
            const Vec P = (2.0 * Cx(x) * Cx(y) * Cx(sub(y, x, d)) / (pc(x) * pc(y))) * fv(x);
            out = 4.0 * rho * (Phi * P.transpose() - P * m.transpose());
        }));
        // int f(x) f(z-y)^T c4(x,y,z): one draw per product, along its chain of C factors.
        terms.push_back(run_term(opts.seed, 4, p, opts, [&](Rng& rng, Mat& out) {
            const Point x = pC.sample(rng), y = pC.sample(rng), w = pC.sample(rng);
            const Point z = add(x, w, d);
            const double wgt = -2.0 * Cx(x) * Cx(y) * Cx(w) * Cx(sub(y, z, d)) / (pc(x) * pc(y) * pc(w));
            out = wgt * fv(x) * fv(sub(z, y, d)).transpose();
        }));
        terms.push_back(run_term(opts.seed, 5, p, opts, [&](Rng& rng, Mat& out) {
            const Point x = pC.sample(rng), z = pC.sample(rng), w = pC.sample(rng);
            const Point y = add(x, w, d);
            const double wgt = -2.0 * Cx(x) * Cx(z) * Cx(w) * Cx(sub(y, z, d)) / (pc(x) * pc(z) * pc(w));
            out = wgt * fv(x) * fv(sub(z, y, d)).transpose();
        }));
        terms.push_back(run_term(opts.seed, 6, p, opts, [&](Rng& rng, Mat& out) {
            const Point y = pC.sample(rng), z = pC.sample(rng), w = pC.sample(rng);
            const Point x = add(y, w, d);
            const double wgt = -2.0 * Cx(y) * Cx(z) * Cx(w) * Cx(sub(x, z, d)) / (pc(y) * pc(z) * pc(w));
            out = wgt * fv(x) * fv(sub(z, y, d)).transpose();
        }));
        // 2 int f(x) f(x+z-y)^T c2(y) c2(z).
        terms.push_back(run_term(opts.seed, 7, p, opts, [&](Rng& rng, Mat& out) {
            const Point y = pC2.sample(rng), z = pC2.sample(rng), x = pF.sample(rng);
            const double cy = Cx(y), cz = Cx(z);
            const double wgt = 2.0 * cy * cy * cz * cz /
                               (pC2.pdf(norm(y, d)) * pC2.pdf(norm(z, d)) * pF.pdf(norm(x, d)));
            out = wgt * fv(x) * fv(sub(add(x, z, d), y, d)).transpose();
        }));
        for (const auto& t : terms) {
            raw += t.mean_raw;
            var += t.var_of_mean;
        }
    }

    const double rho4 = rho * rho * rho * rho;
    SigmaEstimate est;
    est.sigma_raw = Eigen::MatrixXd(raw) / rho4;
    est.sigma = 0.5 * (est.sigma_raw + est.sigma_raw.transpose());
    est.std_error = Eigen::MatrixXd(var.cwiseSqrt()) / rho4;
    est.truncation_radius = R;
    est.samples = c0 > 0.0 ? opts.samples : 0;
    return est;
}

SigmaEstimate sigma_K(const KernelModel& m, const ContrastSpec& spec, const SigmaOptions& opts) {
    return sigma_from_inputs(sigma_inputs(Statistic::K, m, spec, opts.profile_nodes), opts);
}

SigmaEstimate sigma_g(const KernelModel& m, const ContrastSpec& spec, const SigmaOptions& opts) {
    return sigma_from_inputs(sigma_inputs(Statistic::g, m, spec, opts.profile_nodes), opts);
}

AsymptoticReport asymptotic_covariance(const KernelModel& m, const ContrastSpec& spec, const SigmaOptions& opts) {
    AsymptoticReport rep;
    rep.B = B_matrix(m, spec);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rep.B);
    const auto sv = svd.singularValues();
    const double smax = sv.size() ? sv[0] : 0.0;
    const double smin = sv.size() ? sv[sv.size() - 1] : 0.0;
    rep.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (rep.B + rep.B.transpose()));
    if (!std::isfinite(rep.condition_number) || rep.condition_number > 1e13 || eig.eigenvalues().minCoeff() <= 0.0) {
        std::ostringstream os;
        os << "B is not invertible (condition number " << rep.condition_number << ")";
        throw NotInvertible(os.str(), rep.condition_number);
    }
    const auto est = spec.statistic == Statistic::K ? sigma_K(m, spec, opts) : sigma_g(m, spec, opts);
    rep.Sigma = est.sigma;
    rep.mc_stderr = est.std_error;
    const Eigen::MatrixXd Binv = rep.B.inverse();
    rep.covariance = Binv * rep.Sigma * Binv.transpose();
    rep.covariance = 0.5 * (rep.covariance + rep.covariance.transpose());
    const Eigen::MatrixXd A = Binv.cwiseAbs();
    rep.covariance_stderr = A * rep.mc_stderr * A.transpose();
    return rep;
}

}  // namespace dppfit
