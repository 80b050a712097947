#include "dppfit/sampler.hpp"

#include "dppfit/curves.hpp"
#include "dppfit/errors.hpp"
#include "dppfit/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

namespace dppfit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class Basis : std::uint8_t { Constant, Cos, Sin };

struct Mode {
    std::vector<int> k;
    Basis basis;
};

/// Calls visit(k) for every k in {-M..M}^d with max |k_a| == M.
template <class Visit>
void for_each_shell(int d, int M, Visit&& visit) {
    std::vector<int> k(static_cast<std::size_t>(d), 0);
    if (M == 0) {
        visit(k);
        return;
    }
    // Axis a is the first one with |k_a| == M.
    for (int a = 0; a < d; ++a) {
        for (int s : {-M, M}) {
            std::vector<int> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
            for (int b = 0; b < d; ++b) {
                const int lim = b < a ? M - 1 : M;
                lo[b] = b == a ? s : -lim;
                hi[b] = b == a ? s : lim;
            }
            k = lo;
            while (true) {
                visit(k);
                int b = d - 1;
                while (b >= 0 && k[b] == hi[b]) {
                    k[b] = lo[b];
                    --b;
                }
                if (b < 0) break;
                ++k[b];
            }
        }
    }
}

/// True when the first nonzero entry of k is positive.
bool positive_half(const std::vector<int>& k) {
    for (int v : k) {
        if (v != 0) return v > 0;
    }
    return false;
}

class ProjectionSampler {
public:
    ProjectionSampler(std::vector<Mode> modes, std::vector<double> torus, Rng& rng)
        : modes_(std::move(modes)), torus_(std::move(torus)), rng_(rng), d_(static_cast<int>(torus_.size())) {
        volume_ = 1.0;
        for (double L : torus_) volume_ *= L;
        kmax_ = 0;
        for (const auto& m : modes_)
            for (int v : m.k) kmax_ = std::max(kmax_, std::abs(v));
        tables_.assign(static_cast<std::size_t>(d_), std::vector<std::complex<double>>(2 * kmax_ + 1));
    }

    /// Returns torus coordinates of n = modes.size() points.
    ///
    /// F holds an orthonormal basis of the part of R^n not yet spanned by the
    /// feature vectors of accepted points, so the conditional density at y is
    /// |F^T psi(y)|^2 / (n - i). Each acceptance removes one direction from F
    /// with a Householder reflection.
    std::vector<double> run(std::size_t* proposals) {
        const auto n = static_cast<Eigen::Index>(modes_.size());
        std::vector<double> out;
        if (n == 0) return out;
        out.reserve(static_cast<std::size_t>(n * d_));
        Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
        Eigen::Index m = n;

        Eigen::MatrixXd psi, A;
        std::vector<double> pos, nrm2;
        Eigen::Index front = 0, pool = 0;
        std::size_t made = 0;
        Eigen::VectorXd v, Fv;
        Eigen::RowVectorXd vA;

        while (m > 0) {
            if (front == pool) {
                pool = static_cast<Eigen::Index>(std::clamp(2.0 * static_cast<double>(n) / static_cast<double>(m), 32.0, 256.0));
                front = 0;
                psi.resize(n, pool);
                pos.assign(static_cast<std::size_t>(pool * d_), 0.0);
                nrm2.assign(static_cast<std::size_t>(pool), 0.0);
                for (Eigen::Index c = 0; c < pool; ++c) {
                    propose(&pos[static_cast<std::size_t>(c * d_)]);
                    features(&pos[static_cast<std::size_t>(c * d_)], psi.col(c).data());
                    nrm2[static_cast<std::size_t>(c)] = psi.col(c).squaredNorm();
                }
                made += static_cast<std::size_t>(pool);
                if (m == n) {
                    A = psi;
                } else {
                    A.resize(m, pool);
                    A.noalias() = F.leftCols(m).transpose() * psi;
                }
            }
            const Eigen::Index c = front++;
            const double q = A.col(c).head(m).squaredNorm();
            const double u = uniform01(rng_);
            if (!(u * nrm2[static_cast<std::size_t>(c)] < q)) continue;
            for (int a = 0; a < d_; ++a) out.push_back(pos[static_cast<std::size_t>(c * d_ + a)]);
            if (m == 1) break;

            // H = I - 2 v v^T / |v|^2 maps a = A(:,c) onto the last axis.
            v = A.col(c).head(m);
            const double alpha = std::sqrt(q);
            v[m - 1] += v[m - 1] >= 0.0 ? alpha : -alpha;
            const double scale = 2.0 / v.squaredNorm();
            Fv.noalias() = F.leftCols(m) * v;
            F.leftCols(m).noalias() -= scale * Fv * v.transpose();
            if (front < pool) {
                auto rest = A.block(0, front, m, pool - front);
                vA.noalias() = v.transpose() * rest;
                rest.noalias() -= scale * v * vA;
            }
            --m;
        }
        if (proposals) *proposals = made;
        return out;
    }

private:
    /// Draws y with density |psi(y)|^2 / n: a uniformly chosen eigenfunction
    /// j, then y ~ psi_j^2 by rejection from the uniform law.
    void propose(double* y) {
        const auto& mode = modes_[static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(modes_.size()))];
        while (true) {
            double phase = 0.0;
            for (int a = 0; a < d_; ++a) {
                y[a] = uniform01(rng_) * torus_[static_cast<std::size_t>(a)];
                phase += mode.k[static_cast<std::size_t>(a)] * y[a] / torus_[static_cast<std::size_t>(a)];
            }
            if (mode.basis == Basis::Constant) return;
            const double v = mode.basis == Basis::Cos ? std::cos(kTwoPi * phase) : std::sin(kTwoPi * phase);
            if (uniform01(rng_) < v * v) return;
        }
    }

    void features(const double* y, double* out) {
        for (int a = 0; a < d_; ++a) {
            auto& tab = tables_[static_cast<std::size_t>(a)];
            const double base = kTwoPi * y[a] / torus_[static_cast<std::size_t>(a)];
            for (int k = -kmax_; k <= kmax_; ++k) tab[static_cast<std::size_t>(k + kmax_)] = std::polar(1.0, base * k);
        }
        const double c0 = 1.0 / std::sqrt(volume_);
        const double c1 = std::sqrt(2.0 / volume_);
        for (std::size_t j = 0; j < modes_.size(); ++j) {
            const auto& mode = modes_[j];
            if (mode.basis == Basis::Constant) {
                out[j] = c0;
                continue;
            }
            std::complex<double> z = tables_[0][static_cast<std::size_t>(mode.k[0] + kmax_)];
            for (int a = 1; a < d_; ++a) z *= tables_[static_cast<std::size_t>(a)][static_cast<std::size_t>(mode.k[static_cast<std::size_t>(a)] + kmax_)];
            out[j] = c1 * (mode.basis == Basis::Cos ? z.real() : z.imag());
        }
    }

    std::vector<Mode> modes_;
    std::vector<double> torus_;
    Rng& rng_;
    int d_;
    double volume_{1.0};
    int kmax_{0};
    std::vector<std::vector<std::complex<double>>> tables_;
};

}  // namespace

PointPattern sample_dpp(const KernelModel& m, const Window& w, const SamplerConfig& cfg, SamplerDiagnostics* diag) {
    require_valid(m);
    if (w.dim() != m.dim) throw std::invalid_argument("window and model dimensions differ");
    if (!(cfg.trunc_mass > 0.0 && cfg.trunc_mass < 1.0)) throw std::invalid_argument("trunc_mass must lie in (0,1)");
    if (cfg.max_modes < 1) throw std::invalid_argument("max_modes must be >= 1");
    const int d = m.dim;

    const double margin = correlation_range(m, cfg.margin_tol);
    if (!std::isfinite(margin)) throw TruncationError("correlation range is not finite; cannot size the torus");
    std::vector<double> L(static_cast<std::size_t>(d));
    double V = 1.0;
    for (int a = 0; a < d; ++a) {
        L[static_cast<std::size_t>(a)] = w.side(a) + margin;
        V *= L[static_cast<std::size_t>(a)];
    }

    // Total mass sum_k F(C)(k/L) = V sum_n C(n L), images included.
    double total = 0.0;
    for_each_shell(d, 0, [&](const std::vector<int>&) { total += m.rho; });
    for (int s = 1; s <= 2; ++s) {
        for_each_shell(d, s, [&](const std::vector<int>& n) {
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) r2 += std::pow(n[a] * L[static_cast<std::size_t>(a)], 2);
            total += kernel_value(m, std::sqrt(r2));
        });
    }
    total *= V;

    auto lambda = [&](const std::vector<int>& k) {
        double s = 0.0;
        for (int a = 0; a < d; ++a) s += std::pow(k[a] / L[static_cast<std::size_t>(a)], 2);
        return std::min(spectral_density_radial(m, std::sqrt(s)), 1.0);
    };

    int M = 0;
    double kept = 0.0;
    for (;; ++M) {
        if (M > cfg.max_modes) {
            std::ostringstream os;
            os << "retained spectral mass " << kept / total << " < " << cfg.trunc_mass << " with max_modes="
               << cfg.max_modes;
            throw TruncationError(os.str());
        }
        for_each_shell(d, M, [&](const std::vector<int>& k) { kept += lambda(k); });
        if (kept >= cfg.trunc_mass * total) break;
    }

    Rng rng = make_rng(cfg.seed);
    std::vector<Mode> selected;
    std::size_t modes = 0;
    for (int s = 0; s <= M; ++s) {
        for_each_shell(d, s, [&](const std::vector<int>& k) {
            ++modes;
            const double lam = lambda(k);
            if (s == 0) {
                if (uniform01(rng) < lam) selected.push_back({k, Basis::Constant});
                return;
            }
            if (!positive_half(k)) return;
            if (uniform01(rng) < lam) selected.push_back({k, Basis::Cos});
            if (uniform01(rng) < lam) selected.push_back({k, Basis::Sin});
        });
    }

    std::size_t proposals = 0;
    const std::size_t n_selected = selected.size();
    ProjectionSampler sampler(std::move(selected), L, rng);
    const auto y = sampler.run(&proposals);

    std::vector<double> coords;
    coords.reserve(y.size());
    std::vector<double> x(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < y.size(); i += static_cast<std::size_t>(d)) {
        for (int a = 0; a < d; ++a) x[a] = w.axis(a).lo - 0.5 * margin + y[i + a];
        if (w.contains(x)) coords.insert(coords.end(), x.begin(), x.end());
    }

    if (diag) {
        diag->modes_per_axis = M;
        diag->modes = modes;
        diag->retained_mass = kept / total;
        diag->expected_points = kept;
        diag->selected = n_selected;
        diag->proposals = proposals;
        diag->torus = L;
    }
    return PointPattern(w, std::move(coords));
}

PointPattern sample_poisson(double rho, const Window& w, std::uint64_t seed) {
    if (!(rho > 0.0)) throw std::invalid_argument("Poisson intensity must be positive");
    Rng rng = make_rng(seed);
    const double mean = rho * w.volume();
    std::size_t n = 0;
    if (mean > 0.0) n = std::poisson_distribution<std::size_t>(mean)(rng);
    std::vector<double> coords;
    coords.reserve(n * static_cast<std::size_t>(w.dim()));
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < w.dim(); ++a) {
            const auto& ax = w.axis(a);
            coords.push_back(std::min(ax.lo + uniform01(rng) * ax.length(), ax.hi));
        }
    }
    return PointPattern(w, std::move(coords));
}

namespace {

double minus_sampled_pair_statistic(const PointPattern& p, double t) {
    if (t <= 0.0) return 0.0;
    const auto eroded = erode(p.window(), t);
    if (!eroded) throw EmptyErosion("window erosion by t is empty");
    const int d = p.dim();
    std::size_t count = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto x = p.point(i);
        if (p.window().boundary_distance(x) < t) continue;
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (j == i) continue;
            const auto y = p.point(j);
            double s = 0.0;
            for (int a = 0; a < d; ++a) s += (x[a] - y[a]) * (x[a] - y[a]);
            if (s <= t * t) ++count;
        }
    }
    return static_cast<double>(count) / eroded->volume();
}

template <class Draw>
PairCountCheck pair_check(std::size_t n_reps, double t, double theoretical, Draw draw) {
    PairCountCheck out;
    out.t = t;
    out.theoretical = theoretical;
    out.replicates = n_reps;
    if (n_reps == 0) return out;
    double s = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < n_reps; ++r) {
        const double v = minus_sampled_pair_statistic(draw(r), t);
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(n_reps);
    out.empirical = s / n;
    if (n_reps > 1) out.std_error = std::sqrt(std::max(s2 / n - out.empirical * out.empirical, 0.0) * n / (n - 1.0) / n);
    return out;
}

}  // namespace

PairCountCheck pair_count_check(const KernelModel& m, const Window& w, std::size_t n_reps, double t,
                                const SamplerConfig& cfg) {
    double K = 0.0;
    if (t > 0.0) {
        // K(t) = |B(0,t)| - int_{B(0,t)} R^2; the closed form lives in moments,
        // repeated here through the family hook to keep the sampler standalone.
        const auto& fam = m.impl();
        auto r2 = fam.ball_integral_r2(t, m.theta, m.dim);
        if (!r2) throw std::invalid_argument("pair_count_check needs a family with a closed-form ball integral");
        K = ball_volume(m.dim, t) - *r2;
    }
    return pair_check(n_reps, t, m.rho * m.rho * K, [&](std::size_t r) {
        SamplerConfig c = cfg;
        c.seed = derive_seed(cfg.seed, {r});
        return sample_dpp(m, w, c);
    });
}

PairCountCheck pair_count_check_poisson(double rho, const Window& w, std::size_t n_reps, double t,
                                        std::uint64_t seed) {
    const double theoretical = t > 0.0 ? rho * rho * ball_volume(w.dim(), t) : 0.0;
    return pair_check(n_reps, t, theoretical,
                      [&](std::size_t r) { return sample_poisson(rho, w, derive_seed(seed, {r})); });
}

}  // namespace dppfit
