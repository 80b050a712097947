#pragma once

#include "dppfit/contrast_spec.hpp"
#include "dppfit/curves.hpp"
#include "dppfit/kernels.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>

namespace dppfit {

// ---------------------------------------------------------------------------
// Theoretical second-order summaries of DPP(C_{rho,theta}). None depends on rho.

/// g(t) = 1 - R(t)^2.
[[nodiscard]] double g_theory(const KernelModel& m, double t);
/// K(t) = |B(0,t)| - int_{B(0,t)} R^2.
[[nodiscard]] double K_theory(const KernelModel& m, double t);
[[nodiscard]] Eigen::VectorXd g_grad(const KernelModel& m, double t);
/// -2 int_{B(0,t)} R R', by polar quadrature.
[[nodiscard]] Eigen::VectorXd K_grad(const KernelModel& m, double t);
[[nodiscard]] Eigen::MatrixXd g_hess(const KernelModel& m, double t);
[[nodiscard]] Eigen::MatrixXd K_hess(const KernelModel& m, double t);

[[nodiscard]] double J_theory(Statistic s, const KernelModel& m, double t);
[[nodiscard]] Eigen::VectorXd J_grad(Statistic s, const KernelModel& m, double t);
[[nodiscard]] Eigen::MatrixXd J_hess(Statistic s, const KernelModel& m, double t);

/// Tabulates K or g on a grid.
[[nodiscard]] SummaryCurve theoretical_curve(Statistic s, const KernelModel& m, std::span<const double> grid);

// ---------------------------------------------------------------------------
// Reduced factorial cumulant densities of a DPP.

class CumulantDensities {
public:
    explicit CumulantDensities(KernelModel m) : model_(std::move(m)) {}

    /// -C(u)^2
    [[nodiscard]] double c2(std::span<const double> u) const;
    /// 2 C(u) C(v) C(v-u)
    [[nodiscard]] double c3(std::span<const double> u, std::span<const double> v) const;
    /// -2 [C(u)C(v)C(u-w)C(v-w) + C(u)C(w)C(u-v)C(v-w) + C(v)C(w)C(u-v)C(u-w)]
    [[nodiscard]] double c4(std::span<const double> u, std::span<const double> v, std::span<const double> w) const;

    [[nodiscard]] const KernelModel& model() const noexcept { return model_; }

private:
    [[nodiscard]] double C(std::span<const double> x) const;
    [[nodiscard]] double C(std::span<const double> x, std::span<const double> y) const;

    KernelModel model_;
};

[[nodiscard]] CumulantDensities cumulants(const KernelModel& m);

/// lim Var(sqrt|D_n| rho_hat) = rho - int C^2.
[[nodiscard]] double intensity_clt_variance(const KernelModel& m);

// ---------------------------------------------------------------------------
// Sandwich covariance of the minimum contrast estimator.

/// j(t) = w(t) J(t)^{2c-2} J'(t) on the ContrastSpec grid.
[[nodiscard]] Eigen::MatrixXd j_weights(const KernelModel& m, const ContrastSpec& spec);

/// B = int w J^{2c-2} J' J'^T dt by composite Simpson on the ContrastSpec grid.
[[nodiscard]] Eigen::MatrixXd B_matrix(const KernelModel& m, const ContrastSpec& spec);

/// Radial vector profile f: R^d -> R^p, tabulated on uniform nodes over
/// [lo, hi] and linearly interpolated; zero outside.
class RadialProfile {
public:
    RadialProfile(double lo, double hi, Eigen::MatrixXd values);

    [[nodiscard]] double lo() const noexcept { return lo_; }
    [[nodiscard]] double hi() const noexcept { return hi_; }
    [[nodiscard]] int params() const noexcept { return static_cast<int>(values_.rows()); }
    [[nodiscard]] Eigen::Index nodes() const noexcept { return values_.cols(); }
    [[nodiscard]] double node(Eigen::Index i) const noexcept { return lo_ + static_cast<double>(i) * step_; }
    [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return values_; }
    [[nodiscard]] double step() const noexcept { return step_; }

    /// Writes f(r) into out (size params()).
    void eval(double r, double* out) const noexcept;
    /// |f(r)|^2
    [[nodiscard]] double squared_norm(double r) const noexcept;

private:
    double lo_;
    double hi_;
    double step_;
    Eigen::MatrixXd values_;  // params x nodes
};

/// Everything the Sigma terms need: dimension, intensity, the radial kernel
/// C(r), the pair-weight profile f and m = int J j dt.
///
/// For J = g, f(x) = 1{r_min <= |x| <= r_max} j(|x|) / (sigma_d |x|^{d-1});
/// for J = K, f(x) = int_{max(|x|, r_min)}^{r_max} j(t) dt on |x| <= r_max.
struct SigmaInputs {
    int dim{2};
    double rho{1.0};
    std::function<double(double)> kernel;
    RadialProfile f;
    Eigen::VectorXd m;
};

struct SigmaOptions {
    std::size_t samples{200000};  ///< Monte Carlo samples per additive term
    std::uint64_t seed{1};
    double trunc_tol{1e-8};  ///< unbounded directions cut where |C(r)/rho| < trunc_tol
    double trunc_cap{100.0};
    int threads{1};
    int profile_nodes{8193};
    int radial_bins{2048};
    std::size_t block_size{4096};
};

struct SigmaEstimate {
    Eigen::MatrixXd sigma;      ///< symmetrized, normalized to Var(sqrt|D| int (J_hat - J) j)
    Eigen::MatrixXd std_error;  ///< per-entry Monte Carlo standard error of sigma
    Eigen::MatrixXd sigma_raw;  ///< before symmetrization (j(t1) j(t2)^T orientation)
    double truncation_radius{0.0};
    std::size_t samples{0};
};

[[nodiscard]] SigmaInputs sigma_inputs(Statistic s, const KernelModel& m, const ContrastSpec& spec,
                                       int profile_nodes = 8193);

/// Evaluates every additive term of the limit covariance for the given
/// inputs. Terms that factor into radial integrals are done by quadrature;
/// the genuinely multi-dimensional ones by importance-sampled Monte Carlo.
[[nodiscard]] SigmaEstimate sigma_from_inputs(const SigmaInputs& in, const SigmaOptions& opts);

[[nodiscard]] SigmaEstimate sigma_K(const KernelModel& m, const ContrastSpec& spec, const SigmaOptions& opts = {});
[[nodiscard]] SigmaEstimate sigma_g(const KernelModel& m, const ContrastSpec& spec, const SigmaOptions& opts = {});

struct AsymptoticReport {
    Eigen::MatrixXd B;
    Eigen::MatrixXd Sigma;
    Eigen::MatrixXd covariance;  ///< B^{-1} Sigma B^{-T}
    Eigen::MatrixXd mc_stderr;   ///< of Sigma
    Eigen::MatrixXd covariance_stderr;
    double condition_number{0.0};
};

/// Throws NotInvertible when B is numerically singular.
[[nodiscard]] AsymptoticReport asymptotic_covariance(const KernelModel& m, const ContrastSpec& spec,
                                                     const SigmaOptions& opts = {});

}  // namespace dppfit
