#pragma once

#include "dppfit/contrast_spec.hpp"
#include "dppfit/curves.hpp"
#include "dppfit/estimators.hpp"
#include "dppfit/geometry.hpp"
#include "dppfit/kernels.hpp"
#include "dppfit/moments.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dppfit {

/// A parametric summary J(t, theta) for the generic contrast engine.
class StatisticModel {
public:
    virtual ~StatisticModel() = default;
    [[nodiscard]] virtual int num_params() const = 0;
    [[nodiscard]] virtual double value(double t, const Eigen::VectorXd& theta) const = 0;
    [[nodiscard]] virtual Eigen::VectorXd grad(double t, const Eigen::VectorXd& theta) const = 0;
    /// Central differences of grad unless overridden.
    [[nodiscard]] virtual Eigen::MatrixXd hess(double t, const Eigen::VectorXd& theta) const;
    [[nodiscard]] virtual std::vector<double> values(std::span<const double> grid, const Eigen::VectorXd& theta) const;
};

/// K or g of a kernel family. Neither depends on rho.
class DppStatistic final : public StatisticModel {
public:
    DppStatistic(Statistic s, int dim, Family family);

    [[nodiscard]] int num_params() const override;
    [[nodiscard]] double value(double t, const Eigen::VectorXd& theta) const override;
    [[nodiscard]] Eigen::VectorXd grad(double t, const Eigen::VectorXd& theta) const override;
    [[nodiscard]] Eigen::MatrixXd hess(double t, const Eigen::VectorXd& theta) const override;
    [[nodiscard]] std::vector<double> values(std::span<const double> grid, const Eigen::VectorXd& theta) const override;

    [[nodiscard]] Statistic statistic() const noexcept { return stat_; }

private:
    [[nodiscard]] KernelModel model(const Eigen::VectorXd& theta) const;

    Statistic stat_;
    int dim_;
    Family family_;
};

/// U(theta) = int w (J_hat^c - J^c)^2 dt by composite Simpson on the ContrastSpec grid.
/// The curve must be tabulated on spec.grid().
[[nodiscard]] double contrast_value(const SummaryCurve& curve, const KernelModel& m, const ContrastSpec& spec);
[[nodiscard]] double contrast_value(const SummaryCurve& curve, const StatisticModel& J, const Eigen::VectorXd& theta,
                                    const ContrastSpec& spec);

struct OptimizerOptions {
    int scan_points{48};     ///< coarse grid before the 1-D bracketed search
    int max_evaluations{4000};
    int restarts{3};         ///< Nelder-Mead starts for p > 1
    double x_tolerance{1e-9};  ///< relative to the box width
    double f_tolerance{1e-14};
    std::uint64_t seed{1};
};

struct FitOptions {
    OptimizerOptions optimizer;
    SmoothingKernel smoothing;
    BandwidthRule bandwidth;
    bool asymptotics{false};
    SigmaOptions sigma;
};

struct FitReport {
    Eigen::VectorXd theta_hat;
    double rho_hat{0.0};
    double objective{0.0};
    int iterations{0};
    bool converged{false};
    bool bound_active{false};
    std::optional<AsymptoticReport> asymptotics;
};

/// J_hat on spec.grid(): K_hat, or g_hat with the given smoothing.
[[nodiscard]] SummaryCurve empirical_curve(const PointPattern& p, const ContrastSpec& spec,
                                           const SmoothingKernel& k = {}, const BandwidthRule& bw = {});

/// Minimizes U over a fixed box. p = 1 scans the box and refines the best
/// bracket with Brent's method; p > 1 runs projected Nelder-Mead from the
/// box center and restarts - 1 random points.
[[nodiscard]] FitReport fit_generic(const SummaryCurve& curve, const StatisticModel& J, const ParamSpace& box,
                                    const ContrastSpec& spec, const OptimizerOptions& opts = {});

/// Fits from a precomputed curve over param_space(family, rho_hat, dim).
[[nodiscard]] FitReport fit_curve(const SummaryCurve& curve, double rho_hat, int dim, Family family,
                                  const ContrastSpec& spec, const FitOptions& opts = {});

/// Minimum contrast estimate from one pattern. Throws ZeroIntensity for an
/// empty pattern and OptimizerFailure if the objective is never finite.
[[nodiscard]] FitReport fit(const PointPattern& p, Family family, const ContrastSpec& spec,
                            const FitOptions& opts = {});

}  // namespace dppfit
