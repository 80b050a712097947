#pragma once

#include "dppfit/geometry.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dppfit {

enum class Family { Gaussian };

[[nodiscard]] std::string_view to_string(Family f);
/// Case-insensitive; throws std::invalid_argument on unknown names.
[[nodiscard]] Family family_from_string(std::string_view name);

/// Box of admissible shape parameters Theta_rho.
struct ParamSpace {
    std::vector<Interval> box;

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(box.size()); }
    [[nodiscard]] bool contains(const Eigen::VectorXd& theta, double tol = 0.0) const;
    [[nodiscard]] Eigen::VectorXd project(const Eigen::VectorXd& theta) const;
    [[nodiscard]] Eigen::VectorXd lower() const;
    [[nodiscard]] Eigen::VectorXd upper() const;
};

/// Lower alpha floor of the Gaussian parameter box.
inline constexpr double kDefaultAlphaFloor = 1e-4;

/// An isotropic stationary correlation family R_theta together with the
/// spectral data of C = rho * R_theta.
///
/// New families implement the pure virtuals; the optional closed forms
/// default to nullopt, in which case callers fall back to quadrature.
class KernelFamily {
public:
    virtual ~KernelFamily() = default;

    [[nodiscard]] virtual Family id() const noexcept = 0;
    [[nodiscard]] virtual int num_params() const noexcept = 0;
    [[nodiscard]] virtual std::vector<std::string> param_names() const = 0;

    [[nodiscard]] virtual double correlation(double r, const Eigen::VectorXd& theta) const = 0;
    [[nodiscard]] virtual Eigen::VectorXd correlation_grad(double r, const Eigen::VectorXd& theta) const = 0;
    [[nodiscard]] virtual Eigen::MatrixXd correlation_hess(double r, const Eigen::VectorXd& theta) const = 0;

    /// F(C_{rho,theta}) at frequency norm |k|.
    [[nodiscard]] virtual double spectral_density(double k_norm, double rho, const Eigen::VectorXd& theta,
                                                  int dim) const = 0;

    /// Shape parameters valid irrespective of rho (e.g. alpha > 0).
    [[nodiscard]] virtual bool admissible(const Eigen::VectorXd& theta) const = 0;

    [[nodiscard]] virtual ParamSpace param_space(double rho, int dim, double floor) const = 0;

    /// (sup_k F(C), argmax |k|) when known analytically.
    [[nodiscard]] virtual std::optional<std::pair<double, double>> spectral_max(double, const Eigen::VectorXd&,
                                                                                int) const {
        return std::nullopt;
    }
    /// Integral of R^2 over the ball B(0,t).
    [[nodiscard]] virtual std::optional<double> ball_integral_r2(double, const Eigen::VectorXd&, int) const {
        return std::nullopt;
    }
    /// Integral of R^2 over R^d.
    [[nodiscard]] virtual std::optional<double> total_integral_r2(const Eigen::VectorXd&, int) const {
        return std::nullopt;
    }
};

[[nodiscard]] const KernelFamily& family_impl(Family f);

/// Parametric stationary DPP kernel C_{rho,theta} = rho * R_theta.
struct KernelModel {
    int dim{2};
    Family family{Family::Gaussian};
    double rho{1.0};
    Eigen::VectorXd theta;

    [[nodiscard]] static KernelModel gaussian(int dim, double rho, double alpha);

    [[nodiscard]] const KernelFamily& impl() const { return family_impl(family); }
    [[nodiscard]] int num_params() const { return impl().num_params(); }
    [[nodiscard]] KernelModel with_theta(Eigen::VectorXd t) const;
    [[nodiscard]] KernelModel with_rho(double r) const;
};

[[nodiscard]] double correlation(const KernelModel& m, double r);
/// C(x) for |x| = r.
[[nodiscard]] double kernel_value(const KernelModel& m, double r);
[[nodiscard]] Eigen::VectorXd correlation_grad(const KernelModel& m, double r);
[[nodiscard]] Eigen::MatrixXd correlation_hess(const KernelModel& m, double r);

[[nodiscard]] double spectral_density(const KernelModel& m, std::span<const double> k);
[[nodiscard]] double spectral_density_radial(const KernelModel& m, double k_norm);

struct Validation {
    bool ok{true};
    std::string condition;  ///< failed condition, empty when ok
    double witness_k{0.0};  ///< frequency norm where the violation was observed
    double value{0.0};      ///< offending value (e.g. F(C) at the witness)
    double max_spectral{0.0};

    [[nodiscard]] std::string message() const;
};

/// Checks Condition K(rho) and 0 <= F(C) <= 1.
[[nodiscard]] Validation validate(const KernelModel& m);
/// Throws ValidationError with the violation report.
void require_valid(const KernelModel& m);

[[nodiscard]] ParamSpace param_space(Family family, double rho, int dim, double floor = kDefaultAlphaFloor);

/// Smallest r beyond which |R(s)| <= tol (scanned, then bisected).
[[nodiscard]] double correlation_range(const KernelModel& m, double tol, double cap = 1e6);

/// Integral of C^2 over R^d.
[[nodiscard]] double integral_kernel_squared(const KernelModel& m);

/// Parses `family=gaussian dim=2 rho=100 alpha=0.03` (order free).
[[nodiscard]] KernelModel parse_model_spec(std::string_view spec);
[[nodiscard]] std::string format_model_spec(const KernelModel& m);

}  // namespace dppfit
