#include "dppfit/kernels.hpp"

#include "dppfit/curves.hpp"
#include "dppfit/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dppfit {

namespace {

constexpr double kPi = std::numbers::pi;

/// C(x) = rho exp(-|x/alpha|^2).
class GaussianFamily final : public KernelFamily {
public:
    Family id() const noexcept override { return Family::Gaussian; }
    int num_params() const noexcept override { return 1; }
    std::vector<std::string> param_names() const override { return {"alpha"}; }

    double correlation(double r, const Eigen::VectorXd& theta) const override {
        const double u = r / theta[0];
        return std::exp(-u * u);
    }

    Eigen::VectorXd correlation_grad(double r, const Eigen::VectorXd& theta) const override {
        const double a = theta[0];
        const double u = r / a;
        Eigen::VectorXd g(1);
        g[0] = 2.0 * r * r / (a * a * a) * std::exp(-u * u);
        return g;
    }

    Eigen::MatrixXd correlation_hess(double r, const Eigen::VectorXd& theta) const override {
        const double a = theta[0];
        const double u2 = (r / a) * (r / a);
        const double s = 2.0 * u2 / a;  // d/da of -(r/a)^2
        Eigen::MatrixXd h(1, 1);
        h(0, 0) = std::exp(-u2) * (s * s - 6.0 * u2 / (a * a));
        return h;
    }

    double spectral_density(double k_norm, double rho, const Eigen::VectorXd& theta, int dim) const override {
        const double a = theta[0];
        const double pa = kPi * a * k_norm;
        return rho * std::pow(std::sqrt(kPi) * a, dim) * std::exp(-pa * pa);
    }

    bool admissible(const Eigen::VectorXd& theta) const override {
        return theta.size() == 1 && std::isfinite(theta[0]) && theta[0] > 0.0;
    }

    ParamSpace param_space(double rho, int dim, double floor) const override {
        const double upper = 1.0 / (std::sqrt(kPi) * std::pow(rho, 1.0 / dim));
        return ParamSpace{{Interval{std::min(floor, 0.5 * upper), upper}}};
    }

    std::optional<std::pair<double, double>> spectral_max(double rho, const Eigen::VectorXd& theta,
                                                          int dim) const override {
        return std::pair{spectral_density(0.0, rho, theta, dim), 0.0};
    }

    std::optional<double> ball_integral_r2(double t, const Eigen::VectorXd& theta, int dim) const override {
        const double a = theta[0];
        const double z = 2.0 * t * t / (a * a);
        const double scale = std::pow(kPi * a * a / 2.0, 0.5 * dim);
        if (dim == 2) return -scale * std::expm1(-z);
        return scale * boost::math::gamma_p(0.5 * dim, z);
    }

    std::optional<double> total_integral_r2(const Eigen::VectorXd& theta, int dim) const override {
        const double a = theta[0];
        return std::pow(kPi * a * a / 2.0, 0.5 * dim);
    }
};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

std::string_view to_string(Family f) {
    switch (f) {
    case Family::Gaussian:
        return "gaussian";
    }
    return "unknown";
}

Family family_from_string(std::string_view name) {
    if (lower(name) == "gaussian") return Family::Gaussian;
    throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

bool ParamSpace::contains(const Eigen::VectorXd& theta, double tol) const {
    if (theta.size() != dim()) return false;
    for (int i = 0; i < dim(); ++i) {
        const auto& b = box[static_cast<std::size_t>(i)];
        if (theta[i] < b.lo - tol || theta[i] > b.hi + tol) return false;
    }
    return true;
}

Eigen::VectorXd ParamSpace::project(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd out = theta;
    for (int i = 0; i < dim(); ++i) {
        const auto& b = box[static_cast<std::size_t>(i)];
        out[i] = std::clamp(out[i], b.lo, b.hi);
    }
    return out;
}

Eigen::VectorXd ParamSpace::lower() const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = box[static_cast<std::size_t>(i)].lo;
    return v;
}

Eigen::VectorXd ParamSpace::upper() const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = box[static_cast<std::size_t>(i)].hi;
    return v;
}

const KernelFamily& family_impl(Family f) {
    static const GaussianFamily gaussian;
    switch (f) {
    case Family::Gaussian:
        return gaussian;
    }
    throw std::invalid_argument("unknown kernel family");
}

KernelModel KernelModel::gaussian(int dim, double rho, double alpha) {
    KernelModel m;
    m.dim = dim;
    m.family = Family::Gaussian;
    m.rho = rho;
    m.theta = Eigen::VectorXd::Constant(1, alpha);
    return m;
}

KernelModel KernelModel::with_theta(Eigen::VectorXd t) const {
    KernelModel m = *this;
    m.theta = std::move(t);
    return m;
}

KernelModel KernelModel::with_rho(double r) const {
    KernelModel m = *this;
    m.rho = r;
    return m;
}

double correlation(const KernelModel& m, double r) { return m.impl().correlation(r, m.theta); }

double kernel_value(const KernelModel& m, double r) { return m.rho * m.impl().correlation(r, m.theta); }

Eigen::VectorXd correlation_grad(const KernelModel& m, double r) { return m.impl().correlation_grad(r, m.theta); }

Eigen::MatrixXd correlation_hess(const KernelModel& m, double r) { return m.impl().correlation_hess(r, m.theta); }

double spectral_density(const KernelModel& m, std::span<const double> k) {
    double s = 0.0;
    for (double v : k) s += v * v;
    return spectral_density_radial(m, std::sqrt(s));
}

double spectral_density_radial(const KernelModel& m, double k_norm) {
    return m.impl().spectral_density(k_norm, m.rho, m.theta, m.dim);
}

std::string Validation::message() const {
    if (ok) return "ok";
    std::ostringstream os;
    os << std::setprecision(6) << condition;
    if (condition.find("F(C)") != std::string::npos) os << " (F(C)=" << value << " at |k|=" << witness_k << ")";
    return os.str();
}

Validation validate(const KernelModel& m) {
    Validation v;
    if (m.dim < 1) {
        v.ok = false;
        v.condition = "dimension must be >= 1";
        return v;
    }
    if (!(m.rho > 0.0) || !std::isfinite(m.rho)) {
        v.ok = false;
        v.condition = "C(0)=rho must be positive and finite";
        v.value = m.rho;
        return v;
    }
    const auto& fam = m.impl();
    if (!fam.admissible(m.theta)) {
        v.ok = false;
        v.condition = "shape parameters outside the family domain";
        return v;
    }
    constexpr double kSlack = 1e-12;
    if (auto mx = fam.spectral_max(m.rho, m.theta, m.dim)) {
        v.max_spectral = mx->first;
        v.witness_k = mx->second;
        v.value = mx->first;
    } else {
        // Radial scan out to where F(C) < 1e-10.
        double kmax = 1.0;
        while (fam.spectral_density(kmax, m.rho, m.theta, m.dim) > 1e-10 && kmax < 1e12) kmax *= 2.0;
        constexpr int kGrid = 10000;
        double best = -std::numeric_limits<double>::infinity();
        double best_k = 0.0;
        double lowest = std::numeric_limits<double>::infinity();
        double lowest_k = 0.0;
        for (int i = 0; i <= kGrid; ++i) {
            const double k = kmax * i / kGrid;
            const double f = fam.spectral_density(k, m.rho, m.theta, m.dim);
            if (f > best) {
                best = f;
                best_k = k;
            }
            if (f < lowest) {
                lowest = f;
                lowest_k = k;
            }
        }
        if (lowest < -kSlack) {
            v.ok = false;
            v.condition = "F(C) < 0";
            v.value = lowest;
            v.witness_k = lowest_k;
            return v;
        }
        v.max_spectral = best;
        v.value = best;
        v.witness_k = best_k;
    }
    if (v.max_spectral > 1.0 + kSlack) {
        v.ok = false;
        v.condition = "F(C) > 1";
        return v;
    }
    return v;
}

void require_valid(const KernelModel& m) {
    const auto v = validate(m);
    if (!v.ok) throw ValidationError("invalid kernel model: " + v.message());
}

ParamSpace param_space(Family family, double rho, int dim, double floor) {
    if (!(rho > 0.0)) throw std::invalid_argument("param_space needs rho > 0");
    return family_impl(family).param_space(rho, dim, floor);
}

double correlation_range(const KernelModel& m, double tol, double cap) {
    // The scale of R is unknown a priori: grow geometrically from a tiny step.
    double hi = 1e-12;
    while (std::abs(correlation(m, hi)) > tol) {
        hi *= 2.0;
        if (hi > cap) return std::numeric_limits<double>::infinity();
    }
    double lo = hi / 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::abs(correlation(m, mid)) > tol ? lo : hi) = mid;
    }
    return hi;
}

double integral_kernel_squared(const KernelModel& m) {
    const auto& fam = m.impl();
    if (auto closed = fam.total_integral_r2(m.theta, m.dim)) return m.rho * m.rho * *closed;
    const double range = correlation_range(m, 1e-10);
    const double sd = sphere_area(m.dim);
    auto f = [&](double r) {
        const double R = fam.correlation(r, m.theta);
        return sd * std::pow(r, m.dim - 1) * R * R;
    };
    return m.rho * m.rho * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, range, 8, 1e-11);
}

KernelModel parse_model_spec(std::string_view spec) {
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(spec)};
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("model token '" + token + "' lacks '='");
        kv[lower(token.substr(0, eq))] = token.substr(eq + 1);
    }
    auto number = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument("model spec missing '" + key + "'");
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument("model spec value for '" + key + "' is not a number");
        }
    };
    KernelModel m;
    m.family = kv.count("family") ? family_from_string(kv["family"]) : Family::Gaussian;
    m.dim = kv.count("dim") ? static_cast<int>(number("dim")) : 2;
    m.rho = number("rho");
    const auto names = family_impl(m.family).param_names();
    m.theta.resize(static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) m.theta[static_cast<Eigen::Index>(i)] = number(names[i]);
    return m;
}

std::string format_model_spec(const KernelModel& m) {
    std::ostringstream os;
    os << std::setprecision(17) << "family=" << to_string(m.family) << " dim=" << m.dim << " rho=" << m.rho;
    const auto names = m.impl().param_names();
    for (std::size_t i = 0; i < names.size(); ++i) os << ' ' << names[i] << '=' << m.theta[static_cast<Eigen::Index>(i)];
    return os.str();
}

}  // namespace dppfit
