#include "dppfit/curves.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dppfit {

std::string_view to_string(Statistic s) { return s == Statistic::K ? "K" : "g"; }

Statistic statistic_from_string(std::string_view name) {
    if (name == "K" || name == "k") return Statistic::K;
    if (name == "g" || name == "G" || name == "pcf") return Statistic::g;
    throw std::invalid_argument("unknown statistic '" + std::string(name) + "' (expected K or g)");
}

double sphere_area(int dim) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

double ball_volume(int dim, double t) { return sphere_area(dim) / dim * std::pow(t, dim); }

std::vector<double> uniform_grid(double lo, double hi, int n) {
    if (n < 2 || !(hi > lo)) throw std::invalid_argument("uniform_grid needs n >= 2 and hi > lo");
    std::vector<double> g(static_cast<std::size_t>(n));
    const double h = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + i * h;
    g.back() = hi;
    return g;
}

std::vector<double> simpson_weights(std::size_t n, double h) {
    if (n < 2) throw std::invalid_argument("simpson_weights needs at least two nodes");
    std::vector<double> w(n, 0.0);
    if (n == 2) {
        w[0] = w[1] = 0.5 * h;
        return w;
    }
    // Simpson covers nodes [0, m] with m even; leftover three intervals use 3/8.
    const std::size_t m = (n % 2 == 1) ? n - 1 : n - 4;
    if (m > 0) {
        for (std::size_t i = 0; i <= m; ++i) {
            const double c = (i == 0 || i == m) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            w[i] += c * h / 3.0;
        }
    }
    if (n % 2 == 0) {
        const double c = 3.0 * h / 8.0;
        w[m] += c;
        w[m + 1] += 3.0 * c;
        w[m + 2] += 3.0 * c;
        w[m + 3] += c;
    }
    return w;
}

double integrate_uniform(std::span<const double> values, double h) {
    const auto w = simpson_weights(values.size(), h);
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += w[i] * values[i];
    return s;
}

}  // namespace dppfit
