#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace dppfit {

enum class Statistic { K, g };

[[nodiscard]] std::string_view to_string(Statistic s);
/// Accepts "K"/"g" (case-insensitive); throws std::invalid_argument.
[[nodiscard]] Statistic statistic_from_string(std::string_view name);

/// A summary statistic tabulated on a strictly increasing distance grid.
struct SummaryCurve {
    Statistic kind{Statistic::K};
    std::vector<double> grid;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const noexcept { return grid.size(); }
};

/// Surface area sigma_d = 2 pi^{d/2} / Gamma(d/2) of the unit sphere in R^d.
[[nodiscard]] double sphere_area(int dim);
/// Volume of the ball B(0,t) in R^d.
[[nodiscard]] double ball_volume(int dim, double t);

/// n equally spaced points from lo to hi inclusive (n >= 2).
[[nodiscard]] std::vector<double> uniform_grid(double lo, double hi, int n);

/// Composite Simpson weights for n equally spaced nodes with spacing h.
/// Odd n uses plain Simpson; even n closes with the 3/8 rule on the last
/// three intervals (n == 2 falls back to the trapezoid).
[[nodiscard]] std::vector<double> simpson_weights(std::size_t n, double h);

[[nodiscard]] double integrate_uniform(std::span<const double> values, double h);

}  // namespace dppfit
