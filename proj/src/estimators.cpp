#include "dppfit/estimators.hpp"

#include "dppfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dppfit {

namespace {

void require_grid(std::span<const double> grid) {
    if (grid.empty()) throw std::invalid_argument("empty distance grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("distance grid must be strictly increasing");
    if (grid.front() < 0.0) throw std::invalid_argument("distance grid must be nonnegative");
}

/// Point indices in lexicographic order, for pruning pairs by distance.
std::vector<std::size_t> order_by_x(const PointPattern& p) {
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto x = p.point(a), y = p.point(b);
        return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
    });
    return idx;
}

/// Calls visit(i, j, dist) once per unordered pair closer than reach, in an
/// order that depends only on the point set.
template <class Visit>
void close_pairs(const PointPattern& p, double reach, Visit&& visit) {
    const auto idx = order_by_x(p);
    const int d = p.dim();
    for (std::size_t a = 0; a < idx.size(); ++a) {
        const auto x = p.point(idx[a]);
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto y = p.point(idx[b]);
            if (y[0] - x[0] > reach) break;
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
            if (s <= reach * reach) visit(idx[a], idx[b], std::sqrt(s));
        }
    }
}

}  // namespace

double SmoothingKernel::operator()(double u) const noexcept {
    const double T = half_width;
    if (std::abs(u) > T) return 0.0;
    switch (shape) {
    case Shape::Epanechnikov: {
        const double v = u / T;
        return 0.75 * (1.0 - v * v) / T;
    }
    case Shape::Box:
        return 0.5 / T;
    }
    return 0.0;
}

double intensity_hat(const PointPattern& p) { return static_cast<double>(p.size()) / p.window().volume(); }

double bandwidth(const BandwidthRule& bw, const PointPattern& p) {
    if (bw.mode == BandwidthRule::Mode::Fixed) {
        if (!bw.fixed_value || !(*bw.fixed_value > 0.0)) throw std::invalid_argument("fixed bandwidth must be positive");
        return *bw.fixed_value;
    }
    const double rho = intensity_hat(p);
    if (!(rho > 0.0)) throw ZeroIntensity("Stoyan bandwidth needs a nonempty pattern");
    if (!(bw.constant > 0.0)) throw std::invalid_argument("Stoyan constant must be positive");
    return bw.constant / std::sqrt(rho);
}

SummaryCurve K_hat(const PointPattern& p, std::span<const double> grid) {
    require_grid(grid);
    if (p.empty()) throw ZeroIntensity("K_hat of an empty pattern");
    const std::size_t n = grid.size();
    std::vector<double> eroded(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = erode(p.window(), grid[i]);
        if (!e || !(e->volume() > 0.0)) {
            std::ostringstream os;
            os << "window erosion by t=" << grid[i] << " is empty";
            throw EmptyErosion(os.str());
        }
        eroded[i] = e->volume();
    }
    // An ordered pair (x, y) at distance r with y at distance b from the
    // boundary counts for every grid t with r <= t <= b.
    std::vector<double> border(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) border[i] = p.window().boundary_distance(p.point(i));
    std::vector<long long> diff(n + 1, 0);
    auto add = [&](double r, double b) {
        if (b < r) return;
        const auto lo = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), r) - grid.begin());
        const auto hi = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), b) - grid.begin());
        if (lo < hi) {
            ++diff[lo];
            --diff[hi];
        }
    };
    close_pairs(p, grid.back(), [&](std::size_t i, std::size_t j, double r) {
        add(r, border[i]);
        add(r, border[j]);
    });
    const double rho = intensity_hat(p);
    SummaryCurve c;
    c.kind = Statistic::K;
    c.grid.assign(grid.begin(), grid.end());
    c.values.resize(n);
    long long run = 0;
    for (std::size_t i = 0; i < n; ++i) {
        run += diff[i];
        c.values[i] = static_cast<double>(run) / (rho * rho * eroded[i]);
    }
    return c;
}

SummaryCurve g_hat(const PointPattern& p, std::span<const double> grid, const SmoothingKernel& k,
                   const BandwidthRule& bw, GHatDiagnostics* diag) {
    require_grid(grid);
    if (p.empty()) throw ZeroIntensity("g_hat of an empty pattern");
    if (!(grid.front() > 0.0)) throw std::invalid_argument("g_hat needs a grid with r_min > 0");
    const double b = bandwidth(bw, p);
    const double rho = intensity_hat(p);
    const int d = p.dim();
    const double reach = grid.back() + k.half_width * b;
    std::vector<double> sum(grid.size(), 0.0);
    std::size_t zero_overlap = 0;
    std::vector<double> z(static_cast<std::size_t>(d));
    close_pairs(p, reach, [&](std::size_t i, std::size_t j, double r) {
        const auto x = p.point(i), y = p.point(j);
        for (int a = 0; a < d; ++a) z[a] = x[a] - y[a];
        const double overlap = shift_overlap_volume(p.window(), z);
        if (!(overlap > 0.0)) {
            zero_overlap += 2;
            return;
        }
        const double weight = 2.0 / (b * overlap);
        const auto lo = std::lower_bound(grid.begin(), grid.end(), r - k.half_width * b) - grid.begin();
        const auto hi = std::upper_bound(grid.begin(), grid.end(), r + k.half_width * b) - grid.begin();
        for (auto t = lo; t < hi; ++t) sum[static_cast<std::size_t>(t)] += weight * k((grid[static_cast<std::size_t>(t)] - r) / b);
    });
    const double sd = sphere_area(d);
    SummaryCurve c;
    c.kind = Statistic::g;
    c.grid.assign(grid.begin(), grid.end());
    c.values.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        c.values[i] = sum[i] / (sd * std::pow(grid[i], d - 1) * rho * rho);
    if (diag) {
        diag->bandwidth = b;
        diag->zero_overlap_pairs = zero_overlap;
    }
    return c;
}

SummaryCurve estimate(Statistic s, const PointPattern& p, std::span<const double> grid) {
    return s == Statistic::K ? K_hat(p, grid) : g_hat(p, grid);
}

}  // namespace dppfit
