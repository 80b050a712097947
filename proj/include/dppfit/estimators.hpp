#pragma once

#include "dppfit/curves.hpp"
#include "dppfit/geometry.hpp"

#include <optional>
#include <span>

namespace dppfit {

struct SmoothingKernel {
    enum class Shape { Epanechnikov, Box };
    Shape shape{Shape::Epanechnikov};
    /// Support is [-T, T] in bandwidth units.
    double half_width{1.0};

    [[nodiscard]] double operator()(double u) const noexcept;

    static SmoothingKernel epanechnikov() { return {}; }
    static SmoothingKernel box() { return {Shape::Box, 1.0}; }
};

struct BandwidthRule {
    enum class Mode { Stoyan, Fixed };
    Mode mode{Mode::Stoyan};
    double constant{0.15};
    std::optional<double> fixed_value;

    static BandwidthRule stoyan(double c = 0.15) { return {Mode::Stoyan, c, std::nullopt}; }
    static BandwidthRule fixed(double b) { return {Mode::Fixed, 0.15, b}; }
};

/// n / |w|.
[[nodiscard]] double intensity_hat(const PointPattern& p);

/// Stoyan: constant / sqrt(rho_hat). Throws ZeroIntensity for an empty
/// pattern under the Stoyan rule.
[[nodiscard]] double bandwidth(const BandwidthRule& bw, const PointPattern& p);

/// Minus-sampling estimate
///   K(t) = sum_{x != y} 1{y in w(-)t} 1{|x - y| <= t} / (rho_hat^2 |w(-)t|).
/// Throws ZeroIntensity for an empty pattern and EmptyErosion when some grid
/// value erodes the window away.
[[nodiscard]] SummaryCurve K_hat(const PointPattern& p, std::span<const double> grid);

struct GHatDiagnostics {
    double bandwidth{0.0};
    std::size_t zero_overlap_pairs{0};
};

/// Translation-corrected kernel estimate
///   g(t) = sum_{x != y} k((t - |x - y|) / b) / (b |w cap w_{x-y}|) / (sigma_d t^{d-1} rho_hat^2).
/// Pairs whose translated windows do not overlap are skipped and counted.
[[nodiscard]] SummaryCurve g_hat(const PointPattern& p, std::span<const double> grid,
                                 const SmoothingKernel& k = {}, const BandwidthRule& bw = {},
                                 GHatDiagnostics* diag = nullptr);

/// K_hat or g_hat with default smoothing.
[[nodiscard]] SummaryCurve estimate(Statistic s, const PointPattern& p, std::span<const double> grid);

}  // namespace dppfit
