#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace dppfit {

struct Interval {
    double lo{0.0};
    double hi{1.0};

    [[nodiscard]] double length() const noexcept { return hi - lo; }
    bool operator==(const Interval&) const = default;
};

/// Axis-aligned closed box in R^d. Immutable after construction.
class Window {
public:
    /// Throws std::invalid_argument unless every axis has hi > lo.
    explicit Window(std::vector<Interval> bounds);

    /// The cube [lo, hi]^dim.
    [[nodiscard]] static Window cube(int dim, double lo, double hi);

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(bounds_.size()); }
    [[nodiscard]] const Interval& axis(int i) const { return bounds_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] std::span<const Interval> bounds() const noexcept { return bounds_; }
    [[nodiscard]] double side(int i) const { return axis(i).length(); }
    [[nodiscard]] double min_side() const noexcept;
    [[nodiscard]] double volume() const noexcept;
    [[nodiscard]] bool contains(std::span<const double> x) const noexcept;

    /// Distance from an interior point to the nearest face (0 outside).
    [[nodiscard]] double boundary_distance(std::span<const double> x) const noexcept;

    bool operator==(const Window&) const = default;

private:
    std::vector<Interval> bounds_;
};

[[nodiscard]] double volume(const Window& w) noexcept;

/// Minus-sampling erosion {x in w : B(x,t) in w}; nullopt when some side
/// would be nonpositive.
[[nodiscard]] std::optional<Window> erode(const Window& w, double t);

/// Volume of w intersected with w shifted by -z.
[[nodiscard]] double shift_overlap_volume(const Window& w, std::span<const double> z) noexcept;

/// A finite simple point configuration observed in a window. Coordinates
/// are stored flat, `dim` doubles per point.
class PointPattern {
public:
    /// Throws PointOutsideWindow or std::invalid_argument on duplicate points.
    PointPattern(Window window, std::vector<double> coords);

    [[nodiscard]] static PointPattern empty(Window window) { return {std::move(window), {}}; }

    [[nodiscard]] const Window& window() const noexcept { return window_; }
    [[nodiscard]] int dim() const noexcept { return window_.dim(); }
    [[nodiscard]] std::size_t size() const noexcept { return coords_.size() / static_cast<std::size_t>(dim()); }
    [[nodiscard]] bool empty() const noexcept { return coords_.empty(); }
    [[nodiscard]] std::span<const double> point(std::size_t i) const {
        const auto d = static_cast<std::size_t>(dim());
        return std::span<const double>(coords_).subspan(i * d, d);
    }
    [[nodiscard]] std::span<const double> coords() const noexcept { return coords_; }

private:
    Window window_;
    std::vector<double> coords_;
};

/// Pattern file: `window lo1 hi1 ... lod hid` then one point per row;
/// blank lines and lines starting with '#' are ignored.
[[nodiscard]] PointPattern parse_pattern(std::istream& in);
void format_pattern(const PointPattern& p, std::ostream& out);

[[nodiscard]] PointPattern read_pattern(const std::filesystem::path& path);
void write_pattern(const PointPattern& p, const std::filesystem::path& path);

}  // namespace dppfit
