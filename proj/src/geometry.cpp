#include "dppfit/geometry.hpp"

#include "dppfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dppfit {

Window::Window(std::vector<Interval> bounds) : bounds_(std::move(bounds)) {
    if (bounds_.empty()) {
        throw std::invalid_argument("window needs at least one axis");
    }
    for (const auto& b : bounds_) {
        if (!(b.hi > b.lo) || !std::isfinite(b.lo) || !std::isfinite(b.hi)) {
            throw std::invalid_argument("window axis needs finite bounds with hi > lo");
        }
    }
}

Window Window::cube(int dim, double lo, double hi) {
    return Window(std::vector<Interval>(static_cast<std::size_t>(dim), Interval{lo, hi}));
}

double Window::min_side() const noexcept {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : bounds_) m = std::min(m, b.length());
    return m;
}

double Window::volume() const noexcept {
    double v = 1.0;
    for (const auto& b : bounds_) v *= b.length();
    return v;
}

bool Window::contains(std::span<const double> x) const noexcept {
    for (std::size_t i = 0; i < bounds_.size(); ++i) {
        if (x[i] < bounds_[i].lo || x[i] > bounds_[i].hi) return false;
    }
    return true;
}

double Window::boundary_distance(std::span<const double> x) const noexcept {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bounds_.size(); ++i) {
        m = std::min({m, x[i] - bounds_[i].lo, bounds_[i].hi - x[i]});
    }
    return std::max(m, 0.0);
}

double volume(const Window& w) noexcept { return w.volume(); }

std::optional<Window> erode(const Window& w, double t) {
    if (t < 0.0) throw std::invalid_argument("erosion radius must be nonnegative");
    std::vector<Interval> shrunk;
    shrunk.reserve(w.bounds().size());
    for (const auto& b : w.bounds()) {
        const Interval s{b.lo + t, b.hi - t};
        if (!(s.hi > s.lo)) return std::nullopt;
        shrunk.push_back(s);
    }
    return Window(std::move(shrunk));
}

double shift_overlap_volume(const Window& w, std::span<const double> z) noexcept {
    double v = 1.0;
    for (int i = 0; i < w.dim(); ++i) {
        v *= std::max(0.0, w.side(i) - std::abs(z[static_cast<std::size_t>(i)]));
    }
    return v;
}

PointPattern::PointPattern(Window window, std::vector<double> coords)
    : window_(std::move(window)), coords_(std::move(coords)) {
    const auto d = static_cast<std::size_t>(window_.dim());
    if (coords_.size() % d != 0) {
        throw std::invalid_argument("coordinate count is not a multiple of the dimension");
    }
    const std::size_t n = coords_.size() / d;
    for (std::size_t i = 0; i < n; ++i) {
        if (!window_.contains(point(i))) {
            std::ostringstream msg;
            msg << "point " << i << " lies outside the window";
            throw PointOutsideWindow(msg.str());
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(coords_.begin() + static_cast<std::ptrdiff_t>(a * d),
                                            coords_.begin() + static_cast<std::ptrdiff_t>((a + 1) * d),
                                            coords_.begin() + static_cast<std::ptrdiff_t>(b * d),
                                            coords_.begin() + static_cast<std::ptrdiff_t>((b + 1) * d));
    });
    for (std::size_t k = 1; k < n; ++k) {
        const auto p = point(order[k - 1]);
        const auto q = point(order[k]);
        if (std::equal(p.begin(), p.end(), q.begin())) {
            throw std::invalid_argument("duplicate point in pattern (process must be simple)");
        }
    }
}

namespace {

bool skippable(const std::string& line) {
    const auto pos = line.find_first_not_of(" \t\r");
    return pos == std::string::npos || line[pos] == '#';
}

}  // namespace

PointPattern parse_pattern(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    std::optional<Window> window;
    std::vector<double> coords;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line)) continue;
        std::istringstream row(line);
        if (!window) {
            std::string tag;
            row >> tag;
            if (tag != "window") throw ParseError("expected 'window' header", lineno);
            std::vector<double> v;
            double x = 0.0;
            while (row >> x) v.push_back(x);
            if (!row.eof()) throw ParseError("non-numeric window bound", lineno);
            if (v.empty() || v.size() % 2 != 0) throw ParseError("window needs lo/hi pairs", lineno);
            std::vector<Interval> b;
            for (std::size_t i = 0; i < v.size(); i += 2) b.push_back({v[i], v[i + 1]});
            try {
                window.emplace(std::move(b));
            } catch (const std::invalid_argument& e) {
                throw ParseError(e.what(), lineno);
            }
            continue;
        }
        const auto d = static_cast<std::size_t>(window->dim());
        std::vector<double> p;
        double x = 0.0;
        while (row >> x) p.push_back(x);
        if (!row.eof()) throw ParseError("non-numeric coordinate", lineno);
        if (p.size() != d) {
            throw ParseError("expected " + std::to_string(d) + " coordinates, got " + std::to_string(p.size()),
                             lineno);
        }
        if (!window->contains(p)) throw PointOutsideWindow("line " + std::to_string(lineno) + ": point outside window");
        coords.insert(coords.end(), p.begin(), p.end());
    }
    if (!window) throw ParseError("missing 'window' header", 0);
    try {
        return PointPattern(std::move(*window), std::move(coords));
    } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), 0);
    }
}

void format_pattern(const PointPattern& p, std::ostream& out) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "window";
    for (const auto& b : p.window().bounds()) out << ' ' << b.lo << ' ' << b.hi;
    out << '\n';
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto x = p.point(i);
        for (std::size_t k = 0; k < x.size(); ++k) out << (k ? " " : "") << x[k];
        out << '\n';
    }
}

PointPattern read_pattern(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open pattern file " + path.string());
    return parse_pattern(in);
}

void write_pattern(const PointPattern& p, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write pattern file " + path.string());
    format_pattern(p, out);
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace dppfit
