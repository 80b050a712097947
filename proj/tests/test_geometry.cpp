#include "catch_amalgamated.hpp"

#include "dppfit/errors.hpp"
#include "dppfit/geometry.hpp"
#include "dppfit/rng.hpp"

#include <filesystem>
#include <sstream>

using namespace dppfit;
using Catch::Approx;

TEST_CASE("window volume", "[geometry]") {
    CHECK(volume(Window::cube(2, 0, 1)) == 1.0);
    CHECK(volume(Window({{0, 2}, {0, 3}})) == 6.0);
    CHECK(volume(Window::cube(2, 0, 3)) == 9.0);
    CHECK_THROWS_AS(Window({{0, 1}, {1, 1}}), std::invalid_argument);
}

TEST_CASE("erosion", "[geometry]") {
    const Window w = Window::cube(2, 0, 1);
    auto e = erode(w, 0.1);
    REQUIRE(e);
    CHECK(e->axis(0).lo == Approx(0.1));
    CHECK(e->axis(1).hi == Approx(0.9));
    CHECK(e->volume() == Approx(0.64));
    CHECK_FALSE(erode(w, 0.6));
    CHECK(*erode(w, 0.0) == w);

    const Window r({{-1, 2}, {0.5, 4}});
    for (double t1 : {0.05, 0.2, 0.4}) {
        for (double t2 : {0.0, 0.1, 0.3}) {
            auto a = erode(r, t1 + t2);
            auto b = erode(*erode(r, t1), t2);
            REQUIRE(a);
            REQUIRE(b);
            for (int i = 0; i < 2; ++i) {
                CHECK(a->axis(i).lo == Approx(b->axis(i).lo));
                CHECK(a->axis(i).hi == Approx(b->axis(i).hi));
            }
        }
    }
    double prev = r.volume();
    for (double t = 0.0; t < 1.5; t += 0.01) {
        auto e2 = erode(r, t);
        const double v = e2 ? e2->volume() : 0.0;
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("shift overlap volume", "[geometry]") {
    const Window w = Window::cube(2, 0, 1);
    const double a[2] = {0.3, 0.0}, b[2] = {0.0, 0.0}, c[2] = {1.5, 0.0};
    CHECK(shift_overlap_volume(w, a) == Approx(0.7));
    CHECK(shift_overlap_volume(w, b) == 1.0);
    CHECK(shift_overlap_volume(w, c) == 0.0);

    auto rng = make_rng(7);
    const Window r({{0, 2}, {0, 3}});
    for (int k = 0; k < 50; ++k) {
        const double z[2] = {4 * uniform01(rng) - 2, 6 * uniform01(rng) - 3};
        const double mz[2] = {-z[0], -z[1]};
        CHECK(shift_overlap_volume(r, z) == shift_overlap_volume(r, mz));
    }
}

TEST_CASE("pattern parsing", "[geometry]") {
    std::istringstream ok("window 0 1 0 1\n# comment\n\n0.5 0.5\n");
    const PointPattern p = parse_pattern(ok);
    CHECK(p.size() == 1);
    CHECK(p.point(0)[1] == 0.5);

    std::istringstream outside("window 0 1 0 1\n1.5 0.5\n");
    CHECK_THROWS_AS(parse_pattern(outside), PointOutsideWindow);

    std::istringstream bad("window 0 1 0 1\n0.5 abc\n");
    try {
        (void)parse_pattern(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    std::istringstream dup("window 0 1 0 1\n0.5 0.5\n0.5 0.5\n");
    CHECK_THROWS(parse_pattern(dup));
}

TEST_CASE("pattern round trip", "[geometry]") {
    auto rng = make_rng(11);
    const Window w({{-1, 2}, {0, 1.5}});
    std::vector<double> xy;
    for (int i = 0; i < 100; ++i) {
        xy.push_back(-1 + 3 * uniform01(rng));
        xy.push_back(1.5 * uniform01(rng));
    }
    const PointPattern p(w, xy);
    const auto path = std::filesystem::temp_directory_path() / "dppfit_roundtrip.txt";
    write_pattern(p, path);
    const PointPattern q = read_pattern(path);
    std::filesystem::remove(path);
    REQUIRE(q.size() == p.size());
    CHECK(q.window() == w);
    for (std::size_t i = 0; i < p.coords().size(); ++i) CHECK(std::abs(q.coords()[i] - p.coords()[i]) <= 1e-12);
}
