#include "catch_amalgamated.hpp"

#include "dppfit/cli.hpp"
#include "dppfit/errors.hpp"
#include "dppfit/rng.hpp"
#include "dppfit/study.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace dppfit;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code{0};
    std::string out;
    std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"dppfit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch_dir(const std::string& tag) {
    const fs::path d = fs::temp_directory_path() / ("dppfit_studio_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

StudyConfig small_config() {
    StudyConfig c;
    c.windows = {Window::cube(2, 0, 1), Window::cube(2, 0, 1.5)};
    c.replicates = 6;
    c.master_seed = 77;
    return c;
}

}  // namespace

TEST_CASE("config parsing", "[studio]") {
    std::istringstream in(
        "# comment\n"
        "model.family = gaussian\n"
        "model.rho = 50\n"
        "model.alpha = 0.02\n"
        "\n"
        "study.replicates = 12\n"
        "study.windows = 1, 2; 0:1 x 0:3\n"
        "study.methods = g\n"
        "study.seed = 9\n"
        "study.threads = 2\n"
        "contrast.rmax = 0.2\n"
        "contrast.c = 0.25\n"
        "sampler.trunc_mass = 0.995\n");
    const StudyConfig c = parse_study_config(in);
    CHECK(c.model.rho == 50.0);
    CHECK(c.model.theta[0] == 0.02);
    CHECK(c.replicates == 12);
    REQUIRE(c.windows.size() == 3);
    CHECK(c.windows[1] == Window::cube(2, 0, 2));
    CHECK(c.windows[2].axis(1).hi == 3.0);
    REQUIRE(c.methods.size() == 1);
    CHECK(c.methods[0] == Statistic::g);
    CHECK(c.master_seed == 9);
    CHECK(c.threads == 2);
    CHECK(*c.r_max == 0.2);
    CHECK(*c.c == 0.25);
    CHECK_FALSE(c.r_min);
    CHECK(c.sampler.trunc_mass == 0.995);

    const ContrastSpec s = cell_spec(c, Statistic::g, c.windows[0]);
    CHECK(s.r_max == 0.2);
    CHECK(s.c == 0.25);
    CHECK(s.r_min == default_spec(Statistic::g, c.windows[0]).r_min);
}

TEST_CASE("config errors carry line numbers", "[studio]") {
    auto line_of = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            (void)parse_study_config(in);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("model.rho = 10\nstudy.bogus = 1\n") == 2);
    CHECK(line_of("study.replicates = ten\n") == 1);
    CHECK(line_of("\n\nno equals sign\n") == 3);
    CHECK(line_of("study.methods = K, h\n") == 1);
    CHECK(line_of("study.windows = 0:1\n") == 1);
}

TEST_CASE("config validation", "[studio]") {
    StudyConfig c;
    CHECK_NOTHROW(validate_config(c));
    c.replicates = 0;
    CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
    c = {};
    c.model = KernelModel::gaussian(2, 100, 0.06);
    CHECK_THROWS_AS(validate_config(c), ValidationError);
    c = {};
    c.r_min = 0.3;
    c.r_max = 0.2;
    CHECK_THROWS(validate_config(c));
    c = {};
    c.windows = {Window::cube(3, 0, 1)};
    CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
}

TEST_CASE("thread count from the environment", "[studio]") {
    StudyConfig c;
    c.threads = 2;
    ::unsetenv("DPPFIT_THREADS");
    apply_env_overrides(c);
    CHECK(c.threads == 2);
    ::setenv("DPPFIT_THREADS", "5", 1);
    apply_env_overrides(c);
    CHECK(c.threads == 5);
    ::setenv("DPPFIT_THREADS", "zero", 1);
    CHECK_THROWS_AS(apply_env_overrides(c), std::invalid_argument);
    ::setenv("DPPFIT_THREADS", "0", 1);
    CHECK_THROWS_AS(apply_env_overrides(c), std::invalid_argument);
    ::unsetenv("DPPFIT_THREADS");
}

TEST_CASE("window text round trip", "[studio]") {
    const Window w({{-0.5, 1.25}, {0.1, 3}});
    CHECK(format_window(Window::cube(2, 0, 1)) == "0:1x0:1");
    CHECK(parse_window(format_window(w), 2) == w);
    CHECK(parse_window("2", 2) == Window::cube(2, 0, 2));
    CHECK(parse_window(" 0:1 x 0:2 ", 2) == Window({{0, 1}, {0, 2}}));
    CHECK_THROWS(parse_window("0:1", 2));
    CHECK_THROWS(parse_window("1:0x0:1", 2));
    CHECK_THROWS(parse_window("-1", 2));
}

TEST_CASE("replicate seeds", "[studio]") {
    CHECK(replicate_seed(1, 0, 0) == replicate_seed(1, 0, 0));
    CHECK(replicate_seed(1, 0, 1) != replicate_seed(1, 0, 0));
    CHECK(replicate_seed(1, 1, 0) != replicate_seed(1, 0, 0));
    CHECK(replicate_seed(2, 0, 0) != replicate_seed(1, 0, 0));
}

TEST_CASE("single replicate cells", "[studio]") {
    StudyConfig c;
    c.replicates = 1;
    c.master_seed = 5;
    const StudyResult r = run_study(c);
    REQUIRE(r.cells.size() == 2);
    for (const auto& cell : r.cells) {
        REQUIRE(cell.fitted == 1);
        const double e = cell.replicates[0].theta_hat[0] - 0.03;
        CHECK(cell.var[0] == 0.0);
        CHECK(cell.bias[0] == Approx(e).epsilon(1e-14));
        CHECK(cell.mse[0] == Approx(e * e).epsilon(1e-12));
    }
}

TEST_CASE("cell summaries", "[studio]") {
    const StudyResult r = run_study(small_config());
    REQUIRE(r.cells.size() == 4);
    CHECK(r.cell(1, Statistic::g).window == Window::cube(2, 0, 1.5));
    CHECK(r.cell(0, Statistic::K).method == Statistic::K);
    for (const auto& cell : r.cells) {
        CHECK(cell.fitted + cell.failed == 6);
        CHECK(cell.replicates.size() == 6);
        const auto est = cell.estimates();
        REQUIRE(est.size() == cell.fitted);
        REQUIRE(cell.fitted > 0);
        double se = 0, s = 0;
        for (double a : est) {
            se += (a - 0.03) * (a - 0.03);
            s += a;
        }
        const double n = static_cast<double>(est.size());
        const double mean = s / n;
        double v = 0;
        for (double a : est) v += (a - mean) * (a - mean);
        CHECK(cell.mse[0] == Approx(se / n).epsilon(1e-12));
        CHECK(cell.bias[0] == Approx(mean - 0.03).epsilon(1e-12).margin(1e-15));
        CHECK(cell.var[0] == Approx(v / n).epsilon(1e-10).margin(1e-18));
        CHECK(cell.mse[0] == Approx(cell.bias[0] * cell.bias[0] + cell.var[0]).epsilon(1e-12));
        for (const auto& o : cell.replicates) {
            CHECK(o.points > 0);
            CHECK(o.rho_hat == Approx(static_cast<double>(o.points) / cell.window.volume()));
        }
    }
    // Both methods see the same pattern.
    for (std::size_t k = 0; k < 6; ++k) {
        CHECK(r.cell(0, Statistic::K).replicates[k].points == r.cell(0, Statistic::g).replicates[k].points);
    }
}

TEST_CASE("outputs do not depend on the thread count", "[studio]") {
    StudyConfig c = small_config();
    auto render = [&](int threads) {
        c.threads = threads;
        const StudyResult r = run_study(c);
        std::ostringstream t, e, h;
        write_table_csv(r, t);
        write_estimates_csv(r, e);
        write_hist_csv(r, h);
        return t.str() + e.str() + h.str();
    };
    const std::string one = render(1);
    CHECK(render(3) == one);
    CHECK(render(8) == one);
}

TEST_CASE("csv layouts", "[studio]") {
    const StudyResult r = run_study(small_config());
    std::ostringstream t, e, h;
    write_table_csv(r, t);
    write_estimates_csv(r, e);
    write_hist_csv(r, h);
    const auto tl = lines(t.str());
    REQUIRE(tl.size() == 5);
    CHECK(tl[0] == "window,method,alpha_true,mse,bias,var,n_fail");
    CHECK(tl[1].rfind("0:1x0:1,K,0.029999999999999999,", 0) == 0);
    const auto el = lines(e.str());
    REQUIRE(el.size() == 1 + 4 * 6);
    CHECK(el[0] == "window,method,replicate,alpha_hat,rho_hat,bound_active");
    CHECK(el[1].rfind("0:1x0:1,K,0,", 0) == 0);
    const auto hl = lines(h.str());
    CHECK(hl[0] == "window,method,bin_lo,bin_hi,count");
    CHECK(hl.size() == 1 + 4 * 30);

    const fs::path dir = scratch_dir("outputs");
    write_study_outputs(r, dir / "nested");
    CHECK(slurp(dir / "nested" / "table.csv") == t.str());
    CHECK(slurp(dir / "nested" / "estimates.csv") == e.str());
    CHECK(slurp(dir / "nested" / "hist.csv") == h.str());
    fs::remove_all(dir);
}

TEST_CASE("studies abort when too many fits fail", "[studio]") {
    StudyConfig c;
    c.replicates = 4;
    c.methods = {Statistic::K};
    c.r_max = 0.6;  // the unit square has no erosion at this range
    CHECK_THROWS_AS(run_study(c), StudyAborted);
}

TEST_CASE("histogram", "[studio]") {
    const std::vector<double> x{0.0, 0.1, 0.25, 0.5, 0.5, 0.99, 1.0};
    const auto h = histogram(x, 4);
    REQUIRE(h.size() == 4);
    CHECK(h.front().lo == 0.0);
    CHECK(h.back().hi == 1.0);
    CHECK(h[0].count == 2);
    CHECK(h[1].count == 1);
    CHECK(h[2].count == 2);
    CHECK(h[3].count == 2);
    std::size_t total = 0;
    for (const auto& b : h) total += b.count;
    CHECK(total == x.size());

    const std::vector<double> same{2.0, 2.0, 2.0};
    const auto hs = histogram(same, 3);
    std::size_t ts = 0;
    for (const auto& b : hs) ts += b.count;
    CHECK(ts == 3);
    CHECK(histogram({}, 5).empty());
}

TEST_CASE("Anderson-Darling statistic", "[studio]") {
    const std::vector<double> x{0.12, -0.53, 1.71, 0.33, -1.2,  0.05, 0.88, -0.41, 2.3,  -0.07,
                                0.61, -1.9,  0.27, 0.95, -0.66, 1.14, -0.22, 0.4,  -0.98, 0.16};
    // scipy.stats.anderson
    const auto a = anderson_darling(x);
    CHECK(a.n == 20);
    CHECK(a.statistic == Approx(0.14767085134077362).epsilon(1e-10));
    CHECK(a.modified == Approx(0.14767085134077362 * (1 + 0.75 / 20 + 2.25 / 400)).epsilon(1e-10));
    CHECK_FALSE(a.rejected());

    std::vector<double> y;
    for (double v : x) y.push_back(std::exp(v));
    const auto b = anderson_darling(y);
    CHECK(b.statistic == Approx(2.3645723407115717).epsilon(1e-10));
    CHECK(b.rejected());

    CHECK_THROWS_AS(anderson_darling(std::vector<double>(50, 1.5)), UndefinedStatistic);
    CHECK_THROWS_AS(anderson_darling(std::vector<double>{1, 2, 3}), UndefinedStatistic);

    Rng rng(3);
    std::vector<double> z(500), e(500);
    for (auto& v : z) v = standard_normal(rng);
    for (auto& v : e) v = -std::log(uniform01_open_low(rng));
    CHECK_FALSE(anderson_darling(z).rejected());
    CHECK(anderson_darling(e).rejected());
}

TEST_CASE("normality report needs enough fits", "[studio]") {
    const StudyResult r = run_study(small_config());
    const auto& cell = r.cell(0, Statistic::g);
    CHECK_THROWS_AS(normality_report(cell, r.config.model, cell_spec(r.config, Statistic::g, cell.window)),
                    std::invalid_argument);
}

TEST_CASE("cli usage errors", "[studio][cli]") {
    CHECK(cli({}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"simulate", "--rho", "100"}).code == 1);
    CHECK(cli({"fit", "--pattern", "/nonexistent/pattern.txt"}).code == 1);
    const auto h = cli({"--help"});
    CHECK(h.code == 0);
    CHECK(h.out.find("mc-study") != std::string::npos);
}

TEST_CASE("cli validate", "[studio][cli]") {
    const auto bad = cli({"validate", "--rho", "100", "--alpha", "0.06"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("F(C) > 1") != std::string::npos);
    const auto ok = cli({"validate", "--rho", "100", "--alpha", "0.03"});
    CHECK(ok.code == 0);
    CHECK(ok.out.rfind("valid:", 0) == 0);

#ifdef DPPFIT_CLI_PATH
    const std::string cmd = std::string("\"") + DPPFIT_CLI_PATH + "\" validate --rho 100 --alpha 0.06 >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 2);
#endif
}

TEST_CASE("cli simulate, summarize and fit", "[studio][cli]") {
    const fs::path dir = scratch_dir("pipeline");
    const std::string pat = (dir / "p.txt").string();
    const auto s = cli({"simulate", "--rho", "100", "--alpha", "0.03", "--seed", "4", "--out", pat});
    REQUIRE(s.code == 0);
    CHECK(fs::exists(pat));
    const auto diag = lines(slurp(pat + ".diag.csv"));
    REQUIRE(diag.size() == 2);
    CHECK(diag[0] == "modes_per_axis,modes,retained_mass,expected_points,selected,proposals,points");

    const auto again = cli({"simulate", "--rho", "100", "--alpha", "0.03", "--seed", "4"});
    CHECK(again.out == slurp(pat));

    const auto sum = cli({"summarize", "--pattern", pat, "--stat", "g", "--grid", "11"});
    REQUIRE(sum.code == 0);
    const auto sl = lines(sum.out);
    REQUIRE(sl.size() == 12);
    CHECK(sl[0] == "t,value,estimator,bandwidth");
    CHECK(sl[1].find(",g_translate_epanechnikov,") != std::string::npos);

    const auto f = cli({"fit", "--pattern", pat, "--stat", "g"});
    REQUIRE(f.code == 0);
    const auto fl = lines(f.out);
    REQUIRE(fl.size() == 2);
    CHECK(fl[0] == "stat,alpha,rho_hat,objective,iterations,converged,bound_active");
    CHECK(fl[1].rfind("g,", 0) == 0);
    const double alpha = std::stod(fl[1].substr(2));
    CHECK(alpha > 1e-4);
    CHECK(alpha < 0.06);

    const auto j = cli({"fit", "--pattern", pat, "--format", "json", "--asympt", "--samples", "4000"});
    REQUIRE(j.code == 0);
    CHECK(j.out.rfind("{\"stat\":\"K\",\"alpha\":", 0) == 0);
    CHECK(j.out.find("\"asympt_var\":") != std::string::npos);

    const auto p = cli({"simulate", "--rho", "100", "--alpha", "0.03", "--poisson", "--window", "0:1x0:2"});
    CHECK(p.code == 0);
    fs::remove_all(dir);
}

TEST_CASE("cli asympt", "[studio][cli]") {
    const auto a = cli({"asympt", "--rho", "100", "--alpha", "0.03", "--stat", "g", "--samples", "4000"});
    REQUIRE(a.code == 0);
    const auto l = lines(a.out);
    REQUIRE(l.size() == 7);
    CHECK(l[0] == "name,i,j,value");
    CHECK(l[1].rfind("B,0,0,", 0) == 0);
    CHECK(l[6].rfind("condition_number,0,0,", 0) == 0);
}

TEST_CASE("cli mc-study", "[studio][cli]") {
    const fs::path dir = scratch_dir("mc");
    {
        std::ofstream f(dir / "study.cfg");
        f << "model.rho = 100\nmodel.alpha = 0.03\nstudy.replicates = 2\nstudy.windows = 1\nstudy.seed = 3\n";
    }
    const auto r = cli({"mc-study", "--config", (dir / "study.cfg").string(), "--out", (dir / "out").string()});
    REQUIRE(r.code == 0);
    CHECK(lines(r.out).size() == 3);
    CHECK(slurp(dir / "out" / "table.csv") == r.out);
    const auto est = lines(slurp(dir / "out" / "estimates.csv"));
    REQUIRE(est.size() == 5);
    CHECK(est[1].rfind("0:1x0:1,K,0,", 0) == 0);
    CHECK(est[2].rfind("0:1x0:1,K,1,", 0) == 0);
    CHECK(est[3].rfind("0:1x0:1,g,0,", 0) == 0);
    CHECK(est[4].rfind("0:1x0:1,g,1,", 0) == 0);

    {
        std::ofstream f(dir / "bad.cfg");
        f << "model.rho = 100\nstudy.wat = 1\n";
    }
    const auto bad = cli({"mc-study", "--config", (dir / "bad.cfg").string(), "--out", (dir / "out2").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("line 2") != std::string::npos);
    fs::remove_all(dir);
}
