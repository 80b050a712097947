#pragma once

#include "dppfit/contrast.hpp"
#include "dppfit/contrast_spec.hpp"
#include "dppfit/geometry.hpp"
#include "dppfit/kernels.hpp"
#include "dppfit/moments.hpp"
#include "dppfit/sampler.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dppfit {

/// Monte Carlo study: simulate `replicates` patterns per window and fit each
/// with every method.
struct StudyConfig {
    KernelModel model{KernelModel::gaussian(2, 100.0, 0.03)};
    std::vector<Window> windows{Window::cube(2, 0.0, 1.0)};
    std::size_t replicates{500};
    std::vector<Statistic> methods{Statistic::K, Statistic::g};
    /// Overrides of default_spec(method, window).
    std::optional<double> r_min;
    std::optional<double> r_max;
    std::optional<double> c;
    std::optional<int> grid_points;
    std::uint64_t master_seed{1};
    int threads{1};
    SamplerConfig sampler;  ///< seed is replaced per replicate
    int hist_bins{30};
};

/// Reads flat `key=value` lines. Keys: model.family, model.dim, model.rho,
/// model.<param>; study.replicates, study.windows, study.methods, study.seed,
/// study.threads, study.hist_bins; contrast.rmin, contrast.rmax, contrast.c,
/// contrast.grid; sampler.trunc_mass, sampler.max_modes, sampler.margin_tol.
/// A window is either a side s (the cube [0,s]^dim) or `lo:hi x lo:hi ...`;
/// list entries are separated by commas or semicolons. Throws ParseError.
[[nodiscard]] StudyConfig parse_study_config(std::istream& in);
[[nodiscard]] StudyConfig load_study_config(const std::filesystem::path& path);

/// DPPFIT_THREADS, when set to a positive integer, replaces cfg.threads.
void apply_env_overrides(StudyConfig& cfg);

/// Throws ValidationError or std::invalid_argument.
void validate_config(const StudyConfig& cfg);

[[nodiscard]] ContrastSpec cell_spec(const StudyConfig& cfg, Statistic method, const Window& w);

/// `0:1x0:1`
[[nodiscard]] std::string format_window(const Window& w);
[[nodiscard]] Window parse_window(std::string_view text, int dim);

/// Seed of the pattern used by replicate r in window wi. All methods fit
/// the same pattern.
[[nodiscard]] std::uint64_t replicate_seed(std::uint64_t master, std::size_t window_index, std::size_t replicate);

struct ReplicateOutcome {
    bool ok{false};
    Eigen::VectorXd theta_hat;
    /// Set whenever the pattern was simulated, even if the fit failed.
    std::size_t points{0};
    double rho_hat{0.0};
    bool bound_active{false};
    std::string error;
};

struct CellResult {
    std::size_t window_index{0};
    Window window{Window::cube(2, 0.0, 1.0)};
    Statistic method{Statistic::K};
    Eigen::VectorXd theta_true;
    std::vector<ReplicateOutcome> replicates;  ///< in replicate order
    std::size_t fitted{0};
    std::size_t failed{0};
    /// Over fitted replicates; var is the population variance so that
    /// mse = bias^2 + var.
    Eigen::VectorXd mse;
    Eigen::VectorXd bias;
    Eigen::VectorXd var;

    /// Parameter i of every fitted replicate, in replicate order.
    [[nodiscard]] std::vector<double> estimates(int i = 0) const;
};

struct StudyResult {
    StudyConfig config;
    std::vector<CellResult> cells;  ///< window-major, then config.methods order

    [[nodiscard]] const CellResult& cell(std::size_t window_index, Statistic method) const;
};

/// Throws StudyAborted when more than 10% of the replicates of a cell fail.
[[nodiscard]] StudyResult run_study(const StudyConfig& cfg);

/// Per-cell summary (window, method, <param>_true, mse, bias, var, n_fail).
void write_table_csv(const StudyResult& r, std::ostream& out);
/// One row per replicate and cell; failed fits leave the estimate empty.
void write_estimates_csv(const StudyResult& r, std::ostream& out);
/// Histogram of each cell's first parameter.
void write_hist_csv(const StudyResult& r, std::ostream& out);
/// table.csv, estimates.csv and hist.csv in dir (created if needed).
void write_study_outputs(const StudyResult& r, const std::filesystem::path& dir);

struct HistBin {
    double lo{0.0};
    double hi{0.0};
    std::size_t count{0};
};

/// Equal-width bins over [min, max] of x; the last bin is closed. Empty x
/// gives no bins.
[[nodiscard]] std::vector<HistBin> histogram(std::span<const double> x, int bins);

struct AndersonDarling {
    std::size_t n{0};
    double statistic{0.0};  ///< A^2
    double modified{0.0};   ///< A^2 (1 + 0.75/n + 2.25/n^2)
    double critical_1pct{1.035};

    [[nodiscard]] bool rejected() const { return modified > critical_1pct; }
};

/// Normality test with mean and variance estimated from x. Throws
/// UndefinedStatistic when x has fewer than 8 values or zero variance.
[[nodiscard]] AndersonDarling anderson_darling(std::span<const double> x);

struct NormalityReport {
    Statistic method{Statistic::K};
    std::string window;
    std::size_t n{0};
    AndersonDarling ad;
    std::vector<HistBin> hist;           ///< of sqrt|D| (theta_hat - theta_0)
    double empirical_variance{0.0};      ///< |D| Var(theta_hat), population
    double theoretical_variance{0.0};    ///< (B^-1 Sigma B^-T)_00
    double theoretical_stderr{0.0};      ///< Monte Carlo error of the above
    double variance_ratio{0.0};
};

/// Diagnostics for the first parameter of one cell. Needs at least 100
/// fitted replicates (std::invalid_argument otherwise).
[[nodiscard]] NormalityReport normality_report(const CellResult& cell, const KernelModel& m, const ContrastSpec& spec,
                                               const SigmaOptions& sigma = {}, int bins = 30);

void write_normality_csv(std::span<const NormalityReport> reports, std::ostream& out);

}  // namespace dppfit
