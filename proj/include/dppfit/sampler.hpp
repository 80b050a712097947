#pragma once

#include "dppfit/geometry.hpp"
#include "dppfit/kernels.hpp"

#include <cstdint>
#include <vector>

namespace dppfit {

struct SamplerConfig {
    std::uint64_t seed{0};
    /// Fraction of the total spectral mass sum(lambda_k) kept by the mode box.
    double trunc_mass{0.99999};
    /// Cap on the half-width M of the mode box {-M..M}^d.
    int max_modes{2048};
    /// The simulation torus extends the window until |R| drops below this.
    double margin_tol{1e-5};
};

struct SamplerDiagnostics {
    int modes_per_axis{0};          ///< M
    std::size_t modes{0};           ///< (2M+1)^d
    double retained_mass{0.0};      ///< fraction of total spectral mass inside the box
    double expected_points{0.0};    ///< sum of retained eigenvalues
    std::size_t selected{0};        ///< eigenfunctions kept by the Bernoulli draws
    std::size_t proposals{0};
    std::vector<double> torus;      ///< side lengths of the simulation torus
};

/// Approximate DPP(C) on a rectangular window. The kernel is replaced by its
/// Fourier series on a torus that contains the window with a margin, the
/// random projection kernel is drawn mode by mode, and points are placed
/// sequentially from the conditional densities. Points falling outside the
/// window are discarded.
///
/// Throws ValidationError for an invalid model and TruncationError when the
/// mode box would need more than max_modes per axis.
[[nodiscard]] PointPattern sample_dpp(const KernelModel& m, const Window& w, const SamplerConfig& cfg,
                                      SamplerDiagnostics* diag = nullptr);

/// Homogeneous Poisson process with intensity rho on w.
[[nodiscard]] PointPattern sample_poisson(double rho, const Window& w, std::uint64_t seed);

struct PairCountCheck {
    double t{0.0};
    double empirical{0.0};  ///< mean of the minus-sampled rho^2 K estimate
    double std_error{0.0};
    double theoretical{0.0};
    std::size_t replicates{0};

    [[nodiscard]] double z() const { return std_error > 0.0 ? (empirical - theoretical) / std_error : 0.0; }
};

/// Compares the mean of the unbiased pair statistic
///   sum_{x in D(-)t} #{y != x : |x - y| <= t} / |D(-)t|
/// with rho^2 K(t) over n_reps realizations (replicate r uses
/// derive_seed(cfg.seed, {r})).
[[nodiscard]] PairCountCheck pair_count_check(const KernelModel& m, const Window& w, std::size_t n_reps, double t,
                                              const SamplerConfig& cfg);
/// Same for a Poisson process, against rho^2 |B(0,t)|.
[[nodiscard]] PairCountCheck pair_count_check_poisson(double rho, const Window& w, std::size_t n_reps, double t,
                                                      std::uint64_t seed);

}  // namespace dppfit
