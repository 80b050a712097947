#include "dppfit/cli.hpp"

#include "dppfit/contrast.hpp"
#include "dppfit/errors.hpp"
#include "dppfit/estimators.hpp"
#include "dppfit/moments.hpp"
#include "dppfit/sampler.hpp"
#include "dppfit/study.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

namespace dppfit {

namespace {

struct ModelArgs {
    std::string family{"gaussian"};
    int dim{2};
    double rho{0.0};
    double alpha{0.0};

    void add(CLI::App* app) {
        app->add_option("--family", family, "kernel family")->capture_default_str();
        app->add_option("--dim", dim, "dimension")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--rho", rho, "intensity")->required();
        app->add_option("--alpha", alpha, "range parameter")->required();
    }

    [[nodiscard]] KernelModel model() const {
        KernelModel m;
        m.family = family_from_string(family);
        m.dim = dim;
        m.rho = rho;
        m.theta = Eigen::VectorXd::Constant(1, alpha);
        return m;
    }
};

struct SpecArgs {
    std::string stat{"K"};
    std::optional<double> rmin;
    std::optional<double> rmax;
    std::optional<double> c;
    std::optional<int> grid;

    void add(CLI::App* app, bool with_c) {
        app->add_option("--stat", stat, "summary statistic, K or g")->capture_default_str();
        app->add_option("--rmin", rmin, "lower integration limit");
        app->add_option("--rmax", rmax, "upper integration limit (default: quarter of the smallest side)");
        if (with_c) app->add_option("--c", c, "contrast exponent");
        app->add_option("--grid", grid, "number of grid points");
    }

    [[nodiscard]] ContrastSpec spec(const Window& w) const {
        ContrastSpec s = default_spec(statistic_from_string(stat), w);
        if (rmin) s.r_min = *rmin;
        if (rmax) s.r_max = *rmax;
        if (c) s.c = *c;
        if (grid) s.grid_points = *grid;
        validate_spec(s);
        return s;
    }
};

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_matrix(std::ostream& out, const std::string& name, const Eigen::MatrixXd& a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out << name << ',' << i << ',' << j << ',' << num(a(i, j)) << '\n';
        }
    }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Minimum contrast fitting of stationary determinantal point processes"};
    app.name("dppfit");
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "draw a DPP (or Poisson) pattern on a window");
    ModelArgs sim_model;
    sim_model.add(sim);
    std::string sim_window{"1"};
    std::uint64_t sim_seed{1};
    std::string sim_out;
    bool sim_poisson{false};
    double sim_trunc{0.99999};
    sim->add_option("--window", sim_window, "side s for [0,s]^d, or lo:hi x lo:hi")->capture_default_str();
    sim->add_option("--seed", sim_seed, "random seed")->capture_default_str();
    sim->add_option("--out", sim_out, "pattern file (default: standard output)");
    sim->add_flag("--poisson", sim_poisson, "homogeneous Poisson process with intensity rho instead");
    sim->add_option("--trunc-mass", sim_trunc, "retained spectral mass")->capture_default_str();
    std::string sim_diag;
    sim->add_option("--diag", sim_diag, "sampler diagnostics CSV (default: <out>.diag.csv when --out is set)");

    // summarize
    auto* sum = app.add_subcommand("summarize", "tabulate K_hat or g_hat of a pattern");
    std::string sum_pattern;
    SpecArgs sum_spec;
    std::string sum_kernel{"epanechnikov"};
    std::optional<double> sum_bw;
    sum->add_option("--pattern", sum_pattern, "pattern file")->required()->check(CLI::ExistingFile);
    sum_spec.add(sum, false);
    sum->add_option("--kernel", sum_kernel, "g smoothing kernel, epanechnikov or box")->capture_default_str();
    sum->add_option("--bandwidth", sum_bw, "fixed g bandwidth (default: Stoyan's rule)");

    // fit
    auto* fitc = app.add_subcommand("fit", "minimum contrast estimate from a pattern");
    std::string fit_pattern;
    std::string fit_family{"gaussian"};
    SpecArgs fit_spec;
    std::uint64_t fit_seed{1};
    bool fit_asympt{false};
    std::size_t fit_samples{200000};
    std::string fit_format{"csv"};
    fitc->add_option("--pattern", fit_pattern, "pattern file")->required()->check(CLI::ExistingFile);
    fitc->add_option("--family", fit_family, "kernel family")->capture_default_str();
    fit_spec.add(fitc, true);
    fitc->add_option("--seed", fit_seed, "optimizer and cubature seed")->capture_default_str();
    fitc->add_flag("--asympt", fit_asympt, "add the plug-in asymptotic variance");
    fitc->add_option("--samples", fit_samples, "Monte Carlo samples per Sigma term")->capture_default_str();
    fitc->add_option("--format", fit_format, "csv or json")
        ->capture_default_str()
        ->check(CLI::IsMember({"csv", "json"}));

    // mc-study
    auto* mc = app.add_subcommand("mc-study", "Monte Carlo study from a key=value config");
    std::string mc_config;
    std::string mc_out{"."};
    std::optional<int> mc_threads;
    std::optional<std::uint64_t> mc_seed;
    bool mc_normality{false};
    std::size_t mc_samples{200000};
    mc->add_option("--config", mc_config, "config file")->required()->check(CLI::ExistingFile);
    mc->add_option("--out", mc_out, "output directory")->capture_default_str();
    mc->add_option("--threads", mc_threads, "worker threads (DPPFIT_THREADS overrides)")->check(CLI::PositiveNumber);
    mc->add_option("--seed", mc_seed, "master seed (overrides study.seed)");
    mc->add_flag("--normality", mc_normality, "also write normality.csv for cells with >= 100 fits");
    mc->add_option("--samples", mc_samples, "Monte Carlo samples per Sigma term")->capture_default_str();

    // asympt
    auto* as = app.add_subcommand("asympt", "B, Sigma and the sandwich covariance");
    ModelArgs as_model;
    as_model.add(as);
    SpecArgs as_spec;
    as_spec.add(as, true);
    std::string as_window{"1"};
    std::size_t as_samples{200000};
    std::uint64_t as_seed{1};
    int as_threads{1};
    as->add_option("--window", as_window, "window for the default r_max")->capture_default_str();
    as->add_option("--samples", as_samples, "Monte Carlo samples per Sigma term")->capture_default_str();
    as->add_option("--seed", as_seed, "cubature seed")->capture_default_str();
    as->add_option("--threads", as_threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    // validate
    auto* val = app.add_subcommand("validate", "check the existence condition of a kernel");
    ModelArgs val_model;
    val_model.add(val);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*sim) {
            const KernelModel m = sim_model.model();
            const Window w = parse_window(sim_window, m.dim);
            PointPattern p = PointPattern::empty(w);
            if (sim_poisson) {
                p = sample_poisson(m.rho, w, sim_seed);
            } else {
                SamplerConfig sc;
                sc.seed = sim_seed;
                sc.trunc_mass = sim_trunc;
                SamplerDiagnostics diag;
                p = sample_dpp(m, w, sc, &diag);
                if (sim_diag.empty() && !sim_out.empty()) sim_diag = sim_out + ".diag.csv";
                if (!sim_diag.empty()) {
                    std::ofstream f(sim_diag, std::ios::binary);
                    if (!f) throw Error("cannot write " + sim_diag);
                    f << "modes_per_axis,modes,retained_mass,expected_points,selected,proposals,points\n"
                      << diag.modes_per_axis << ',' << diag.modes << ',' << num(diag.retained_mass) << ','
                      << num(diag.expected_points) << ',' << diag.selected << ',' << diag.proposals << ','
                      << p.size() << '\n';
                }
            }
            if (sim_out.empty()) {
                format_pattern(p, out);
            } else {
                write_pattern(p, sim_out);
            }
        } else if (*sum) {
            const PointPattern p = read_pattern(sum_pattern);
            const ContrastSpec s = sum_spec.spec(p.window());
            SmoothingKernel k;
            if (sum_kernel == "box") {
                k = SmoothingKernel::box();
            } else if (sum_kernel != "epanechnikov") {
                err << "unknown kernel '" << sum_kernel << "'\n";
                return 1;
            }
            const BandwidthRule bw = sum_bw ? BandwidthRule::fixed(*sum_bw) : BandwidthRule::stoyan();
            const SummaryCurve c = empirical_curve(p, s, k, bw);
            std::string est = "K_minus";
            std::string b;
            if (c.kind == Statistic::g) {
                est = std::string("g_translate_") + (sum_kernel == "box" ? "box" : "epanechnikov");
                b = num(bandwidth(bw, p));
            }
            out << "t,value,estimator,bandwidth\n";
            for (std::size_t i = 0; i < c.size(); ++i)
                out << num(c.grid[i]) << ',' << num(c.values[i]) << ',' << est << ',' << b << '\n';
        } else if (*fitc) {
            const PointPattern p = read_pattern(fit_pattern);
            const ContrastSpec s = fit_spec.spec(p.window());
            FitOptions fo;
            fo.optimizer.seed = fit_seed;
            fo.asymptotics = fit_asympt;
            fo.sigma.seed = fit_seed;
            fo.sigma.samples = fit_samples;
            const Family fam = family_from_string(fit_family);
            const FitReport r = fit(p, fam, s, fo);
            const auto names = family_impl(fam).param_names();
            const double area = p.window().volume();
            if (fit_format == "json") {
                nlohmann::ordered_json j;
                j["stat"] = std::string(to_string(s.statistic));
                for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = r.theta_hat[static_cast<Eigen::Index>(i)];
                j["rho_hat"] = r.rho_hat;
                j["objective"] = r.objective;
                j["iterations"] = r.iterations;
                j["converged"] = r.converged;
                j["bound_active"] = r.bound_active;
                if (r.asymptotics) {
                    j["asympt_var"] = r.asymptotics->covariance(0, 0) / area;
                    j["asympt_var_stderr"] = r.asymptotics->covariance_stderr(0, 0) / area;
                }
                out << j.dump() << '\n';
            } else {
                out << "stat";
                for (const auto& n : names) out << ',' << n;
                out << ",rho_hat,objective,iterations,converged,bound_active";
                if (r.asymptotics) out << ",asympt_var,asympt_var_stderr";
                out << '\n' << to_string(s.statistic);
                for (Eigen::Index i = 0; i < r.theta_hat.size(); ++i) out << ',' << num(r.theta_hat[i]);
                out << ',' << num(r.rho_hat) << ',' << num(r.objective) << ',' << r.iterations << ','
                    << (r.converged ? 1 : 0) << ',' << (r.bound_active ? 1 : 0);
                if (r.asymptotics) {
                    out << ',' << num(r.asymptotics->covariance(0, 0) / area) << ','
                        << num(r.asymptotics->covariance_stderr(0, 0) / area);
                }
                out << '\n';
            }
        } else if (*mc) {
            StudyConfig cfg = load_study_config(mc_config);
            if (mc_threads) cfg.threads = *mc_threads;
            if (mc_seed) cfg.master_seed = *mc_seed;
            apply_env_overrides(cfg);
            const StudyResult r = run_study(cfg);
            write_study_outputs(r, mc_out);
            write_table_csv(r, out);
            if (mc_normality) {
                std::vector<NormalityReport> reps;
                SigmaOptions so;
                so.samples = mc_samples;
                so.threads = cfg.threads;
                for (const auto& c : r.cells) {
                    if (c.fitted < 100) continue;
                    reps.push_back(normality_report(c, cfg.model, cell_spec(cfg, c.method, c.window), so,
                                                    cfg.hist_bins));
                }
                std::ofstream f(std::filesystem::path(mc_out) / "normality.csv", std::ios::binary);
                if (!f) throw Error("cannot write normality.csv");
                write_normality_csv(reps, f);
            }
        } else if (*as) {
            const KernelModel m = as_model.model();
            const Window w = parse_window(as_window, m.dim);
            const ContrastSpec s = as_spec.spec(w);
            SigmaOptions so;
            so.samples = as_samples;
            so.seed = as_seed;
            so.threads = as_threads;
            const AsymptoticReport a = asymptotic_covariance(m, s, so);
            out << "name,i,j,value\n";
            write_matrix(out, "B", a.B);
            write_matrix(out, "Sigma", a.Sigma);
            write_matrix(out, "Sigma_stderr", a.mc_stderr);
            write_matrix(out, "covariance", a.covariance);
            write_matrix(out, "covariance_stderr", a.covariance_stderr);
            out << "condition_number,0,0," << num(a.condition_number) << '\n';
        } else if (*val) {
            const KernelModel m = val_model.model();
            const Validation v = validate(m);
            if (!v.ok) {
                err << "invalid: " << v.message() << '\n';
                return 2;
            }
            out << "valid: " << format_model_spec(m) << " sup F(C) = " << num(v.max_spectral) << '\n';
        }
    } catch (const std::invalid_argument& e) {
        err << "dppfit: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "dppfit: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace dppfit
