#include "dppfit/study.hpp"

#include "dppfit/errors.hpp"
#include "dppfit/estimators.hpp"
#include "dppfit/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

namespace dppfit {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',' || ch == ';') {
            if (auto t = trim(cur); !t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (auto t = trim(cur); !t.empty()) out.push_back(t);
    return out;
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters in '" + v + "'");
    return x;
}

long long to_int(const std::string& v) {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters in '" + v + "'");
    return x;
}

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

std::string format_window(const Window& w) {
    std::string s;
    for (int i = 0; i < w.dim(); ++i) {
        if (i > 0) s += 'x';
        s += num(w.axis(i).lo) + ":" + num(w.axis(i).hi);
    }
    return s;
}

Window parse_window(std::string_view text, int dim) {
    const std::string t = trim(text);
    if (t.find(':') == std::string::npos) {
        const double side = to_double(t);
        if (!(side > 0.0)) throw std::invalid_argument("window side must be positive");
        return Window::cube(dim, 0.0, side);
    }
    std::vector<Interval> axes;
    std::size_t start = 0;
    while (start <= t.size()) {
        const auto stop = t.find('x', start);
        const std::string part = trim(t.substr(start, stop == std::string::npos ? std::string::npos : stop - start));
        const auto colon = part.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("window axis '" + part + "' needs lo:hi");
        axes.push_back({to_double(trim(part.substr(0, colon))), to_double(trim(part.substr(colon + 1)))});
        if (stop == std::string::npos) break;
        start = stop + 1;
    }
    if (static_cast<int>(axes.size()) != dim) {
        throw std::invalid_argument("window '" + t + "' has " + std::to_string(axes.size()) + " axes, expected " +
                                    std::to_string(dim));
    }
    return Window(std::move(axes));
}

StudyConfig parse_study_config(std::istream& in) {
    std::map<std::string, std::pair<std::string, std::size_t>> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
        std::string key = trim(t.substr(0, eq));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
        kv[key] = {trim(t.substr(eq + 1)), lineno};
    }

    StudyConfig cfg;
    auto take = [&](const std::string& key) -> std::optional<std::pair<std::string, std::size_t>> {
        const auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        auto v = it->second;
        kv.erase(it);
        return v;
    };
    auto with_line = [](std::size_t ln, auto&& f) {
        try {
            return f();
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(e.what(), ln);
        }
    };

    KernelModel& m = cfg.model;
    if (auto v = take("model.family")) with_line(v->second, [&] { m.family = family_from_string(v->first); });
    if (auto v = take("model.dim")) with_line(v->second, [&] { m.dim = static_cast<int>(to_int(v->first)); });
    if (auto v = take("model.rho")) with_line(v->second, [&] { m.rho = to_double(v->first); });
    const auto names = family_impl(m.family).param_names();
    if (m.theta.size() != static_cast<Eigen::Index>(names.size())) {
        m.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(names.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (auto v = take("model." + names[i])) {
            with_line(v->second, [&] { m.theta[static_cast<Eigen::Index>(i)] = to_double(v->first); });
        }
    }

    if (auto v = take("study.replicates")) {
        with_line(v->second, [&] {
            const auto n = to_int(v->first);
            if (n < 1) throw std::invalid_argument("study.replicates must be >= 1");
            cfg.replicates = static_cast<std::size_t>(n);
        });
    }
    if (auto v = take("study.windows")) {
        with_line(v->second, [&] {
            cfg.windows.clear();
            for (const auto& w : split_list(v->first)) cfg.windows.push_back(parse_window(w, m.dim));
            if (cfg.windows.empty()) throw std::invalid_argument("study.windows is empty");
        });
    } else if (cfg.windows.front().dim() != m.dim) {
        cfg.windows = {Window::cube(m.dim, 0.0, 1.0)};
    }
    if (auto v = take("study.methods")) {
        with_line(v->second, [&] {
            cfg.methods.clear();
            for (const auto& s : split_list(v->first)) {
                const Statistic st = statistic_from_string(s);
                if (std::find(cfg.methods.begin(), cfg.methods.end(), st) == cfg.methods.end()) {
                    cfg.methods.push_back(st);
                }
            }
            if (cfg.methods.empty()) throw std::invalid_argument("study.methods is empty");
        });
    }
    if (auto v = take("study.seed")) {
        with_line(v->second, [&] { cfg.master_seed = std::stoull(v->first); });
    }
    if (auto v = take("study.threads")) {
        with_line(v->second, [&] {
            const auto n = to_int(v->first);
            if (n < 1) throw std::invalid_argument("study.threads must be >= 1");
            cfg.threads = static_cast<int>(n);
        });
    }
    if (auto v = take("study.hist_bins")) {
        with_line(v->second, [&] {
            const auto n = to_int(v->first);
            if (n < 1) throw std::invalid_argument("study.hist_bins must be >= 1");
            cfg.hist_bins = static_cast<int>(n);
        });
    }
    if (auto v = take("contrast.rmin")) with_line(v->second, [&] { cfg.r_min = to_double(v->first); });
    if (auto v = take("contrast.rmax")) with_line(v->second, [&] { cfg.r_max = to_double(v->first); });
    if (auto v = take("contrast.c")) with_line(v->second, [&] { cfg.c = to_double(v->first); });
    if (auto v = take("contrast.grid")) {
        with_line(v->second, [&] { cfg.grid_points = static_cast<int>(to_int(v->first)); });
    }
    if (auto v = take("sampler.trunc_mass")) {
        with_line(v->second, [&] { cfg.sampler.trunc_mass = to_double(v->first); });
    }
    if (auto v = take("sampler.max_modes")) {
        with_line(v->second, [&] { cfg.sampler.max_modes = static_cast<int>(to_int(v->first)); });
    }
    if (auto v = take("sampler.margin_tol")) {
        with_line(v->second, [&] { cfg.sampler.margin_tol = to_double(v->first); });
    }
    if (!kv.empty()) {
        const auto& [key, val] = *kv.begin();
        throw ParseError("unknown key '" + key + "'", val.second);
    }
    return cfg;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path.string());
    return parse_study_config(in);
}

void apply_env_overrides(StudyConfig& cfg) {
    const char* env = std::getenv("DPPFIT_THREADS");
    if (env == nullptr || *env == '\0') return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw std::invalid_argument("DPPFIT_THREADS must be a positive integer");
    cfg.threads = static_cast<int>(n);
}

ContrastSpec cell_spec(const StudyConfig& cfg, Statistic method, const Window& w) {
    ContrastSpec s = default_spec(method, w);
    if (cfg.r_min) s.r_min = *cfg.r_min;
    if (cfg.r_max) s.r_max = *cfg.r_max;
    if (cfg.c) s.c = *cfg.c;
    if (cfg.grid_points) s.grid_points = *cfg.grid_points;
    return s;
}

void validate_config(const StudyConfig& cfg) {
    if (cfg.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (cfg.threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (cfg.windows.empty()) throw std::invalid_argument("no windows");
    if (cfg.methods.empty()) throw std::invalid_argument("no methods");
    require_valid(cfg.model);
    for (const auto& w : cfg.windows) {
        if (w.dim() != cfg.model.dim) throw std::invalid_argument("window dimension differs from the model's");
        for (Statistic s : cfg.methods) validate_spec(cell_spec(cfg, s, w));
    }
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t window_index, std::size_t replicate) {
    return derive_seed(master, {static_cast<std::uint64_t>(window_index), static_cast<std::uint64_t>(replicate)});
}

std::vector<double> CellResult::estimates(int i) const {
    std::vector<double> out;
    out.reserve(fitted);
    for (const auto& r : replicates) {
        if (r.ok) out.push_back(r.theta_hat[i]);
    }
    return out;
}

const CellResult& StudyResult::cell(std::size_t window_index, Statistic method) const {
    for (const auto& c : cells) {
        if (c.window_index == window_index && c.method == method) return c;
    }
    throw std::out_of_range("no such study cell");
}

StudyResult run_study(const StudyConfig& cfg) {
    validate_config(cfg);
    const std::size_t nw = cfg.windows.size();
    const std::size_t nm = cfg.methods.size();
    const std::size_t reps = cfg.replicates;

    std::vector<ContrastSpec> specs;
    for (const auto& w : cfg.windows) {
        for (Statistic s : cfg.methods) specs.push_back(cell_spec(cfg, s, w));
    }

    // outcomes[(wi * nm + mi) * reps + r]
    std::vector<ReplicateOutcome> outcomes(nw * nm * reps);
    std::atomic<std::size_t> next{0};
    const std::size_t jobs = nw * reps;

    auto worker = [&] {
        for (;;) {
            const std::size_t job = next.fetch_add(1);
            if (job >= jobs) return;
            const std::size_t wi = job / reps;
            const std::size_t r = job % reps;
            SamplerConfig sc = cfg.sampler;
            sc.seed = replicate_seed(cfg.master_seed, wi, r);
            std::optional<PointPattern> pattern;
            std::string sim_error;
            try {
                pattern = sample_dpp(cfg.model, cfg.windows[wi], sc);
            } catch (const std::exception& e) {
                sim_error = std::string("simulation: ") + e.what();
            }
            for (std::size_t mi = 0; mi < nm; ++mi) {
                ReplicateOutcome& out = outcomes[(wi * nm + mi) * reps + r];
                if (!pattern) {
                    out.error = sim_error;
                    continue;
                }
                out.points = pattern->size();
                out.rho_hat = intensity_hat(*pattern);
                try {
                    FitOptions fo;
                    fo.optimizer.seed = sc.seed;
                    const FitReport fr = fit(*pattern, cfg.model.family, specs[wi * nm + mi], fo);
                    out.ok = fr.theta_hat.allFinite();
                    out.theta_hat = fr.theta_hat;
                    out.rho_hat = fr.rho_hat;
                    out.bound_active = fr.bound_active;
                    if (!out.ok) out.error = "non-finite estimate";
                } catch (const std::exception& e) {
                    out.error = e.what();
                }
            }
        }
    };

    const int nthreads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), jobs));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    }

    StudyResult result;
    result.config = cfg;
    const Eigen::VectorXd& theta0 = cfg.model.theta;
    const Eigen::Index p = theta0.size();
    for (std::size_t wi = 0; wi < nw; ++wi) {
        for (std::size_t mi = 0; mi < nm; ++mi) {
            CellResult cell;
            cell.window_index = wi;
            cell.window = cfg.windows[wi];
            cell.method = cfg.methods[mi];
            cell.theta_true = theta0;
            const auto first = outcomes.begin() + static_cast<std::ptrdiff_t>((wi * nm + mi) * reps);
            cell.replicates.assign(first, first + static_cast<std::ptrdiff_t>(reps));
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(p);
            for (const auto& o : cell.replicates) {
                if (o.ok) {
                    ++cell.fitted;
                    sum += o.theta_hat;
                } else {
                    ++cell.failed;
                }
            }
            if (10 * cell.failed > reps) {
                std::string why;
                for (const auto& o : cell.replicates) {
                    if (!o.ok) {
                        why = o.error;
                        break;
                    }
                }
                throw StudyAborted("window " + format_window(cell.window) + ", method " +
                                   std::string(to_string(cell.method)) + ": " + std::to_string(cell.failed) + " of " +
                                   std::to_string(reps) + " replicates failed (first: " + why + ")");
            }
            cell.mse = Eigen::VectorXd::Zero(p);
            cell.var = Eigen::VectorXd::Zero(p);
            cell.bias = Eigen::VectorXd::Zero(p);
            if (cell.fitted > 0) {
                const auto n = static_cast<double>(cell.fitted);
                const Eigen::VectorXd mean = sum / n;
                for (const auto& o : cell.replicates) {
                    if (!o.ok) continue;
                    cell.mse += (o.theta_hat - theta0).cwiseAbs2();
                    cell.var += (o.theta_hat - mean).cwiseAbs2();
                }
                cell.mse /= n;
                cell.var /= n;
                cell.bias = mean - theta0;
            }
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

void write_table_csv(const StudyResult& r, std::ostream& out) {
    const auto names = r.config.model.impl().param_names();
    const bool multi = names.size() > 1;
    out << "window,method," << (multi ? "param,true" : names.front() + "_true") << ",mse,bias,var,n_fail\n";
    for (const auto& c : r.cells) {
        for (Eigen::Index i = 0; i < c.theta_true.size(); ++i) {
            out << format_window(c.window) << ',' << to_string(c.method) << ',';
            if (multi) out << names[static_cast<std::size_t>(i)] << ',';
            out << num(c.theta_true[i]) << ',' << num(c.mse[i]) << ',' << num(c.bias[i]) << ',' << num(c.var[i])
                << ',' << c.failed << '\n';
        }
    }
}

void write_estimates_csv(const StudyResult& r, std::ostream& out) {
    const auto names = r.config.model.impl().param_names();
    out << "window,method,replicate";
    for (const auto& n : names) out << ',' << n << "_hat";
    out << ",rho_hat,bound_active\n";
    for (const auto& c : r.cells) {
        for (std::size_t k = 0; k < c.replicates.size(); ++k) {
            const auto& o = c.replicates[k];
            out << format_window(c.window) << ',' << to_string(c.method) << ',' << k;
            for (std::size_t i = 0; i < names.size(); ++i) {
                out << ',';
                if (o.ok) out << num(o.theta_hat[static_cast<Eigen::Index>(i)]);
            }
            out << ',';
            if (o.points > 0) out << num(o.rho_hat);
            out << ',' << (o.ok ? (o.bound_active ? "1" : "0") : "") << '\n';
        }
    }
}

void write_hist_csv(const StudyResult& r, std::ostream& out) {
    out << "window,method,bin_lo,bin_hi,count\n";
    for (const auto& c : r.cells) {
        const auto x = c.estimates(0);
        if (x.empty()) continue;
        for (const auto& b : histogram(x, r.config.hist_bins)) {
            out << format_window(c.window) << ',' << to_string(c.method) << ',' << num(b.lo) << ',' << num(b.hi)
                << ',' << b.count << '\n';
        }
    }
}

void write_study_outputs(const StudyResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("table.csv");
        write_table_csv(r, f);
    }
    {
        auto f = open("estimates.csv");
        write_estimates_csv(r, f);
    }
    {
        auto f = open("hist.csv");
        write_hist_csv(r, f);
    }
}

std::vector<HistBin> histogram(std::span<const double> x, int bins) {
    if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
    if (x.empty()) return {};
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    double lo = *mn, hi = *mx;
    if (hi <= lo) {
        const double pad = lo != 0.0 ? 1e-6 * std::abs(lo) : 1e-6;
        lo -= pad;
        hi += pad;
    }
    const double width = (hi - lo) / bins;
    std::vector<HistBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        out[static_cast<std::size_t>(b)].lo = lo + b * width;
        out[static_cast<std::size_t>(b)].hi = b + 1 == bins ? hi : lo + (b + 1) * width;
    }
    for (double v : x) {
        auto b = static_cast<int>(std::floor((v - lo) / width));
        b = std::clamp(b, 0, bins - 1);
        ++out[static_cast<std::size_t>(b)].count;
    }
    return out;
}

AndersonDarling anderson_darling(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 8) throw UndefinedStatistic("Anderson-Darling needs at least 8 values");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0) || !std::isfinite(sd)) throw UndefinedStatistic("Anderson-Darling undefined for zero variance");

    std::vector<double> z(x.begin(), x.end());
    std::sort(z.begin(), z.end());
    const boost::math::normal_distribution<double> N;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = (z[i] - mean) / sd;
        const double b = (z[n - 1 - i] - mean) / sd;
        const double lf = std::log(boost::math::cdf(N, a));
        const double lc = std::log(boost::math::cdf(boost::math::complement(N, b)));
        s += static_cast<double>(2 * i + 1) * (lf + lc);
    }
    AndersonDarling ad;
    ad.n = n;
    const auto dn = static_cast<double>(n);
    ad.statistic = -dn - s / dn;
    ad.modified = ad.statistic * (1.0 + 0.75 / dn + 2.25 / (dn * dn));
    return ad;
}

NormalityReport normality_report(const CellResult& cell, const KernelModel& m, const ContrastSpec& spec,
                                 const SigmaOptions& sigma, int bins) {
    if (cell.fitted < 100) {
        throw std::invalid_argument("normality_report needs at least 100 fitted replicates, got " +
                                    std::to_string(cell.fitted));
    }
    const double area = cell.window.volume();
    const double root = std::sqrt(area);
    const double theta0 = m.theta[0];
    std::vector<double> z;
    for (double v : cell.estimates(0)) z.push_back(root * (v - theta0));

    NormalityReport rep;
    rep.method = cell.method;
    rep.window = format_window(cell.window);
    rep.n = z.size();
    rep.ad = anderson_darling(z);
    rep.hist = histogram(z, bins);

    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(z.size());
    double ss = 0.0;
    for (double v : z) ss += (v - mean) * (v - mean);
    rep.empirical_variance = ss / static_cast<double>(z.size());

    const AsymptoticReport a = asymptotic_covariance(m, spec, sigma);
    rep.theoretical_variance = a.covariance(0, 0);
    rep.theoretical_stderr = a.covariance_stderr(0, 0);
    rep.variance_ratio = rep.empirical_variance / rep.theoretical_variance;
    return rep;
}

void write_normality_csv(std::span<const NormalityReport> reports, std::ostream& out) {
    out << "window,method,n,ad,ad_modified,ad_critical_1pct,rejected,emp_var,theory_var,theory_stderr,ratio\n";
    for (const auto& r : reports) {
        out << r.window << ',' << to_string(r.method) << ',' << r.n << ',' << num(r.ad.statistic) << ','
            << num(r.ad.modified) << ',' << num(r.ad.critical_1pct) << ',' << (r.ad.rejected() ? 1 : 0) << ','
            << num(r.empirical_variance) << ',' << num(r.theoretical_variance) << ',' << num(r.theoretical_stderr)
            << ',' << num(r.variance_ratio) << '\n';
    }
}

}  // namespace dppfit
