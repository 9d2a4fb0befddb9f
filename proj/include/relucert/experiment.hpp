#pragma once

// Workflows behind the command-line subcommands.  Each returns a process
// exit status:
//   0  success
//   1  usage or input error
//   2  well-formed but not certified (or certified run that missed its target)
//   3  falsification: a proven inequality or audited invariant failed

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "relucert/analysis.hpp"
#include "relucert/certificate.hpp"
#include "relucert/config.hpp"
#include "relucert/format.hpp"
#include "relucert/init.hpp"
#include "relucert/io.hpp"
#include "relucert/network.hpp"
#include "relucert/trainer.hpp"

namespace relucert {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitUncertified = 2, kExitFalsified = 3 };

inline constexpr const char* kOutputEnvVar = "RELUCERT_OUT";

/// --out beats $RELUCERT_OUT, which beats the config's `output` key.
inline std::string resolve_output_dir(const std::string& cli_out, const ExperimentConfig& cfg,
                                      const std::string& fallback) {
    if (!cli_out.empty()) return cli_out;
    if (const char* env = std::getenv(kOutputEnvVar); env && *env) return env;
    if (!cfg.output.empty()) return cfg.output;
    return fallback;
}

/// Everything derived from a config before training starts.
struct Experiment {
    Architecture arch;
    Dataset data;
    Params params0;
    std::vector<double> c;
    Certificate cert;
    std::optional<double> beta;       // BetaScaled only
    std::uint64_t base_seed = 0;
    int base_redraws = 0;
    std::optional<LambdaStarEstimate> lambda_star;
    std::string note;
};

inline std::vector<double> c_schedule_for(const ExperimentConfig& cfg, const Architecture& arch) {
    switch (cfg.c_schedule) {
        case CSchedule::Ones: return unit_c_schedule(arch.depth());
        case CSchedule::LeCunDeep: return lecun_deep_config(arch);
        case CSchedule::Explicit: return cfg.c_values;
    }
    return unit_c_schedule(arch.depth());
}

inline Experiment prepare_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    Experiment ex;
    ex.arch = Architecture(cfg.widths);
    if (!cfg.dataset_file.empty()) {
        ex.data = load_file(cfg.dataset_file, [](std::istream& is) { return read_dataset(is); });
        if (ex.data.x.cols() != ex.arch.input_dim() || ex.data.y.cols() != ex.arch.output_dim())
            throw ConfigError("dataset_file: dimensions do not match widths");
    } else {
        ex.data = generate_sphere_data(cfg.samples, ex.arch.input_dim(), ex.arch.output_dim(), cfg.seed);
    }
    ex.c = c_schedule_for(cfg, ex.arch);
    ex.base_seed = cfg.seed;

    if (!cfg.params_file.empty()) {
        ex.params0 = load_file(cfg.params_file, [](std::istream& is) { return read_params(is); });
        check_params(ex.arch, ex.params0);
    } else {
        switch (cfg.init) {
            case InitKind::LeCunTwoLayer: ex.params0 = init_lecun(ex.arch, cfg.seed); break;
            case InitKind::LeCunDeep:
                ex.params0 = init_lecun_deep(ex.arch, cfg.seed, cfg.output_variance_exponent);
                break;
            case InitKind::BetaScaled: {
                Params base;
                if (auto draw = draw_full_rank_base(ex.arch, ex.data, cfg.seed)) {
                    base = std::move(draw->params);
                    ex.base_seed = draw->seed;
                    ex.base_redraws = draw->redraws;
                    ex.beta = cfg.beta ? *cfg.beta : beta_search(ex.arch, base, ex.data, ex.c, cfg.beta_cap);
                } else {
                    base = init_lecun(ex.arch, cfg.seed);
                    ex.beta = cfg.beta.value_or(1.0);
                    ex.note = "no base draw with alpha0 > 0";
                }
                ex.params0 = scale_beta(base, *ex.beta);
                break;
            }
        }
    }

    ex.cert = compute_certificate_base(ex.arch, ex.params0, ex.data, ex.c);
    if (cfg.eta) {
        ex.cert.set_eta(*cfg.eta);
    } else if (ex.cert.eta_max > 0.0 && std::isfinite(ex.cert.eta_max)) {
        ex.cert.set_eta(suggest_eta(ex.cert, cfg.eta_safety));
    } else {
        ex.cert.reason = "eta = auto but eta_max = " + format_double(ex.cert.eta_max) + " is unusable";
    }
    if (cfg.lambda_star_samples > 0)
        ex.lambda_star =
            estimate_lambda_star(ex.data, ex.arch.input_dim(), cfg.lambda_star_samples, cfg.seed);
    return ex;
}

inline void write_experiment_report(std::ostream& os, const Experiment& ex) {
    os << "widths = ";
    for (std::size_t i = 0; i < ex.arch.widths().size(); ++i) os << (i ? "," : "") << ex.arch.widths()[i];
    os << '\n';
    if (ex.beta) os << "beta = " << format_double(*ex.beta) << '\n';
    os << "base_seed = " << ex.base_seed << '\n';
    os << "base_redraws = " << ex.base_redraws << '\n';
    if (ex.lambda_star) {
        os << "lambda_star = " << format_double(ex.lambda_star->value) << '\n';
        os << "lambda_star.samples = " << ex.lambda_star->samples << '\n';
    }
    if (!ex.note.empty()) os << "note = " << ex.note << '\n';
    write_certificate_report(os, ex.cert);
}

inline int cmd_certify(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err,
                       const std::string& out_dir = "") {
    try {
        const Experiment ex = prepare_experiment(cfg);
        write_experiment_report(out, ex);
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            save_file(std::filesystem::path(out_dir) / "certificate.txt", ex,
                      [](std::ostream& os, const Experiment& e) { write_experiment_report(os, e); });
        }
        return ex.cert.certified ? kExitOk : kExitUncertified;
    } catch (const std::exception& e) {
        err << "certify: " << e.what() << '\n';
        return kExitUsage;
    }
}

inline TrainOptions train_options_for(const ExperimentConfig& cfg, double eta) {
    TrainOptions opt;
    opt.eta = eta;
    opt.max_iters = cfg.max_iters;
    opt.target_loss = cfg.target_loss;
    opt.target_loss_rel = cfg.target_loss_rel;
    opt.audit = cfg.audit;
    opt.audit_stride = cfg.audit_stride;
    return opt;
}

inline int train_exit_code(const TrainSummary& s) {
    if (s.falsified()) return kExitFalsified;
    if (s.certified && s.reached_target) return kExitOk;
    return kExitUncertified;
}

inline int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err, const std::string& out_dir) {
    try {
        const Experiment ex = prepare_experiment(cfg);
        if (!(ex.cert.eta > 0.0))
            throw ConfigError(ex.cert.reason + "; set eta explicitly");
        const TrainTrace trace = train(ex.arch, ex.params0, ex.data, train_options_for(cfg, ex.cert.eta), ex.cert);

        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        save_file(dir / "trace.jsonl", trace, [](std::ostream& os, const TrainTrace& t) { write_trace(os, t); });
        save_file(dir / "certificate.txt", ex,
                  [](std::ostream& os, const Experiment& e) { write_experiment_report(os, e); });
        save_file(dir / "dataset.txt", ex.data, [](std::ostream& os, const Dataset& d) { write_dataset(os, d); });
        save_file(dir / "params_init.txt", ex.params0, [](std::ostream& os, const Params& p) { write_params(os, p); });
        save_file(dir / "params_final.txt", trace.final_params,
                  [](std::ostream& os, const Params& p) { write_params(os, p); });

        const TrainSummary& s = trace.summary;
        out << "status = " << (s.certified ? "certified" : "uncertified") << '\n';
        out << "stop_reason = " << s.stop_reason << '\n';
        out << "iterations = " << s.iterations << '\n';
        out << "initial_loss = " << format_double(s.initial_loss) << '\n';
        out << "final_loss = " << format_double(s.final_loss) << '\n';
        out << "invariant_violations = " << s.invariant_violations << '\n';
        out << "auxiliary_violations = " << s.auxiliary_violations << '\n';
        out << "identity_failures = " << s.identity_failures << '\n';
        out << "falsified = " << (s.falsified() ? "true" : "false") << '\n';
        out << "trace = " << (dir / "trace.jsonl").string() << '\n';
        return train_exit_code(s);
    } catch (const std::exception& e) {
        err << "train: " << e.what() << '\n';
        return kExitUsage;
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyResult {
    std::size_t checks = 0;
    std::size_t violations = 0;
    double worst_margin = INFINITY;   // most negative normalized margin seen
    std::vector<std::string> offenders;
};

inline VerifyResult verify_bounds(std::size_t trials, std::uint64_t seed, const TrialDims& dims = {}) {
    VerifyResult r;
    auto absorb = [&](const std::vector<BoundCheck>& checks, const char* what) {
        for (const BoundCheck& c : checks) {
            ++r.checks;
            r.worst_margin = std::min(r.worst_margin, c.margin() / (1.0 + c.rhs));
            if (!c.ok()) {
                ++r.violations;
                r.offenders.push_back(std::string(what) + " layer " + std::to_string(c.layer) + ": " + c.dims +
                                      " lhs " + format_double(c.lhs) + " rhs " + format_double(c.rhs));
            }
        }
    };
    absorb(check_gradient_bound(trials, dims, seed), "gradient");
    absorb(check_lipschitz_bound(trials, dims, Stream::derive(seed, StreamTag::Trial, {0x11b})), "lipschitz");
    return r;
}

inline VerifyResult verify_ntk(std::size_t trials, std::uint64_t seed, const TrialDims& dims = {}) {
    if (trials == 0) throw InvalidArgument("verify: trials must be >= 1");
    VerifyResult r;
    for (std::size_t t = 0; t < trials; ++t) {
        const Trial tr = make_trial(seed, t, dims);
        const NtkReport rep = check_ntk_bound(tr.arch, tr.params, tr.data);
        r.checks += 2;
        r.worst_margin = std::min({r.worst_margin, rep.gram_margin() / (1.0 + std::abs(rep.k_min_eig)),
                                   rep.pl_margin() / (1.0 + rep.pl_lhs)});
        if (!rep.gram_bound_ok()) {
            ++r.violations;
            r.offenders.push_back("ntk-eig: " + tr.describe() + " k_min " + format_double(rep.k_min_eig) +
                                  " gram_min " + format_double(rep.gram_min_eig));
        }
        if (!rep.pl_ok()) {
            ++r.violations;
            r.offenders.push_back("pl: " + tr.describe() + " lhs " + format_double(rep.pl_lhs) + " rhs " +
                                  format_double(rep.pl_rhs));
        }
    }
    return r;
}

/// Descent-identity residual over a few GD steps of random networks.  The
/// step size is scaled to the network so the loss actually moves.
inline VerifyResult verify_descent(std::size_t trials, std::uint64_t seed, const TrialDims& dims = {},
                                   std::size_t steps = 5) {
    if (trials == 0) throw InvalidArgument("verify: trials must be >= 1");
    VerifyResult r;
    for (std::size_t t = 0; t < trials; ++t) {
        const Trial tr = make_trial(seed, t, dims);
        Certificate cert = compute_certificate_base(tr.arch, tr.params, tr.data, unit_c_schedule(tr.arch.depth()));
        double scale = frobenius_norm(tr.data.x);
        for (double n : cert.init_norms) scale *= std::max(n, 1e-3);
        const double eta = 0.1 / (1.0 + scale * scale * static_cast<double>(tr.arch.depth()));
        cert.set_eta(eta);
        Params p = tr.params;
        for (std::size_t s = 0; s < steps; ++s) {
            Params next = gd_step(tr.arch, p, tr.data, eta).params;
            const DescentAudit a = descent_audit(tr.arch, p, next, tr.data, cert);
            const double phi = loss(forward(tr.arch, p, tr.data.x), tr.data.y);
            ++r.checks;
            r.worst_margin = std::min(r.worst_margin, (kAuditSlack * (1.0 + 2.0 * phi) - a.identity_residual) /
                                                          (1.0 + 2.0 * phi));
            if (!a.identity_ok) {
                ++r.violations;
                r.offenders.push_back("descent-identity step " + std::to_string(s) + ": " + tr.describe() +
                                      " residual " + format_double(a.identity_residual));
            }
            p = std::move(next);
        }
    }
    return r;
}

inline int cmd_verify(const std::string& suite, std::size_t trials, std::uint64_t seed, std::ostream& out,
                      std::ostream& err) {
    if (trials == 0) {
        err << "verify: --trials must be >= 1\n";
        return kExitUsage;
    }
    VerifyResult r;
    try {
        if (suite == "lemma1") r = verify_bounds(trials, seed);
        else if (suite == "ntk") r = verify_ntk(trials, seed);
        else if (suite == "descent") r = verify_descent(trials, seed);
        else {
            err << "verify: unknown suite '" << suite << "' (expected ntk, lemma1 or descent)\n";
            return kExitUsage;
        }
    } catch (const std::exception& e) {
        err << "verify: " << e.what() << '\n';
        return kExitUsage;
    }
    out << "suite = " << suite << '\n';
    out << "trials = " << trials << '\n';
    out << "seed = " << seed << '\n';
    out << "checks = " << r.checks << '\n';
    out << "violations = " << r.violations << '\n';
    out << "worst_normalized_margin = " << format_double(r.worst_margin) << '\n';
    for (const std::string& o : r.offenders) out << "violation: " << o << '\n';
    return r.violations == 0 ? kExitOk : kExitFalsified;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SeedOutcome {
    std::size_t seed_index = 0;
    std::uint64_t seed = 0;
    double alpha0 = 0.0;
    double ratio_w = 0.0, ratio_f = 0.0, ratio_s = 0.0;
    bool certified = false;
    bool converged = false;
    std::size_t iterations = 0;
    double final_loss_ratio = NAN;  // Φ_final/Φ₀ when trained
    std::string trace;              // JSONL, certified seeds only
};

struct SweepCell {
    std::size_t samples = 0;
    std::size_t width = 0;  // n_{L-1}
    std::vector<SeedOutcome> seeds;

    double certified_fraction() const {
        if (seeds.empty()) return 0.0;
        return static_cast<double>(std::count_if(seeds.begin(), seeds.end(), [](auto& s) { return s.certified; })) /
               static_cast<double>(seeds.size());
    }
    double converged_fraction() const {
        if (seeds.empty()) return 0.0;
        return static_cast<double>(std::count_if(seeds.begin(), seeds.end(), [](auto& s) { return s.converged; })) /
               static_cast<double>(seeds.size());
    }
};

inline std::uint64_t sweep_cell_seed(std::uint64_t master, std::size_t samples, std::size_t width, std::size_t s) {
    return Stream::derive(master, StreamTag::SweepCell, {samples, width, s});
}

/// Config for one seed of one cell: samples = N, n_{L-1} = width.
inline ExperimentConfig sweep_seed_config(const ExperimentConfig& grid, std::size_t samples, std::size_t width,
                                          std::size_t s) {
    ExperimentConfig c = grid;
    c.samples = samples;
    c.widths[c.widths.size() - 2] = width;
    c.seed = sweep_cell_seed(grid.seed, samples, width, s);
    c.sweep_samples.clear();
    c.sweep_widths.clear();
    c.sweep_seeds = 0;
    c.lambda_star_samples = 0;
    return c;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// One cell, computed independently of every other cell.  A seed counts as
/// converged only when it is certified and training reaches the target.
inline SweepCell run_sweep_cell(const ExperimentConfig& grid, std::size_t samples, std::size_t width) {
    SweepCell cell;
    cell.samples = samples;
    cell.width = width;
    for (std::size_t s = 0; s < grid.sweep_seeds; ++s) {
        const ExperimentConfig c = sweep_seed_config(grid, samples, width, s);
        const Experiment ex = prepare_experiment(c);
        SeedOutcome o;
        o.seed_index = s;
        o.seed = c.seed;
        o.alpha0 = ex.cert.alpha0;
        o.ratio_w = ex.cert.cond_w.ratio();
        o.ratio_f = ex.cert.cond_f.ratio();
        o.ratio_s = ex.cert.cond_s.ratio();
        o.certified = ex.cert.certified;
        if (o.certified) {
            const TrainTrace t = train(ex.arch, ex.params0, ex.data, train_options_for(c, ex.cert.eta), ex.cert);
            o.converged = t.summary.reached_target;
            o.iterations = t.summary.iterations;
            o.final_loss_ratio = t.summary.final_loss / t.summary.initial_loss;
            std::ostringstream os;
            write_trace(os, t);
            o.trace = os.str();
        }
        cell.seeds.push_back(std::move(o));
    }
    return cell;
}

inline std::vector<SweepCell> run_sweep(const ExperimentConfig& grid, unsigned max_threads = 0) {
    validate(grid);
    if (grid.depth() < 2) throw ConfigError("sweep needs depth >= 2");
    if (grid.sweep_widths.empty() || grid.sweep_seeds == 0)
        throw ConfigError("sweep needs sweep_widths and sweep_seeds");
    std::vector<std::size_t> ns = grid.sweep_samples.empty() ? std::vector<std::size_t>{grid.samples} : grid.sweep_samples;
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t n : ns)
        for (std::size_t w : grid.sweep_widths) coords.emplace_back(n, w);
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

    if (max_threads == 0) max_threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<SweepCell> cells(coords.size());
    for (std::size_t start = 0; start < coords.size(); start += max_threads) {
        std::vector<std::future<SweepCell>> batch;
        const std::size_t end = std::min(coords.size(), start + max_threads);
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(std::async(std::launch::async, [&grid, c = coords[i]] {
                return run_sweep_cell(grid, c.first, c.second);
            }));
        for (std::size_t i = start; i < end; ++i) cells[i] = batch[i - start].get();
    }
    return cells;
}

inline void write_sweep_table(std::ostream& os, const std::vector<SweepCell>& cells) {
    os << "samples\twidth\tseeds\tcertified_fraction\tconverged_fraction\tmedian_alpha0\tmedian_ratio_W\t"
          "median_ratio_F\tmedian_ratio_S\n";
    for (const SweepCell& c : cells) {
        std::vector<double> a, w, f, s;
        for (const SeedOutcome& o : c.seeds) {
            a.push_back(o.alpha0);
            w.push_back(o.ratio_w);
            f.push_back(o.ratio_f);
            s.push_back(o.ratio_s);
        }
        os << c.samples << '\t' << c.width << '\t' << c.seeds.size() << '\t' << format_double(c.certified_fraction())
           << '\t' << format_double(c.converged_fraction()) << '\t' << format_double(median(a)) << '\t'
           << format_double(median(w)) << '\t' << format_double(median(f)) << '\t' << format_double(median(s)) << '\n';
    }
}

inline void write_sweep_seeds(std::ostream& os, const std::vector<SweepCell>& cells) {
    os << "samples\twidth\tseed_index\tseed\talpha0\tratio_W\tratio_F\tratio_S\tcertified\tconverged\titerations\t"
          "final_loss_ratio\n";
    for (const SweepCell& c : cells)
        for (const SeedOutcome& o : c.seeds)
            os << c.samples << '\t' << c.width << '\t' << o.seed_index << '\t' << o.seed << '\t'
               << format_double(o.alpha0) << '\t' << format_double(o.ratio_w) << '\t' << format_double(o.ratio_f)
               << '\t' << format_double(o.ratio_s) << '\t' << (o.certified ? 1 : 0) << '\t' << (o.converged ? 1 : 0)
               << '\t' << o.iterations << '\t' << format_double(o.final_loss_ratio) << '\n';
}

inline int cmd_sweep(const ExperimentConfig& grid, std::ostream& out, std::ostream& err, const std::string& out_dir) {
    try {
        const std::vector<SweepCell> cells = run_sweep(grid);
        write_sweep_table(out, cells);
        if (!out_dir.empty()) {
            const std::filesystem::path dir(out_dir);
            std::filesystem::create_directories(dir);
            save_file(dir / "sweep.tsv", cells, [](std::ostream& os, const auto& c) { write_sweep_table(os, c); });
            save_file(dir / "sweep_seeds.tsv", cells, [](std::ostream& os, const auto& c) { write_sweep_seeds(os, c); });
            for (const SweepCell& c : cells)
                for (const SeedOutcome& o : c.seeds)
                    if (!o.trace.empty()) {
                        std::ofstream f(dir / ("trace_n" + std::to_string(c.samples) + "_w" + std::to_string(c.width) +
                                               "_s" + std::to_string(o.seed_index) + ".jsonl"));
                        f << o.trace;
                    }
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "sweep: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace relucert
