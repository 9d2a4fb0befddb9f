// Acceptance checks.  One PASS/FAIL line per criterion, with indented detail
// lines underneath.  Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace relucert;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void note(const std::string& s) { details.push_back(s); }
    void require(bool ok, const std::string& s) {
        pass = pass && ok;
        details.push_back(std::string(ok ? "ok   " : "FAIL ") + s);
    }
};

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// Shared runs
// ---------------------------------------------------------------------------

constexpr std::uint64_t kSeed = 20240601;

ExperimentConfig beta_config() {
    return parse_config_string(
        "seed = 20240601\n"
        "widths = 10,12,32,1\n"
        "samples = 20\n"
        "init = beta_scaled\n"
        "beta = auto\n"
        "c_schedule = ones\n"
        "eta = auto\n"
        "eta_safety = 0.9\n"
        "max_iters = 10000\n"
        "target_loss_rel = 1e-8\n"
        "lambda_star_samples = 0\n");
}

ExperimentConfig width_grid() {
    return parse_config_string(
        "seed = 7\n"
        "widths = 16,16,1\n"
        "samples = 16\n"
        "init = lecun\n"
        "c_schedule = ones\n"
        "eta = auto\n"
        "eta_safety = 0.9\n"
        "max_iters = 2000\n"
        "target_loss_rel = 1e-6\n"
        "lambda_star_samples = 0\n"
        "sweep_samples = 16\n"
        "sweep_widths = 16,64,256,1024\n"
        "sweep_seeds = 20\n");
}

struct BetaRun {
    Experiment ex;
    TrainTrace trace;
    std::string trace_text;
};

BetaRun run_beta() {
    const ExperimentConfig cfg = beta_config();
    BetaRun r{prepare_experiment(cfg), {}, {}};
    if (r.ex.cert.eta > 0.0) r.trace = train(r.ex.arch, r.ex.params0, r.ex.data, train_options_for(cfg, r.ex.cert.eta), r.ex.cert);
    std::ostringstream os;
    write_trace(os, r.trace);
    r.trace_text = os.str();
    return r;
}

std::string sweep_bytes(const std::vector<SweepCell>& cells) {
    std::ostringstream os;
    write_sweep_table(os, cells);
    write_sweep_seeds(os, cells);
    for (const auto& c : cells)
        for (const auto& s : c.seeds) os << s.trace;
    return os.str();
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Outcome proven_inequalities() {
    Outcome o;
    const TrialDims dims;  // L in {1,2,3,4}, N <= 16, widths <= 64
    auto tally = [&](const std::vector<BoundCheck>& checks, const std::string& name) {
        std::size_t bad = 0;
        double worst = INFINITY;
        for (const BoundCheck& c : checks) {
            bad += !c.ok();
            worst = std::min(worst, c.margin() / (1.0 + c.rhs));
        }
        o.require(bad == 0, name + ": " + std::to_string(checks.size()) + " checks, " + std::to_string(bad) +
                                " violations, worst normalized margin " + fmt(worst));
    };
    tally(check_gradient_bound(1000, dims, 101), "gradient-norm bound (1000 trials)");
    tally(check_lipschitz_bound(1000, dims, 102), "feature Lipschitz bound (1000 trial pairs)");

    std::size_t bad_k = 0, bad_pl = 0, bad_psd = 0;
    double worst_k = INFINITY, worst_pl = INFINITY;
    for (std::size_t t = 0; t < 1000; ++t) {
        const Trial tr = make_trial(103, t, dims);
        const NtkReport r = check_ntk_bound(tr.arch, tr.params, tr.data);
        bad_k += !r.gram_bound_ok();
        bad_pl += !r.pl_ok();
        worst_k = std::min(worst_k, r.gram_margin() / (1.0 + std::abs(r.k_min_eig)));
        worst_pl = std::min(worst_pl, r.pl_margin() / (1.0 + r.pl_lhs));
        double trace = 0.0;
        for (double b : r.block_traces) trace += b;
        bad_psd += r.k_min_eig < -1e-8 * (1.0 + trace);
    }
    o.require(bad_k == 0, "kernel eigenvalue vs feature Gram (1000 nets): " + std::to_string(bad_k) +
                              " violations, worst normalized margin " + fmt(worst_k));
    o.require(bad_pl == 0, "gradient PL-type bound (1000 nets): " + std::to_string(bad_pl) +
                               " violations, worst normalized margin " + fmt(worst_pl));
    o.require(bad_psd == 0, "kernel PSD: " + std::to_string(bad_psd) + " violations");
    return o;
}

Outcome gradient_correctness() {
    Outcome o;
    TrialDims dims;
    dims.max_samples = 8;
    dims.max_width = 12;
    dims.max_outputs = 3;
    const double h = 1e-6;
    double worst_grad = 0.0, worst_ntk = 0.0;
    std::size_t configs = 0, discarded = 0, idx = 0;
    while (configs < 100) {
        const Trial tr = testutil::kink_free_trial(201, idx, dims);
        ++idx;
        const auto w = oracle::dense_params(tr.params);
        const auto x = oracle::to_dense(tr.data.x);
        const auto fd = oracle::fd_gradient(w, x, oracle::to_dense(tr.data.y), h);
        const auto jac = oracle::fd_jacobian(w, x, h);
        if (fd.kink || jac.kink) {
            ++discarded;
            continue;
        }
        ++configs;
        const GradientSet g = gradients(tr.arch, tr.params, forward(tr.arch, tr.params, tr.data.x), tr.data.y);
        for (std::size_t l = 1; l <= tr.arch.depth(); ++l) {
            double scale = 0.0;
            for (double v : g.layer(l).values()) scale = std::max(scale, std::abs(v));
            for (std::size_t i = 0; i < g.layer(l).rows(); ++i)
                for (std::size_t j = 0; j < g.layer(l).cols(); ++j) {
                    const double got = g.layer(l)(i, j), want = fd.grad[l - 1][i][j];
                    const double denom = std::max({std::abs(got), std::abs(want), 1e-3 * scale});
                    if (denom > 0.0) worst_grad = std::max(worst_grad, std::abs(got - want) / denom);
                }
        }
        const Matrix k_fd = oracle::from_dense(oracle::matmul(jac.jac, oracle::transpose(jac.jac)));
        const Matrix k = assemble_ntk(tr.arch, tr.params, tr.data);
        const double denom = frobenius_norm(k_fd);
        if (denom > 0.0) worst_ntk = std::max(worst_ntk, frobenius_norm(k - k_fd) / denom);
        else worst_ntk = std::max(worst_ntk, frobenius_norm(k));
    }
    o.note("100 kink-free configurations (" + std::to_string(discarded) +
           " draws discarded because a finite-difference probe crossed a kink), step " + fmt(h));
    o.require(worst_grad < 1e-5, "backprop vs central differences: max per-entry relative error " + fmt(worst_grad) +
                                     " < 1e-5");
    o.require(worst_ntk < 1e-4, "kernel vs FD-Jacobian outer product: max relative error " + fmt(worst_ntk) + " < 1e-4");
    return o;
}

Outcome descent_identity(const BetaRun& run) {
    Outcome o;
    auto audit = [&](const TrainTrace& t, const std::string& name) {
        std::size_t steps = 0, bad = 0;
        double worst = 0.0;
        for (const auto& r : t.records)
            if (r.descent) {
                ++steps;
                const double ratio = r.descent->identity_residual / (1.0 + 2.0 * r.loss);
                worst = std::max(worst, ratio);
                bad += !(r.descent->identity_residual <= 1e-9 * (1.0 + 2.0 * r.loss));
            }
        o.require(steps >= 500 && bad == 0, name + ": " + std::to_string(steps) + " audited steps, " +
                                                std::to_string(bad) + " failures, max residual/(1+2 loss) " + fmt(worst));
    };
    audit(run.trace, "certified three-layer run");

    // A run whose loss moves substantially every step.
    const Architecture a({10, 64, 24, 1});
    const Dataset d = generate_sphere_data(20, 10, 1, kSeed);
    TrainOptions opt;
    opt.eta = 2e-3;
    opt.max_iters = 500;
    opt.target_loss = 0.0;
    const TrainTrace t = train(a, init_lecun(a, kSeed), d, opt);
    audit(t, "LeCun three-layer run, eta 2e-3 (loss " + fmt(t.summary.initial_loss) + " -> " +
                 fmt(t.summary.final_loss) + ")");
    return o;
}

Outcome end_to_end(const BetaRun& run) {
    Outcome o;
    const Certificate& c = run.ex.cert;
    const TrainSummary& s = run.trace.summary;
    o.note("beta = " + fmt(*run.ex.beta) + ", alpha0 = " + fmt(c.alpha0) + ", eta = " + fmt(c.eta) + " (0.9 eta_max)");
    o.note("certified per-step rate eta*alpha0^2/8 = " + fmt(c.eta * c.alpha0 * c.alpha0 / 8.0));
    o.require(c.certified, "certificate valid (cond_W ratio " + fmt(c.cond_w.ratio()) + ", cond_F ratio " +
                               fmt(c.cond_f.ratio()) + ", cond_S ratio " + fmt(c.cond_s.ratio()) + ")");
    std::size_t inv_bad = 0, env_bad = 0;
    for (const auto& r : run.trace.records) {
        inv_bad += !(r.audited && r.invariants_ok());
        env_bad += !(r.loss <= r.envelope * (1.0 + kAuditSlack));
    }
    o.require(s.iterations >= 500 && inv_bad == 0,
              "weight-norm, sigma_min and loss invariants at all " + std::to_string(run.trace.records.size()) +
                  " iterates: " + std::to_string(inv_bad) + " failures");
    o.require(env_bad == 0, "loss <= (1 - eta alpha0^2/8)^k loss_0 at every k: " + std::to_string(env_bad) + " failures");
    const double ratio = s.final_loss / s.initial_loss;
    o.require(ratio <= 1e-8, "final loss / initial loss = " + fmt(ratio) + " after " + std::to_string(s.iterations) +
                                 " iterations (need <= 1e-8)");
    if (ratio > 1e-8) {
        const double rate = c.eta * c.alpha0 * c.alpha0 / 8.0;
        o.note("at the certified rate, reaching 1e-8 takes about " + fmt(std::log(1e8) / rate) +
               " iterations; the certified step size is too small for this clause at desk scale");
    }
    return o;
}

Outcome proof_bounds(const BetaRun& run) {
    Outcome o;
    std::size_t steps = 0, bad_move = 0, bad_cross = 0, bad_descent = 0, not_applicable = 0;
    double worst_move = 0.0, worst_cross = -INFINITY, worst_descent = -INFINITY;
    for (const auto& r : run.trace.records) {
        if (!r.descent) continue;
        const DescentAudit& d = *r.descent;
        ++steps;
        bad_move += !d.bound_move.holds;
        bad_cross += !d.bound_cross.holds;
        not_applicable += !d.descent_applicable;
        bad_descent += d.descent_applicable && !d.bound_descent.holds;
        worst_move = std::max(worst_move, d.bound_move.ratio());
        worst_cross = std::max(worst_cross, d.bound_cross.lhs - d.bound_cross.rhs);
        worst_descent = std::max(worst_descent, d.bound_descent.lhs - d.bound_descent.rhs);
    }
    o.require(steps >= 500, std::to_string(steps) + " audited steps");
    o.require(bad_move == 0, "output movement bound: " + std::to_string(bad_move) + " failures, max lhs/rhs " + fmt(worst_move));
    o.require(bad_cross == 0, "cross-term bound: " + std::to_string(bad_cross) + " failures, max lhs - rhs " + fmt(worst_cross));
    o.require(bad_descent == 0 && not_applicable == 0,
              "descent-term bound: " + std::to_string(bad_descent) + " failures, " + std::to_string(not_applicable) +
                  " steps without the sigma_min precondition, max lhs - rhs " + fmt(worst_descent));
    return o;
}

Outcome oracle_equivalence() {
    Outcome o;
    Stream s(601);
    double worst_spec = 0.0, worst_min = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t rows = s.uniform_int(1, 64);
        const std::size_t cols = s.uniform_int(rows, 256);
        const Matrix a = testutil::random_matrix(rows, cols, s);
        const std::vector<double> sv = oracle::singular_values(a);
        worst_spec = std::max({worst_spec, testutil::rel_err(spectral_norm(a), sv.front()),
                               testutil::rel_err(spectral_norm(transpose(a)), sv.front())});
        worst_min = std::max(worst_min, testutil::rel_err(smallest_singular_value(a), sv.back()));
    }
    o.require(worst_spec < 1e-8, "spectral norm vs one-sided Jacobi SVD: max relative error " + fmt(worst_spec));
    o.require(worst_min < 1e-8, "smallest singular value vs one-sided Jacobi SVD: max relative error " + fmt(worst_min));
    return o;
}

Outcome width_trend(const std::vector<SweepCell>& cells) {
    Outcome o;
    std::ostringstream table;
    write_sweep_table(table, cells);
    std::istringstream lines(table.str());
    for (std::string line; std::getline(lines, line);) o.note(line);
    bool cert_ok = true, conv_ok = true;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        cert_ok = cert_ok && cells[i].certified_fraction() >= cells[i - 1].certified_fraction();
        conv_ok = conv_ok && cells[i].converged_fraction() >= cells[i - 1].converged_fraction();
    }
    o.require(cells.size() == 4, "four cells at N = 16");
    o.require(cert_ok, "certified fraction non-decreasing in hidden width");
    o.require(conv_ok, "converged fraction non-decreasing in hidden width");
    return o;
}

Outcome determinism(const BetaRun& first, const std::string& sweep_first) {
    Outcome o;
    const BetaRun again = run_beta();
    o.require(!first.trace_text.empty() && again.trace_text == first.trace_text,
              "three-layer trace byte-identical on rerun (" + std::to_string(first.trace_text.size()) + " bytes)");
    const std::string sweep_again = sweep_bytes(run_sweep(width_grid()));
    o.require(sweep_again == sweep_first,
              "width sweep tables and traces byte-identical on rerun (" + std::to_string(sweep_first.size()) + " bytes)");
    return o;
}

}  // namespace

int main() {
    using clock = std::chrono::steady_clock;
    int failures = 0;
    auto report = [&](int id, const std::string& name, double budget_s, const std::function<Outcome()>& f) {
        const auto t0 = clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(clock::now() - t0).count();
        if (budget_s > 0.0) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "runtime %.1f s (budget %.0f s)", secs, budget_s);
            o.require(secs < budget_s, buf);
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << '\n';
        for (const std::string& d : o.details) std::cout << "    " << d << '\n';
        std::cout.flush();
    };

    report(1, "proven-inequality suite", 120, proven_inequalities);
    report(2, "gradient and kernel correctness", 120, gradient_correctness);

    BetaRun beta;
    const auto t0 = clock::now();
    beta = run_beta();
    const double beta_secs = std::chrono::duration<double>(clock::now() - t0).count();
    report(3, "descent-decomposition identity", 0, [&] { return descent_identity(beta); });
    report(4, "beta-scaled three-layer run end to end", 0, [&] {
        Outcome o = end_to_end(beta);
        char buf[96];
        std::snprintf(buf, sizeof buf, "runtime %.1f s (budget 300 s)", beta_secs);
        o.require(beta_secs < 300.0, buf);
        return o;
    });
    report(5, "per-step proof bounds", 0, [&] { return proof_bounds(beta); });
    report(6, "spectral norm and smallest singular value vs dense SVD", 0, oracle_equivalence);

    std::string sweep_first;
    report(7, "width trend, LeCun two-layer, N = 16", 900, [&] {
        const auto cells = run_sweep(width_grid());
        sweep_first = sweep_bytes(cells);
        return width_trend(cells);
    });
    report(8, "determinism", 0, [&] { return determinism(beta, sweep_first); });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
