#pragma once

// Convergence certificate for full-batch gradient descent.
//
// From the initial weights we compute
//   α₀ = σ_min(F_{L-1}⁰),  λ̄_l = ‖W_l⁰‖₂ + C_l,  λ̄_{i→j} = Π_{l=i..j} λ̄_l
// and check three inequalities at initialization:
//   W:  α₀² ≥ 16‖X‖_F · max_l λ̄_{1→L}/(λ̄_l C_l) · √(2Φ₀)
//   F:  α₀³ ≥ 32‖X‖_F² · λ̄_L · Σ_{l<L} λ̄_{1→L-1}²/λ̄_l² · √(2Φ₀)
//   S:  α₀² ≥ 16‖X‖_F² · λ̄_L² · Σ_{l<L} λ̄_{1→L-1}²/λ̄_l²
// together with n_{L-1} ≥ N and the step-size bound
//   η < min(8/α₀², ‖X‖_F⁻² λ̄_{1→L}⁻² [Σ_{l<L} λ̄_l⁻²] [Σ_{l≤L} λ̄_l⁻²]⁻²).
// When all hold, Φ(θ_k) ≤ (1 − ηα₀²/8)^k Φ(θ₀) for every k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "relucert/format.hpp"
#include "relucert/init.hpp"
#include "relucert/linalg.hpp"
#include "relucert/network.hpp"
#include "relucert/rng.hpp"

namespace relucert {

struct Inequality {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;

    /// lhs/rhs; above 1 means the inequality holds with room to spare.
    double ratio() const { return rhs == 0.0 ? (lhs >= 0.0 ? INFINITY : 0.0) : lhs / rhs; }
};

struct Certificate {
    double alpha0 = 0.0;
    std::vector<double> c;            // C_1..C_L
    std::vector<double> init_norms;   // ‖W_l⁰‖₂
    std::vector<double> lambda_bar;   // λ̄_1..λ̄_L
    double x_norm = 0.0;              // ‖X‖_F
    double initial_loss = 0.0;        // Φ(θ₀)
    std::size_t samples = 0;
    std::size_t last_hidden_width = 0;

    Inequality cond_w;
    Inequality cond_f;
    Inequality cond_s;

    double eta_branch_alpha = INFINITY;  // 8/α₀²
    double eta_branch_lambda = 0.0;      // the λ̄-dependent branch
    double eta_max = 0.0;

    double eta = 0.0;
    double decay_factor = 1.0;  // 1 − ηα₀²/8
    bool certified = false;
    std::string reason;

    std::size_t depth() const noexcept { return lambda_bar.size(); }

    /// λ̄_{i→j} for 1-based inclusive i..j; the empty product (i > j) is 1.
    double lambda_bar_prod(std::size_t i, std::size_t j) const {
        double p = 1.0;
        for (std::size_t l = i; l <= j; ++l) p *= lambda_bar.at(l - 1);
        return p;
    }

    bool width_ok() const noexcept { return last_hidden_width >= samples; }

    bool conditions_hold() const noexcept { return cond_w.holds && cond_f.holds && cond_s.holds; }

    /// Sets the step size and re-derives the η-dependent fields.
    void set_eta(double new_eta) {
        if (!(new_eta > 0.0) || !std::isfinite(new_eta)) throw InvalidArgument("certificate: eta must be positive and finite");
        eta = new_eta;
        decay_factor = 1.0 - eta * alpha0 * alpha0 / 8.0;
        certified = conditions_hold() && eta < eta_max && width_ok();
        if (!width_ok())
            reason = "last hidden width " + std::to_string(last_hidden_width) + " < samples " + std::to_string(samples);
        else if (alpha0 == 0.0)
            reason = "alpha0 = 0";
        else if (!conditions_hold()) {
            reason.clear();
            auto add = [&](const char* name, bool ok) {
                if (ok) return;
                if (!reason.empty()) reason += ", ";
                reason += name;
            };
            add("cond_W", cond_w.holds);
            add("cond_F", cond_f.holds);
            add("cond_S", cond_s.holds);
            reason = "failed " + reason;
        } else if (!(eta < eta_max))
            reason = "eta >= eta_max";
        else
            reason = "certified";
    }
};

/// Evaluates the three conditions and the η bound from scalar summaries.
/// Shared by compute_certificate and beta_search so both read the same formulas.
inline void evaluate_conditions(Certificate& cert) {
    const std::size_t L = cert.lambda_bar.size();
    const double a = cert.alpha0;
    const double xf = cert.x_norm;
    const double s0 = std::sqrt(2.0 * cert.initial_loss);
    const double prod_all = cert.lambda_bar_prod(1, L);
    const double prod_hidden = cert.lambda_bar_prod(1, L - 1);
    const double lam_L = cert.lambda_bar[L - 1];

    double max_w = 0.0;
    for (std::size_t l = 1; l <= L; ++l) max_w = std::max(max_w, prod_all / (cert.lambda_bar[l - 1] * cert.c[l - 1]));

    double hidden_sum = 0.0;      // Σ_{l<L} λ̄_{1→L-1}²/λ̄_l²
    double inv_sq_hidden = 0.0;   // Σ_{l<L} λ̄_l⁻²
    for (std::size_t l = 1; l < L; ++l) {
        const double r = prod_hidden / cert.lambda_bar[l - 1];
        hidden_sum += r * r;
        inv_sq_hidden += 1.0 / (cert.lambda_bar[l - 1] * cert.lambda_bar[l - 1]);
    }
    const double inv_sq_all = inv_sq_hidden + 1.0 / (lam_L * lam_L);

    cert.cond_w.lhs = a * a;
    cert.cond_w.rhs = 16.0 * xf * max_w * s0;
    cert.cond_w.holds = cert.cond_w.lhs >= cert.cond_w.rhs && a > 0.0;

    cert.cond_f.lhs = a * a * a;
    cert.cond_f.rhs = 32.0 * xf * xf * lam_L * hidden_sum * s0;
    cert.cond_f.holds = cert.cond_f.lhs >= cert.cond_f.rhs && a > 0.0;

    cert.cond_s.lhs = a * a;
    cert.cond_s.rhs = 16.0 * xf * xf * lam_L * lam_L * hidden_sum;
    cert.cond_s.holds = cert.cond_s.lhs >= cert.cond_s.rhs && a > 0.0;

    cert.eta_branch_alpha = a > 0.0 ? 8.0 / (a * a) : INFINITY;
    cert.eta_branch_lambda = inv_sq_hidden / (xf * xf * prod_all * prod_all * inv_sq_all * inv_sq_all);
    cert.eta_max = std::min(cert.eta_branch_alpha, cert.eta_branch_lambda);
}

namespace detail {

inline void check_c(const std::vector<double>& c, std::size_t L) {
    if (c.size() != L)
        throw InvalidArgument("certificate: expected " + std::to_string(L) + " C_l values, got " + std::to_string(c.size()));
    for (double v : c)
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("certificate: every C_l must be positive and finite");
}

}  // namespace detail

/// Certificate with every quantity computed from θ₀ but no step size chosen
/// yet (eta = 0, never certified until set_eta).
inline Certificate compute_certificate_base(const Architecture& arch, const Params& params0, const Dataset& data,
                                            const std::vector<double>& c) {
    detail::check_c(c, arch.depth());
    const FeatureCache cache = forward(arch, params0, data.x);
    Certificate cert;
    cert.c = c;
    cert.samples = data.samples();
    cert.last_hidden_width = arch.last_hidden_width();
    const Matrix& f = cache.last_hidden();
    cert.alpha0 = f.rows() <= f.cols() ? smallest_singular_value(f) : 0.0;
    for (std::size_t l = 1; l <= arch.depth(); ++l) {
        cert.init_norms.push_back(spectral_norm(params0.layer(l)));
        cert.lambda_bar.push_back(cert.init_norms.back() + c[l - 1]);
    }
    cert.x_norm = frobenius_norm(data.x);
    cert.initial_loss = loss(cache, data.y);
    evaluate_conditions(cert);
    return cert;
}

inline Certificate compute_certificate(const Architecture& arch, const Params& params0, const Dataset& data,
                                       const std::vector<double>& c, double eta) {
    if (!(eta > 0.0)) throw InvalidArgument("compute_certificate: eta must be positive");
    Certificate cert = compute_certificate_base(arch, params0, data, c);
    cert.set_eta(eta);
    return cert;
}

/// safety · eta_max, strictly below both branches of the bound.
inline double suggest_eta(const Certificate& cert, double safety = 0.9) {
    if (!(safety > 0.0 && safety < 1.0)) throw InvalidArgument("suggest_eta: safety must lie in (0, 1)");
    if (!(cert.eta_max > 0.0) || !std::isfinite(cert.eta_max))
        throw InvalidArgument("suggest_eta: eta_max is not finite and positive (" + format_double(cert.eta_max) + ")");
    return safety * cert.eta_max;
}

/// Q₁ = ‖X‖_F² λ̄_{1→L}² Σ_{l≤L} λ̄_l⁻²: bounds ‖F_L^{k+1} − F_L^k‖_F ≤ ηQ₁‖F_L^k − Y‖_F.
inline double proof_q1(const Certificate& cert) {
    const std::size_t L = cert.depth();
    const double p = cert.lambda_bar_prod(1, L);
    double s = 0.0;
    for (double lb : cert.lambda_bar) s += 1.0 / (lb * lb);
    return cert.x_norm * cert.x_norm * p * p * s;
}

/// Q₂ = ‖X‖_F² λ̄_{1→L-1}² λ̄_L² Σ_{l<L} λ̄_l⁻²: bounds the cross term by ηQ₂‖F_L^k − Y‖_F².
inline double proof_q2(const Certificate& cert) {
    const std::size_t L = cert.depth();
    const double p = cert.lambda_bar_prod(1, L - 1);
    const double lL = cert.lambda_bar[L - 1];
    double s = 0.0;
    for (std::size_t l = 1; l < L; ++l) s += 1.0 / (cert.lambda_bar[l - 1] * cert.lambda_bar[l - 1]);
    return cert.x_norm * cert.x_norm * p * p * lL * lL * s;
}

// ---------------------------------------------------------------------------
// β-search
// ---------------------------------------------------------------------------

/// Scalar summary of a base draw; enough to evaluate the certificate of any
/// β-scaled version without another forward pass.
struct BetaProbe {
    double alpha0_base = 0.0;
    std::vector<double> hidden_norms;  // ‖W_l⁰‖₂, l < L
    double x_norm = 0.0;
    double y_norm = 0.0;
    std::vector<double> c;
    std::size_t samples = 0;
    std::size_t last_hidden_width = 0;

    /// Certificate (without η) of scale_beta(base, beta).  Uses α₀(β) =
    /// β^{L-1}α₀, λ̄_l = β‖W_l⁰‖₂ + C_l (l < L), λ̄_L = C_L, √(2Φ₀) = ‖Y‖_F.
    Certificate at(double beta) const {
        const std::size_t L = c.size();
        Certificate cert;
        cert.c = c;
        cert.samples = samples;
        cert.last_hidden_width = last_hidden_width;
        cert.alpha0 = std::pow(beta, static_cast<double>(L - 1)) * alpha0_base;
        for (std::size_t l = 1; l < L; ++l) {
            cert.init_norms.push_back(beta * hidden_norms[l - 1]);
            cert.lambda_bar.push_back(cert.init_norms.back() + c[l - 1]);
        }
        cert.init_norms.push_back(0.0);
        cert.lambda_bar.push_back(c[L - 1]);
        cert.x_norm = x_norm;
        cert.initial_loss = 0.5 * y_norm * y_norm;
        evaluate_conditions(cert);
        return cert;
    }
};

inline BetaProbe make_beta_probe(const Architecture& arch, const Params& base, const Dataset& data,
                                 const std::vector<double>& c) {
    detail::check_c(c, arch.depth());
    check_params(arch, base);
    BetaProbe probe;
    probe.alpha0_base = alpha0(arch, base, data.x);
    for (std::size_t l = 1; l < arch.depth(); ++l) probe.hidden_norms.push_back(spectral_norm(base.layer(l)));
    probe.x_norm = frobenius_norm(data.x);
    probe.y_norm = frobenius_norm(data.y);
    probe.c = c;
    probe.samples = data.samples();
    probe.last_hidden_width = arch.last_hidden_width();
    return probe;
}

/// Smallest β (to 1% relative) for which scale_beta(base, β) satisfies all
/// three conditions.  Doubling from β = 1, then geometric bisection; the
/// returned value sits a hair (1e-6 relative) above the bisection's upper
/// bracket so the conditions hold with a margin above roundoff.
inline double beta_search(const Architecture& arch, const Params& base, const Dataset& data,
                          const std::vector<double>& c, double beta_hi_cap = 1e12) {
    const BetaProbe probe = make_beta_probe(arch, base, data, c);
    if (!(probe.alpha0_base > 0.0)) throw InvalidArgument("beta_search: base weights have alpha0 = 0");
    if (arch.depth() < 2) throw InvalidArgument("beta_search: needs depth >= 2 (no hidden layer to scale)");
    auto ok = [&](double b) { return probe.at(b).conditions_hold(); };

    if (ok(1.0)) return 1.0;
    double lo = 1.0, hi = 2.0;
    while (!ok(hi)) {
        lo = hi;
        hi *= 2.0;
        if (hi > beta_hi_cap) throw ConvergenceError("beta_search: cap " + format_double(beta_hi_cap) + " exceeded", lo);
    }
    while (hi / lo > 1.005) {
        const double mid = std::sqrt(lo * hi);
        if (ok(mid)) hi = mid;
        else lo = mid;
    }
    return hi * (1.0 + 1e-6);
}

// ---------------------------------------------------------------------------
// λ_* and C schedules
// ---------------------------------------------------------------------------

struct LambdaStarEstimate {
    double value = 0.0;
    std::size_t samples = 0;
    std::string confidence_note;
};

/// λ_min of the Monte-Carlo mean of relu(Xw)relu(Xw)ᵀ with w ~ N(0, I/n0).
inline LambdaStarEstimate estimate_lambda_star(const Dataset& data, std::size_t n0, std::size_t samples,
                                               std::uint64_t seed) {
    if (samples == 0) throw InvalidArgument("estimate_lambda_star: samples must be >= 1");
    if (data.x.cols() != n0) throw InvalidArgument("estimate_lambda_star: n0 does not match the data");
    const std::size_t N = data.samples();
    Matrix acc(N, N);
    std::vector<double> h(N);
    const double sd = 1.0 / std::sqrt(static_cast<double>(n0));
    Stream s(seed, StreamTag::LambdaStar);
    std::vector<double> w(n0);
    for (std::size_t m = 0; m < samples; ++m) {
        for (double& v : w) v = sd * s.normal();
        for (std::size_t i = 0; i < N; ++i) {
            const auto xi = data.x.row(i);
            double z = 0.0;
            for (std::size_t j = 0; j < n0; ++j) z += xi[j] * w[j];
            h[i] = z > 0.0 ? z : 0.0;
        }
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) acc(i, j) += h[i] * h[j];
    }
    acc = (1.0 / static_cast<double>(samples)) * acc;
    LambdaStarEstimate est;
    est.value = std::max(0.0, jacobi_eigenvalues(acc).front());
    est.samples = samples;
    est.confidence_note = "Monte-Carlo mean over " + std::to_string(samples) +
                          " draws; sampling error shrinks like 1/sqrt(samples)";
    return est;
}

/// C_l = 1 for all layers.
inline std::vector<double> unit_c_schedule(std::size_t depth) { return std::vector<double>(depth, 1.0); }

/// The deep LeCun schedule: C_l = 1 for l ≤ L-2, C_{L-1} = n_{L-1}^{1/2},
/// C_L = n_{L-1}^{-1/6}.
inline std::vector<double> lecun_deep_config(const Architecture& arch) {
    const std::size_t L = arch.depth();
    if (L < 2) throw InvalidArgument("lecun_deep_config: needs depth >= 2");
    const double n = static_cast<double>(arch.last_hidden_width());
    std::vector<double> c(L, 1.0);
    c[L - 2] = std::sqrt(n);
    c[L - 1] = std::pow(n, -1.0 / 6.0);
    return c;
}

/// Two-layer LeCun analysis uses C₁ = C₂ = 1.
inline std::vector<double> two_layer_config() { return {1.0, 1.0}; }

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline void write_certificate_report(std::ostream& os, const Certificate& cert) {
    auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
    auto list = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
        return s;
    };
    auto ineq = [&](const std::string& name, const Inequality& q) {
        kv(name + ".lhs", format_double(q.lhs));
        kv(name + ".rhs", format_double(q.rhs));
        kv(name + ".ratio", format_double(q.ratio()));
        kv(name + ".holds", q.holds ? "true" : "false");
    };
    kv("certificate.version", "1");
    kv("samples", std::to_string(cert.samples));
    kv("last_hidden_width", std::to_string(cert.last_hidden_width));
    kv("alpha0", format_double(cert.alpha0));
    kv("x_norm", format_double(cert.x_norm));
    kv("initial_loss", format_double(cert.initial_loss));
    kv("c", list(cert.c));
    kv("init_norms", list(cert.init_norms));
    kv("lambda_bar", list(cert.lambda_bar));
    kv("lambda_bar_prod", format_double(cert.lambda_bar_prod(1, cert.depth())));
    ineq("cond_W", cert.cond_w);
    ineq("cond_F", cert.cond_f);
    ineq("cond_S", cert.cond_s);
    kv("eta_branch_alpha", format_double(cert.eta_branch_alpha));
    kv("eta_branch_lambda", format_double(cert.eta_branch_lambda));
    kv("eta_max", format_double(cert.eta_max));
    kv("eta", format_double(cert.eta));
    kv("decay_factor", format_double(cert.decay_factor));
    kv("width_ok", cert.width_ok() ? "true" : "false");
    kv("certified", cert.certified ? "true" : "false");
    kv("reason", cert.reason);
}

}  // namespace relucert
