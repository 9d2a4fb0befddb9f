#pragma once

// Full-batch gradient descent with a per-iteration audit of the convergence
// proof's induction invariants:
//   (i)   ‖W_l^k‖₂ ≤ λ̄_l                       for every layer
//   (ii)  σ_min(F_{L-1}^k) ≥ α₀/2
//   (iii) Φ(θ_k) ≤ (1 − ηα₀²/8)^k Φ(θ₀)
// and of the one-step descent decomposition through G = F_{L-1}^k W_L^{k+1}:
//   2Φ(θ_{k+1}) = 2Φ(θ_k) + ‖F_L^{k+1} − F_L^k‖² + 2tr((F_L^{k+1} − G)(F_L^k − Y)ᵀ)
//                                             + 2tr((G − F_L^k)(F_L^k − Y)ᵀ).

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relucert/certificate.hpp"
#include "relucert/init.hpp"
#include "relucert/linalg.hpp"
#include "relucert/network.hpp"

namespace relucert {

/// Relative slack applied to every audited inequality.
inline constexpr double kAuditSlack = 1e-9;

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepResult {
    Params params;
    GradientSet grads;
};

namespace detail {

inline StepResult apply_step(const Params& params, GradientSet grads, double eta) {
    for (std::size_t l = 1; l <= grads.grads.size(); ++l)
        if (!grads.layer(l).all_finite())
            throw NumericalError("gd_step: non-finite gradient in layer " + std::to_string(l));
    Params next = params;
    for (std::size_t l = 1; l <= next.depth(); ++l) {
        auto w = next.layer(l).values();
        auto g = grads.layer(l).values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * g[i];
        if (!next.layer(l).all_finite())
            throw NumericalError("gd_step: weights of layer " + std::to_string(l) + " became non-finite");
    }
    return {std::move(next), std::move(grads)};
}

}  // namespace detail

/// θ_{k+1} = θ_k − η∇Φ(θ_k); all layers use gradients taken at θ_k.
inline StepResult gd_step(const Architecture& arch, const Params& params, const Dataset& data, double eta) {
    if (!(eta > 0.0)) throw InvalidArgument("gd_step: eta must be positive");
    const FeatureCache cache = forward(arch, params, data.x);
    return detail::apply_step(params, gradients(arch, params, cache, data.y), eta);
}

// ---------------------------------------------------------------------------
// Descent audit
// ---------------------------------------------------------------------------

struct DescentAudit {
    double q1 = 0.0;
    double q2 = 0.0;
    double term_move = 0.0;     // ‖F_L^{k+1} − F_L^k‖_F²
    double term_cross = 0.0;    // 2tr((F_L^{k+1} − G)(F_L^k − Y)ᵀ)
    double term_descent = 0.0;  // 2tr((G − F_L^k)(F_L^k − Y)ᵀ)
    double identity_residual = 0.0;
    bool identity_ok = false;

    Inequality bound_move;     // ‖F_L^{k+1} − F_L^k‖_F ≤ ηQ₁‖F_L^k − Y‖_F
    Inequality bound_cross;    // tr(...) ≤ ηQ₂‖F_L^k − Y‖_F²
    Inequality bound_descent;  // tr(...) ≤ −η(α₀²/4)‖F_L^k − Y‖_F²
    bool descent_applicable = false;  // σ_min(F_{L-1}^k) ≥ α₀/2

    bool bounds_ok() const {
        return bound_move.holds && bound_cross.holds && (!descent_applicable || bound_descent.holds);
    }
};

namespace detail {

inline Inequality upper_bound(double lhs, double rhs) {
    return {lhs, rhs, lhs <= rhs + kAuditSlack * std::abs(rhs)};
}

inline DescentAudit descent_audit_cached(const Params& params_k, const Params& params_k1, const FeatureCache& ck,
                                         const FeatureCache& ck1, const Matrix& y, const Certificate& cert, double eta,
                                         double sigma_min_k) {
    const std::size_t L = params_k.depth();
    DescentAudit a;
    a.q1 = proof_q1(cert);
    a.q2 = proof_q2(cert);

    const Matrix resid = ck.output() - y;
    const double resid_norm = frobenius_norm(resid);
    const double phi_k = 0.5 * resid_norm * resid_norm;
    const double phi_k1 = loss(ck1, y);

    const Matrix move = ck1.output() - ck.output();
    // F_L^{k+1} − G = (F_{L-1}^{k+1} − F_{L-1}^k) W_L^{k+1}
    const Matrix cross = matmul(ck1.last_hidden() - ck.last_hidden(), params_k1.layer(L));
    // G − F_L^k = F_{L-1}^k (W_L^{k+1} − W_L^k)
    const Matrix desc = matmul(ck.last_hidden(), params_k1.layer(L) - params_k.layer(L));

    const double move_norm = frobenius_norm(move);
    a.term_move = move_norm * move_norm;
    a.term_cross = 2.0 * frobenius_dot(cross, resid);
    a.term_descent = 2.0 * frobenius_dot(desc, resid);
    a.identity_residual = std::abs(2.0 * phi_k1 - 2.0 * phi_k - a.term_move - a.term_cross - a.term_descent);
    a.identity_ok = a.identity_residual <= kAuditSlack * (1.0 + 2.0 * phi_k);

    const double r2 = resid_norm * resid_norm;
    a.bound_move = upper_bound(move_norm, eta * a.q1 * resid_norm);
    a.bound_cross = upper_bound(0.5 * a.term_cross, eta * a.q2 * r2);
    a.bound_descent = upper_bound(0.5 * a.term_descent, -eta * cert.alpha0 * cert.alpha0 / 4.0 * r2);
    a.descent_applicable = sigma_min_k >= 0.5 * cert.alpha0 * (1.0 - kAuditSlack);
    return a;
}

inline double last_hidden_sigma_min(const FeatureCache& c) {
    const Matrix& f = c.last_hidden();
    return f.rows() <= f.cols() ? smallest_singular_value(f) : 0.0;
}

}  // namespace detail

/// Audits one GD step params_k → params_k1.  Q₁, Q₂, α₀ come from `cert`,
/// the step size from `cert.eta`.
inline DescentAudit descent_audit(const Architecture& arch, const Params& params_k, const Params& params_k1,
                                  const Dataset& data, const Certificate& cert) {
    const FeatureCache ck = forward(arch, params_k, data.x);
    const FeatureCache ck1 = forward(arch, params_k1, data.x);
    return detail::descent_audit_cached(params_k, params_k1, ck, ck1, data.y, cert, cert.eta,
                                        detail::last_hidden_sigma_min(ck));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    double eta = 0.0;
    std::size_t max_iters = 10000;
    /// Absolute loss target; when unset, target_loss_rel · Φ(θ₀) is used.
    std::optional<double> target_loss;
    double target_loss_rel = 1e-10;
    bool audit = true;
    std::size_t audit_stride = 1;
};

struct IterationRecord {
    std::size_t k = 0;
    double loss = 0.0;
    double envelope = 0.0;
    bool audited = false;
    double sigma_min = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> spectral_norms;
    std::vector<double> displacement;   // ‖W_l^k − W_l⁰‖_F
    std::vector<double> grad_norms;     // ‖∇_{W_l}Φ(θ_k)‖_F
    bool inv_weights = true;
    bool inv_sigma = true;
    bool inv_loss = true;
    bool inv_displacement = true;
    bool contraction = true;            // Φ_k ≤ (1 − ηα₀²/8)Φ_{k-1}
    std::optional<DescentAudit> descent;  // audit of the step k → k+1

    bool invariants_ok() const { return inv_weights && inv_sigma && inv_loss; }
};

struct TrainSummary {
    std::size_t iterations = 0;  // number of GD steps taken
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double target_loss = 0.0;
    bool reached_target = false;
    double eta = 0.0;
    double alpha0 = 0.0;
    double decay_factor = 1.0;
    bool certified = false;
    std::size_t invariant_violations = 0;   // records with any of (i)-(iii) false
    std::size_t auxiliary_violations = 0;   // displacement, contraction, descent bounds
    std::size_t identity_failures = 0;
    double max_identity_ratio = 0.0;        // max residual / (1 + 2Φ_k)
    std::string stop_reason;

    /// A violated invariant under a valid certificate contradicts the convergence guarantee.
    bool falsified() const { return certified && (invariant_violations + auxiliary_violations + identity_failures) > 0; }
};

struct TrainTrace {
    std::vector<IterationRecord> records;
    TrainSummary summary;
    Params final_params;
};

/// ρ^k·Φ₀ with ρ = 1 − ηα₀²/8, accurate when ηα₀²/8 is far below machine epsilon of 1.
inline double loss_envelope(double phi0, double eta, double alpha0, std::size_t k) {
    const double rate = eta * alpha0 * alpha0 / 8.0;
    if (rate < 1.0) return phi0 * std::exp(static_cast<double>(k) * std::log1p(-rate));
    return phi0 * std::pow(1.0 - rate, static_cast<double>(k));
}

/// Runs GD from params0.  The certificate supplies α₀, λ̄_l and C_l for the
/// audit; when absent, one is computed with C_l = 1.  Violations are
/// recorded, never thrown.
inline TrainTrace train(const Architecture& arch, const Params& params0, const Dataset& data,
                        const TrainOptions& opt, std::optional<Certificate> cert_in = std::nullopt) {
    if (!(opt.eta > 0.0)) throw InvalidArgument("train: eta must be positive");
    if (opt.audit_stride == 0) throw InvalidArgument("train: audit_stride must be >= 1");
    check_params(arch, params0);
    Certificate cert = cert_in ? *cert_in : compute_certificate_base(arch, params0, data, unit_c_schedule(arch.depth()));
    cert.set_eta(opt.eta);
    const std::size_t L = arch.depth();

    TrainTrace trace;
    TrainSummary& sum = trace.summary;
    sum.eta = opt.eta;
    sum.alpha0 = cert.alpha0;
    sum.decay_factor = cert.decay_factor;
    sum.certified = cert.certified;

    Params params = params0;
    FeatureCache cache = forward(arch, params, data.x);
    double phi = loss(cache, data.y);
    sum.initial_loss = phi;
    sum.target_loss = opt.target_loss ? *opt.target_loss : opt.target_loss_rel * phi;
    const double phi0 = phi;
    const double rate_factor = 1.0 - opt.eta * cert.alpha0 * cert.alpha0 / 8.0;
    double prev_phi = phi;

    for (std::size_t k = 0;; ++k) {
        IterationRecord rec;
        rec.k = k;
        rec.loss = phi;
        rec.envelope = loss_envelope(phi0, opt.eta, cert.alpha0, k);

        const bool stop_target = phi <= sum.target_loss;
        const bool stop_iters = k >= opt.max_iters;
        GradientSet grads = gradients(arch, params, cache, data.y);
        for (const Matrix& g : grads.grads) rec.grad_norms.push_back(frobenius_norm(g));

        const bool audit_now = opt.audit && k % opt.audit_stride == 0;
        if (opt.audit) {
            rec.inv_loss = phi <= rec.envelope * (1.0 + kAuditSlack);
            if (k > 0) rec.contraction = phi <= rate_factor * prev_phi * (1.0 + kAuditSlack);
        }
        if (audit_now) {
            rec.audited = true;
            rec.sigma_min = detail::last_hidden_sigma_min(cache);
            rec.inv_sigma = rec.sigma_min >= 0.5 * cert.alpha0 * (1.0 - kAuditSlack);
            for (std::size_t l = 1; l <= L; ++l) {
                const double sn = spectral_norm_estimate(params.layer(l)).value;
                rec.spectral_norms.push_back(sn);
                rec.inv_weights = rec.inv_weights && sn <= cert.lambda_bar[l - 1] * (1.0 + kAuditSlack);
                const double d = frobenius_norm(params.layer(l) - params0.layer(l));
                rec.displacement.push_back(d);
                rec.inv_displacement = rec.inv_displacement && d <= cert.c[l - 1] * (1.0 + kAuditSlack);
            }
        }

        if (stop_target || stop_iters) {
            if (!rec.invariants_ok()) ++sum.invariant_violations;
            if (!rec.inv_displacement || !rec.contraction) ++sum.auxiliary_violations;
            trace.records.push_back(std::move(rec));
            sum.iterations = k;
            sum.final_loss = phi;
            sum.reached_target = stop_target;
            sum.stop_reason = stop_target ? "target_reached" : "max_iters";
            trace.final_params = std::move(params);
            break;
        }

        StepResult step = detail::apply_step(params, std::move(grads), opt.eta);
        FeatureCache next_cache = forward(arch, step.params, data.x);
        if (audit_now) {
            rec.descent = detail::descent_audit_cached(params, step.params, cache, next_cache, data.y, cert, opt.eta,
                                                       rec.sigma_min);
            const double ratio = rec.descent->identity_residual / (1.0 + 2.0 * phi);
            sum.max_identity_ratio = std::max(sum.max_identity_ratio, ratio);
            if (!rec.descent->identity_ok) ++sum.identity_failures;
        }

        if (!rec.invariants_ok()) ++sum.invariant_violations;
        if (!rec.inv_displacement || !rec.contraction || (rec.descent && !rec.descent->bounds_ok()))
            ++sum.auxiliary_violations;
        trace.records.push_back(std::move(rec));

        prev_phi = phi;
        params = std::move(step.params);
        cache = std::move(next_cache);
        phi = loss(cache, data.y);
        if (!std::isfinite(phi)) throw NumericalError("train: loss became non-finite at iteration " + std::to_string(k + 1));
    }
    return trace;
}

}  // namespace relucert
