#pragma once

// Empirical checks of the structural inequalities behind the certificate:
//   λ_min(K) ≥ λ_min(F_{L-1}F_{L-1}ᵀ)            (output-layer block of the NTK)
//   ‖∇Φ‖² ≥ 2 λ_min(K) Φ                         (PL-like bound)
//   ‖∇_{W_l}Φ‖_F ≤ ‖X‖_F Π_{p≠l}‖W_p‖₂ ‖F_L − Y‖_F
//   ‖F_l(θ_a) − F_l(θ_b)‖_F ≤ ‖X‖_F (Π_{p≤l} λ̄_p) Σ_{p≤l} λ̄_p⁻¹ ‖W_p^a − W_p^b‖₂
// All four hold for every network; a violation beyond floating-point slack
// means a bug.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "relucert/init.hpp"
#include "relucert/linalg.hpp"
#include "relucert/network.hpp"
#include "relucert/rng.hpp"

namespace relucert {

inline constexpr std::size_t kDefaultNtkRowLimit = 4096;

/// K = Σ_l B_l B_lᵀ with B_l = ∂vec(F_L)/∂vec(W_l).  Blocks are formed one at
/// a time and accumulated.
inline Matrix assemble_ntk(const Architecture& arch, const Params& params, const Dataset& data,
                           std::size_t max_rows = kDefaultNtkRowLimit) {
    const std::size_t rows = data.samples() * arch.output_dim();
    if (rows > max_rows)
        throw InvalidArgument("assemble_ntk: kernel would have " + std::to_string(rows) + " rows (limit " +
                              std::to_string(max_rows) + "); reduce samples or outputs, or raise the limit");
    const FeatureCache cache = forward(arch, params, data.x);
    Matrix k(rows, rows);
    for (std::size_t l = 1; l <= arch.depth(); ++l) k = k + row_gram(jacobian_block(arch, params, cache, l));
    return k;
}

struct NtkReport {
    double k_min_eig = 0.0;
    double gram_min_eig = 0.0;
    std::vector<double> block_traces;  // tr(B_l B_lᵀ)
    double pl_lhs = 0.0;               // ‖∇Φ‖² over all layers
    double pl_rhs = 0.0;               // 2 λ_min(K) Φ
    double loss = 0.0;
    bool width_ok = false;             // n_{L-1} ≥ N

    double gram_margin() const { return k_min_eig - gram_min_eig; }
    double pl_margin() const { return pl_lhs - pl_rhs; }
    bool gram_bound_ok() const { return k_min_eig >= gram_min_eig - 1e-8 * (1.0 + std::abs(k_min_eig)); }
    bool pl_ok() const { return pl_lhs >= pl_rhs - 1e-8 * (1.0 + pl_lhs); }
};

inline NtkReport check_ntk_bound(const Architecture& arch, const Params& params, const Dataset& data,
                                 std::size_t max_rows = kDefaultNtkRowLimit) {
    const std::size_t rows = data.samples() * arch.output_dim();
    if (rows > max_rows)
        throw InvalidArgument("check_ntk_bound: kernel would have " + std::to_string(rows) + " rows (limit " +
                              std::to_string(max_rows) + ")");
    const FeatureCache cache = forward(arch, params, data.x);
    NtkReport r;
    Matrix k(rows, rows);
    for (std::size_t l = 1; l <= arch.depth(); ++l) {
        const Matrix bbt = row_gram(jacobian_block(arch, params, cache, l));
        double tr = 0.0;
        for (std::size_t i = 0; i < bbt.rows(); ++i) tr += bbt(i, i);
        r.block_traces.push_back(tr);
        k = k + bbt;
    }
    r.k_min_eig = sym_eig_min(k);
    r.gram_min_eig = sym_eig_min(row_gram(cache.last_hidden()));
    r.loss = loss(cache, data.y);
    r.pl_lhs = gradients(arch, params, cache, data.y).squared_norm();
    r.pl_rhs = 2.0 * r.k_min_eig * r.loss;
    r.width_ok = arch.last_hidden_width() >= data.samples();
    return r;
}

// ---------------------------------------------------------------------------
// Randomized trials
// ---------------------------------------------------------------------------

/// Ranges for random trial networks.
struct TrialDims {
    std::vector<std::size_t> depths{1, 2, 3, 4};
    std::size_t min_samples = 1;
    std::size_t max_samples = 16;
    std::size_t min_width = 1;
    std::size_t max_width = 64;
    std::size_t max_outputs = 4;
    double min_scale = 0.5;   // per-layer weight scale, multiplying 1/√fan_in
    double max_scale = 1.5;
};

/// One random (architecture, θ, X, Y) draw.
struct Trial {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    Architecture arch;
    Params params;
    Dataset data;

    std::string describe() const {
        std::string s = "trial " + std::to_string(index) + " seed " + std::to_string(seed) + " widths ";
        for (std::size_t i = 0; i < arch.widths().size(); ++i) s += (i ? "," : "") + std::to_string(arch.widths()[i]);
        s += " samples " + std::to_string(data.samples());
        return s;
    }
};

inline Params random_params(const Architecture& arch, const TrialDims& dims, Stream& s) {
    Params p;
    for (std::size_t l = 1; l <= arch.depth(); ++l) {
        const double scale = dims.min_scale + (dims.max_scale - dims.min_scale) * s.uniform();
        Matrix w(arch.width(l - 1), arch.width(l));
        const double sd = scale / std::sqrt(static_cast<double>(arch.width(l - 1)));
        for (double& v : w.values()) v = sd * s.normal();
        p.weights.push_back(std::move(w));
    }
    return p;
}

/// Deterministic trial `index` of the sequence rooted at `seed`.
inline Trial make_trial(std::uint64_t seed, std::size_t index, const TrialDims& dims) {
    if (dims.depths.empty()) throw InvalidArgument("TrialDims: no depths given");
    Trial t;
    t.index = index;
    t.seed = Stream::derive(seed, StreamTag::Trial, {index});
    Stream s(t.seed);
    const std::size_t L = dims.depths[s.uniform_int(0, dims.depths.size() - 1)];
    const std::size_t N = s.uniform_int(dims.min_samples, dims.max_samples);
    std::vector<std::size_t> widths;
    for (std::size_t l = 0; l < L; ++l) widths.push_back(s.uniform_int(dims.min_width, dims.max_width));
    widths.push_back(s.uniform_int(1, dims.max_outputs));
    t.arch = Architecture(widths);
    t.params = random_params(t.arch, dims, s);
    t.data.seed = t.seed;
    t.data.x = detail::gaussian_matrix(N, widths.front(), 1.0, s);
    t.data.y = detail::gaussian_matrix(N, widths.back(), 1.0, s);
    return t;
}

struct BoundCheck {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::string dims;
    std::size_t layer = 0;
    double lhs = 0.0;
    double rhs = 0.0;

    double margin() const { return rhs - lhs; }
    bool ok() const { return margin() >= -1e-9 * (1.0 + rhs); }
};

/// ‖∇_{W_l}Φ‖_F against ‖X‖_F Π_{p≠l}‖W_p‖₂ ‖F_L − Y‖_F for one network.
inline std::vector<BoundCheck> gradient_bound_checks(const Architecture& arch, const Params& params,
                                                      const Dataset& data) {
    const FeatureCache cache = forward(arch, params, data.x);
    const GradientSet g = gradients(arch, params, cache, data.y);
    const double xf = frobenius_norm(data.x);
    const double rf = frobenius_norm(cache.output() - data.y);
    std::vector<double> norms;
    for (std::size_t l = 1; l <= arch.depth(); ++l) norms.push_back(spectral_norm(params.layer(l)));
    std::vector<BoundCheck> out;
    for (std::size_t l = 1; l <= arch.depth(); ++l) {
        double prod = 1.0;
        for (std::size_t p = 1; p <= arch.depth(); ++p)
            if (p != l) prod *= norms[p - 1];
        BoundCheck c;
        c.layer = l;
        c.lhs = frobenius_norm(g.layer(l));
        c.rhs = xf * prod * rf;
        out.push_back(c);
    }
    return out;
}

/// Feature-Lipschitz bound between two parameter sets, for every layer l.
/// λ̄_p = max(‖W_p^a‖₂, ‖W_p^b‖₂).
inline std::vector<BoundCheck> lipschitz_bound_checks(const Architecture& arch, const Params& a, const Params& b,
                                                       const Matrix& x) {
    const FeatureCache ca = forward(arch, a, x);
    const FeatureCache cb = forward(arch, b, x);
    const double xf = frobenius_norm(x);
    std::vector<double> lam, diff;
    for (std::size_t l = 1; l <= arch.depth(); ++l) {
        lam.push_back(std::max(spectral_norm(a.layer(l)), spectral_norm(b.layer(l))));
        diff.push_back(spectral_norm(a.layer(l) - b.layer(l)));
    }
    std::vector<BoundCheck> out;
    for (std::size_t l = 1; l <= arch.depth(); ++l) {
        double prod = 1.0, sum = 0.0;
        for (std::size_t p = 1; p <= l; ++p) {
            prod *= lam[p - 1];
            // A zero λ̄_p forces W_p^a = W_p^b = 0; its term vanishes.
            if (lam[p - 1] > 0.0) sum += diff[p - 1] / lam[p - 1];
        }
        BoundCheck c;
        c.layer = l;
        c.lhs = frobenius_norm(ca.feature(l) - cb.feature(l));
        c.rhs = xf * prod * sum;
        out.push_back(c);
    }
    return out;
}

inline std::vector<BoundCheck> check_gradient_bound(std::size_t trials, const TrialDims& dims, std::uint64_t seed) {
    if (trials == 0) throw InvalidArgument("check_gradient_bound: trials must be >= 1");
    std::vector<BoundCheck> out;
    for (std::size_t t = 0; t < trials; ++t) {
        const Trial tr = make_trial(seed, t, dims);
        for (BoundCheck c : gradient_bound_checks(tr.arch, tr.params, tr.data)) {
            c.trial = t;
            c.seed = tr.seed;
            c.dims = tr.describe();
            out.push_back(std::move(c));
        }
    }
    return out;
}

inline std::vector<BoundCheck> check_lipschitz_bound(std::size_t trials, const TrialDims& dims, std::uint64_t seed) {
    if (trials == 0) throw InvalidArgument("check_lipschitz_bound: trials must be >= 1");
    std::vector<BoundCheck> out;
    for (std::size_t t = 0; t < trials; ++t) {
        const Trial tr = make_trial(seed, t, dims);
        // Second parameter set: an independent draw, or a perturbation of the first.
        Stream s(Stream::derive(tr.seed, StreamTag::Trial, {1}));
        Params other = random_params(tr.arch, dims, s);
        if (s.uniform() < 0.5) {
            const double eps = std::pow(10.0, -6.0 * s.uniform());
            for (std::size_t l = 1; l <= tr.arch.depth(); ++l)
                other.layer(l) = tr.params.layer(l) + eps * other.layer(l);
        }
        for (BoundCheck c : lipschitz_bound_checks(tr.arch, tr.params, other, tr.data.x)) {
            c.trial = t;
            c.seed = tr.seed;
            c.dims = tr.describe();
            out.push_back(std::move(c));
        }
    }
    return out;
}

}  // namespace relucert
