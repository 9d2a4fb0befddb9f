#pragma once

// Bias-free deep ReLU network in standard parameterization:
//
//   F_0 = X,  F_l = relu(F_{l-1} W_l) for 1 <= l <= L-1,  F_L = F_{L-1} W_L
//
// with square loss Φ = ½‖F_L − Y‖_F².  Rows of X are samples.

#include <cstddef>
#include <string>
#include <vector>

#include "relucert/linalg.hpp"

namespace relucert {

class Architecture {
public:
    Architecture() = default;
    explicit Architecture(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
        if (widths_.size() < 2) throw InvalidArgument("Architecture: need at least two widths (depth >= 1)");
        for (std::size_t w : widths_)
            if (w == 0) throw InvalidArgument("Architecture: widths must be positive");
    }

    /// L, the number of weight matrices.
    std::size_t depth() const noexcept { return widths_.empty() ? 0 : widths_.size() - 1; }
    /// n_l for 0 <= l <= L.
    std::size_t width(std::size_t l) const { return widths_.at(l); }
    std::size_t input_dim() const { return widths_.front(); }
    std::size_t output_dim() const { return widths_.back(); }
    /// n_{L-1}, the width of the layer whose smallest singular value drives convergence.
    std::size_t last_hidden_width() const { return widths_.at(depth() - 1); }
    const std::vector<std::size_t>& widths() const noexcept { return widths_; }

    friend bool operator==(const Architecture&, const Architecture&) = default;

private:
    std::vector<std::size_t> widths_;
};

/// Weights W_1..W_L, stored zero-based: weights[l-1] is W_l with shape n_{l-1}×n_l.
struct Params {
    std::vector<Matrix> weights;

    const Matrix& layer(std::size_t l) const { return weights.at(l - 1); }
    Matrix& layer(std::size_t l) { return weights.at(l - 1); }
    std::size_t depth() const noexcept { return weights.size(); }

    friend bool operator==(const Params&, const Params&) = default;
};

inline void check_params(const Architecture& arch, const Params& p) {
    if (p.depth() != arch.depth())
        throw InvalidArgument("Params: expected " + std::to_string(arch.depth()) + " layers, got " +
                              std::to_string(p.depth()));
    for (std::size_t l = 1; l <= arch.depth(); ++l) {
        const Matrix& w = p.layer(l);
        if (w.rows() != arch.width(l - 1) || w.cols() != arch.width(l))
            throw InvalidArgument("Params: layer " + std::to_string(l) + " has shape " + shape_str(w) +
                                  ", expected " + std::to_string(arch.width(l - 1)) + "x" +
                                  std::to_string(arch.width(l)));
        if (!w.all_finite()) throw InvalidArgument("Params: layer " + std::to_string(l) + " has non-finite entries");
    }
}

/// Per-layer outputs of one forward pass.  features[l] is F_l (features[0] = X);
/// preactivations[l-1] is F_{l-1}W_l for the hidden layers 1..L-1.
struct FeatureCache {
    std::vector<Matrix> features;
    std::vector<Matrix> preactivations;

    const Matrix& input() const { return features.front(); }
    const Matrix& output() const { return features.back(); }
    const Matrix& feature(std::size_t l) const { return features.at(l); }
    /// F_{L-1}.
    const Matrix& last_hidden() const { return features.at(features.size() - 2); }
    std::size_t samples() const { return features.front().rows(); }
};

/// Gradients of Φ; grads[l-1] is ∇_{W_l}Φ.
struct GradientSet {
    std::vector<Matrix> grads;

    const Matrix& layer(std::size_t l) const { return grads.at(l - 1); }

    /// Squared Euclidean norm of the full vectorized gradient.
    double squared_norm() const {
        double s = 0.0;
        for (const Matrix& g : grads) {
            const double n = frobenius_norm(g);
            s += n * n;
        }
        return s;
    }
};

inline FeatureCache forward(const Architecture& arch, const Params& params, const Matrix& x) {
    check_params(arch, params);
    if (x.cols() != arch.input_dim())
        throw InvalidArgument("forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                              std::to_string(arch.input_dim()));
    FeatureCache cache;
    const std::size_t L = arch.depth();
    cache.features.reserve(L + 1);
    cache.preactivations.reserve(L - 1);
    cache.features.push_back(x);
    for (std::size_t l = 1; l < L; ++l) {
        Matrix pre = matmul(cache.features.back(), params.layer(l));
        Matrix act = pre;
        for (double& v : act.values()) v = v > 0.0 ? v : 0.0;
        cache.preactivations.push_back(std::move(pre));
        cache.features.push_back(std::move(act));
    }
    cache.features.push_back(matmul(cache.features.back(), params.layer(L)));
    return cache;
}

inline double loss(const FeatureCache& cache, const Matrix& y) {
    if (!cache.output().same_shape(y))
        throw InvalidArgument("loss: output " + shape_str(cache.output()) + " vs labels " + shape_str(y));
    const double r = frobenius_norm(cache.output() - y);
    return 0.5 * r * r;
}

namespace detail {

inline void check_cache(const Architecture& arch, const Params& params, const FeatureCache& cache) {
    const std::size_t L = arch.depth();
    if (cache.features.size() != L + 1 || cache.preactivations.size() + 1 != L)
        throw InvalidArgument("stale feature cache: layer count mismatch");
    for (std::size_t l = 0; l <= L; ++l)
        if (cache.features[l].cols() != arch.width(l) || cache.features[l].rows() != cache.samples())
            throw InvalidArgument("stale feature cache: layer " + std::to_string(l) + " has shape " +
                                  shape_str(cache.features[l]));
    check_params(arch, params);
}

}  // namespace detail

/// Exact backpropagation with relu'(0) = 0.
inline GradientSet gradients(const Architecture& arch, const Params& params, const FeatureCache& cache,
                             const Matrix& y) {
    detail::check_cache(arch, params, cache);
    if (!cache.output().same_shape(y))
        throw InvalidArgument("gradients: output " + shape_str(cache.output()) + " vs labels " + shape_str(y));
    const std::size_t L = arch.depth();
    GradientSet g;
    g.grads.resize(L);
    Matrix delta = cache.output() - y;  // ∂Φ/∂F_L
    g.grads[L - 1] = matmul_tn(cache.feature(L - 1), delta);
    for (std::size_t l = L - 1; l >= 1; --l) {
        // ∂Φ/∂P_l = (∂Φ/∂P_{l+1} W_{l+1}ᵀ) ⊙ 1[P_l > 0]
        Matrix back = matmul_nt(delta, params.layer(l + 1));
        const Matrix& pre = cache.preactivations[l - 1];
        auto bv = back.values();
        auto pv = pre.values();
        for (std::size_t i = 0; i < bv.size(); ++i)
            if (!(pv[i] > 0.0)) bv[i] = 0.0;
        delta = std::move(back);
        g.grads[l - 1] = matmul_tn(cache.feature(l - 1), delta);
    }
    return g;
}

/// ∂vec(F_L)/∂vec(W_l) as a dense (N·n_L)×(n_{l-1}·n_l) matrix.
///
/// vec stacks columns, so F_L(i, j) sits at row j·N + i and W_l(a, b) at
/// column b·n_{l-1} + a.
inline Matrix jacobian_block(const Architecture& arch, const Params& params, const FeatureCache& cache,
                             std::size_t l) {
    detail::check_cache(arch, params, cache);
    const std::size_t L = arch.depth();
    if (l < 1 || l > L)
        throw InvalidArgument("jacobian_block: layer " + std::to_string(l) + " outside [1, " + std::to_string(L) + "]");
    const std::size_t N = cache.samples();
    const std::size_t nL = arch.output_dim();
    const std::size_t n_in = arch.width(l - 1);
    const std::size_t n_out = arch.width(l);
    const Matrix& f_in = cache.feature(l - 1);
    Matrix block(N * nL, n_in * n_out);

    for (std::size_t i = 0; i < N; ++i) {
        // sens(b, j) = ∂F_L(i, j)/∂P_l(i, b), built from the output backwards.
        Matrix sens = Matrix::identity(nL);
        for (std::size_t m = L; m > l; --m) {
            // Through W_m: ∂F_L/∂F_{m-1} = W_m · sens, then the relu mask of layer m-1.
            Matrix next = matmul(params.layer(m), sens);
            const Matrix& pre = cache.preactivations[m - 2];
            for (std::size_t b = 0; b < next.rows(); ++b)
                if (!(pre(i, b) > 0.0))
                    for (std::size_t j = 0; j < nL; ++j) next(b, j) = 0.0;
            sens = std::move(next);
        }
        for (std::size_t j = 0; j < nL; ++j) {
            const std::size_t row = j * N + i;
            for (std::size_t b = 0; b < n_out; ++b) {
                const double s = sens(b, j);
                if (s == 0.0) continue;
                for (std::size_t a = 0; a < n_in; ++a) block(row, b * n_in + a) = f_in(i, a) * s;
            }
        }
    }
    return block;
}

/// Column-stacking vec(·), matching jacobian_block's convention.
inline std::vector<double> vec(const Matrix& m) {
    std::vector<double> v(m.size());
    for (std::size_t j = 0; j < m.cols(); ++j)
        for (std::size_t i = 0; i < m.rows(); ++i) v[j * m.rows() + i] = m(i, j);
    return v;
}

}  // namespace relucert
