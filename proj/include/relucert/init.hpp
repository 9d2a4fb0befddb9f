#pragma once

// Synthetic sphere data and the three initialization schemes:
// LeCun (variance 1/fan-in everywhere), deep LeCun with a shrunken output
// layer (variance n_{L-1}^{-exponent}), and β-scaled hidden layers with a
// zero output layer.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "relucert/linalg.hpp"
#include "relucert/network.hpp"
#include "relucert/rng.hpp"

namespace relucert {

struct Dataset {
    Matrix x;  // N×n0, rows on the sphere of radius √n0
    Matrix y;  // N×nL, rows on the unit sphere
    std::uint64_t seed = 0;

    std::size_t samples() const noexcept { return x.rows(); }
};

enum class InitKind { BetaScaled, LeCunTwoLayer, LeCunDeep };

struct InitScheme {
    InitKind kind = InitKind::LeCunTwoLayer;
    double beta = 1.0;                              // BetaScaled only
    double output_variance_exponent = 4.0 / 3.0;    // LeCunDeep only

    void validate() const {
        if (kind == InitKind::BetaScaled && !(beta > 0.0)) throw InvalidArgument("InitScheme: beta must be positive");
        if (kind == InitKind::LeCunDeep && !(output_variance_exponent > 1.0))
            throw InvalidArgument("InitScheme: output variance exponent must exceed 1");
    }
};

namespace detail {

// Each row is a Gaussian sample normalized and rescaled to `radius`.
inline Matrix sphere_rows(std::size_t n, std::size_t dim, double radius, Stream& s) {
    Matrix m(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                m(i, j) = s.normal();
                norm += m(i, j) * m(i, j);
            }
            norm = std::sqrt(norm);
        } while (norm == 0.0);
        for (std::size_t j = 0; j < dim; ++j) m(i, j) = m(i, j) / norm * radius;
    }
    return m;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Stream& s) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = stddev * s.normal();
    return m;
}

inline Matrix layer_draw(const Architecture& arch, std::size_t l, double variance, std::uint64_t seed) {
    Stream s(seed, StreamTag::LayerWeights, {l});
    return gaussian_matrix(arch.width(l - 1), arch.width(l), std::sqrt(variance), s);
}

}  // namespace detail

inline Dataset generate_sphere_data(std::size_t n, std::size_t n0, std::size_t nL, std::uint64_t seed) {
    if (n == 0 || n0 == 0 || nL == 0) throw InvalidArgument("generate_sphere_data: dimensions must be positive");
    Stream xs(seed, StreamTag::DataInputs);
    Stream ys(seed, StreamTag::DataLabels);
    Dataset d;
    d.x = detail::sphere_rows(n, n0, std::sqrt(static_cast<double>(n0)), xs);
    d.y = detail::sphere_rows(n, nL, 1.0, ys);
    d.seed = seed;
    return d;
}

/// (W_l)_ij ~ N(0, 1/n_{l-1}), one stream per layer.
inline Params init_lecun(const Architecture& arch, std::uint64_t seed) {
    Params p;
    for (std::size_t l = 1; l <= arch.depth(); ++l)
        p.weights.push_back(detail::layer_draw(arch, l, 1.0 / static_cast<double>(arch.width(l - 1)), seed));
    return p;
}

/// LeCun for layers 1..L-1; output layer variance n_{L-1}^{-exponent}.
inline Params init_lecun_deep(const Architecture& arch, std::uint64_t seed, double exponent = 4.0 / 3.0) {
    if (arch.depth() < 2) throw InvalidArgument("init_lecun_deep: needs depth >= 2");
    if (!(exponent > 1.0)) throw InvalidArgument("init_lecun_deep: exponent must exceed 1");
    Params p = init_lecun(arch, seed);
    const std::size_t L = arch.depth();
    const double var = std::pow(static_cast<double>(arch.width(L - 1)), -exponent);
    p.layer(L) = detail::layer_draw(arch, L, var, seed);
    return p;
}

/// β·W_l⁰ for the hidden layers of a given base, zero output layer.
inline Params scale_beta(const Params& base, double beta) {
    if (!(beta > 0.0)) throw InvalidArgument("init_beta_scaled: beta must be positive");
    Params p = base;
    const std::size_t L = p.depth();
    for (std::size_t l = 1; l < L; ++l) p.layer(l) = beta * p.layer(l);
    p.layer(L) = Matrix(p.layer(L).rows(), p.layer(L).cols());
    return p;
}

inline Params init_beta_scaled(const Architecture& arch, std::uint64_t seed, double beta) {
    return scale_beta(init_lecun(arch, seed), beta);
}

/// α₀ = σ_min(F_{L-1}); zero when n_{L-1} < N (the Gram of the rows is singular).
inline double alpha0(const Architecture& arch, const Params& params, const Matrix& x) {
    const FeatureCache c = forward(arch, params, x);
    const Matrix& f = c.last_hidden();
    if (f.rows() > f.cols()) return 0.0;
    return smallest_singular_value(f);
}

struct BaseDraw {
    Params params;
    std::uint64_t seed = 0;  // seed that produced `params`
    int redraws = 0;
    double alpha0 = 0.0;
};

/// LeCun base weights with α₀ > 0 on `data`.  The first attempt uses `seed`;
/// further attempts use seeds derived from (seed, attempt).  Returns nullopt
/// if no attempt succeeds (e.g. n_{L-1} < N).
inline std::optional<BaseDraw> draw_full_rank_base(const Architecture& arch, const Dataset& data, std::uint64_t seed,
                                                   int max_attempts = 16) {
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const std::uint64_t s =
            attempt == 0 ? seed : Stream::derive(seed, StreamTag::BaseRedraw, {static_cast<std::uint64_t>(attempt)});
        Params p = init_lecun(arch, s);
        const double a = alpha0(arch, p, data.x);
        if (a > 0.0) return BaseDraw{std::move(p), s, attempt, a};
    }
    return std::nullopt;
}

}  // namespace relucert
