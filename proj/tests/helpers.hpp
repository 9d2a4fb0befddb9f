#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "relucert.hpp"

namespace testutil {

inline relucert::Matrix random_matrix(std::size_t rows, std::size_t cols, relucert::Stream& s, double sd = 1.0) {
    relucert::Matrix m(rows, cols);
    for (double& v : m.values()) v = sd * s.normal();
    return m;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), std::numeric_limits<double>::min());
}

/// Random trial whose hidden preactivations all exceed 1e-3 in magnitude and
/// whose hidden layers each keep at least one active unit.
inline relucert::Trial kink_free_trial(std::uint64_t seed, std::size_t& index, const relucert::TrialDims& dims) {
    for (;; ++index) {
        relucert::Trial t = relucert::make_trial(seed, index, dims);
        const auto cache = relucert::forward(t.arch, t.params, t.data.x);
        bool ok = true;
        for (std::size_t l = 0; l < cache.preactivations.size() && ok; ++l) {
            bool active = false;
            for (double v : cache.preactivations[l].values()) {
                ok = ok && std::abs(v) > 1e-3;
                active = active || v > 0.0;
            }
            ok = ok && active;
        }
        if (ok) return t;
    }
}

}  // namespace testutil
