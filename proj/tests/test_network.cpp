#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace relucert;

TEST(Architecture, Validation) {
    EXPECT_THROW(Architecture({3}), InvalidArgument);
    EXPECT_THROW(Architecture({3, 0, 1}), InvalidArgument);
    const Architecture a({4, 5, 6, 2});
    EXPECT_EQ(a.depth(), 3u);
    EXPECT_EQ(a.last_hidden_width(), 6u);
}

TEST(Params, ShapeChecks) {
    const Architecture a({2, 3, 1});
    Params p{{Matrix(2, 3), Matrix(3, 1)}};
    EXPECT_NO_THROW(check_params(a, p));
    p.weights[1] = Matrix(2, 1);
    EXPECT_THROW(check_params(a, p), InvalidArgument);
    EXPECT_THROW(check_params(a, Params{{Matrix(2, 3)}}), InvalidArgument);
}

TEST(Forward, HandExample) {
    const Architecture a({2, 2, 1});
    const Params p{{Matrix{{1.0, 0.0}, {0.0, -1.0}}, Matrix{{1.0}, {1.0}}}};
    const FeatureCache c = forward(a, p, Matrix{{1.0, 2.0}});
    EXPECT_EQ(c.feature(1), (Matrix{{1.0, 0.0}}));
    EXPECT_EQ(c.output(), (Matrix{{1.0}}));
    EXPECT_THROW(forward(a, p, Matrix{{1.0, 2.0, 3.0}}), InvalidArgument);
}

TEST(Forward, ZeroWeightsAndHomogeneity) {
    Stream s(21);
    const Architecture a({3, 5, 4, 2});
    const Matrix x = testutil::random_matrix(6, 3, s);
    Params zero{{Matrix(3, 5), Matrix(5, 4), Matrix(4, 2)}};
    const FeatureCache cz = forward(a, zero, x);
    for (std::size_t l = 1; l <= 3; ++l) EXPECT_EQ(frobenius_norm(cz.feature(l)), 0.0);

    Params p = init_lecun(a, 5);
    const FeatureCache c1 = forward(a, p, x);
    p.layer(1) = 4.0 * p.layer(1);
    const FeatureCache c2 = forward(a, p, x);
    EXPECT_EQ(c2.feature(1), 4.0 * c1.feature(1));
    for (std::size_t l = 1; l < 3; ++l)
        for (double v : c1.feature(l).values()) EXPECT_GE(v, 0.0);
}

TEST(Loss, Basics) {
    const Architecture a({1, 1});
    const Params p{{Matrix{{1.0}}}};
    EXPECT_EQ(loss(forward(a, p, Matrix{{1.0}}), Matrix{{1.0}}), 0.0);
    EXPECT_EQ(loss(forward(a, p, Matrix{{1.0}}), Matrix{{0.0}}), 0.5);

    Stream s(22);
    const Architecture b({3, 6, 2});
    const Params q = init_beta_scaled(b, 3, 2.0);
    const Matrix y = testutil::random_matrix(5, 2, s);
    const double yf = frobenius_norm(y);
    EXPECT_NEAR(loss(forward(b, q, testutil::random_matrix(5, 3, s)), y), 0.5 * yf * yf, 1e-14);
}

TEST(Gradients, LinearScalar) {
    const Architecture a({1, 1});
    const Params p{{Matrix{{2.0}}}};
    const Matrix x{{1.0}}, y{{1.0}};
    const GradientSet g = gradients(a, p, forward(a, p, x), y);
    EXPECT_EQ(g.layer(1), (Matrix{{1.0}}));
}

TEST(Gradients, ZeroAtGlobalMinimum) {
    const Architecture a({3, 4, 2});
    const Params p = init_lecun(a, 9);
    Stream s(23);
    const Matrix x = testutil::random_matrix(5, 3, s);
    const FeatureCache c = forward(a, p, x);
    const GradientSet g = gradients(a, p, c, c.output());
    EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(Gradients, MatchFiniteDifferences) {
    TrialDims dims;
    dims.depths = {3};
    dims.max_samples = 6;
    dims.max_width = 8;
    std::size_t idx = 0;
    int checked = 0;
    for (int t = 0; t < 5; ++t, ++idx) {
        const Trial tr = testutil::kink_free_trial(31, idx, dims);
        const GradientSet g = gradients(tr.arch, tr.params, forward(tr.arch, tr.params, tr.data.x), tr.data.y);
        const auto fd = oracle::fd_gradient(oracle::dense_params(tr.params), oracle::to_dense(tr.data.x),
                                            oracle::to_dense(tr.data.y), 1e-6);
        if (fd.kink) continue;
        ++checked;
        for (std::size_t l = 1; l <= tr.arch.depth(); ++l) {
            double scale = 0.0;
            for (double v : g.layer(l).values()) scale = std::max(scale, std::abs(v));
            for (std::size_t i = 0; i < g.layer(l).rows(); ++i)
                for (std::size_t j = 0; j < g.layer(l).cols(); ++j) {
                    const double got = g.layer(l)(i, j), want = fd.grad[l - 1][i][j];
                    const double denom = std::max({std::abs(got), std::abs(want), 1e-3 * scale});
                    if (denom == 0.0) continue;
                    EXPECT_LT(std::abs(got - want) / denom, 1e-5) << tr.describe() << " layer " << l;
                }
        }
    }
    EXPECT_GE(checked, 3);
}

TEST(Gradients, MatchNaiveBackprop) {
    const Trial tr = make_trial(33, 0, TrialDims{});
    const GradientSet g = gradients(tr.arch, tr.params, forward(tr.arch, tr.params, tr.data.x), tr.data.y);
    const auto want = oracle::naive_gradients(oracle::dense_params(tr.params), oracle::to_dense(tr.data.x),
                                              oracle::to_dense(tr.data.y));
    for (std::size_t l = 1; l <= tr.arch.depth(); ++l) {
        const Matrix w = oracle::from_dense(want[l - 1]);
        EXPECT_LE(frobenius_norm(g.layer(l) - w), 1e-12 * (1.0 + frobenius_norm(w)));
    }
}

TEST(JacobianBlock, LastLayerGramIsKroneckerOfFeatureGram) {
    const Architecture a({3, 7, 6, 3});
    Stream s(24);
    const Params p = init_lecun(a, 4);
    const Matrix x = testutil::random_matrix(5, 3, s);
    const FeatureCache c = forward(a, p, x);
    const Matrix gram = row_gram(jacobian_block(a, p, c, 3));
    const Matrix f = row_gram(c.last_hidden());
    const std::size_t N = 5;
    for (std::size_t r = 0; r < gram.rows(); ++r)
        for (std::size_t q = 0; q < gram.cols(); ++q) {
            const double want = (r / N == q / N) ? f(r % N, q % N) : 0.0;
            EXPECT_NEAR(gram(r, q), want, 1e-12 * (1.0 + std::abs(want)));
        }
}

TEST(JacobianBlock, LinearModel) {
    const Architecture a({3, 2});
    Stream s(25);
    const Params p{{testutil::random_matrix(3, 2, s)}};
    const Matrix x = testutil::random_matrix(4, 3, s);
    const Matrix gram = row_gram(jacobian_block(a, p, forward(a, p, x), 1));
    const Matrix xxt = row_gram(x);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t q = 0; q < 8; ++q)
            EXPECT_NEAR(gram(r, q), (r / 4 == q / 4) ? xxt(r % 4, q % 4) : 0.0, 1e-12);
    EXPECT_THROW(jacobian_block(a, p, forward(a, p, x), 2), InvalidArgument);
}

TEST(JacobianBlock, DirectionalFiniteDifference) {
    TrialDims dims;
    dims.depths = {2, 3};
    dims.max_width = 10;
    dims.max_samples = 6;
    std::size_t idx = 0;
    for (int t = 0; t < 5; ++t, ++idx) {
        const Trial tr = testutil::kink_free_trial(35, idx, dims);
        const FeatureCache c = forward(tr.arch, tr.params, tr.data.x);
        Stream s(Stream::derive(35, StreamTag::Trial, {idx, 99}));
        for (std::size_t l = 1; l <= tr.arch.depth(); ++l) {
            const Matrix dir = testutil::random_matrix(tr.params.layer(l).rows(), tr.params.layer(l).cols(), s);
            const Matrix jb = jacobian_block(tr.arch, tr.params, c, l);
            const std::vector<double> d = vec(dir);
            std::vector<double> jd(jb.rows(), 0.0);
            for (std::size_t r = 0; r < jb.rows(); ++r)
                for (std::size_t q = 0; q < jb.cols(); ++q) jd[r] += jb(r, q) * d[q];
            const double h = 1e-6;
            Params up = tr.params, dn = tr.params;
            up.layer(l) = up.layer(l) + h * dir;
            dn.layer(l) = dn.layer(l) - h * dir;
            const auto pu = oracle::pattern(oracle::dense_params(up), oracle::to_dense(tr.data.x));
            const auto pd = oracle::pattern(oracle::dense_params(dn), oracle::to_dense(tr.data.x));
            const auto p0 = oracle::pattern(oracle::dense_params(tr.params), oracle::to_dense(tr.data.x));
            if (pu != p0 || pd != p0) continue;
            const std::vector<double> fd =
                vec((1.0 / (2.0 * h)) * (forward(tr.arch, up, tr.data.x).output() - forward(tr.arch, dn, tr.data.x).output()));
            double num = 0.0, den = 0.0;
            for (std::size_t r = 0; r < fd.size(); ++r) {
                num += (jd[r] - fd[r]) * (jd[r] - fd[r]);
                den += fd[r] * fd[r];
            }
            EXPECT_LT(std::sqrt(num), 1e-5 * std::sqrt(den) + 1e-12) << tr.describe() << " layer " << l;
        }
    }
}

TEST(Vec, ColumnStacking) {
    EXPECT_EQ(vec(Matrix{{1.0, 2.0}, {3.0, 4.0}}), (std::vector<double>{1.0, 3.0, 2.0, 4.0}));
}
