#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace relucert;

TEST(GdStep, ScalarQuadratic) {
    const Architecture a({1, 1});
    Dataset d;
    d.x = Matrix{{1.0}};
    d.y = Matrix{{0.0}};
    const Params p{{Matrix{{1.0}}}};
    EXPECT_EQ(loss(forward(a, p, d.x), d.y), 0.5);
    const StepResult r = gd_step(a, p, d, 0.5);
    EXPECT_EQ(r.params.layer(1), (Matrix{{0.5}}));
    EXPECT_EQ(loss(forward(a, r.params, d.x), d.y), 0.125);
    EXPECT_THROW(gd_step(a, p, d, 0.0), InvalidArgument);
}

TEST(GdStep, FixedPointAtGlobalMinimum) {
    const Architecture a({3, 5, 2});
    const Params p = init_lecun(a, 1);
    Dataset d = generate_sphere_data(4, 3, 2, 1);
    d.y = forward(a, p, d.x).output();
    EXPECT_EQ(gd_step(a, p, d, 0.1).params, p);
}

TEST(GdStep, MatchesFiniteDifferenceStep) {
    TrialDims dims;
    dims.depths = {2, 3};
    dims.max_width = 8;
    dims.max_samples = 5;
    std::size_t idx = 0;
    const Trial tr = testutil::kink_free_trial(41, idx, dims);
    const double eta = 1e-2;
    const Params next = gd_step(tr.arch, tr.params, tr.data, eta).params;
    const auto fd = oracle::fd_gradient(oracle::dense_params(tr.params), oracle::to_dense(tr.data.x),
                                        oracle::to_dense(tr.data.y), 1e-6);
    ASSERT_FALSE(fd.kink);
    for (std::size_t l = 1; l <= tr.arch.depth(); ++l)
        for (std::size_t i = 0; i < next.layer(l).rows(); ++i)
            for (std::size_t j = 0; j < next.layer(l).cols(); ++j) {
                const double want = tr.params.layer(l)(i, j) - eta * fd.grad[l - 1][i][j];
                EXPECT_LT(testutil::rel_err(next.layer(l)(i, j), want), 1e-4);
            }
}

TEST(DescentAudit, IdentityAndZeroAtMinimum) {
    const Trial tr = make_trial(42, 3, TrialDims{});
    Certificate cert = compute_certificate_base(tr.arch, tr.params, tr.data, unit_c_schedule(tr.arch.depth()));
    cert.set_eta(1e-3);
    const Params next = gd_step(tr.arch, tr.params, tr.data, 1e-3).params;
    const DescentAudit a = descent_audit(tr.arch, tr.params, next, tr.data, cert);
    const double phi = loss(forward(tr.arch, tr.params, tr.data.x), tr.data.y);
    EXPECT_LE(a.identity_residual, 1e-9 * (1.0 + 2.0 * phi));
    EXPECT_TRUE(a.identity_ok);

    Dataset exact = tr.data;
    exact.y = forward(tr.arch, tr.params, tr.data.x).output();
    const DescentAudit z = descent_audit(tr.arch, tr.params, gd_step(tr.arch, tr.params, exact, 1e-3).params, exact, cert);
    EXPECT_EQ(z.term_move, 0.0);
    EXPECT_EQ(z.term_cross, 0.0);
    EXPECT_EQ(z.term_descent, 0.0);
}

TEST(Train, MatchesNaiveReferenceLoop) {
    const Architecture a({4, 9, 7, 2});
    const Dataset d = generate_sphere_data(6, 4, 2, 5);
    const Params p = init_lecun(a, 5);
    TrainOptions opt;
    opt.eta = 0.02;
    opt.max_iters = 10;
    opt.target_loss = 0.0;
    const TrainTrace t = train(a, p, d, opt);
    const auto want = oracle::naive_train_losses(oracle::dense_params(p), oracle::to_dense(d.x), oracle::to_dense(d.y),
                                                 0.02, 10);
    ASSERT_EQ(t.records.size(), 11u);
    for (std::size_t k = 0; k <= 10; ++k) {
        EXPECT_EQ(t.records[k].k, k);
        EXPECT_LT(testutil::rel_err(t.records[k].loss, want[k]), 1e-10) << "k = " << k;
    }
    EXPECT_EQ(t.summary.iterations, 10u);
    EXPECT_EQ(t.summary.stop_reason, "max_iters");
}

TEST(Train, DivergenceIsRecordedNotThrown) {
    // Curvatures 1 and 100: eta = 0.025 is stable for the first direction
    // and multiplies the second by -1.5 every step.
    const Architecture a({2, 1});
    Dataset d;
    d.x = Matrix{{1.0, 0.0}, {0.0, 10.0}};
    d.y = Matrix{{0.0}, {0.0}};
    const Params p{{Matrix{{1.0}, {1.0}}}};
    TrainOptions opt;
    opt.eta = 0.025;
    opt.max_iters = 30;
    const TrainTrace t = train(a, p, d, opt);
    ASSERT_EQ(t.records.size(), 31u);
    for (std::size_t k = 1; k < t.records.size(); ++k) EXPECT_GT(t.records[k].loss, t.records[k - 1].loss);
    EXPECT_TRUE(std::isfinite(t.summary.final_loss));
    EXPECT_FALSE(t.summary.certified);
    EXPECT_FALSE(t.summary.falsified());
}

TEST(Train, StopsAtTarget) {
    const Architecture a({3, 10, 1});
    const Dataset d = generate_sphere_data(4, 3, 1, 7);
    TrainOptions opt;
    opt.eta = 0.02;
    opt.max_iters = 100000;
    opt.target_loss_rel = 1e-3;
    const TrainTrace t = train(a, init_lecun(a, 7), d, opt);
    EXPECT_TRUE(t.summary.reached_target);
    EXPECT_EQ(t.summary.stop_reason, "target_reached");
    EXPECT_LE(t.summary.final_loss, 1e-3 * t.summary.initial_loss);
    EXPECT_EQ(t.final_params.depth(), 2u);
    EXPECT_EQ(t.records.back().loss, t.summary.final_loss);
}

TEST(Train, AuditStride) {
    const Architecture a({3, 10, 1});
    const Dataset d = generate_sphere_data(4, 3, 1, 8);
    TrainOptions opt;
    opt.eta = 0.01;
    opt.max_iters = 9;
    opt.audit_stride = 4;
    const TrainTrace t = train(a, init_lecun(a, 8), d, opt);
    for (const auto& r : t.records) EXPECT_EQ(r.audited, r.k % 4 == 0);
    opt.audit_stride = 0;
    EXPECT_THROW(train(a, init_lecun(a, 8), d, opt), InvalidArgument);
}

TEST(Train, CertifiedRunKeepsEveryInvariant) {
    const Architecture a({10, 12, 32, 1});
    const Dataset d = generate_sphere_data(20, 10, 1, 20240601);
    const Params base = draw_full_rank_base(a, d, 20240601)->params;
    const std::vector<double> c = unit_c_schedule(3);
    const Params p0 = scale_beta(base, beta_search(a, base, d, c));
    Certificate cert = compute_certificate_base(a, p0, d, c);
    cert.set_eta(suggest_eta(cert));
    ASSERT_TRUE(cert.certified);
    TrainOptions opt;
    opt.eta = cert.eta;
    opt.max_iters = 500;
    const TrainTrace t = train(a, p0, d, opt, cert);
    ASSERT_EQ(t.records.size(), 501u);
    for (const auto& r : t.records) {
        EXPECT_TRUE(r.invariants_ok()) << r.k;
        EXPECT_TRUE(r.inv_displacement) << r.k;
        EXPECT_TRUE(r.contraction) << r.k;
        if (r.descent) {
            EXPECT_TRUE(r.descent->identity_ok) << r.k;
            EXPECT_TRUE(r.descent->bounds_ok()) << r.k;
        }
    }
    EXPECT_EQ(t.summary.invariant_violations, 0u);
    EXPECT_FALSE(t.summary.falsified());
}

TEST(Envelope, LogSpaceMatchesPow) {
    EXPECT_NEAR(loss_envelope(2.0, 0.1, 2.0, 3), 2.0 * std::pow(1.0 - 0.05, 3), 1e-15);
    EXPECT_EQ(loss_envelope(2.0, 0.1, 2.0, 0), 2.0);
    EXPECT_LT(loss_envelope(1.0, 1e-20, 1.0, 1000000), 1.0);
}
