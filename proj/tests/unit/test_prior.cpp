#include "mvtm/errors.hpp"
#include "mvtm/prior.hpp"

#include <boost/random/gamma_distribution.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mvtm;

namespace {

HyperParams base_theta(int processes = 1) {
    HyperParams t;
    t.latent_triangle = Eigen::VectorXd::Zero(triangle_size(processes));
    return t;
}

}  // namespace

TEST(ConditioningSize, Examples) {
    EXPECT_EQ(conditioning_size(0.0, 0.01), 4);
    EXPECT_EQ(conditioning_size(-1.0, 0.01), 12);
    EXPECT_EQ(conditioning_size(5.0, 0.01), 1);
    EXPECT_EQ(conditioning_size(-10.0, 0.01), kMaxConditioning);
}

TEST(ConditioningSize, BoundaryMatchesRelevanceWeights) {
    for (double tq : {-2.0, -1.3, -0.5, 0.2, 0.9}) {
        const int m = conditioning_size(tq, 0.01);
        const Eigen::VectorXd q = relevance_weights(tq, m + 1);
        for (int j = 0; j < m; ++j) EXPECT_GE(q[j], 0.01);
        if (m < kMaxConditioning) EXPECT_LT(q[m], 0.01);
        for (int j = 1; j <= m; ++j) EXPECT_LT(q[j], q[j - 1]);
    }
}

TEST(PriorParams, Examples) {
    auto t = base_theta();
    const auto a = prior_params(t, 1.0, 4.0);
    EXPECT_DOUBLE_EQ(a.alpha, 2.0625);
    EXPECT_DOUBLE_EQ(a.expected_d2, 1.0);
    EXPECT_DOUBLE_EQ(a.beta, 1.0625);
    const auto b = prior_params(t, 0.5, 4.0);
    EXPECT_NEAR(b.expected_d2, 0.5, 1e-15);
    EXPECT_NEAR(b.beta, 0.53125, 1e-15);
    t.theta_sigma1 = 0.3;
    t.theta_sigma2 = std::log(2.0);
    EXPECT_NEAR(prior_params(t, 0.5, 4.0).sigma2, std::exp(0.3 + 2.0 * std::log(0.5)), 1e-14);
}

TEST(PriorParams, RejectsNonPositiveDistance) {
    EXPECT_THROW(prior_params(base_theta(), 0.0), InputError);
    EXPECT_THROW(prior_params(base_theta(), -1.0), InputError);
}

TEST(PriorParams, InverseGammaMomentsByMonteCarlo) {
    auto t = base_theta();
    t.theta_d1 = -0.4;
    t.theta_d2 = 0.3;
    const auto p = prior_params(t, 0.2, 4.0);
    std::mt19937_64 rng(3);
    boost::random::gamma_distribution<double> gamma(p.alpha, 1.0);
    const int draws = 200000;
    double s = 0.0;
    std::vector<double> x(draws);
    for (auto& v : x) s += (v = p.beta / gamma(rng));
    const double mean = s / draws;
    const double sd = 4.0 * p.expected_d2;
    EXPECT_NEAR(mean, p.expected_d2, 3.0 * sd / std::sqrt(double(draws)));
    // analytic moments
    EXPECT_NEAR(p.beta / (p.alpha - 1.0), p.expected_d2, 1e-14);
    EXPECT_NEAR(std::sqrt(p.beta * p.beta / ((p.alpha - 1.0) * (p.alpha - 1.0) * (p.alpha - 2.0))), sd, 1e-12);
}

TEST(Matern, Examples) {
    EXPECT_DOUBLE_EQ(matern32(0.0), 1.0);
    EXPECT_NEAR(matern32(1.0), 0.483358, 1e-6);
    EXPECT_LT(matern32(2.0), matern32(1.0));
}

TEST(Kernel, Examples) {
    auto t = base_theta();
    auto prior = component_prior(t, 1.0, 1);
    ASSERT_NEAR(prior.q_diag[0], std::exp(-1.0), 1e-15);
    prior.sigma2 = 1.0;
    prior.gamma = 1.0;
    prior.expected_d2 = 1.0;
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    EXPECT_NEAR(kernel(one, one, prior), 1.367879, 1e-6);
    prior.sigma2 = 0.7;
    prior.expected_d2 = 2.0;
    EXPECT_DOUBLE_EQ(kernel(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), prior), 0.35);
    EXPECT_THROW(kernel(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1), prior), InputError);
}

TEST(Kernel, SymmetryAndPrefactorScaling) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    auto t = base_theta();
    t.theta_q = -0.7;
    t.theta_gamma = 0.2;
    auto prior = component_prior(t, 0.3, 3);
    prior.sigma2 = 0.8;
    for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd u(3), v(3);
        for (int j = 0; j < 3; ++j) u[j] = n(rng), v[j] = n(rng);
        EXPECT_DOUBLE_EQ(kernel(u, v, prior), kernel(v, u, prior));
        auto scaled = prior;
        scaled.expected_d2 *= 3.0;
        EXPECT_NEAR(kernel(u, v, scaled), kernel(u, v, prior) / 3.0, 1e-14);
    }
}

TEST(Gram, Examples) {
    auto t = base_theta();
    t.theta_q = -0.3;
    auto prior = component_prior(t, 0.5, 2);
    EXPECT_TRUE(gram(Eigen::MatrixXd(4, 0), component_prior(t, 0.5, 0)).isApprox(Eigen::MatrixXd::Identity(4, 4)));
    Eigen::MatrixXd one(1, 2);
    one << 0.3, -1.2;
    EXPECT_NEAR(gram(one, prior)(0, 0), kernel(one.row(0).transpose(), one.row(0).transpose(), prior) + 1.0, 1e-15);
    Eigen::MatrixXd u(3, 2);
    u << 0.1, 0.5, -0.3, 1.1, 2.0, -0.4;
    const Eigen::MatrixXd g = gram(u, prior);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(g(i, j), kernel(u.row(i).transpose(), u.row(j).transpose(), prior) + (i == j), 1e-14);
    Eigen::MatrixXd nan = u;
    nan(1, 1) = std::nan("");
    EXPECT_THROW(gram(nan, prior), NumericalError);
}

TEST(Gram, PositiveDefiniteOnRandomInputs) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 2.0);
    auto t = base_theta();
    for (int trial = 0; trial < 10; ++trial) {
        t.theta_q = -1.0 + 0.2 * trial;
        t.theta_sigma1 = n(rng);
        const auto prior = component_prior(t, 0.1, 4);
        Eigen::MatrixXd u(12, 4);
        for (int i = 0; i < u.size(); ++i) u.data()[i] = n(rng);
        const Eigen::MatrixXd g = gram(u, prior);
        EXPECT_TRUE(g.isApprox(g.transpose(), 1e-14));
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().minCoeff(), 0.0);
    }
}

TEST(DecodeLatent, Examples) {
    Eigen::VectorXd two(1);
    two << std::log(0.15);
    const Eigen::MatrixXd s2 = decode_latent(two, Eigen::MatrixXd::Identity(1, 1));
    EXPECT_EQ(s2.rows(), 2);
    EXPECT_DOUBLE_EQ(s2(0, 0), 0.0);
    EXPECT_NEAR(s2(1, 0), 0.15, 1e-15);

    Eigen::VectorXd three(3);
    three << std::log(0.3), 0.0, std::log(0.3);
    const Eigen::MatrixXd s3 = decode_latent(three, Eigen::MatrixXd::Identity(2, 2));
    EXPECT_NEAR(s3(1, 0), 0.3, 1e-15);
    EXPECT_NEAR(s3(1, 1), 0.0, 1e-15);
    EXPECT_NEAR(s3(2, 0), 0.0, 1e-15);
    EXPECT_NEAR(s3(2, 1), 0.3, 1e-15);
    EXPECT_NEAR((s3.row(1) - s3.row(2)).norm(), 0.424264, 1e-6);

    EXPECT_THROW(decode_latent(three, Eigen::MatrixXd()), InputError);
}

TEST(DecodeLatent, DistancesInvariantToBasis) {
    Eigen::VectorXd tri(6);
    tri << -1.0, 0.2, -0.5, 0.1, -0.3, -0.8;
    const Eigen::MatrixXd a = decode_latent(tri, Eigen::MatrixXd::Identity(3, 3));
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(3, 3)).householderQ();
    const Eigen::MatrixXd b = decode_latent(tri, q);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) EXPECT_NEAR((a.row(i) - a.row(j)).norm(), (b.row(i) - b.row(j)).norm(), 1e-14);
}

TEST(HyperParams, VectorRoundTrip) {
    HyperParams t;
    t.theta_q = 1;
    t.theta_gamma = 2;
    t.theta_d1 = 3;
    t.theta_d2 = 4;
    t.theta_sigma1 = 5;
    t.theta_sigma2 = 6;
    t.latent_triangle = Eigen::Vector3d(7, 8, 9);
    const auto back = HyperParams::from_vector(t.to_vector());
    EXPECT_EQ(back.to_vector(), t.to_vector());
    EXPECT_EQ(back.num_processes(), 3);
}
