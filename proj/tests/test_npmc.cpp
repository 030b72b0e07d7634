#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "npmc/npmc.hpp"

using namespace npmc;

namespace {

// Brute-force clipping: sort copies descending and overwrite the top M_c.
std::vector<double> clip_oracle(const std::vector<double>& w, std::size_t M_c)
{
    std::vector<std::pair<double, std::size_t>> v;
    for (std::size_t i = 0; i < w.size(); ++i) v.emplace_back(w[i], i);
    std::sort(v.begin(), v.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    std::vector<double> out = w;
    for (std::size_t r = 0; r < M_c; ++r) out[v[r].second] = v[M_c - 1].first;
    return out;
}

double ess_of_log(const std::vector<double>& lw) { return effective_sample_size(normalize_log_weights(lw).weights); }

PriorBox square_box() { return PriorBox({-10.0, -10.0}, {10.0, 10.0}); }

auto gaussian_loglik(double c0, double c1, double s)
{
    return [=](const Eigen::VectorXd& th, Rng&) {
        const double z0 = (th[0] - c0) / s, z1 = (th[1] - c1) / s;
        return -0.5 * (z0 * z0 + z1 * z1);
    };
}

} // namespace

TEST(Clipping, MatchesBruteForceOnRandomVectors)
{
    Rng rng = make_rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t M = 2 + static_cast<std::size_t>(uniform01(rng) * 200);
        std::vector<double> lw(M);
        for (auto& v : lw) v = 30.0 * standard_normal(rng);
        if (trial % 3 == 0) lw[M / 2] = lw[0]; // ties
        const std::size_t M_c = 1 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(M));
        const auto got = clip_log_weights(lw, std::min(M_c, M));
        EXPECT_EQ(got, clip_oracle(lw, std::min(M_c, M)));
        EXPECT_GE(ess_of_log(got), ess_of_log(lw) * (1.0 - 1e-12));
    }
}

TEST(Clipping, IdentityAtOneAndFlatAtM)
{
    const std::vector<double> lw = {0.5, -2.0, 3.0, 1.0};
    EXPECT_EQ(clip_log_weights(lw, 1), lw);
    const auto flat = clip_log_weights(lw, 4);
    EXPECT_TRUE(std::all_of(flat.begin(), flat.end(), [](double v) { return v == -2.0; }));
    EXPECT_THROW(clip_log_weights(lw, 0), ValidationError);
    EXPECT_THROW(clip_log_weights(lw, 5), ValidationError);
}

TEST(Clipping, FallsBackToSmallestFiniteWeight)
{
    const std::vector<double> lw = {kNegInf, 2.0, kNegInf, 1.0, kNegInf};
    const auto out = clip_log_weights(lw, 4);
    EXPECT_EQ(out, (std::vector<double>{kNegInf, 1.0, kNegInf, 1.0, kNegInf}));
    EXPECT_THROW(clip_log_weights(std::vector<double>{kNegInf, kNegInf}, 1), DegenerateWeightsError);
}

TEST(GaussianProposal, LogDensityMatchesReference)
{
    // scipy.stats.multivariate_normal reference (tests/oracles/stats_oracle.py).
    Eigen::VectorXd mean(4), pt(4);
    mean << 0.5, 3.0, 175.0, 0.5;
    pt << 0.6, 2.8, 180.0, 0.45;
    Eigen::MatrixXd cov(4, 4);
    cov << 0.02, 0.001, 0, 0, 0.001, 0.05, 0.3, 0, 0, 0.3, 90.0, 0.01, 0, 0, 0.01, 0.03;
    const GaussianProposal g(mean, cov);
    EXPECT_NEAR(g.log_density(pt), -1.641515696890469, 1e-10);
    EXPECT_THROW(GaussianProposal(mean, -cov), NumericalRangeError);
}

TEST(GaussianProposal, SampleMomentsMatch)
{
    Eigen::VectorXd mean(2);
    mean << 1.0, -2.0;
    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.6, 0.6, 0.5;
    const GaussianProposal g(mean, cov);
    Rng rng = make_rng(4);
    const int n = 100000;
    Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd x = g.sample(rng);
        s += x;
        ss += x * x.transpose();
    }
    s /= n;
    const Eigen::MatrixXd c = ss / n - s * s.transpose();
    EXPECT_NEAR(s[0], 1.0, 0.02);
    EXPECT_NEAR(s[1], -2.0, 0.01);
    EXPECT_NEAR(c(0, 0), 2.0, 0.04);
    EXPECT_NEAR(c(0, 1), 0.6, 0.02);
    EXPECT_NEAR(c(1, 1), 0.5, 0.01);
}

TEST(ImportanceWeights, PriorAndProposalForms)
{
    const PriorBox box = square_box();
    Rng rng = make_rng(1);
    auto ll = [](const Eigen::VectorXd&, Rng&) { return -3.5; };
    Eigen::VectorXd th(2);
    th << 1.0, 2.0;
    EXPECT_EQ(evaluate_log_iw(th, box, ll, rng, nullptr), -3.5);

    const GaussianProposal q(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
    EXPECT_NEAR(evaluate_log_iw(th, q, box, ll, rng, nullptr), -3.5 + box.log_density(th) - q.log_density(th), 1e-12);

    IwCounters c;
    th << 11.0, 0.0;
    EXPECT_EQ(evaluate_log_iw(th, q, box, ll, rng, &c), kNegInf);
    EXPECT_EQ(c.out_of_support, 1u);

    auto failing = [](const Eigen::VectorXd&, Rng&) -> double { throw DegenerateWeightsError("x", 2); };
    th << 0.0, 0.0;
    EXPECT_EQ(evaluate_log_iw(th, box, failing, rng, &c), kNegInf);
    EXPECT_EQ(c.filter_failures, 1u);
}

TEST(WeightedMoments, MeanAndCovariance)
{
    WeightedSampleSet set;
    Eigen::VectorXd a(2), b(2);
    a << 0.0, 1.0;
    b << 2.0, 5.0;
    set.samples = {a, b};
    set.weights = {0.25, 0.75};
    const Eigen::VectorXd mu = posterior_mean(set);
    EXPECT_DOUBLE_EQ(mu[0], 1.5);
    EXPECT_DOUBLE_EQ(mu[1], 4.0);
    const Eigen::MatrixXd c = weighted_covariance(set, mu);
    EXPECT_DOUBLE_EQ(c(0, 0), 0.75);
    EXPECT_DOUBLE_EQ(c(0, 1), 1.5);
    EXPECT_DOUBLE_EQ(c(1, 1), 3.0);

    const GaussianProposal g = fit_gaussian_proposal(set, 0.1);
    EXPECT_DOUBLE_EQ(g.cov()(0, 0), 0.85);
    EXPECT_DOUBLE_EQ(g.cov()(0, 1), 1.5);
}

TEST(Npmc, ConfigValidation)
{
    NpmcConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.clip_count(), 14u);
    c.M_c = 15;
    EXPECT_THROW(c.validate(), ValidationError);
    c.M_c = 0;
    c.M = 1;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Npmc, ConcentratesOnGaussianTarget)
{
    NpmcConfig cfg;
    cfg.M = 400;
    cfg.K = 6;
    cfg.seed = 5;
    const NpmcResult res = run_npmc(cfg, gaussian_loglik(1.5, -2.0, 0.3), square_box());
    ASSERT_EQ(res.iterations.size(), 7u);
    ASSERT_EQ(res.proposals.size(), 6u);
    EXPECT_NEAR(res.final_estimate()[0], 1.5, 0.05);
    EXPECT_NEAR(res.final_estimate()[1], -2.0, 0.05);
    EXPECT_LT(res.mse.back(), res.mse.front());
    EXPECT_GT(res.ess.back(), res.ess.front());
    for (const auto& set : res.iterations) {
        EXPECT_NEAR(std::accumulate(set.weights.begin(), set.weights.end(), 0.0), 1.0, 1e-12);
    }
}

TEST(Npmc, ResultIndependentOfWorkerCount)
{
    NpmcConfig cfg;
    cfg.M = 64;
    cfg.K = 3;
    cfg.seed = 77;
    auto noisy = [](const Eigen::VectorXd& th, Rng& rng) {
        return -0.5 * th.squaredNorm() + 0.3 * standard_normal(rng);
    };
    cfg.workers = 1;
    const NpmcResult a = run_npmc(cfg, noisy, square_box());
    cfg.workers = 4;
    const NpmcResult b = run_npmc(cfg, noisy, square_box());
    for (std::size_t k = 0; k < a.iterations.size(); ++k) {
        EXPECT_EQ(a.iterations[k].log_iw, b.iterations[k].log_iw);
    }
    EXPECT_EQ(a.final_estimate(), b.final_estimate());
}

TEST(Npmc, AllZeroWeightsRaise)
{
    NpmcConfig cfg;
    cfg.M = 16;
    cfg.K = 1;
    auto zero = [](const Eigen::VectorXd&, Rng&) { return kNegInf; };
    EXPECT_THROW(run_npmc(cfg, zero, square_box()), DegenerateWeightsError);
}

TEST(Npmc, InitialIterationDrawsFromPrior)
{
    NpmcConfig cfg;
    cfg.M = 2000;
    cfg.K = 0;
    auto flat = [](const Eigen::VectorXd&, Rng&) { return 0.0; };
    const NpmcResult res = run_npmc(cfg, flat, PriorBox::repressilator());
    const auto& set = res.iterations.front();
    for (const auto& s : set.samples) EXPECT_TRUE(PriorBox::repressilator().contains(s));
    EXPECT_NEAR(res.final_estimate()[2], 175.0, 5.0);
    EXPECT_NEAR(res.ess.front(), 2000.0, 1e-6);
}

TEST(WeightedMoments, TwoPointProposalFit)
{
    WeightedSampleSet set;
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(4);
    e1[0] = 1.0;
    set.samples = {e1, -e1};
    set.weights = {0.5, 0.5};
    const GaussianProposal g = fit_gaussian_proposal(set, 1e-6);
    EXPECT_TRUE(g.mean().isZero(0.0));
    Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(4, 4) * 1e-6;
    expected(0, 0) += 1.0;
    EXPECT_TRUE(g.cov().isApprox(expected, 1e-15));
}

TEST(WeightedMoments, MseIsTraceOfCovariance)
{
    Rng rng = make_rng(6);
    WeightedSampleSet set;
    double total = 0.0;
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd th(4);
        for (Eigen::Index j = 0; j < 4; ++j) th[j] = standard_normal(rng) * (j + 1);
        set.samples.push_back(th);
        set.weights.push_back(uniform01(rng));
        total += set.weights.back();
    }
    for (double& w : set.weights) w /= total;
    const Eigen::VectorXd mu = posterior_mean(set);
    EXPECT_NEAR(posterior_mse(set, mu), weighted_covariance(set, mu).trace(), 1e-10);
}
