#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "npmc/random.hpp"
#include "npmc/stats.hpp"

using namespace npmc;

// Reference values from tests/oracles/stats_oracle.py.

TEST(Kde, MatchesReference)
{
    const std::vector<double> x = {0.1, 0.4, 0.35, 0.8, 0.55};
    const std::vector<double> w = {0.1, 0.3, 0.2, 0.25, 0.15};
    const std::vector<double> grid = {0.0, 0.3, 0.9};
    const KdeCurve k = weighted_kde(x, w, grid, 0.2);
    EXPECT_NEAR(k.density[0], 0.35028389163684276, 1e-12);
    EXPECT_NEAR(k.density[1], 1.1946486588675973, 1e-12);
    EXPECT_NEAR(k.density[2], 0.5402425759300843, 1e-12);
    EXPECT_NEAR(silverman_bandwidth(x, w), 0.1688284305210919, 1e-12);
}

TEST(Kde, IntegratesToOne)
{
    Rng rng = make_rng(2);
    std::vector<double> x(300), w(300);
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = standard_normal(rng);
        w[i] = uniform01(rng);
        total += w[i];
    }
    for (double& v : w) v /= total;
    const auto grid = linspace(-8.0, 8.0, 4001);
    const KdeCurve k = weighted_kde(x, w, grid, silverman_bandwidth(x, w));
    EXPECT_NEAR(trapezoid(grid, k.density), 1.0, 1e-6);
}

TEST(Kde, SilvermanUniformWeightsAndDegenerateInput)
{
    // Unit-variance sample of size 100 with equal weights: 1.06 * 100^(-1/5).
    std::vector<double> x(100), w(100, 0.01);
    for (std::size_t i = 0; i < 100; ++i) x[i] = (i % 2 == 0) ? 1.0 : -1.0;
    EXPECT_NEAR(silverman_bandwidth(x, w), 1.06 * std::pow(100.0, -0.2), 1e-12);
    EXPECT_NEAR(silverman_bandwidth(x, w), 0.42199, 1e-5);
    const std::vector<double> same = {2.0, 2.0};
    EXPECT_THROW(silverman_bandwidth(same, std::vector<double>{0.5, 0.5}), NumericalRangeError);
    EXPECT_THROW(weighted_kde(x, w, x, 0.0), ValidationError);
}

TEST(Nmse, MatchesReference)
{
    std::vector<Eigen::VectorXd> est(3, Eigen::VectorXd(4));
    est[0] << 0.8, 2.5, 200.0, 0.9;
    est[1] << 0.9, 2.9, 230.0, 0.7;
    est[2] << 0.85, 2.6, 216.0, 0.85;
    Eigen::VectorXd truth(4);
    truth << 0.85, 2.6, 216.0, 0.85;
    const NmseReport r = nmse(est, truth, "x");
    const std::array<double, 4> mean = {0.0023068050749711646, 0.004930966469428003, 0.0032293095564700502,
                                        0.01153402537485583};
    const std::array<double, 4> sd = {0.0016311575113876525, 0.005958109454435184, 0.0023430442378566106,
                                      0.013936615886498934};
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(r.mean[j], mean[j], 1e-14);
        EXPECT_NEAR(r.std[j], sd[j], 1e-14);
    }
    EXPECT_EQ(r.runs, 3u);
}

TEST(Nmse, ZeroAtTruth)
{
    Eigen::VectorXd truth(4);
    truth << 0.85, 2.6, 216.0, 0.85;
    const NmseReport r = nmse({truth, truth}, truth);
    for (double v : r.mean) EXPECT_EQ(v, 0.0);
    truth[0] = 0.0;
    EXPECT_THROW(nmse({truth}, truth), ValidationError);
}

TEST(Random, DerivedSeedsAreDistinctAndStable)
{
    EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
    EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
    EXPECT_NE(derive_seed(1, {0}), derive_seed(2, {0}));
    EXPECT_NE(derive_seed(1, {}), derive_seed(1, {0}));
}

TEST(Random, StandardNormalMoments)
{
    Rng rng = make_rng(8);
    const int n = 400000;
    double s = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = standard_normal(rng);
        s += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
    EXPECT_NEAR(s4 / n, 3.0, 0.05);
}
