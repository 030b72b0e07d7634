#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npmc/errors.hpp"
#include "npmc/weights.hpp"

namespace npmc {

struct KdeCurve {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
};

/// f(x) = sum_i w_i N(x; samples_i, bandwidth^2). Weights are used as given,
/// so unnormalised weights give an unnormalised curve.
inline KdeCurve weighted_kde(std::span<const double> samples, std::span<const double> weights,
                             std::span<const double> grid, double bandwidth)
{
    if (samples.empty()) {
        throw ValidationError("weighted_kde requires at least one sample");
    }
    if (samples.size() != weights.size()) {
        throw ValidationError("weighted_kde: samples and weights differ in length");
    }
    if (!(bandwidth > 0.0)) {
        throw ValidationError("weighted_kde requires a positive bandwidth");
    }
    KdeCurve out;
    out.grid.assign(grid.begin(), grid.end());
    out.density.assign(grid.size(), 0.0);
    out.bandwidth = bandwidth;
    const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (weights[i] == 0.0) {
                continue;
            }
            const double z = (grid[g] - samples[i]) / bandwidth;
            acc += weights[i] * std::exp(-0.5 * z * z);
        }
        out.density[g] = norm * acc;
    }
    return out;
}

/// Silverman's rule on weighted samples: 1.06 * sd_w * ESS^(-1/5).
inline double silverman_bandwidth(std::span<const double> samples, std::span<const double> weights)
{
    if (samples.size() < 2 || samples.size() != weights.size()) {
        throw ValidationError("silverman_bandwidth requires at least two weighted samples");
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        mean += weights[i] * samples[i];
    }
    double var = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        var += weights[i] * (samples[i] - mean) * (samples[i] - mean);
    }
    if (!(var > 0.0)) {
        throw NumericalRangeError("silverman_bandwidth: weighted variance is zero", 0);
    }
    return 1.06 * std::sqrt(var) * std::pow(effective_sample_size(weights), -0.2);
}

/// n evenly spaced points from lo to hi inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return g;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y)
{
    double acc = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    }
    return acc;
}

struct NmseReport {
    std::string method;
    std::vector<double> mean; // per parameter
    std::vector<double> std;  // across runs
    std::size_t runs = 0;
    std::size_t failed_runs = 0;
};

/// Per parameter j: mean over runs of (est_j - truth_j)^2 / truth_j^2, with
/// the across-run standard deviation of the same quantity.
inline NmseReport nmse(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& truth,
                       std::string method = {})
{
    if (estimates.empty()) {
        throw ValidationError("nmse requires at least one estimate");
    }
    for (Eigen::Index j = 0; j < truth.size(); ++j) {
        if (truth[j] == 0.0) {
            throw ValidationError("nmse: truth component " + std::to_string(j) + " is zero");
        }
    }
    const auto d = static_cast<std::size_t>(truth.size());
    NmseReport rep;
    rep.method = std::move(method);
    rep.runs = estimates.size();
    rep.mean.assign(d, 0.0);
    rep.std.assign(d, 0.0);
    const double n = static_cast<double>(estimates.size());
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> e(estimates.size());
        for (std::size_t r = 0; r < estimates.size(); ++r) {
            const double t = truth[static_cast<Eigen::Index>(j)];
            const double diff = estimates[r][static_cast<Eigen::Index>(j)] - t;
            e[r] = diff * diff / (t * t);
            rep.mean[j] += e[r];
        }
        rep.mean[j] /= n;
        double v = 0.0;
        for (double x : e) {
            v += (x - rep.mean[j]) * (x - rep.mean[j]);
        }
        rep.std[j] = std::sqrt(v / n);
    }
    return rep;
}

} // namespace npmc
