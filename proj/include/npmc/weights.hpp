#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "npmc/errors.hpp"
#include "npmc/random.hpp"

namespace npmc {

/// log(sum(exp(v))) with max subtraction; -inf when every entry is -inf.
inline double log_sum_exp(std::span<const double> v)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        mx = std::max(mx, x);
    }
    if (!std::isfinite(mx)) {
        return mx;
    }
    double acc = 0.0;
    for (double x : v) {
        acc += std::exp(x - mx);
    }
    return mx + std::log(acc);
}

struct NormalizedWeights {
    std::vector<double> weights;
    double log_mean = 0.0; // log((1/n) sum exp(log_w))
};

/// Softmax of log-weights plus the log of their arithmetic mean.
inline NormalizedWeights normalize_log_weights(std::span<const double> log_w)
{
    if (log_w.empty()) {
        throw ValidationError("normalize_log_weights requires at least one weight");
    }
    const double lse = log_sum_exp(log_w);
    if (!std::isfinite(lse)) {
        if (lse > 0.0) {
            throw NumericalRangeError("log-weights contain +inf", 0);
        }
        throw DegenerateWeightsError("all log-weights are -inf");
    }
    NormalizedWeights out;
    out.weights.resize(log_w.size());
    for (std::size_t i = 0; i < log_w.size(); ++i) {
        out.weights[i] = std::exp(log_w[i] - lse);
    }
    out.log_mean = lse - std::log(static_cast<double>(log_w.size()));
    return out;
}

/// 1 / sum(w_i^2) for normalized weights.
inline double effective_sample_size(std::span<const double> weights)
{
    double s = 0.0;
    for (double w : weights) {
        s += w * w;
    }
    return 1.0 / s;
}

/// N_out i.i.d. categorical draws from normalized weights (inverse CDF on
/// sorted uniforms, O(N log N)).
inline std::vector<std::size_t> multinomial_resample(std::span<const double> weights, std::size_t n_out, Rng& rng)
{
    if (weights.empty() || n_out < 1) {
        throw ValidationError("multinomial_resample requires weights and n_out >= 1");
    }
    std::vector<double> u(n_out);
    for (double& x : u) {
        x = uniform01(rng);
    }
    std::sort(u.begin(), u.end());

    std::vector<std::size_t> idx(n_out);
    std::size_t j = 0;
    double cum = weights[0];
    const std::size_t last = weights.size() - 1;
    for (std::size_t k = 0; k < n_out; ++k) {
        while (u[k] >= cum && j < last) {
            cum += weights[++j];
        }
        // Guard against rounding in the cumulative sum landing on a zero-weight tail.
        std::size_t pick = j;
        while (weights[pick] == 0.0 && pick > 0) {
            --pick;
        }
        idx[k] = pick;
    }
    return idx;
}

} // namespace npmc
