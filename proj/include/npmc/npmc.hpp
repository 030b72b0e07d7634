#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npmc/bootstrap_filter.hpp"
#include "npmc/errors.hpp"
#include "npmc/parallel.hpp"
#include "npmc/parameters.hpp"
#include "npmc/random.hpp"
#include "npmc/weights.hpp"

namespace npmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Multivariate normal proposal N(mean, cov) with a cached Cholesky factor.
class GaussianProposal {
public:
    GaussianProposal(Eigen::VectorXd mean, Eigen::MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov))
    {
        if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
            throw ValidationError("proposal covariance does not match mean dimension");
        }
        cov_ = 0.5 * (cov_ + cov_.transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(cov_);
        if (llt.info() != Eigen::Success) {
            throw NumericalRangeError("proposal covariance is not positive definite", 0);
        }
        chol_ = llt.matrixL();
        log_norm_ = -0.5 * static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) -
                    chol_.diagonal().array().log().sum();
    }

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }

    double log_density(const Eigen::VectorXd& theta) const
    {
        const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(theta - mean_);
        return log_norm_ - 0.5 * z.squaredNorm();
    }

    Eigen::VectorXd sample(Rng& rng) const
    {
        Eigen::VectorXd z(mean_.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            z[i] = standard_normal(rng);
        }
        return mean_ + chol_ * z;
    }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd chol_;
    double log_norm_ = 0.0;
};

/// Samples of one iteration with raw and transformed importance weights.
struct WeightedSampleSet {
    std::size_t iteration = 0;
    std::vector<Eigen::VectorXd> samples;
    std::vector<double> log_iw;  // log of the non-normalised importance weights
    std::vector<double> log_tiw; // after clipping
    std::vector<double> weights; // normalised transformed weights
    std::size_t out_of_support = 0;
    std::size_t filter_failures = 0;

    std::size_t size() const { return samples.size(); }

    std::size_t zero_weight_count() const
    {
        return static_cast<std::size_t>(
            std::count_if(log_iw.begin(), log_iw.end(), [](double v) { return v == kNegInf; }));
    }
};

/// Flattens the M_c largest log-weights to the value of the M_c-th largest.
/// Ties are ordered by lowest index first. If fewer than M_c entries are
/// finite, the threshold falls back to the smallest finite entry so that
/// clipping never zeroes every weight.
inline std::vector<double> clip_log_weights(std::span<const double> log_iws, std::size_t M_c)
{
    if (M_c < 1 || M_c > log_iws.size()) {
        throw ValidationError("clip_log_weights requires 1 <= M_c <= number of weights");
    }
    std::vector<std::size_t> order(log_iws.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return log_iws[i] > log_iws[j]; });

    std::size_t count = M_c;
    while (count > 1 && log_iws[order[count - 1]] == kNegInf) {
        --count;
    }
    if (log_iws[order[0]] == kNegInf) {
        throw DegenerateWeightsError("clip_log_weights: every weight is zero");
    }
    const double threshold = log_iws[order[count - 1]];
    std::vector<double> out(log_iws.begin(), log_iws.end());
    for (std::size_t r = 0; r < count; ++r) {
        out[order[r]] = threshold;
    }
    return out;
}

/// Counts failure modes while evaluating importance weights.
struct IwCounters {
    std::size_t out_of_support = 0;
    std::size_t filter_failures = 0;
};

namespace detail {

template <class LogLik>
double guarded_log_likelihood(LogLik& loglik, const Eigen::VectorXd& theta, Rng& rng, IwCounters* counters)
{
    try {
        const double v = loglik(theta, rng);
        if (std::isnan(v)) {
            throw DegenerateWeightsError("log-likelihood estimate is NaN");
        }
        return v;
    } catch (const DegenerateWeightsError&) {
        if (counters != nullptr) {
            ++counters->filter_failures;
        }
        return kNegInf;
    } catch (const NumericalRangeError&) {
        if (counters != nullptr) {
            ++counters->filter_failures;
        }
        return kNegInf;
    }
}

} // namespace detail

/// Log importance weight for a sample drawn from the prior itself: the
/// prior/proposal ratio cancels, leaving the likelihood estimate.
template <class LogLik>
double evaluate_log_iw(const Eigen::VectorXd& theta, const PriorBox& prior, LogLik&& loglik, Rng& rng,
                       IwCounters* counters = nullptr)
{
    if (!prior.contains(theta)) {
        if (counters != nullptr) {
            ++counters->out_of_support;
        }
        return kNegInf;
    }
    return detail::guarded_log_likelihood(loglik, theta, rng, counters);
}

/// log l^N(y|theta) + log p0(theta) - log q(theta). Out-of-support samples
/// get -inf without evaluating the likelihood.
template <class LogLik>
double evaluate_log_iw(const Eigen::VectorXd& theta, const GaussianProposal& proposal, const PriorBox& prior,
                       LogLik&& loglik, Rng& rng, IwCounters* counters = nullptr)
{
    if (!prior.contains(theta)) {
        if (counters != nullptr) {
            ++counters->out_of_support;
        }
        return kNegInf;
    }
    const double ll = detail::guarded_log_likelihood(loglik, theta, rng, counters);
    if (ll == kNegInf) {
        return kNegInf;
    }
    return ll + prior.log_density(theta) - proposal.log_density(theta);
}

inline Eigen::VectorXd posterior_mean(const WeightedSampleSet& set)
{
    if (set.samples.empty()) {
        throw ValidationError("posterior_mean of an empty sample set");
    }
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(set.samples.front().size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.weights[i] != 0.0) {
            mu += set.weights[i] * set.samples[i];
        }
    }
    return mu;
}

/// Weighted covariance about the weighted mean, without regularisation.
inline Eigen::MatrixXd weighted_covariance(const WeightedSampleSet& set, const Eigen::VectorXd& mean)
{
    const auto d = mean.size();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.weights[i] != 0.0) {
            const Eigen::VectorXd r = set.samples[i] - mean;
            cov.noalias() += set.weights[i] * (r * r.transpose());
        }
    }
    return 0.5 * (cov + cov.transpose());
}

/// sum_i w_i ||theta_i - estimate||^2.
inline double posterior_mse(const WeightedSampleSet& set, const Eigen::VectorXd& estimate)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.weights[i] != 0.0) {
            acc += set.weights[i] * (set.samples[i] - estimate).squaredNorm();
        }
    }
    return acc;
}

/// Moment-matched Gaussian: weighted mean, weighted covariance plus
/// diag(jitter). Needs at least two samples with nonzero weight.
inline GaussianProposal fit_gaussian_proposal(const WeightedSampleSet& set, const Eigen::VectorXd& jitter)
{
    const auto nonzero = std::count_if(set.weights.begin(), set.weights.end(), [](double w) { return w > 0.0; });
    if (nonzero < 2) {
        throw DegenerateWeightsError("proposal fit needs at least two samples with nonzero weight");
    }
    const Eigen::VectorXd mu = posterior_mean(set);
    Eigen::MatrixXd cov = weighted_covariance(set, mu);
    cov.diagonal() += jitter;
    return GaussianProposal(mu, cov);
}

inline GaussianProposal fit_gaussian_proposal(const WeightedSampleSet& set, double jitter)
{
    const auto d = set.samples.empty() ? 0 : set.samples.front().size();
    return fit_gaussian_proposal(set, Eigen::VectorXd::Constant(d, jitter));
}

struct NpmcConfig {
    std::size_t M = 200;         // samples per iteration
    std::size_t K = 15;          // adaptive iterations after initialisation
    std::size_t M_c = 0;         // clip count; 0 selects floor(sqrt(M))
    std::size_t N = 100;         // filter particles
    std::uint64_t seed = 1;
    double jitter_scale = 1e-6;  // covariance jitter = jitter_scale * range_j^2
    std::size_t workers = 1;

    std::size_t clip_count() const
    {
        return M_c == 0 ? static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(M)))) : M_c;
    }

    void validate() const
    {
        if (M < 2) {
            throw ValidationError("NPMC requires M >= 2");
        }
        const std::size_t mc = clip_count();
        if (mc < 1 || mc * mc > M) {
            throw ValidationError("NPMC requires 1 <= M_c <= sqrt(M)");
        }
        if (N < 1) {
            throw ValidationError("NPMC requires N >= 1");
        }
        if (!(jitter_scale >= 0.0)) {
            throw ValidationError("jitter_scale must be nonnegative");
        }
    }
};

struct NpmcResult {
    NpmcConfig config;
    std::vector<WeightedSampleSet> iterations;    // k = 0..K
    std::vector<GaussianProposal> proposals;      // proposal used at k = 1..K
    std::vector<Eigen::VectorXd> estimates;       // posterior mean per iteration
    std::vector<double> mse;                      // posterior MSE per iteration
    std::vector<double> ess;                      // ESS of normalised TIWs per iteration
    std::vector<double> wall_seconds;             // per iteration
    Eigen::VectorXd jitter;

    const WeightedSampleSet& final_set() const { return iterations.back(); }
    const Eigen::VectorXd& final_estimate() const { return estimates.back(); }
};

/// Per-sample stream seeds: derive_seed(seed, {k, i + 1}); stream {k, 0}
/// draws the samples of iteration k.
inline std::uint64_t npmc_sample_seed(std::uint64_t seed, std::size_t k, std::size_t i)
{
    return derive_seed(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i) + 1});
}

namespace detail {

inline void finish_iteration(WeightedSampleSet& set, std::size_t M_c)
{
    set.log_tiw = clip_log_weights(set.log_iw, M_c);
    try {
        set.weights = normalize_log_weights(set.log_tiw).weights;
    } catch (const DegenerateWeightsError&) {
        throw DegenerateWeightsError("every importance weight is zero at iteration " + std::to_string(set.iteration) +
                                     " (prior/proposal mismatch)");
    }
}

} // namespace detail

/// Nonlinear population Monte Carlo.
///
/// Iteration 0 draws M samples from the prior; iteration k >= 1 draws M
/// samples from a Gaussian fitted to the weighted samples of iteration k-1.
/// Importance weights are clipped (the M_c largest flattened) and then
/// normalised. `loglik(theta, rng)` returns a (possibly noisy, unbiased in
/// natural scale) log-likelihood estimate; DegenerateWeightsError from it
/// maps to a zero weight. Likelihood evaluations run on `cfg.workers`
/// threads with per-sample seeds, so results do not depend on scheduling.
template <class LogLik>
NpmcResult run_npmc(const NpmcConfig& cfg, LogLik&& loglik, const PriorBox& prior)
{
    cfg.validate();
    const std::size_t M_c = cfg.clip_count();
    const auto d = static_cast<Eigen::Index>(prior.dim());

    NpmcResult result;
    result.config = cfg;
    result.jitter.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double r = prior.range(static_cast<std::size_t>(j));
        result.jitter[j] = cfg.jitter_scale * r * r;
    }

    for (std::size_t k = 0; k <= cfg.K; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        WeightedSampleSet set;
        set.iteration = k;
        set.samples.resize(cfg.M);
        set.log_iw.assign(cfg.M, kNegInf);

        Rng draw_rng = make_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(k), 0}));
        const GaussianProposal* proposal = nullptr;
        if (k == 0) {
            for (auto& s : set.samples) {
                s = prior.sample(draw_rng);
            }
        } else {
            result.proposals.push_back(fit_gaussian_proposal(result.iterations.back(), result.jitter));
            proposal = &result.proposals.back();
            for (auto& s : set.samples) {
                s = proposal->sample(draw_rng);
            }
        }

        std::vector<IwCounters> counters(cfg.M);
        parallel_for(cfg.M, cfg.workers, [&](std::size_t i) {
            Rng rng = make_rng(npmc_sample_seed(cfg.seed, k, i));
            set.log_iw[i] = proposal == nullptr
                                ? evaluate_log_iw(set.samples[i], prior, loglik, rng, &counters[i])
                                : evaluate_log_iw(set.samples[i], *proposal, prior, loglik, rng, &counters[i]);
        });
        for (const auto& c : counters) {
            set.out_of_support += c.out_of_support;
            set.filter_failures += c.filter_failures;
        }
        if (std::all_of(set.log_iw.begin(), set.log_iw.end(), [](double v) { return v == kNegInf; })) {
            throw DegenerateWeightsError("every importance weight is zero at iteration " + std::to_string(k) +
                                         " (prior/proposal mismatch)");
        }
        detail::finish_iteration(set, M_c);

        const Eigen::VectorXd mean = posterior_mean(set);
        result.mse.push_back(posterior_mse(set, mean));
        result.estimates.push_back(mean);
        result.ess.push_back(effective_sample_size(set.weights));
        result.iterations.push_back(std::move(set));
        result.wall_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return result;
}

/// Adapts a StateSpaceModel whose Parameters build from a vector into the
/// log-likelihood callable expected by the samplers.
template <StateSpaceModel Model>
auto filter_log_likelihood(const Model& model, const std::vector<typename Model::Observation>& obs, std::size_t N)
{
    return [&model, &obs, N](const Eigen::VectorXd& theta, Rng& rng) {
        return run_filter(model, Model::Parameters::from_vector(theta), obs, N, rng).log_value;
    };
}

} // namespace npmc
