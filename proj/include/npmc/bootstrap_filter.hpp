#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "npmc/errors.hpp"
#include "npmc/random.hpp"
#include "npmc/state_space.hpp"
#include "npmc/weights.hpp"

namespace npmc {

/// Per-tick diagnostics of a filter run.
struct FilterTick {
    std::size_t n = 0;
    double log_increment = 0.0; // log of the mean unnormalized weight
    double ess = 0.0;
};

/// Bootstrap-filter estimate of log l(y | theta).
struct LogLikelihoodEstimate {
    double log_value = 0.0;
    std::size_t N = 0;
    std::size_t R = 0;
    std::vector<double> increments;
    std::vector<double> ess; // ESS of the normalized weights at each tick

    std::vector<double> cumulative() const
    {
        std::vector<double> c(increments.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < increments.size(); ++i) {
            acc += increments[i];
            c[i] = acc;
        }
        return c;
    }

    std::vector<FilterTick> ticks() const
    {
        std::vector<FilterTick> t(increments.size());
        for (std::size_t i = 0; i < increments.size(); ++i) {
            t[i] = {i + 1, increments[i], ess[i]};
        }
        return t;
    }
};

/// Bootstrap particle filter with multinomial resampling at every tick.
///
/// Particles are drawn from the state prior, then for each observation:
/// propagated through the transition kernel, weighted by the observation
/// density, and resampled. The likelihood increment at tick n is the mean of
/// the unnormalized weights of the propagated (pre-resampling) particles, so
/// exp(log_value) is the standard unbiased estimator of l(y | theta).
///
/// Throws DegenerateWeightsError carrying the tick when every particle has
/// zero observation density.
template <StateSpaceModel Model>
LogLikelihoodEstimate run_filter(const Model& model, const typename Model::Parameters& theta,
                                 const std::vector<typename Model::Observation>& obs, std::size_t N, Rng& rng)
{
    if (N < 1) {
        throw ValidationError("run_filter requires N >= 1");
    }
    if (obs.empty()) {
        throw ValidationError("run_filter requires a nonempty observation sequence");
    }
    using State = typename Model::State;

    std::vector<State> particles;
    particles.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        particles.push_back(model.sample_prior(rng));
    }
    std::vector<State> propagated(particles);
    std::vector<double> log_w(N);

    LogLikelihoodEstimate est;
    est.N = N;
    est.R = obs.size();
    est.increments.reserve(obs.size());
    est.ess.reserve(obs.size());

    for (std::size_t n = 0; n < obs.size(); ++n) {
        for (std::size_t i = 0; i < N; ++i) {
            propagated[i] = model.sample_transition(particles[i], theta, rng);
            log_w[i] = model.log_obs_density(obs[n], propagated[i]);
        }
        NormalizedWeights nw;
        try {
            nw = normalize_log_weights(log_w);
        } catch (const DegenerateWeightsError&) {
            throw DegenerateWeightsError("all particles have zero weight at tick " + std::to_string(n + 1), n + 1);
        }
        est.increments.push_back(nw.log_mean);
        est.ess.push_back(effective_sample_size(nw.weights));

        const auto idx = multinomial_resample(nw.weights, N, rng);
        for (std::size_t i = 0; i < N; ++i) {
            particles[i] = propagated[idx[i]];
        }
    }

    double total = 0.0;
    for (double inc : est.increments) {
        total += inc;
    }
    est.log_value = total;
    return est;
}

} // namespace npmc
