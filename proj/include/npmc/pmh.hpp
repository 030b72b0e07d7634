#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "npmc/errors.hpp"
#include "npmc/parameters.hpp"
#include "npmc/random.hpp"

namespace npmc {

template <class State>
struct ChainEntry {
    State theta;
    double log_likelihood = 0.0; // stored estimate for theta
    bool accepted = false;
};

template <class State>
struct MarkovChain {
    State initial;
    double initial_log_likelihood = 0.0;
    std::vector<ChainEntry<State>> entries; // state after each of the L steps
    std::size_t likelihood_calls = 0;
    std::size_t rejected_out_of_support = 0;
    std::size_t rejected_degenerate = 0;

    double acceptance_rate() const
    {
        if (entries.empty()) {
            return 0.0;
        }
        std::size_t acc = 0;
        for (const auto& e : entries) {
            acc += e.accepted ? 1 : 0;
        }
        return static_cast<double>(acc) / static_cast<double>(entries.size());
    }
};

/// Pseudo-marginal Metropolis-Hastings with a symmetric proposal.
///
/// The incumbent's likelihood estimate is stored and reused; only candidates
/// are evaluated. Candidates with zero prior density are rejected without a
/// likelihood call; candidates whose estimator throws DegenerateWeightsError
/// are rejected and counted.
template <class State, class LogPrior, class Propose, class LogLik>
MarkovChain<State> metropolis_hastings(const State& initial, std::size_t L, LogPrior&& log_prior, Propose&& propose,
                                       LogLik&& loglik, Rng& rng)
{
    MarkovChain<State> chain;
    chain.initial = initial;
    double current_lp = log_prior(initial);
    if (!std::isfinite(current_lp)) {
        throw ValidationError("initial state must lie inside the prior support");
    }
    ++chain.likelihood_calls;
    double current_ll = loglik(initial, rng);
    if (!std::isfinite(current_ll)) {
        throw DegenerateWeightsError("likelihood estimate at the initial state is zero");
    }
    chain.initial_log_likelihood = current_ll;
    State current = initial;
    chain.entries.reserve(L);

    for (std::size_t t = 0; t < L; ++t) {
        State candidate = propose(current, rng);
        const double lp = log_prior(candidate);
        bool accepted = false;
        if (std::isfinite(lp)) {
            double ll = -INFINITY;
            ++chain.likelihood_calls;
            try {
                ll = loglik(candidate, rng);
            } catch (const DegenerateWeightsError&) {
                ++chain.rejected_degenerate;
            } catch (const NumericalRangeError&) {
                ++chain.rejected_degenerate;
            }
            if (std::isfinite(ll)) {
                const double log_ratio = (ll + lp) - (current_ll + current_lp);
                if (log_ratio >= 0.0 || std::log(uniform01(rng)) < log_ratio) {
                    current = std::move(candidate);
                    current_ll = ll;
                    current_lp = lp;
                    accepted = true;
                }
            }
        } else {
            ++chain.rejected_out_of_support;
        }
        chain.entries.push_back({current, current_ll, accepted});
    }
    return chain;
}

struct PmhConfig {
    std::size_t L = 6000;
    /// Random-walk variances in theta order (Q, m, alpha, beta_a).
    std::vector<double> proposal_variances = {0.01, 0.01, 100.0, 0.01};
    std::size_t N = 100;
    std::vector<double> initial = {0.5, 3.0, 175.0, 0.5};
    std::uint64_t seed = 1;
    std::size_t burn_in = 0;

    void validate(const PriorBox& prior) const
    {
        if (proposal_variances.size() != prior.dim() || initial.size() != prior.dim()) {
            throw ValidationError("PMH proposal and initial point must match the prior dimension");
        }
        for (double v : proposal_variances) {
            if (!(v > 0.0)) {
                throw ValidationError("PMH proposal variances must be positive");
            }
        }
        if (L < 1 || N < 1) {
            throw ValidationError("PMH requires L >= 1 and N >= 1");
        }
        if (burn_in >= L) {
            throw ValidationError("PMH burn-in must be shorter than the chain");
        }
    }
};

using PmhChain = MarkovChain<Eigen::VectorXd>;

/// Particle Metropolis-Hastings with a diagonal Gaussian random walk on the
/// box prior. `loglik(theta, rng)` is typically a bootstrap-filter estimate.
template <class LogLik>
PmhChain run_pmh(const PmhConfig& cfg, LogLik&& loglik, const PriorBox& prior)
{
    cfg.validate(prior);
    const auto d = static_cast<Eigen::Index>(prior.dim());
    Eigen::VectorXd sd(d), init(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        sd[j] = std::sqrt(cfg.proposal_variances[static_cast<std::size_t>(j)]);
        init[j] = cfg.initial[static_cast<std::size_t>(j)];
    }
    Rng rng = make_rng(cfg.seed);
    auto propose = [&sd](const Eigen::VectorXd& x, Rng& r) {
        Eigen::VectorXd y = x;
        for (Eigen::Index j = 0; j < y.size(); ++j) {
            y[j] += sd[j] * standard_normal(r);
        }
        return y;
    };
    auto log_prior = [&prior](const Eigen::VectorXd& x) { return prior.log_density(x); };
    return metropolis_hastings(init, cfg.L, log_prior, propose, loglik, rng);
}

/// Mean of the chain after discarding the first `burn_in` entries.
inline Eigen::VectorXd chain_mean(const PmhChain& chain, std::size_t burn_in = 0)
{
    if (burn_in >= chain.entries.size()) {
        throw ValidationError("burn-in leaves no chain entries");
    }
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(chain.initial.size());
    for (std::size_t t = burn_in; t < chain.entries.size(); ++t) {
        mu += chain.entries[t].theta;
    }
    return mu / static_cast<double>(chain.entries.size() - burn_in);
}

} // namespace npmc
