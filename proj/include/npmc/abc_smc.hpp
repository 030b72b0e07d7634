#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npmc/errors.hpp"
#include "npmc/gene_network.hpp"
#include "npmc/parallel.hpp"
#include "npmc/parameters.hpp"
#include "npmc/random.hpp"
#include "npmc/weights.hpp"

namespace npmc {

/// Normalised RMSE between two observation sequences: for each component j,
/// RMSE_j divided by the pooled standard deviation sqrt((var_j(u)+var_j(v))/2),
/// averaged over components. Symmetric in its arguments.
inline double abc_distance(const ObservationSequence& u, const ObservationSequence& v)
{
    if (u.size() != v.size() || u.empty()) {
        throw ValidationError("abc_distance requires nonempty sequences of equal length");
    }
    const double n = static_cast<double>(u.size());
    double total = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
        double mu_u = 0.0, mu_v = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            mu_u += u[i].y[j];
            mu_v += v[i].y[j];
        }
        mu_u /= n;
        mu_v /= n;
        double var_u = 0.0, var_v = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            var_u += (u[i].y[j] - mu_u) * (u[i].y[j] - mu_u);
            var_v += (v[i].y[j] - mu_v) * (v[i].y[j] - mu_v);
            sq += (u[i].y[j] - v[i].y[j]) * (u[i].y[j] - v[i].y[j]);
        }
        const double pooled = std::sqrt(0.5 * (var_u + var_v) / n);
        const double rmse = std::sqrt(sq / n);
        if (pooled == 0.0) {
            total += rmse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        } else {
            total += rmse / pooled;
        }
    }
    return 0.5 * total;
}

inline bool abc_accepts(double distance, double tolerance) { return distance <= tolerance; }

struct AbcConfig {
    std::vector<double> tolerances = {3.0, 2.5, 2.3, 2.2, 2.1};
    std::size_t target_accepted = 1200;
    std::size_t max_draws = 1600000;
    double kernel_scale = 1.0; // multiplies the previous population's per-dimension std
    std::size_t batch = 64;    // candidates simulated per parallel batch
    std::uint64_t seed = 1;
    std::size_t workers = 1;

    void validate() const
    {
        if (tolerances.empty()) {
            throw ValidationError("ABC requires at least one tolerance");
        }
        for (std::size_t t = 1; t < tolerances.size(); ++t) {
            if (!(tolerances[t] < tolerances[t - 1])) {
                throw ValidationError("ABC tolerances must be strictly decreasing");
            }
        }
        if (target_accepted < 1 || max_draws < 1 || batch < 1) {
            throw ValidationError("ABC requires positive target, max draws and batch size");
        }
        if (!(kernel_scale > 0.0)) {
            throw ValidationError("ABC kernel scale must be positive");
        }
    }
};

struct AbcStage {
    double tolerance = 0.0;
    std::vector<Eigen::VectorXd> samples;
    std::vector<double> distances;
    std::vector<double> weights; // normalised
    std::size_t draws = 0;
    std::size_t out_of_support = 0;
    Eigen::VectorXd kernel_sd;   // empty for the first stage
};

struct AbcPopulation {
    std::vector<AbcStage> stages;

    const AbcStage& final_stage() const { return stages.back(); }

    Eigen::VectorXd posterior_mean() const
    {
        const auto& s = final_stage();
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(s.samples.front().size());
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
            mu += s.weights[i] * s.samples[i];
        }
        return mu;
    }
};

class AbcStageFailure : public std::runtime_error {
public:
    AbcStageFailure(const std::string& what, std::size_t stage, std::size_t draws)
        : std::runtime_error(what), stage_(stage), draws_(draws) {}
    std::size_t stage() const noexcept { return stage_; }
    std::size_t draws() const noexcept { return draws_; }

private:
    std::size_t stage_;
    std::size_t draws_;
};

/// ABC sequential Monte Carlo with decreasing tolerances.
///
/// Stage 1 proposes from the prior. Later stages resample the previous
/// weighted population and perturb with a Gaussian kernel whose per-dimension
/// std is kernel_scale times the previous population's weighted std; accepted
/// samples get weight p0(theta) / sum_j w_j K(theta | theta_j). A candidate
/// is accepted iff abc_distance(y, simulate(theta)) <= tolerance. A stage ends
/// at target_accepted acceptances or max_draws draws. Candidate k of stage t
/// uses stream derive_seed(seed, {t, k}) and acceptances are taken in draw
/// order, so results do not depend on the worker count.
template <class Simulator>
AbcPopulation run_abc_smc(const AbcConfig& cfg, Simulator&& simulate_obs, const ObservationSequence& obs,
                          const PriorBox& prior)
{
    cfg.validate();
    const auto d = static_cast<Eigen::Index>(prior.dim());
    AbcPopulation pop;

    for (std::size_t t = 0; t < cfg.tolerances.size(); ++t) {
        AbcStage stage;
        stage.tolerance = cfg.tolerances[t];
        const AbcStage* prev = t == 0 ? nullptr : &pop.stages.back();
        std::vector<double> prev_cdf;
        if (prev != nullptr) {
            stage.kernel_sd.resize(d);
            Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
            for (std::size_t i = 0; i < prev->samples.size(); ++i) {
                mu += prev->weights[i] * prev->samples[i];
            }
            Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
            for (std::size_t i = 0; i < prev->samples.size(); ++i) {
                var += prev->weights[i] * (prev->samples[i] - mu).cwiseAbs2();
            }
            for (Eigen::Index j = 0; j < d; ++j) {
                // A collapsed population still needs a usable kernel.
                const double floor_sd = 1e-3 * prior.range(static_cast<std::size_t>(j));
                stage.kernel_sd[j] = std::max(cfg.kernel_scale * std::sqrt(var[j]), floor_sd);
            }
            prev_cdf.resize(prev->weights.size());
            double acc = 0.0;
            for (std::size_t i = 0; i < prev->weights.size(); ++i) {
                acc += prev->weights[i];
                prev_cdf[i] = acc;
            }
        }

        struct Candidate {
            Eigen::VectorXd theta;
            bool in_support = false;
            double distance = std::numeric_limits<double>::infinity();
        };

        while (stage.samples.size() < cfg.target_accepted && stage.draws < cfg.max_draws) {
            const std::size_t n = std::min(cfg.batch, cfg.max_draws - stage.draws);
            std::vector<Candidate> batch(n);
            const std::size_t base = stage.draws;
            parallel_for(n, cfg.workers, [&](std::size_t b) {
                Rng rng = make_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(t), base + b}));
                Candidate& c = batch[b];
                if (prev == nullptr) {
                    c.theta = prior.sample(rng);
                } else {
                    const double u = uniform01(rng) * prev_cdf.back();
                    auto it = std::upper_bound(prev_cdf.begin(), prev_cdf.end(), u);
                    const std::size_t j = std::min<std::size_t>(it - prev_cdf.begin(), prev_cdf.size() - 1);
                    c.theta = prev->samples[j];
                    for (Eigen::Index k = 0; k < d; ++k) {
                        c.theta[k] += stage.kernel_sd[k] * standard_normal(rng);
                    }
                }
                c.in_support = prior.contains(c.theta);
                if (c.in_support) {
                    try {
                        c.distance = abc_distance(obs, simulate_obs(c.theta));
                    } catch (const NumericalRangeError&) {
                        c.distance = std::numeric_limits<double>::infinity();
                    }
                }
            });
            for (const auto& c : batch) {
                if (stage.samples.size() >= cfg.target_accepted) {
                    break;
                }
                ++stage.draws;
                if (!c.in_support) {
                    ++stage.out_of_support;
                } else if (abc_accepts(c.distance, stage.tolerance)) {
                    stage.samples.push_back(c.theta);
                    stage.distances.push_back(c.distance);
                }
            }
        }

        if (stage.samples.empty()) {
            throw AbcStageFailure("ABC stage " + std::to_string(t + 1) + " accepted nothing in " +
                                      std::to_string(stage.draws) + " draws (tolerance " +
                                      std::to_string(stage.tolerance) + ")",
                                  t + 1, stage.draws);
        }

        std::vector<double> log_w(stage.samples.size(), 0.0);
        if (prev != nullptr) {
            double log_kernel_norm = 0.0;
            for (Eigen::Index k = 0; k < d; ++k) {
                log_kernel_norm -= std::log(stage.kernel_sd[k]) + 0.5 * std::log(2.0 * std::numbers::pi);
            }
            for (std::size_t i = 0; i < stage.samples.size(); ++i) {
                std::vector<double> terms(prev->samples.size());
                for (std::size_t j = 0; j < prev->samples.size(); ++j) {
                    const Eigen::VectorXd z =
                        (stage.samples[i] - prev->samples[j]).cwiseQuotient(stage.kernel_sd);
                    terms[j] = std::log(prev->weights[j]) + log_kernel_norm - 0.5 * z.squaredNorm();
                }
                log_w[i] = prior.log_density(stage.samples[i]) - log_sum_exp(terms);
            }
        }
        stage.weights = normalize_log_weights(log_w).weights;
        pop.stages.push_back(std::move(stage));
    }
    return pop;
}

} // namespace npmc
