#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npmc/errors.hpp"
#include "npmc/gene_network.hpp"
#include "npmc/random.hpp"

namespace npmc {

/// The four unknowns of the repressilator, in (Q, m, alpha, beta_a) order.
struct ThetaVector {
    double Q = 0.85;
    double m = 2.6;
    double alpha = 216.0;
    double beta_a = 0.85;

    static constexpr std::size_t dim = 4;
    static constexpr std::array<const char*, dim> names = {"Q", "m", "alpha", "beta_a"};

    static ThetaVector truth() { return {}; }

    Eigen::VectorXd to_vector() const
    {
        Eigen::VectorXd v(dim);
        v << Q, m, alpha, beta_a;
        return v;
    }

    static ThetaVector from_vector(const Eigen::VectorXd& v)
    {
        if (v.size() != static_cast<Eigen::Index>(dim)) {
            throw ValidationError("ThetaVector requires 4 components");
        }
        return {v[0], v[1], v[2], v[3]};
    }

    double operator[](std::size_t i) const
    {
        switch (i) {
        case 0: return Q;
        case 1: return m;
        case 2: return alpha;
        default: return beta_a;
        }
    }

    /// Overrides the unknowns in `known`; everything else stays as given.
    ModelParams apply_to(ModelParams known = ModelParams::standard()) const
    {
        known.Q = Q;
        known.m = m;
        known.alpha = alpha;
        known.beta_a = beta_a;
        return known;
    }

    bool operator==(const ThetaVector&) const = default;
};

/// Independent uniform priors on a box; the support is the open box.
class PriorBox {
public:
    PriorBox(std::vector<double> low, std::vector<double> high) : low_(std::move(low)), high_(std::move(high))
    {
        if (low_.size() != high_.size() || low_.empty()) {
            throw ValidationError("PriorBox bounds must be nonempty and of equal length");
        }
        for (std::size_t j = 0; j < low_.size(); ++j) {
            if (!(low_[j] < high_[j]) || !std::isfinite(low_[j]) || !std::isfinite(high_[j])) {
                throw ValidationError("PriorBox requires finite low < high in every dimension");
            }
            log_volume_ += std::log(high_[j] - low_[j]);
        }
    }

    /// (0,1) x (1,5) x (50,300) x (0,1).
    static PriorBox repressilator() { return PriorBox({0.0, 1.0, 50.0, 0.0}, {1.0, 5.0, 300.0, 1.0}); }

    std::size_t dim() const { return low_.size(); }
    double low(std::size_t j) const { return low_[j]; }
    double high(std::size_t j) const { return high_[j]; }
    double range(std::size_t j) const { return high_[j] - low_[j]; }

    bool contains(const Eigen::VectorXd& theta) const
    {
        for (std::size_t j = 0; j < dim(); ++j) {
            const double v = theta[static_cast<Eigen::Index>(j)];
            if (!(v > low_[j] && v < high_[j])) {
                return false;
            }
        }
        return true;
    }

    double log_density(const Eigen::VectorXd& theta) const
    {
        return contains(theta) ? -log_volume_ : -std::numeric_limits<double>::infinity();
    }

    Eigen::VectorXd sample(Rng& rng) const
    {
        Eigen::VectorXd v(static_cast<Eigen::Index>(dim()));
        for (std::size_t j = 0; j < dim(); ++j) {
            v[static_cast<Eigen::Index>(j)] = std::uniform_real_distribution<double>{low_[j], high_[j]}(rng);
        }
        return v;
    }

    Eigen::VectorXd mean() const
    {
        Eigen::VectorXd v(static_cast<Eigen::Index>(dim()));
        for (std::size_t j = 0; j < dim(); ++j) {
            v[static_cast<Eigen::Index>(j)] = 0.5 * (low_[j] + high_[j]);
        }
        return v;
    }

    bool operator==(const PriorBox&) const = default;

private:
    std::vector<double> low_;
    std::vector<double> high_;
    double log_volume_ = 0.0;
};

} // namespace npmc
