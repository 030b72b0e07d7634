#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "npmc/errors.hpp"
#include "npmc/gene_network.hpp"
#include "npmc/parameters.hpp"
#include "npmc/random.hpp"

namespace npmc {

/// What the bootstrap filter needs from a model: draws from the state prior
/// and from the transition kernel, and the observation log-density.
template <class M>
concept StateSpaceModel = requires(const M& model, Rng& rng, const typename M::State& x,
                                   const typename M::Observation& y, const typename M::Parameters& theta) {
    { model.sample_prior(rng) } -> std::convertible_to<typename M::State>;
    { model.sample_transition(x, theta, rng) } -> std::convertible_to<typename M::State>;
    { model.log_obs_density(y, x) } -> std::convertible_to<double>;
};

struct CompositeKernelConfig {
    std::size_t m_o = 20;
    double h = 1e-3;
    NoiseScales noise = NoiseScales::uniform(0.02);

    void validate() const
    {
        if (m_o < 1) {
            throw ValidationError("m_o must be at least 1");
        }
        if (!(h > 0.0)) {
            throw ValidationError("h must be positive");
        }
        noise.validate();
    }
};

/// Advances the state by one observation tick: m_o Euler-Maruyama steps.
inline SystemState composite_transition(const SystemState& state, const ModelParams& params,
                                        const CompositeKernelConfig& cfg, Rng& rng,
                                        std::size_t* clamp_events = nullptr)
{
    SystemState s = state;
    for (std::size_t k = 0; k < cfg.m_o; ++k) {
        s = euler_maruyama_step(s, params, cfg.noise, cfg.h, rng, clamp_events);
    }
    return s;
}

inline SystemState composite_transition(const SystemState& state, const ThetaVector& theta,
                                        const CompositeKernelConfig& cfg, Rng& rng,
                                        std::size_t* clamp_events = nullptr)
{
    return composite_transition(state, theta.apply_to(), cfg, rng, clamp_events);
}

/// log N(y; (a_1, a_2), sigma_y^2 I_2).
inline double repressilator_log_obs_density(const Observation& obs, const SystemState& x, double sigma_y)
{
    if (!(sigma_y > 0.0)) {
        throw ValidationError("observation density requires sigma_y > 0");
    }
    const double d1 = obs.y[0] - x(0, Var::a);
    const double d2 = obs.y[1] - x(1, Var::a);
    const double var = sigma_y * sigma_y;
    return -std::log(2.0 * std::numbers::pi * var) - 0.5 * (d1 * d1 + d2 * d2) / var;
}

/// The repressilator as a state-space model with theta = (Q, m, alpha, beta_a)
/// overriding the otherwise-known standard parameters.
class RepressilatorModel {
public:
    using State = SystemState;
    using Observation = npmc::Observation;
    using Parameters = ThetaVector;

    RepressilatorModel() = default;
    RepressilatorModel(CompositeKernelConfig kernel, double sigma_y, ModelParams known = ModelParams::standard(),
                       SystemState initial_mean = paper_initial_mean(), double initial_std = kInitialStd)
        : kernel_(kernel), sigma_y_(sigma_y), known_(known), initial_mean_(initial_mean), initial_std_(initial_std)
    {
        kernel_.validate();
        if (!(sigma_y_ > 0.0)) {
            throw ValidationError("sigma_y must be positive for likelihood evaluation");
        }
    }

    State sample_prior(Rng& rng) const { return sample_initial_state(rng, initial_mean_, initial_std_); }

    State sample_transition(const State& x, const Parameters& theta, Rng& rng) const
    {
        return composite_transition(x, theta.apply_to(known_), kernel_, rng);
    }

    double log_obs_density(const Observation& y, const State& x) const
    {
        return repressilator_log_obs_density(y, x, sigma_y_);
    }

    const CompositeKernelConfig& kernel() const { return kernel_; }
    double sigma_y() const { return sigma_y_; }
    const ModelParams& known() const { return known_; }

private:
    CompositeKernelConfig kernel_{};
    double sigma_y_ = 1.0;
    ModelParams known_{};
    SystemState initial_mean_ = paper_initial_mean();
    double initial_std_ = kInitialStd;
};

/// Placeholder parameter type for models without unknowns.
struct NoParameters {};

/// x_n = F x_{n-1} + w_n,  w_n ~ N(0, Qw);  y_n = H x_n + v_n,  v_n ~ N(0, Rv);
/// x_0 ~ N(m0, P0). Exact likelihoods via kalman_log_likelihood.
class LinearGaussianModel {
public:
    using State = Eigen::VectorXd;
    using Observation = Eigen::VectorXd;
    using Parameters = NoParameters;

    LinearGaussianModel(Eigen::MatrixXd F, Eigen::MatrixXd Qw, Eigen::MatrixXd H, Eigen::MatrixXd Rv,
                        Eigen::VectorXd m0, Eigen::MatrixXd P0)
        : F_(std::move(F)), Qw_(std::move(Qw)), H_(std::move(H)), Rv_(std::move(Rv)), m0_(std::move(m0)),
          P0_(std::move(P0))
    {
        const auto d = m0_.size();
        const auto p = H_.rows();
        if (F_.rows() != d || F_.cols() != d || Qw_.rows() != d || Qw_.cols() != d || P0_.rows() != d ||
            P0_.cols() != d || H_.cols() != d || Rv_.rows() != p || Rv_.cols() != p) {
            throw ValidationError("LinearGaussianModel dimensions are inconsistent");
        }
        Qw_chol_ = cholesky(Qw_, "transition noise covariance");
        Rv_chol_ = cholesky(Rv_, "observation noise covariance");
        P0_chol_ = cholesky(P0_, "prior covariance");
    }

    /// Scalar model: x_n = f x_{n-1} + N(0,q), y_n = g x_n + N(0,r), x_0 ~ N(m0, p0).
    static LinearGaussianModel scalar(double f, double q, double g, double r, double m0, double p0)
    {
        return LinearGaussianModel(Eigen::MatrixXd::Constant(1, 1, f), Eigen::MatrixXd::Constant(1, 1, q),
                                   Eigen::MatrixXd::Constant(1, 1, g), Eigen::MatrixXd::Constant(1, 1, r),
                                   Eigen::VectorXd::Constant(1, m0), Eigen::MatrixXd::Constant(1, 1, p0));
    }

    std::size_t state_dim() const { return static_cast<std::size_t>(m0_.size()); }
    std::size_t obs_dim() const { return static_cast<std::size_t>(H_.rows()); }

    State sample_prior(Rng& rng) const { return m0_ + P0_chol_ * standard_normal_vector(m0_.size(), rng); }

    State sample_transition(const State& x, const Parameters&, Rng& rng) const
    {
        return F_ * x + Qw_chol_ * standard_normal_vector(x.size(), rng);
    }

    Observation sample_observation(const State& x, Rng& rng) const
    {
        return H_ * x + Rv_chol_ * standard_normal_vector(H_.rows(), rng);
    }

    double log_obs_density(const Observation& y, const State& x) const
    {
        const Eigen::VectorXd r = y - H_ * x;
        const Eigen::VectorXd z = Rv_chol_.triangularView<Eigen::Lower>().solve(r);
        return -0.5 * (static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi) + z.squaredNorm()) -
               Rv_chol_.diagonal().array().log().sum();
    }

    const Eigen::MatrixXd& F() const { return F_; }
    const Eigen::MatrixXd& Qw() const { return Qw_; }
    const Eigen::MatrixXd& H() const { return H_; }
    const Eigen::MatrixXd& Rv() const { return Rv_; }
    const Eigen::VectorXd& m0() const { return m0_; }
    const Eigen::MatrixXd& P0() const { return P0_; }

private:
    static Eigen::MatrixXd cholesky(const Eigen::MatrixXd& S, const char* what)
    {
        if (!S.isApprox(S.transpose(), 1e-12)) {
            throw ValidationError(std::string(what) + " must be symmetric");
        }
        Eigen::LLT<Eigen::MatrixXd> llt(S);
        if (llt.info() != Eigen::Success) {
            throw ValidationError(std::string(what) + " must be positive definite");
        }
        return llt.matrixL();
    }

    static Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng)
    {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            v[i] = standard_normal(rng);
        }
        return v;
    }

    Eigen::MatrixXd F_, Qw_, H_, Rv_;
    Eigen::VectorXd m0_;
    Eigen::MatrixXd P0_;
    Eigen::MatrixXd Qw_chol_, Rv_chol_, P0_chol_;
};

/// Draws (x_1..x_R, y_1..y_R) from the model.
inline std::vector<Eigen::VectorXd> simulate_observations(const LinearGaussianModel& model, std::size_t R, Rng& rng)
{
    std::vector<Eigen::VectorXd> ys;
    ys.reserve(R);
    Eigen::VectorXd x = model.sample_prior(rng);
    for (std::size_t n = 0; n < R; ++n) {
        x = model.sample_transition(x, {}, rng);
        ys.push_back(model.sample_observation(x, rng));
    }
    return ys;
}

/// Exact log p(y_1..y_R) by the Kalman predict/update recursion.
inline double kalman_log_likelihood(const LinearGaussianModel& model, const std::vector<Eigen::VectorXd>& obs)
{
    Eigen::VectorXd mean = model.m0();
    Eigen::MatrixXd cov = model.P0();
    double loglik = 0.0;
    for (std::size_t n = 0; n < obs.size(); ++n) {
        const auto& y = obs[n];
        if (y.size() != static_cast<Eigen::Index>(model.obs_dim())) {
            throw ValidationError("observation dimension mismatch");
        }
        mean = model.F() * mean;
        cov = model.F() * cov * model.F().transpose() + model.Qw();

        const Eigen::VectorXd innov = y - model.H() * mean;
        Eigen::MatrixXd S = model.H() * cov * model.H().transpose() + model.Rv();
        S = 0.5 * (S + S.transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(S);
        if (llt.info() != Eigen::Success) {
            throw NumericalRangeError("innovation covariance is not positive definite at tick " +
                                          std::to_string(n + 1),
                                      n);
        }
        const Eigen::MatrixXd L = llt.matrixL();
        const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(innov);
        loglik += -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi) + z.squaredNorm()) -
                  L.diagonal().array().log().sum();

        const Eigen::MatrixXd gain = llt.solve(model.H() * cov).transpose();
        mean += gain * innov;
        cov = cov - gain * model.H() * cov;
        cov = 0.5 * (cov + cov.transpose());
    }
    return loglik;
}

} // namespace npmc
