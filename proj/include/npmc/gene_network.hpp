#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "npmc/errors.hpp"
#include "npmc/random.hpp"

namespace npmc {

/// Constant parameters of the two-cell coupled repressilator with
/// quorum-sensing feedback. Defaults are the standard (chaotic) values.
struct ModelParams {
    double Q = 0.85;      // extracellular coupling, (0,1)
    double m = 2.6;       // Hill coefficient
    double alpha = 216.0; // maximum transcription rate
    double beta_a = 0.85;
    double beta_b = 0.1;
    double beta_c = 0.1;
    double eta = 2.0;     // AI membrane diffusion
    double kappa = 25.0;  // maximum LuxR-promoter transcription rate
    double ks0 = 1.0;     // AI degradation
    double ks1 = 0.01;    // AI synthesis

    static constexpr std::size_t n_cells = 2;

    static ModelParams standard() { return {}; }

    /// Throws ValidationError when a parameter is outside its domain.
    void validate() const
    {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw ValidationError(std::string("model parameter ") + name + " must be positive and finite");
            }
        };
        if (!(Q >= 0.0 && Q <= 1.0)) {
            throw ValidationError("model parameter Q must lie in [0,1]");
        }
        positive(m, "m");
        positive(alpha, "alpha");
        positive(beta_a, "beta_a");
        positive(beta_b, "beta_b");
        positive(beta_c, "beta_c");
        positive(eta, "eta");
        positive(kappa, "kappa");
        positive(ks0, "ks0");
        positive(ks1, "ks1");
    }

    bool operator==(const ModelParams&) const = default;
};

/// Multiplicative noise scales, one per state-variable class.
struct NoiseScales {
    double sigma_a = 0.0;
    double sigma_b = 0.0;
    double sigma_c = 0.0;
    double sigma_A = 0.0;
    double sigma_B = 0.0;
    double sigma_C = 0.0;
    double sigma_S = 0.0;

    static NoiseScales uniform(double sigma) { return {sigma, sigma, sigma, sigma, sigma, sigma, sigma}; }

    std::array<double, 7> as_array() const { return {sigma_a, sigma_b, sigma_c, sigma_A, sigma_B, sigma_C, sigma_S}; }

    bool is_zero() const
    {
        for (double s : as_array()) {
            if (s != 0.0) {
                return false;
            }
        }
        return true;
    }

    void validate() const
    {
        for (double s : as_array()) {
            if (!(s >= 0.0) || !std::isfinite(s)) {
                throw ValidationError("noise scales must be nonnegative and finite");
            }
        }
    }

    bool operator==(const NoiseScales&) const = default;
};

/// Per-cell variable order inside a SystemState.
enum class Var : std::size_t { a = 0, b, c, A, B, C, S };

inline constexpr std::size_t kVarsPerCell = 7;
inline constexpr std::size_t kStateDim = 14;

inline constexpr std::array<const char*, kVarsPerCell> kVarNames = {"a", "b", "c", "A", "B", "C", "S"};

struct CellState {
    double a = 0.0, b = 0.0, c = 0.0;
    double A = 0.0, B = 0.0, C = 0.0;
    double S = 0.0;

    bool operator==(const CellState&) const = default;
};

/// Full 14-dimensional state: cell 1 variables followed by cell 2 variables,
/// each in (a, b, c, A, B, C, S) order.
struct SystemState {
    std::array<double, kStateDim> x{};

    double& operator()(std::size_t cell, Var v) { return x[cell * kVarsPerCell + static_cast<std::size_t>(v)]; }
    double operator()(std::size_t cell, Var v) const { return x[cell * kVarsPerCell + static_cast<std::size_t>(v)]; }

    double& operator[](std::size_t i) { return x[i]; }
    double operator[](std::size_t i) const { return x[i]; }

    CellState cell(std::size_t i) const
    {
        const double* p = x.data() + i * kVarsPerCell;
        return {p[0], p[1], p[2], p[3], p[4], p[5], p[6]};
    }

    static SystemState from_cells(const CellState& c1, const CellState& c2)
    {
        return {{c1.a, c1.b, c1.c, c1.A, c1.B, c1.C, c1.S, c2.a, c2.b, c2.c, c2.A, c2.B, c2.C, c2.S}};
    }

    bool is_valid() const
    {
        for (double v : x) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    bool operator==(const SystemState&) const = default;
};

using Derivative = std::array<double, kStateDim>;

/// Mean of the Gaussian initial condition used for synthetic datasets.
inline SystemState paper_initial_mean()
{
    return {{4.5, 6.0, 3.0, 4.2, 19.0, 4.3, 0.1, 7.3, 1.5, 3.4, 7.0, 6.5, 3.6, 0.08}};
}

inline constexpr double kInitialStd = 0.05;

/// Uniformly sampled trajectory; states[m] is the state at t = m*h.
struct Trajectory {
    double h = 0.0;
    std::vector<SystemState> states;

    std::size_t size() const { return states.size(); }
    double time(std::size_t m) const { return static_cast<double>(m) * h; }
};

/// Noisy reading of (a_1, a_2) at observation tick n.
struct Observation {
    std::array<double, 2> y{};
    std::size_t n = 0;

    bool operator==(const Observation&) const = default;
};

using ObservationSequence = std::vector<Observation>;

/// Quasi-steady-state extracellular autoinducer level: Q times the mean of S.
inline double extracellular_ai(const SystemState& state, double Q)
{
    return Q * 0.5 * (state(0, Var::S) + state(1, Var::S));
}

namespace detail {

/// alpha / (1 + x^m) evaluated through log(x) so large x saturates to 0
/// instead of overflowing.
inline double hill_repression(double alpha, double x, double m)
{
    const double t = m * std::log(x);
    if (t > 0.0) {
        const double e = std::exp(-t);
        return alpha * e / (1.0 + e);
    }
    return alpha / (1.0 + std::exp(t));
}

inline void check_finite(const Derivative& d)
{
    for (std::size_t i = 0; i < kStateDim; ++i) {
        if (!std::isfinite(d[i])) {
            throw NumericalRangeError("non-finite drift in component " + std::to_string(i), i);
        }
    }
}

} // namespace detail

/// Deterministic part of the SDE, component order matching SystemState.
inline Derivative drift(const SystemState& s, const ModelParams& p)
{
    const double se = extracellular_ai(s, p.Q);
    Derivative d{};
    for (std::size_t i = 0; i < ModelParams::n_cells; ++i) {
        const double a = s(i, Var::a), b = s(i, Var::b), c = s(i, Var::c);
        const double A = s(i, Var::A), B = s(i, Var::B), C = s(i, Var::C);
        const double S = s(i, Var::S);
        double* out = d.data() + i * kVarsPerCell;
        out[0] = -(a - detail::hill_repression(p.alpha, C, p.m));
        out[1] = -(b - detail::hill_repression(p.alpha, A, p.m));
        out[2] = -(c - detail::hill_repression(p.alpha, B, p.m) - p.kappa * S / (1.0 + S));
        out[3] = p.beta_a * (a - A);
        out[4] = p.beta_b * (b - B);
        out[5] = p.beta_c * (c - C);
        out[6] = -(p.ks0 * S - p.ks1 * B + p.eta * (S - se));
    }
    detail::check_finite(d);
    return d;
}

/// One Euler-Maruyama step of length h:
///   x <- x + h*drift(x) + sigma_x * x * sqrt(h) * xi,  xi ~ N(0,1),
/// followed by clamping at zero. When every noise scale is zero no random
/// numbers are consumed. `clamp_events`, when given, is incremented once per
/// clamped component.
inline SystemState euler_maruyama_step(const SystemState& state, const ModelParams& params, const NoiseScales& noise,
                                       double h, Rng& rng, std::size_t* clamp_events = nullptr)
{
    const Derivative d = drift(state, params);
    SystemState next;
    for (std::size_t i = 0; i < kStateDim; ++i) {
        next[i] = state[i] + h * d[i];
    }
    if (!noise.is_zero()) {
        const auto sigma = noise.as_array();
        const double sqrt_h = std::sqrt(h);
        for (std::size_t i = 0; i < kStateDim; ++i) {
            const double xi = standard_normal(rng);
            next[i] += sigma[i % kVarsPerCell] * state[i] * sqrt_h * xi;
        }
    }
    for (std::size_t i = 0; i < kStateDim; ++i) {
        if (!std::isfinite(next[i])) {
            throw NumericalRangeError("non-finite state in component " + std::to_string(i), i);
        }
        if (next[i] < 0.0) {
            next[i] = 0.0;
            if (clamp_events != nullptr) {
                ++*clamp_events;
            }
        }
    }
    return next;
}

/// Iterates euler_maruyama_step n_steps times, calling visit(m, state) for
/// m = 0..n_steps. Avoids materialising long trajectories.
template <class Visitor>
SystemState simulate_visit(const SystemState& initial, const ModelParams& params, const NoiseScales& noise, double h,
                           std::size_t n_steps, Rng& rng, Visitor&& visit, std::size_t* clamp_events = nullptr)
{
    SystemState s = initial;
    visit(std::size_t{0}, s);
    for (std::size_t m = 1; m <= n_steps; ++m) {
        try {
            s = euler_maruyama_step(s, params, noise, h, rng, clamp_events);
        } catch (const NumericalRangeError& e) {
            throw SimulationError(std::string(e.what()) + " at step " + std::to_string(m), m, e.component());
        }
        visit(m, s);
    }
    return s;
}

inline Trajectory simulate(const SystemState& initial, const ModelParams& params, const NoiseScales& noise, double h,
                           std::size_t n_steps, Rng& rng, std::size_t* clamp_events = nullptr)
{
    if (n_steps < 1) {
        throw ValidationError("simulate requires n_steps >= 1");
    }
    if (!(h > 0.0)) {
        throw ValidationError("integration step h must be positive");
    }
    Trajectory traj{h, {}};
    traj.states.reserve(n_steps + 1);
    simulate_visit(
        initial, params, noise, h, n_steps, rng, [&](std::size_t, const SystemState& s) { traj.states.push_back(s); },
        clamp_events);
    return traj;
}

/// y = (a_1, a_2) + sigma_y * eps, eps ~ N(0, I_2).
inline Observation observe(const SystemState& state, double sigma_y, Rng& rng, std::size_t n = 0)
{
    if (!(sigma_y >= 0.0)) {
        throw ValidationError("sigma_y must be nonnegative");
    }
    Observation o;
    o.n = n;
    const double e1 = standard_normal(rng);
    const double e2 = standard_normal(rng);
    o.y = {state(0, Var::a) + sigma_y * e1, state(1, Var::a) + sigma_y * e2};
    return o;
}

/// Draws x0 ~ N(mean, std^2 I), clamped at zero.
inline SystemState sample_initial_state(Rng& rng, const SystemState& mean = paper_initial_mean(),
                                        double std = kInitialStd)
{
    SystemState s;
    for (std::size_t i = 0; i < kStateDim; ++i) {
        s[i] = std::max(0.0, mean[i] + std * standard_normal(rng));
    }
    return s;
}

struct DatasetSpec {
    ModelParams params;
    NoiseScales noise;   // dynamical noise of the data-generating run
    double h = 1e-3;
    std::size_t m_o = 20;
    std::size_t R = 4000;
    double sigma_y = 1.0;
    SystemState initial_mean = paper_initial_mean();
    double initial_std = kInitialStd;
};

struct Dataset {
    SystemState initial;
    Trajectory trajectory;            // R*m_o + 1 states
    ObservationSequence observations; // R entries, ticks 1..R
    std::size_t clamp_events = 0;
};

/// Streaming form of generate_dataset: on_state(m, state) for every step and
/// on_observation(obs) at every multiple of m_o. Observation noise is drawn
/// from `rng` right after the observed state is reached. Returns the initial state.
template <class OnState, class OnObservation>
SystemState stream_dataset(const DatasetSpec& spec, Rng& rng, OnState&& on_state, OnObservation&& on_observation,
                           std::size_t* clamp_events = nullptr)
{
    if (spec.m_o < 1 || spec.R < 1) {
        throw ValidationError("generate_dataset requires m_o >= 1 and R >= 1");
    }
    if (!(spec.h > 0.0)) {
        throw ValidationError("integration step h must be positive");
    }
    spec.params.validate();
    spec.noise.validate();
    const SystemState initial = sample_initial_state(rng, spec.initial_mean, spec.initial_std);
    simulate_visit(
        initial, spec.params, spec.noise, spec.h, spec.R * spec.m_o, rng,
        [&](std::size_t m, const SystemState& s) {
            on_state(m, s);
            if (m > 0 && m % spec.m_o == 0) {
                on_observation(observe(s, spec.sigma_y, rng, m / spec.m_o));
            }
        },
        clamp_events);
    return initial;
}

/// Simulates R*m_o steps from a random initial state and observes every m_o-th state.
inline Dataset generate_dataset(const DatasetSpec& spec, Rng& rng)
{
    Dataset ds;
    ds.trajectory.h = spec.h;
    ds.trajectory.states.reserve(spec.R * spec.m_o + 1);
    ds.observations.reserve(spec.R);
    ds.initial = stream_dataset(
        spec, rng, [&](std::size_t, const SystemState& s) { ds.trajectory.states.push_back(s); },
        [&](const Observation& o) { ds.observations.push_back(o); }, &ds.clamp_events);
    return ds;
}

/// Observations of the deterministic model (all noise off, sigma_y = 0)
/// started from `initial`: ticks 1..R, one every m_o steps.
inline ObservationSequence noiseless_observations(const SystemState& initial, const ModelParams& params, double h,
                                                  std::size_t m_o, std::size_t R)
{
    ObservationSequence out;
    out.reserve(R);
    Rng unused{0};
    const NoiseScales off{};
    simulate_visit(initial, params, off, h, R * m_o, unused, [&](std::size_t m, const SystemState& s) {
        if (m > 0 && m % m_o == 0) {
            out.push_back({{s(0, Var::a), s(1, Var::a)}, m / m_o});
        }
    });
    return out;
}

} // namespace npmc
