#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npmc/abc_smc.hpp"
#include "npmc/bootstrap_filter.hpp"
#include "npmc/errors.hpp"
#include "npmc/gene_network.hpp"
#include "npmc/io.hpp"
#include "npmc/npmc.hpp"
#include "npmc/parallel.hpp"
#include "npmc/parameters.hpp"
#include "npmc/pmh.hpp"
#include "npmc/state_space.hpp"
#include "npmc/stats.hpp"

namespace npmc {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr const char* kOutputRootEnv = "NPMC_OUTPUT_ROOT";

// Configuration ---------------------------------------------------------------

struct ModelBlock {
    ModelParams params;
    /// Dynamical noise of the stochastic model: used by the filter's transition
    /// kernel and by stochastic-mode simulation.
    NoiseScales noise = NoiseScales::uniform(0.02);
    double h = 1e-3;
    std::size_t m_o = 20;
    double sigma_y = 1.0;
    double horizon = 80.0;
    double initial_std = kInitialStd;

    /// Number of observations covering the horizon.
    std::size_t observation_count() const
    {
        const double ticks = horizon / (static_cast<double>(m_o) * h);
        return static_cast<std::size_t>(std::llround(ticks));
    }
};

struct NpmcBlock {
    std::size_t M = 200;
    std::size_t K = 15;
    std::size_t M_c = 0;
    std::size_t N = 100;
    double jitter_scale = 1e-6;
};

struct PmhBlock {
    std::size_t L = 6000;
    std::size_t N = 100;
    std::vector<double> proposal_variances = {0.01, 0.01, 100.0, 0.01};
    std::vector<double> initial = {0.5, 3.0, 175.0, 0.5};
    std::size_t burn_in = 0;
};

struct AbcBlock {
    std::vector<double> tolerances = {3.0, 2.5, 2.3, 2.2, 2.1};
    std::size_t target_accepted = 1200;
    std::size_t max_draws = 1600000;
    double kernel_scale = 1.0;
    std::size_t batch = 64;
};

struct MethodBlock {
    std::string name = "npmc";
    NpmcBlock npmc;
    PmhBlock pmh;
    AbcBlock abc;
};

struct SimulateBlock {
    std::string mode = "deterministic"; // or "stochastic"
    std::size_t trajectory_stride = 1;
};

struct LikelihoodStudyBlock {
    std::size_t N = 600;
    std::vector<std::vector<double>> thetas = {{0.85, 2.6, 216.0, 0.85}, {0.85, 2.6, 206.0, 0.85}};
};

struct BenchmarkBlock {
    std::vector<std::string> methods = {"npmc", "pmh", "abc"};
    std::vector<std::size_t> npmc_sizes = {50, 200};
    std::string data_mode = "deterministic";
};

struct KdeBlock {
    std::size_t grid_points = 200;
};

struct SeedsBlock {
    std::uint64_t master = 1;
    std::size_t runs = 45;
};

struct OutputBlock {
    std::string directory = "npmc_out";
    std::vector<std::string> formats = {"csv", "json"};
};

struct ExperimentConfig {
    ModelBlock model;
    MethodBlock method;
    SimulateBlock simulate;
    LikelihoodStudyBlock likelihood_study;
    BenchmarkBlock benchmark;
    KdeBlock kde;
    SeedsBlock seeds;
    OutputBlock output;

    void validate() const
    {
        model.params.validate();
        model.noise.validate();
        if (!(model.h > 0.0) || model.m_o < 1) {
            throw ValidationError("model.h must be positive and model.m_o at least 1");
        }
        if (!(model.sigma_y > 0.0)) {
            throw ValidationError("model.sigma_y must be positive");
        }
        if (!(model.horizon > 0.0) || model.observation_count() < 1) {
            throw ValidationError("model.horizon must cover at least one observation tick");
        }
        const double ticks = model.horizon / (static_cast<double>(model.m_o) * model.h);
        if (std::abs(ticks - std::round(ticks)) > 1e-6 * std::max(1.0, ticks)) {
            throw ValidationError("model.horizon must be a multiple of m_o * h");
        }
        if (!(model.initial_std >= 0.0)) {
            throw ValidationError("model.initial_std must be nonnegative");
        }
        static const std::set<std::string> methods = {"npmc", "pmh", "abc"};
        if (!methods.contains(method.name)) {
            throw ValidationError("method.name must be one of npmc, pmh, abc");
        }
        npmc_config(method.npmc.M).validate();
        pmh_config(0).validate(PriorBox::repressilator());
        abc_config(0).validate();
        if (simulate.mode != "deterministic" && simulate.mode != "stochastic") {
            throw ValidationError("simulate.mode must be deterministic or stochastic");
        }
        if (simulate.trajectory_stride < 1) {
            throw ValidationError("simulate.trajectory_stride must be at least 1");
        }
        if (likelihood_study.N < 1 || likelihood_study.thetas.empty()) {
            throw ValidationError("likelihood_study needs N >= 1 and at least one theta");
        }
        for (const auto& t : likelihood_study.thetas) {
            if (t.size() != ThetaVector::dim) {
                throw ValidationError("likelihood_study.thetas entries need 4 components");
            }
        }
        for (const auto& m : benchmark.methods) {
            if (!methods.contains(m)) {
                throw ValidationError("benchmark.methods entries must be npmc, pmh or abc");
            }
        }
        for (std::size_t M : benchmark.npmc_sizes) {
            npmc_config(M).validate();
        }
        if (benchmark.data_mode != "deterministic" && benchmark.data_mode != "stochastic") {
            throw ValidationError("benchmark.data_mode must be deterministic or stochastic");
        }
        if (kde.grid_points < 2) {
            throw ValidationError("kde.grid_points must be at least 2");
        }
        if (seeds.runs < 1) {
            throw ValidationError("seeds.runs must be at least 1");
        }
        for (const auto& f : output.formats) {
            if (f != "csv" && f != "json") {
                throw ValidationError("output.formats entries must be csv or json");
            }
        }
    }

    bool wants_json() const { return std::find(output.formats.begin(), output.formats.end(), "json") != output.formats.end(); }

    NpmcConfig npmc_config(std::size_t M, std::uint64_t seed = 0, std::size_t workers = 1) const
    {
        NpmcConfig c;
        c.M = M;
        c.K = method.npmc.K;
        c.M_c = method.npmc.M_c;
        c.N = method.npmc.N;
        c.jitter_scale = method.npmc.jitter_scale;
        c.seed = seed;
        c.workers = workers;
        return c;
    }

    PmhConfig pmh_config(std::uint64_t seed) const
    {
        PmhConfig c;
        c.L = method.pmh.L;
        c.N = method.pmh.N;
        c.proposal_variances = method.pmh.proposal_variances;
        c.initial = method.pmh.initial;
        c.burn_in = method.pmh.burn_in;
        c.seed = seed;
        return c;
    }

    AbcConfig abc_config(std::uint64_t seed, std::size_t workers = 1) const
    {
        AbcConfig c;
        c.tolerances = method.abc.tolerances;
        c.target_accepted = method.abc.target_accepted;
        c.max_draws = method.abc.max_draws;
        c.kernel_scale = method.abc.kernel_scale;
        c.batch = method.abc.batch;
        c.seed = seed;
        c.workers = workers;
        return c;
    }

    DatasetSpec dataset_spec(bool stochastic) const
    {
        DatasetSpec s;
        s.params = model.params;
        s.noise = stochastic ? model.noise : NoiseScales{};
        s.h = model.h;
        s.m_o = model.m_o;
        s.R = model.observation_count();
        s.sigma_y = model.sigma_y;
        s.initial_std = model.initial_std;
        return s;
    }

    RepressilatorModel filter_model() const
    {
        return RepressilatorModel(CompositeKernelConfig{model.m_o, model.h, model.noise}, model.sigma_y, model.params,
                                  paper_initial_mean(), model.initial_std);
    }

    /// The data-generating values of the four unknowns.
    ThetaVector truth() const { return {model.params.Q, model.params.m, model.params.alpha, model.params.beta_a}; }
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) {
        throw ValidationError(where + " must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ValidationError("unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
void read_field(const json& j, const char* key, T& dst, const std::string& where)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(where + "." + key + ": " + e.what());
    }
}

inline ModelParams params_from_json(const json& j)
{
    check_keys(j, {"Q", "m", "alpha", "beta_a", "beta_b", "beta_c", "eta", "kappa", "ks0", "ks1"}, "model.params");
    ModelParams p;
    const std::string w = "model.params";
    read_field(j, "Q", p.Q, w);
    read_field(j, "m", p.m, w);
    read_field(j, "alpha", p.alpha, w);
    read_field(j, "beta_a", p.beta_a, w);
    read_field(j, "beta_b", p.beta_b, w);
    read_field(j, "beta_c", p.beta_c, w);
    read_field(j, "eta", p.eta, w);
    read_field(j, "kappa", p.kappa, w);
    read_field(j, "ks0", p.ks0, w);
    read_field(j, "ks1", p.ks1, w);
    return p;
}

inline NoiseScales noise_from_json(const json& j, const std::string& where)
{
    check_keys(j, {"sigma_a", "sigma_b", "sigma_c", "sigma_A", "sigma_B", "sigma_C", "sigma_S"}, where);
    NoiseScales n = NoiseScales::uniform(0.02);
    read_field(j, "sigma_a", n.sigma_a, where);
    read_field(j, "sigma_b", n.sigma_b, where);
    read_field(j, "sigma_c", n.sigma_c, where);
    read_field(j, "sigma_A", n.sigma_A, where);
    read_field(j, "sigma_B", n.sigma_B, where);
    read_field(j, "sigma_C", n.sigma_C, where);
    read_field(j, "sigma_S", n.sigma_S, where);
    return n;
}

} // namespace detail

inline void to_json(json& j, const ExperimentConfig& c)
{
    j = json{
        {"model",
         {{"params", c.model.params},
          {"noise", c.model.noise},
          {"h", c.model.h},
          {"m_o", c.model.m_o},
          {"sigma_y", c.model.sigma_y},
          {"horizon", c.model.horizon},
          {"initial_std", c.model.initial_std}}},
        {"method",
         {{"name", c.method.name},
          {"npmc",
           {{"M", c.method.npmc.M},
            {"K", c.method.npmc.K},
            {"M_c", c.method.npmc.M_c},
            {"N", c.method.npmc.N},
            {"jitter_scale", c.method.npmc.jitter_scale}}},
          {"pmh",
           {{"L", c.method.pmh.L},
            {"N", c.method.pmh.N},
            {"proposal_variances", c.method.pmh.proposal_variances},
            {"initial", c.method.pmh.initial},
            {"burn_in", c.method.pmh.burn_in}}},
          {"abc",
           {{"tolerances", c.method.abc.tolerances},
            {"target_accepted", c.method.abc.target_accepted},
            {"max_draws", c.method.abc.max_draws},
            {"kernel_scale", c.method.abc.kernel_scale},
            {"batch", c.method.abc.batch}}}}},
        {"simulate", {{"mode", c.simulate.mode}, {"trajectory_stride", c.simulate.trajectory_stride}}},
        {"likelihood_study", {{"N", c.likelihood_study.N}, {"thetas", c.likelihood_study.thetas}}},
        {"benchmark",
         {{"methods", c.benchmark.methods},
          {"npmc_sizes", c.benchmark.npmc_sizes},
          {"data_mode", c.benchmark.data_mode}}},
        {"kde", {{"grid_points", c.kde.grid_points}}},
        {"seeds", {{"master", c.seeds.master}, {"runs", c.seeds.runs}}},
        {"output", {{"directory", c.output.directory}, {"formats", c.output.formats}}},
    };
}

/// Parses and validates a configuration; unknown keys are rejected at every level.
inline ExperimentConfig config_from_json(const json& j)
{
    using detail::check_keys;
    using detail::read_field;
    ExperimentConfig c;
    check_keys(j, {"model", "method", "simulate", "likelihood_study", "benchmark", "kde", "seeds", "output"}, "config");

    if (j.contains("model")) {
        const json& m = j["model"];
        check_keys(m, {"params", "noise", "h", "m_o", "sigma_y", "horizon", "initial_std"}, "model");
        if (m.contains("params")) c.model.params = detail::params_from_json(m["params"]);
        if (m.contains("noise")) c.model.noise = detail::noise_from_json(m["noise"], "model.noise");
        read_field(m, "h", c.model.h, "model");
        read_field(m, "m_o", c.model.m_o, "model");
        read_field(m, "sigma_y", c.model.sigma_y, "model");
        read_field(m, "horizon", c.model.horizon, "model");
        read_field(m, "initial_std", c.model.initial_std, "model");
    }
    if (j.contains("method")) {
        const json& m = j["method"];
        check_keys(m, {"name", "npmc", "pmh", "abc"}, "method");
        read_field(m, "name", c.method.name, "method");
        if (m.contains("npmc")) {
            const json& n = m["npmc"];
            check_keys(n, {"M", "K", "M_c", "N", "jitter_scale"}, "method.npmc");
            read_field(n, "M", c.method.npmc.M, "method.npmc");
            read_field(n, "K", c.method.npmc.K, "method.npmc");
            read_field(n, "M_c", c.method.npmc.M_c, "method.npmc");
            read_field(n, "N", c.method.npmc.N, "method.npmc");
            read_field(n, "jitter_scale", c.method.npmc.jitter_scale, "method.npmc");
        }
        if (m.contains("pmh")) {
            const json& p = m["pmh"];
            check_keys(p, {"L", "N", "proposal_variances", "initial", "burn_in"}, "method.pmh");
            read_field(p, "L", c.method.pmh.L, "method.pmh");
            read_field(p, "N", c.method.pmh.N, "method.pmh");
            read_field(p, "proposal_variances", c.method.pmh.proposal_variances, "method.pmh");
            read_field(p, "initial", c.method.pmh.initial, "method.pmh");
            read_field(p, "burn_in", c.method.pmh.burn_in, "method.pmh");
        }
        if (m.contains("abc")) {
            const json& a = m["abc"];
            check_keys(a, {"tolerances", "target_accepted", "max_draws", "kernel_scale", "batch"}, "method.abc");
            read_field(a, "tolerances", c.method.abc.tolerances, "method.abc");
            read_field(a, "target_accepted", c.method.abc.target_accepted, "method.abc");
            read_field(a, "max_draws", c.method.abc.max_draws, "method.abc");
            read_field(a, "kernel_scale", c.method.abc.kernel_scale, "method.abc");
            read_field(a, "batch", c.method.abc.batch, "method.abc");
        }
    }
    if (j.contains("simulate")) {
        const json& s = j["simulate"];
        check_keys(s, {"mode", "trajectory_stride"}, "simulate");
        read_field(s, "mode", c.simulate.mode, "simulate");
        read_field(s, "trajectory_stride", c.simulate.trajectory_stride, "simulate");
    }
    if (j.contains("likelihood_study")) {
        const json& s = j["likelihood_study"];
        check_keys(s, {"N", "thetas"}, "likelihood_study");
        read_field(s, "N", c.likelihood_study.N, "likelihood_study");
        read_field(s, "thetas", c.likelihood_study.thetas, "likelihood_study");
    }
    if (j.contains("benchmark")) {
        const json& b = j["benchmark"];
        check_keys(b, {"methods", "npmc_sizes", "data_mode"}, "benchmark");
        read_field(b, "methods", c.benchmark.methods, "benchmark");
        read_field(b, "npmc_sizes", c.benchmark.npmc_sizes, "benchmark");
        read_field(b, "data_mode", c.benchmark.data_mode, "benchmark");
    }
    if (j.contains("kde")) {
        check_keys(j["kde"], {"grid_points"}, "kde");
        read_field(j["kde"], "grid_points", c.kde.grid_points, "kde");
    }
    if (j.contains("seeds")) {
        check_keys(j["seeds"], {"master", "runs"}, "seeds");
        read_field(j["seeds"], "master", c.seeds.master, "seeds");
        read_field(j["seeds"], "runs", c.seeds.runs, "seeds");
    }
    if (j.contains("output")) {
        check_keys(j["output"], {"directory", "formats"}, "output");
        read_field(j["output"], "directory", c.output.directory, "output");
        read_field(j["output"], "formats", c.output.formats, "output");
    }
    c.validate();
    return c;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(json(c).dump())); }

// Run context and manifest ----------------------------------------------------

struct RunOptions {
    std::filesystem::path out;
    std::size_t workers = 1;
    bool overwrite = false;
    std::optional<std::filesystem::path> data;  // dataset directory (infer, likelihood-study)
    std::optional<std::filesystem::path> input; // run directory (plot-data)
    bool render = false;                        // plot-data: invoke gnuplot
};

/// Test hook for cmd_benchmark: return an estimate to bypass a method.
using EstimatorOverride = std::function<std::optional<Eigen::VectorXd>(const std::string& method, std::size_t run)>;

struct RunManifest {
    std::string command;
    ExperimentConfig config;
    std::string hash;
    std::uint64_t seed = 0;
    std::vector<std::string> files;
    json inputs = json::object();
    json timings = json::object();
    json diagnostics = json::object();

    json to_json() const
    {
        std::vector<std::string> sorted = files;
        std::sort(sorted.begin(), sorted.end());
        return json{{"manifest_version", 1}, {"library_version", kLibraryVersion},
                    {"command", command},    {"config", config},
                    {"config_hash", hash},   {"seed", seed},
                    {"inputs", inputs},      {"files", sorted},
                    {"timings", timings},    {"diagnostics", diagnostics}};
    }
};

/// Resolves the output directory (relative paths go under $NPMC_OUTPUT_ROOT when
/// set) and refuses to reuse a non-empty directory unless overwriting.
inline std::filesystem::path prepare_output_dir(std::filesystem::path out, bool overwrite)
{
    namespace fs = std::filesystem;
    if (out.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
            out = fs::path(root) / out;
        }
    }
    if (fs::exists(out)) {
        if (!fs::is_directory(out)) {
            throw ValidationError(out.string() + " exists and is not a directory");
        }
        if (!fs::is_empty(out) && !overwrite) {
            throw ValidationError(out.string() + " is not empty; pass --overwrite to replace its contents");
        }
    }
    fs::create_directories(out);
    return out;
}

class OutputSession {
public:
    OutputSession(std::string command, const ExperimentConfig& cfg, const RunOptions& opts)
        : dir_(prepare_output_dir(opts.out.empty() ? std::filesystem::path(cfg.output.directory) : opts.out,
                                  opts.overwrite)),
          start_(std::chrono::steady_clock::now())
    {
        manifest_.command = std::move(command);
        manifest_.config = cfg;
        manifest_.hash = config_hash(cfg);
        manifest_.seed = cfg.seeds.master;
    }

    std::filesystem::path file(const std::string& name)
    {
        manifest_.files.push_back(name);
        return dir_ / name;
    }

    const std::filesystem::path& dir() const { return dir_; }
    RunManifest& manifest() { return manifest_; }

    void finish()
    {
        manifest_.timings["total_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_json(dir_ / "manifest.json", manifest_.to_json());
    }

private:
    std::filesystem::path dir_;
    RunManifest manifest_;
    std::chrono::steady_clock::time_point start_;
};

// Seeds: one master seed fans out to per-purpose streams.
namespace seed_stream {
inline constexpr std::uint64_t simulate = 0;
inline constexpr std::uint64_t npmc = 10;
inline constexpr std::uint64_t pmh = 11;
inline constexpr std::uint64_t abc = 12;
inline constexpr std::uint64_t likelihood_study = 20;
inline constexpr std::uint64_t benchmark = 30;
} // namespace seed_stream

// Dataset files ---------------------------------------------------------------

struct LoadedDataset {
    ObservationSequence observations;
    SystemState initial;
    json header;
};

inline LoadedDataset load_dataset(const std::filesystem::path& dir)
{
    LoadedDataset ds;
    ds.header = read_json(dir / "dataset.json");
    ds.observations = read_observations_csv(dir / "observations.csv");
    if (ds.observations.empty()) {
        throw ValidationError("dataset " + dir.string() + " has no observations");
    }
    ds.initial = ds.header.at("initial_state").get<SystemState>();
    return ds;
}

// Shared writers --------------------------------------------------------------

namespace detail {

inline std::vector<std::string> theta_header(std::vector<std::string> prefix, std::vector<std::string> suffix = {})
{
    for (const char* n : ThetaVector::names) prefix.emplace_back(n);
    prefix.insert(prefix.end(), suffix.begin(), suffix.end());
    return prefix;
}

inline double kde_bandwidth(const std::vector<double>& x, const std::vector<double>& w, double range)
{
    try {
        return silverman_bandwidth(x, w);
    } catch (const NumericalRangeError&) {
        return 1e-3 * range;
    }
}

/// One weighted sample population, for KDE output.
struct Population {
    std::string label;
    std::vector<Eigen::VectorXd> samples;
    std::vector<double> weights;
};

/// kde_<param>.csv: x, prior, then one density column per population.
inline void write_kde_files(OutputSession& out, const ExperimentConfig& cfg, const std::vector<Population>& pops,
                            json& meta)
{
    const PriorBox prior = PriorBox::repressilator();
    for (std::size_t j = 0; j < ThetaVector::dim; ++j) {
        const std::string name = ThetaVector::names[j];
        const auto grid = linspace(prior.low(j), prior.high(j), cfg.kde.grid_points);
        std::vector<std::string> header = {"x", "prior"};
        std::vector<KdeCurve> curves;
        for (const auto& p : pops) {
            std::vector<double> x(p.samples.size());
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = p.samples[i][static_cast<Eigen::Index>(j)];
            const double bw = kde_bandwidth(x, p.weights, prior.range(j));
            curves.push_back(weighted_kde(x, p.weights, grid, bw));
            header.push_back(p.label);
            meta["kde_bandwidths"][name][p.label] = bw;
        }
        CsvWriter w(out.file("kde_" + name + ".csv"), header);
        std::vector<double> row(header.size());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            row[0] = grid[g];
            row[1] = 1.0 / prior.range(j);
            for (std::size_t c = 0; c < curves.size(); ++c) row[c + 2] = curves[c].density[g];
            w.row_values(row);
        }
    }
    meta["kde_bandwidth_rule"] = "silverman (1.06 * weighted sd * ESS^-1/5)";
}

inline void write_truth(OutputSession& out, const ThetaVector& truth)
{
    CsvWriter w(out.file("truth.csv"), {"parameter", "value"});
    for (std::size_t j = 0; j < ThetaVector::dim; ++j) w.row(std::string(ThetaVector::names[j]), truth[j]);
}

inline void write_estimate(OutputSession& out, const std::string& method, const Eigen::VectorXd& est,
                           const ThetaVector& truth)
{
    CsvWriter w(out.file("estimate.csv"), {"method", "parameter", "estimate", "truth"});
    for (std::size_t j = 0; j < ThetaVector::dim; ++j) {
        w.row(method, std::string(ThetaVector::names[j]), est[static_cast<Eigen::Index>(j)], truth[j]);
    }
}

} // namespace detail

// Commands --------------------------------------------------------------------

/// Writes trajectory.csv, phase.csv, observations.csv, dataset.json.
inline std::filesystem::path cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opts)
{
    cfg.validate();
    OutputSession out("simulate", cfg, opts);
    const bool stochastic = cfg.simulate.mode == "stochastic";
    const DatasetSpec spec = cfg.dataset_spec(stochastic);
    const std::uint64_t seed = derive_seed(cfg.seeds.master, {seed_stream::simulate});
    Rng rng = make_rng(seed);

    auto state_header = state_column_names();
    state_header.insert(state_header.begin(), "t");
    CsvWriter traj(out.file("trajectory.csv"), state_header);
    CsvWriter phase(out.file("phase.csv"), {"t", "a1", "b1", "a2"});
    CsvWriter obs(out.file("observations.csv"), {"n", "t", "y1", "y2"});
    const std::size_t stride = cfg.simulate.trajectory_stride;
    const double tick = static_cast<double>(spec.m_o) * spec.h;

    std::array<double, kStateDim> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    std::vector<double> row(kStateDim + 1);
    std::size_t clamp_events = 0;
    const SystemState initial = stream_dataset(
        spec, rng,
        [&](std::size_t m, const SystemState& s) {
            for (std::size_t i = 0; i < kStateDim; ++i) {
                lo[i] = std::min(lo[i], s[i]);
                hi[i] = std::max(hi[i], s[i]);
            }
            if (m % stride != 0) return;
            const double t = static_cast<double>(m) * spec.h;
            row[0] = t;
            for (std::size_t i = 0; i < kStateDim; ++i) row[i + 1] = s[i];
            traj.row_values(row);
            phase.row(t, s(0, Var::a), s(0, Var::b), s(1, Var::a));
        },
        [&](const Observation& o) { obs.row(o.n, static_cast<double>(o.n) * tick, o.y[0], o.y[1]); }, &clamp_events);

    json header{{"params", spec.params},   {"noise", spec.noise},  {"h", spec.h},
                {"m_o", spec.m_o},         {"R", spec.R},          {"sigma_y", spec.sigma_y},
                {"horizon", cfg.model.horizon}, {"mode", cfg.simulate.mode}, {"seed", seed},
                {"initial_state", initial}, {"initial_std", spec.initial_std},
                {"trajectory_stride", stride}, {"state_columns", state_column_names()}};
    write_json(out.dir() / "dataset.json", header);
    out.manifest().files.push_back("dataset.json");
    out.manifest().diagnostics = {{"clamp_events", clamp_events}, {"state_min", lo}, {"state_max", hi}};
    out.finish();
    return out.dir();
}

/// Runs the configured method on a dataset directory.
inline std::filesystem::path cmd_infer(const ExperimentConfig& cfg, const RunOptions& opts)
{
    cfg.validate();
    if (!opts.data) {
        throw ValidationError("infer requires a dataset directory (--data)");
    }
    const LoadedDataset data = load_dataset(*opts.data);
    OutputSession out("infer", cfg, opts);
    out.manifest().inputs["data"] = std::filesystem::absolute(*opts.data).string();

    const RepressilatorModel model = cfg.filter_model();
    const PriorBox prior = PriorBox::repressilator();
    const ThetaVector truth = cfg.truth();
    const std::string method = cfg.method.name;
    json meta{{"method", method}, {"observations", data.observations.size()}};
    std::vector<detail::Population> pops;
    Eigen::VectorXd estimate;

    if (method == "npmc") {
        const std::uint64_t seed = derive_seed(cfg.seeds.master, {seed_stream::npmc});
        const NpmcConfig nc = cfg.npmc_config(cfg.method.npmc.M, seed, opts.workers);
        const auto loglik = filter_log_likelihood(model, data.observations, nc.N);
        const NpmcResult res = run_npmc(nc, loglik, prior);
        estimate = res.final_estimate();

        CsvWriter est(out.file("estimates.csv"),
                      detail::theta_header({"iteration"}, {"mse", "ess", "zero_weights", "out_of_support"}));
        json iters = json::array();
        for (std::size_t k = 0; k < res.iterations.size(); ++k) {
            const auto& set = res.iterations[k];
            const auto& e = res.estimates[k];
            est.row(k, e[0], e[1], e[2], e[3], res.mse[k], res.ess[k], set.zero_weight_count(), set.out_of_support);

            char name[64];
            std::snprintf(name, sizeof(name), "samples_iter_%02zu.csv", k);
            CsvWriter s(out.file(name), detail::theta_header({"sample"}, {"log_iw", "log_tiw", "weight"}));
            for (std::size_t i = 0; i < set.size(); ++i) {
                const auto& th = set.samples[i];
                s.row(i, th[0], th[1], th[2], th[3], set.log_iw[i], set.log_tiw[i], set.weights[i]);
            }
            json it{{"iteration", k},
                    {"estimate", to_json_vector(e)},
                    {"mse", res.mse[k]},
                    {"ess", res.ess[k]},
                    {"zero_weights", set.zero_weight_count()},
                    {"out_of_support", set.out_of_support},
                    {"filter_failures", set.filter_failures}};
            if (k > 0) {
                it["proposal_mean"] = to_json_vector(res.proposals[k - 1].mean());
                it["proposal_cov"] = to_json_matrix(res.proposals[k - 1].cov());
            }
            iters.push_back(it);
        }
        if (cfg.wants_json()) {
            write_json(out.file("npmc_result.json"),
                       json{{"config",
                             {{"M", nc.M}, {"K", nc.K}, {"M_c", nc.clip_count()}, {"N", nc.N},
                              {"jitter_scale", nc.jitter_scale}}},
                            {"seed", seed},
                            {"jitter", to_json_vector(res.jitter)},
                            {"iterations", iters}});
        }
        const std::size_t K = res.iterations.size() - 1;
        const std::vector<std::size_t> shown = K >= 1 ? std::vector<std::size_t>{0, 1, K} : std::vector<std::size_t>{0};
        std::set<std::size_t> seen;
        for (std::size_t k : shown) {
            if (!seen.insert(k).second) continue;
            pops.push_back({"iteration_" + std::to_string(k), res.iterations[k].samples, res.iterations[k].weights});
        }
        out.manifest().timings["iteration_seconds"] = res.wall_seconds;
    } else if (method == "pmh") {
        const std::uint64_t seed = derive_seed(cfg.seeds.master, {seed_stream::pmh});
        const PmhConfig pc = cfg.pmh_config(seed);
        const auto loglik = filter_log_likelihood(model, data.observations, pc.N);
        const PmhChain chain = run_pmh(pc, loglik, prior);
        estimate = chain_mean(chain, pc.burn_in);

        CsvWriter w(out.file("chain.csv"), detail::theta_header({"step"}, {"log_likelihood", "accepted"}));
        const auto& th0 = chain.initial;
        w.row(std::size_t{0}, th0[0], th0[1], th0[2], th0[3], chain.initial_log_likelihood, 1);
        for (std::size_t t = 0; t < chain.entries.size(); ++t) {
            const auto& e = chain.entries[t];
            w.row(t + 1, e.theta[0], e.theta[1], e.theta[2], e.theta[3], e.log_likelihood, e.accepted ? 1 : 0);
        }
        meta["acceptance_rate"] = chain.acceptance_rate();
        meta["likelihood_calls"] = chain.likelihood_calls;
        meta["rejected_out_of_support"] = chain.rejected_out_of_support;
        meta["rejected_degenerate"] = chain.rejected_degenerate;
        detail::Population post{"chain", {}, {}};
        for (std::size_t t = pc.burn_in; t < chain.entries.size(); ++t) post.samples.push_back(chain.entries[t].theta);
        post.weights.assign(post.samples.size(), 1.0 / static_cast<double>(post.samples.size()));
        pops.push_back(std::move(post));
    } else {
        const std::uint64_t seed = derive_seed(cfg.seeds.master, {seed_stream::abc});
        const AbcConfig ac = cfg.abc_config(seed, opts.workers);
        const SystemState init = data.initial;
        const std::size_t R = data.observations.size();
        auto simulate_obs = [&](const Eigen::VectorXd& th) {
            return noiseless_observations(init, ThetaVector::from_vector(th).apply_to(cfg.model.params), cfg.model.h,
                                          cfg.model.m_o, R);
        };
        const AbcPopulation pop = run_abc_smc(ac, simulate_obs, data.observations, prior);
        estimate = pop.posterior_mean();

        CsvWriter summary(out.file("abc_stages.csv"), {"stage", "tolerance", "accepted", "draws", "out_of_support"});
        for (std::size_t t = 0; t < pop.stages.size(); ++t) {
            const auto& st = pop.stages[t];
            summary.row(t + 1, st.tolerance, st.samples.size(), st.draws, st.out_of_support);
            CsvWriter s(out.file("population_stage_" + std::to_string(t + 1) + ".csv"),
                        detail::theta_header({"sample"}, {"distance", "weight"}));
            for (std::size_t i = 0; i < st.samples.size(); ++i) {
                const auto& th = st.samples[i];
                s.row(i, th[0], th[1], th[2], th[3], st.distances[i], st.weights[i]);
            }
        }
        pops.push_back({"stage_1", pop.stages.front().samples, pop.stages.front().weights});
        if (pop.stages.size() > 1) {
            pops.push_back({"stage_" + std::to_string(pop.stages.size()), pop.stages.back().samples,
                            pop.stages.back().weights});
        }
    }

    detail::write_estimate(out, method, estimate, truth);
    detail::write_truth(out, truth);
    detail::write_kde_files(out, cfg, pops, meta);
    if (cfg.wants_json()) {
        meta["estimate"] = to_json_vector(estimate);
        meta["truth"] = truth;
        write_json(out.file("infer_summary.json"), meta);
    }
    out.finish();
    return out.dir();
}

/// Cumulative log-likelihood curves for each configured theta on one dataset,
/// plus pairwise log-likelihood ratio columns. Every theta uses the same filter
/// seed (common random numbers).
inline std::filesystem::path cmd_likelihood_study(const ExperimentConfig& cfg, const RunOptions& opts)
{
    cfg.validate();
    if (!opts.data) {
        throw ValidationError("likelihood-study requires a dataset directory (--data)");
    }
    const LoadedDataset data = load_dataset(*opts.data);
    OutputSession out("likelihood-study", cfg, opts);
    out.manifest().inputs["data"] = std::filesystem::absolute(*opts.data).string();

    const RepressilatorModel model = cfg.filter_model();
    const auto& thetas = cfg.likelihood_study.thetas;
    const std::uint64_t seed = derive_seed(cfg.seeds.master, {seed_stream::likelihood_study});
    std::vector<LogLikelihoodEstimate> ests(thetas.size());
    parallel_for(thetas.size(), opts.workers, [&](std::size_t i) {
        Rng rng = make_rng(seed);
        const ThetaVector th{thetas[i][0], thetas[i][1], thetas[i][2], thetas[i][3]};
        ests[i] = run_filter(model, th, data.observations, cfg.likelihood_study.N, rng);
    });

    std::vector<std::vector<double>> cum;
    std::vector<std::string> header = {"n"};
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        cum.push_back(ests[i].cumulative());
        header.push_back("loglik_" + std::to_string(i));
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        for (std::size_t j = i + 1; j < thetas.size(); ++j) {
            pairs.emplace_back(i, j);
            header.push_back("log_ratio_" + std::to_string(i) + "_" + std::to_string(j));
        }
    }
    CsvWriter w(out.file("loglik_curves.csv"), header);
    const std::size_t R = data.observations.size();
    std::vector<double> row(header.size());
    for (std::size_t n = 0; n < R; ++n) {
        row[0] = static_cast<double>(n + 1);
        for (std::size_t i = 0; i < thetas.size(); ++i) row[i + 1] = cum[i][n];
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            row[1 + thetas.size() + p] = cum[pairs[p].first][n] - cum[pairs[p].second][n];
        }
        w.row_values(row);
    }
    CsvWriter t(out.file("thetas.csv"), detail::theta_header({"index"}, {"log_likelihood"}));
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        t.row(i, thetas[i][0], thetas[i][1], thetas[i][2], thetas[i][3], ests[i].log_value);
    }
    CsvWriter d(out.file("filter_diagnostics.csv"), {"theta_index", "n", "log_increment", "ess"});
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        for (const auto& tick : ests[i].ticks()) d.row(i, tick.n, tick.log_increment, tick.ess);
    }
    out.manifest().diagnostics["filter_seed"] = seed;
    out.finish();
    return out.dir();
}

struct BenchmarkOutcome {
    std::vector<std::string> methods;
    std::vector<NmseReport> reports;
    std::filesystem::path dir;
};

/// Independent replications on fresh datasets; NMSE table per method and parameter.
inline BenchmarkOutcome cmd_benchmark(const ExperimentConfig& cfg, const RunOptions& opts,
                                      const EstimatorOverride& override_estimate = {})
{
    cfg.validate();
    OutputSession out("benchmark", cfg, opts);
    const PriorBox prior = PriorBox::repressilator();
    const ThetaVector truth = cfg.truth();
    const RepressilatorModel model = cfg.filter_model();

    std::vector<std::string> methods;
    for (const auto& m : cfg.benchmark.methods) {
        if (m == "npmc") {
            for (std::size_t M : cfg.benchmark.npmc_sizes) methods.push_back("npmc_M" + std::to_string(M));
        } else {
            methods.push_back(m);
        }
    }
    const std::size_t runs = cfg.seeds.runs;
    struct Cell {
        std::optional<Eigen::VectorXd> estimate;
        std::string status = "ok";
        double seconds = 0.0;
    };
    std::vector<std::vector<Cell>> cells(runs, std::vector<Cell>(methods.size()));

    parallel_for(runs, opts.workers, [&](std::size_t r) {
        const std::uint64_t run_seed = derive_seed(cfg.seeds.master, {seed_stream::benchmark, r});
        Rng data_rng = make_rng(derive_seed(run_seed, {0}));
        const Dataset ds = generate_dataset(cfg.dataset_spec(cfg.benchmark.data_mode == "stochastic"), data_rng);
        const auto& obs = ds.observations;
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const std::string& m = methods[mi];
            Cell& cell = cells[r][mi];
            const auto t0 = std::chrono::steady_clock::now();
            try {
                if (override_estimate) {
                    if (auto forced = override_estimate(m, r)) {
                        cell.estimate = *forced;
                        continue;
                    }
                }
                const std::uint64_t s = derive_seed(run_seed, {mi + 1});
                if (m.rfind("npmc_M", 0) == 0) {
                    const std::size_t M = std::stoul(m.substr(6));
                    const NpmcConfig nc = cfg.npmc_config(M, s, 1);
                    cell.estimate = run_npmc(nc, filter_log_likelihood(model, obs, nc.N), prior).final_estimate();
                } else if (m == "pmh") {
                    const PmhConfig pc = cfg.pmh_config(s);
                    const PmhChain chain = run_pmh(pc, filter_log_likelihood(model, obs, pc.N), prior);
                    cell.estimate = chain_mean(chain, pc.burn_in);
                } else {
                    auto simulate_obs = [&](const Eigen::VectorXd& th) {
                        return noiseless_observations(ds.initial,
                                                      ThetaVector::from_vector(th).apply_to(cfg.model.params),
                                                      cfg.model.h, cfg.model.m_o, obs.size());
                    };
                    cell.estimate = run_abc_smc(cfg.abc_config(s, 1), simulate_obs, obs, prior).posterior_mean();
                }
            } catch (const std::exception& e) {
                cell.estimate.reset();
                cell.status = std::string("failed: ") + e.what();
            }
            cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    });

    CsvWriter est(out.file("benchmark_estimates.csv"), detail::theta_header({"run", "method"}, {"status"}));
    json per_run_seconds = json::object();
    for (std::size_t r = 0; r < runs; ++r) {
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const Cell& c = cells[r][mi];
            const double nan = std::numeric_limits<double>::quiet_NaN();
            const Eigen::VectorXd e = c.estimate.value_or(Eigen::VectorXd::Constant(4, nan));
            std::string status = c.status;
            std::replace(status.begin(), status.end(), ',', ';');
            std::replace(status.begin(), status.end(), '\n', ' ');
            est.row(r, methods[mi], e[0], e[1], e[2], e[3], status);
            per_run_seconds[methods[mi]].push_back(c.seconds);
        }
    }

    BenchmarkOutcome outcome;
    outcome.methods = methods;
    CsvWriter table(out.file("nmse.csv"), {"method", "parameter", "nmse_mean", "nmse_std", "runs", "failed_runs"});
    json jt = json::array();
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::vector<Eigen::VectorXd> ok;
        std::size_t failed = 0;
        for (std::size_t r = 0; r < runs; ++r) {
            if (cells[r][mi].estimate) {
                ok.push_back(*cells[r][mi].estimate);
            } else {
                ++failed;
            }
        }
        NmseReport rep;
        if (ok.empty()) {
            rep.method = methods[mi];
            rep.mean.assign(ThetaVector::dim, std::numeric_limits<double>::quiet_NaN());
            rep.std = rep.mean;
        } else {
            rep = nmse(ok, truth.to_vector(), methods[mi]);
        }
        rep.failed_runs = failed;
        for (std::size_t j = 0; j < ThetaVector::dim; ++j) {
            table.row(methods[mi], std::string(ThetaVector::names[j]), rep.mean[j], rep.std[j], rep.runs,
                      rep.failed_runs);
        }
        jt.push_back({{"method", rep.method}, {"nmse_mean", rep.mean}, {"nmse_std", rep.std}, {"runs", rep.runs},
                      {"failed_runs", rep.failed_runs}});
        outcome.reports.push_back(std::move(rep));
    }
    if (cfg.wants_json()) {
        write_json(out.file("nmse.json"),
                   json{{"parameters", ThetaVector::names}, {"truth", truth}, {"methods", jt},
                        {"normalisation", "squared truth value"}});
    }
    out.manifest().timings["method_seconds"] = per_run_seconds;
    out.finish();
    outcome.dir = out.dir();
    return outcome;
}

/// Writes gnuplot scripts for a previous run directory; runs gnuplot only when asked.
inline std::filesystem::path cmd_plot_data(const ExperimentConfig& cfg, const RunOptions& opts)
{
    if (!opts.input) {
        throw ValidationError("plot-data requires a run directory (--input)");
    }
    const std::filesystem::path in = std::filesystem::absolute(*opts.input);
    const json manifest = read_json(in / "manifest.json");
    const std::string command = manifest.at("command").get<std::string>();
    OutputSession out("plot-data", cfg, opts);
    out.manifest().inputs["run"] = in.string();

    std::ofstream gp(out.file("plots.gp"));
    gp << "set datafile separator ','\nset terminal pngcairo size 900,700\n";
    auto q = [](const std::filesystem::path& p) { return "'" + p.string() + "'"; };
    if (command == "simulate") {
        gp << "set output 'phase_a1_b1.png'\nset xlabel 'a1'\nset ylabel 'b1'\n"
           << "plot " << q(in / "phase.csv") << " using 2:3 every ::1 with dots notitle\n";
        gp << "set output 'phase_a1_a2.png'\nset ylabel 'a2'\n"
           << "plot " << q(in / "phase.csv") << " using 2:4 every ::1 with dots notitle\n";
    } else if (command == "infer") {
        for (const char* name : ThetaVector::names) {
            const auto table = read_csv(in / ("kde_" + std::string(name) + ".csv"));
            gp << "set output 'kde_" << name << ".png'\nset xlabel '" << name << "'\nset ylabel 'density'\n";
            gp << "plot ";
            for (std::size_t c = 1; c < table.header.size(); ++c) {
                gp << (c > 1 ? ", " : "") << q(in / ("kde_" + std::string(name) + ".csv")) << " using 1:" << c + 1
                   << " every ::1 with lines title '" << table.header[c] << "'";
            }
            gp << "\n";
        }
    } else if (command == "likelihood-study") {
        const auto table = read_csv(in / "loglik_curves.csv");
        gp << "set output 'loglik.png'\nset xlabel 'n'\nset ylabel 'log-likelihood'\nplot ";
        bool first = true;
        for (std::size_t c = 1; c < table.header.size(); ++c) {
            if (table.header[c].rfind("loglik_", 0) != 0) continue;
            gp << (first ? "" : ", ") << q(in / "loglik_curves.csv") << " using 1:" << c + 1
               << " every ::1 with lines title '" << table.header[c] << "'";
            first = false;
        }
        gp << "\n";
    } else if (command == "benchmark") {
        gp << "set output 'nmse.png'\nset style data histogram\nset style fill solid\n"
           << "plot " << q(in / "nmse.csv") << " using 3:xtic(stringcolumn(1).' '.stringcolumn(2)) every ::1 notitle\n";
    } else {
        throw ValidationError("plot-data cannot handle runs of command '" + command + "'");
    }
    gp.close();
    if (opts.render) {
        const std::string cmd = "cd '" + out.dir().string() + "' && gnuplot plots.gp";
        if (std::system(cmd.c_str()) != 0) {
            throw std::runtime_error("gnuplot failed or is not installed");
        }
    }
    out.finish();
    return out.dir();
}

} // namespace npmc
