#pragma once

// Benchmark harness: simulate -> fit aggregates -> infer -> score against
// ground truth, plus the full-chain vs sliding-window timing comparison.

#include <algorithm>
#include <chrono>
#include <limits>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgfb/cgfb.hpp"
#include "cgfb/kalman.hpp"
#include "cgfb/model.hpp"
#include "cgfb/sliding_window.hpp"

namespace cgfb {

enum class Algorithm { cgfb, sw_cgfb, sw_naive, kf_aggregate };

[[nodiscard]] inline bool is_sliding_window(Algorithm a) { return a == Algorithm::sw_cgfb || a == Algorithm::sw_naive; }

[[nodiscard]] inline std::string to_string(Algorithm a) {
    switch (a) {
    case Algorithm::cgfb: return "cgfb";
    case Algorithm::sw_cgfb: return "sw_cgfb";
    case Algorithm::sw_naive: return "sw_naive";
    case Algorithm::kf_aggregate: return "kf_aggregate";
    }
    return "?";
}

[[nodiscard]] inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "cgfb") return Algorithm::cgfb;
    if (s == "sw_cgfb" || s == "sw-cgfb") return Algorithm::sw_cgfb;
    if (s == "sw_naive" || s == "sw-naive") return Algorithm::sw_naive;
    if (s == "kf_aggregate" || s == "kf-aggregate") return Algorithm::kf_aggregate;
    throw ConfigError("unknown algorithm '" + s + "'");
}

/// What the estimates are scored against.
///   sample: per-timestep sample mean / covariance (M-1) of the simulated states
///   model:  the model's unconditional moments
///   exact:  single-agent exact posterior (smoother for cgfb, filter otherwise)
///   automatic: exact when M = 1, sample otherwise
enum class TruthKind { automatic, sample, model, exact };

struct MetricSet {
    bool mean_err = true;
    bool cov_err = true;
    bool runtime = true;
};

struct ExperimentSpec {
    GhmmParams model;
    std::size_t agents = 1;
    std::size_t steps = 1;
    std::vector<std::uint64_t> seeds{0};
    Algorithm algorithm = Algorithm::cgfb;
    std::optional<std::size_t> window;
    MetricSet metrics;
    TruthKind truth = TruthKind::automatic;
    CgfbConfig config;
    bool per_step = false;

    void check() const {
        validate(model);
        if (agents < 1) throw ConfigError("experiment: agents must be >= 1");
        if (steps < 1) throw ConfigError("experiment: steps must be >= 1");
        if (seeds.empty()) throw ConfigError("experiment: at least one seed is required");
        if (is_sliding_window(algorithm) != window.has_value())
            throw ConfigError(is_sliding_window(algorithm) ? "experiment: --window is required for " + to_string(algorithm)
                                                           : "experiment: --window only applies to sliding-window algorithms");
        if (window && *window < 1) throw InvalidWindow("window length K must be >= 1");
        if (truth == TruthKind::exact && agents != 1) throw ConfigError("experiment: exact truth requires M = 1");
        if (truth == TruthKind::sample && agents < 2) throw ConfigError("experiment: sample truth requires M >= 2");
        config.check();
    }
};

/// `t` empty means the time-averaged row.
struct MetricRow {
    std::uint64_t seed = 0;
    std::size_t agents = 0;
    std::optional<std::size_t> t;
    double mean_sq_err = 0.0;
    double cov_sq_err = 0.0;
    double wall_ms = 0.0;
};

struct MetricSummary {
    double mean_sq_err = 0.0;
    double cov_sq_err = 0.0;
    std::vector<double> mean_sq_err_per_step;
    std::vector<double> cov_sq_err_per_step;
};

/// mean_sq_err = (1/T) sum ||mu_t - mu*_t||^2, cov_sq_err = (1/T) sum ||P_t - P*_t||_F^2.
[[nodiscard]] inline MetricSummary compute_metrics(const MarginalTrajectory& estimates, const MarginalTrajectory& truth) {
    if (estimates.size() != truth.size())
        throw LengthMismatch("compute_metrics: " + std::to_string(estimates.size()) + " estimates vs " +
                             std::to_string(truth.size()) + " truth steps");
    if (truth.empty()) throw LengthMismatch("compute_metrics: empty trajectories");
    MetricSummary s;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (estimates[t].mean.size() != truth[t].mean.size())
            throw DimensionMismatch("compute_metrics: state dimension differs");
        const double me = (estimates[t].mean - truth[t].mean).squaredNorm();
        const double ce = (estimates[t].cov - truth[t].cov).squaredNorm();
        s.mean_sq_err_per_step.push_back(me);
        s.cov_sq_err_per_step.push_back(ce);
        s.mean_sq_err += me;
        s.cov_sq_err += ce;
    }
    s.mean_sq_err /= static_cast<double>(truth.size());
    s.cov_sq_err /= static_cast<double>(truth.size());
    return s;
}

/// Per-timestep sample mean and (M-1) sample covariance of the hidden states.
[[nodiscard]] inline MarginalTrajectory sample_ground_truth(const TrajectoryBundle& bundle) {
    const std::size_t M = bundle.agents();
    if (M < 2) throw ConfigError("sample ground truth needs at least two agents");
    const std::size_t T = bundle.steps();
    const auto dx = bundle.states[0].rows();
    MarginalTrajectory out(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto tc = static_cast<Eigen::Index>(t);
        Vector mean = Vector::Zero(dx);
        for (const auto& s : bundle.states) mean += s.col(tc);
        mean /= static_cast<double>(M);
        Matrix cov = Matrix::Zero(dx, dx);
        for (const auto& s : bundle.states) {
            const Vector dev = s.col(tc) - mean;
            cov.noalias() += dev * dev.transpose();
        }
        out[t] = {std::move(mean), symmetrized(cov / static_cast<double>(M - 1))};
    }
    return out;
}

[[nodiscard]] inline MarginalTrajectory to_trajectory(const std::vector<KfAggregateSummary>& s) {
    MarginalTrajectory out;
    out.reserve(s.size());
    for (const auto& e : s) out.push_back({e.mean, e.cov});
    return out;
}

[[nodiscard]] inline MarginalTrajectory to_trajectory(const std::vector<KalmanState>& s) {
    MarginalTrajectory out;
    out.reserve(s.size());
    for (const auto& e : s) out.push_back({e.mean, e.cov});
    return out;
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    MarginalTrajectory estimates;
    MarginalTrajectory truth;
    std::optional<ConvergenceReport> convergence; // cgfb only
    std::vector<std::size_t> sweeps;              // sliding-window only
    double wall_ms = 0.0;
};

struct ExperimentResult {
    std::vector<MetricRow> rows;
    std::vector<SeedOutcome> outcomes;
};

namespace detail {

template <typename F>
auto tagged(std::uint64_t seed, const char* stage, F&& f) -> decltype(f()) {
    const std::string prefix = "seed " + std::to_string(seed) + ", stage " + stage + ": ";
    try {
        return f();
    } catch (const NumericalError& e) {
        throw NumericalError(prefix + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    }
}

} // namespace detail

[[nodiscard]] inline SeedOutcome run_seed(const ExperimentSpec& spec, std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    SeedOutcome o;
    o.seed = seed;
    const auto bundle = detail::tagged(seed, "simulate", [&] { return simulate(spec.model, spec.agents, spec.steps, seed); });
    const auto agg = detail::tagged(seed, "fit_aggregate", [&] { return fit_aggregate(bundle, spec.model); });
    const ModelTerms terms(spec.model);

    const auto start = clock::now();
    detail::tagged(seed, "infer", [&] {
        switch (spec.algorithm) {
        case Algorithm::cgfb: {
            auto res = run_cgfb(terms, agg, terms.initial, spec.config);
            o.estimates = std::move(res.marginals);
            o.convergence = std::move(res.report);
            break;
        }
        case Algorithm::sw_cgfb:
        case Algorithm::sw_naive: {
            CgfbConfig c = sw_default_config();
            c.conv_tol = spec.config.conv_tol;
            c.damping = spec.config.damping;
            c.max_iters = std::min(c.max_iters, spec.config.max_iters);
            auto run = sw_filter(terms, agg, *spec.window, spec.algorithm == Algorithm::sw_naive, c);
            o.estimates = std::move(run.filtered);
            o.sweeps = std::move(run.sweeps);
            break;
        }
        case Algorithm::kf_aggregate:
            o.estimates = to_trajectory(kf_aggregate(spec.model, bundle));
            break;
        }
        return 0;
    });
    o.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();

    TruthKind truth = spec.truth;
    if (truth == TruthKind::automatic) truth = spec.agents == 1 ? TruthKind::exact : TruthKind::sample;
    o.truth = detail::tagged(seed, "ground_truth", [&]() -> MarginalTrajectory {
        switch (truth) {
        case TruthKind::sample: return sample_ground_truth(bundle);
        case TruthKind::model: return prior_moments(spec.model, spec.steps);
        case TruthKind::exact: {
            const Matrix& obs = bundle.observations[0];
            if (spec.algorithm != Algorithm::cgfb) return to_trajectory(kf_filter(spec.model, obs));
            const auto dim = static_cast<Eigen::Index>(spec.steps) * (spec.model.state_dim() + spec.model.obs_dim());
            return dim <= joint_oracle_dimension_cap ? joint_oracle(spec.model, obs) : rts_smooth(spec.model, obs);
        }
        case TruthKind::automatic: break;
        }
        throw ConfigError("unresolved ground truth kind");
    });
    return o;
}

/// One averaged row per seed (and per-step rows when spec.per_step), in seed
/// order. Deterministic per seed except for wall_ms.
[[nodiscard]] inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.check();
    ExperimentResult result;
    for (std::uint64_t seed : spec.seeds) {
        SeedOutcome o = run_seed(spec, seed);
        const MetricSummary m = compute_metrics(o.estimates, o.truth);
        result.rows.push_back({seed, spec.agents, std::nullopt, m.mean_sq_err, m.cov_sq_err, o.wall_ms});
        if (spec.per_step)
            for (std::size_t t = 0; t < m.mean_sq_err_per_step.size(); ++t)
                result.rows.push_back({seed, spec.agents, t + 1, m.mean_sq_err_per_step[t], m.cov_sq_err_per_step[t], 0.0});
        result.outcomes.push_back(std::move(o));
    }
    return result;
}

struct TimingRow {
    std::size_t t = 0;
    double baseline_ms = 0.0;
    double sw_ms = 0.0;
};

struct TimingSpec {
    GhmmParams model;
    std::size_t agents = 100;
    std::size_t steps = 100;
    std::uint64_t seed = 0;
    std::size_t window = 20;
    CgfbConfig config;
    /// Each step is timed this many times; the minimum is reported.
    std::size_t repeats = 3;
};

/// Per-step cost of re-running CGFB from scratch on the length-t prefix
/// versus one sliding-window step.
[[nodiscard]] inline std::vector<TimingRow> compare_timing(const TimingSpec& spec) {
    using clock = std::chrono::steady_clock;
    if (spec.window < 1) throw InvalidWindow("window length K must be >= 1");
    if (spec.repeats < 1) throw ConfigError("timing: repeats must be >= 1");
    const auto bundle = simulate(spec.model, spec.agents, spec.steps, spec.seed);
    const auto agg = fit_aggregate(bundle, spec.model);
    const ModelTerms terms(spec.model);
    const std::size_t T = agg.size();
    std::vector<TimingRow> rows(T);
    for (std::size_t t = 0; t < T; ++t) {
        rows[t].t = t + 1;
        rows[t].baseline_ms = rows[t].sw_ms = std::numeric_limits<double>::infinity();
    }
    CgfbConfig sw_config = sw_default_config();
    sw_config.conv_tol = spec.config.conv_tol;
    CgfbConfig base_config = spec.config;
    base_config.require_convergence = false;

    for (std::size_t r = 0; r < spec.repeats; ++r) {
        for (std::size_t t = 0; t < T; ++t) {
            const auto a = clock::now();
            auto res = run_cgfb(terms, std::span<const AggregateEntry>(agg.data(), t + 1), terms.initial, base_config);
            const auto b = clock::now();
            (void)res;
            rows[t].baseline_ms = std::min(rows[t].baseline_ms, std::chrono::duration<double, std::milli>(b - a).count());
        }
        WindowState state = sw_init(terms, spec.window);
        for (std::size_t t = 0; t < T; ++t) {
            const auto a = clock::now();
            auto step = sw_step(terms, std::move(state), agg[t], sw_config);
            const auto b = clock::now();
            state = std::move(step.state);
            rows[t].sw_ms = std::min(rows[t].sw_ms, std::chrono::duration<double, std::milli>(b - a).count());
        }
    }
    return rows;
}

} // namespace cgfb
