#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgfb/gauss.hpp"

namespace cgfb {

/// Linear-Gaussian hidden Markov model
///   x_1 ~ N(pi, Pi),  x_{t+1} = A x_t + w,  o_t = C x_t + v,
/// with w ~ N(0, Q) and v ~ N(0, R).
struct GhmmParams {
    Matrix A;
    Matrix Q;
    Matrix C;
    Matrix R;
    Vector pi;
    Matrix Pi;
    std::optional<double> delta_t; // provenance only

    [[nodiscard]] Eigen::Index state_dim() const { return pi.size(); }
    [[nodiscard]] Eigen::Index obs_dim() const { return R.rows(); }
};

/// The 2-state damped oscillator benchmark with a scalar velocity sensor.
[[nodiscard]] inline GhmmParams damped_oscillator_model(double dt = 0.05) {
    GhmmParams p;
    p.A.resize(2, 2);
    p.A << 1.0, dt, -dt, 1.0 - 0.5 * dt;
    p.Q = dt * 0.1 * Matrix::Identity(2, 2);
    p.C.resize(1, 2);
    p.C << 0.0, dt;
    p.R = Matrix::Constant(1, 1, dt * 0.7);
    p.pi = Vector(2);
    p.pi << 1.0, 0.0;
    p.Pi.resize(2, 2);
    p.Pi << 1.0, 0.2, 0.2, 1.0;
    p.delta_t = dt;
    return p;
}

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void check_spd(const Matrix& m, const char* name, Eigen::Index d, std::vector<ModelViolation>& out) {
    if (m.rows() != d || m.cols() != d) {
        out.push_back({name, "shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                                 std::to_string(d) + "x" + std::to_string(d)});
        return;
    }
    if (!all_finite(m)) {
        out.push_back({name, "non-finite entry"});
        return;
    }
    if (!is_symmetric(m)) {
        out.push_back({name, "not symmetric"});
        return;
    }
    if (!is_positive_definite(m)) out.push_back({name, "not positive definite"});
}

} // namespace detail

/// Returns `params` unchanged when every invariant holds, otherwise throws
/// InvalidModel listing all violations.
inline const GhmmParams& validate(const GhmmParams& params) {
    std::vector<ModelViolation> v;
    const Eigen::Index dx = params.pi.size();
    const Eigen::Index dobs = params.R.rows();
    if (dx < 1) v.push_back({"pi", "empty state dimension"});
    if (dobs < 1) v.push_back({"R", "empty observation dimension"});
    if (!params.pi.allFinite()) v.push_back({"pi", "non-finite entry"});
    if (params.A.rows() != dx || params.A.cols() != dx)
        v.push_back({"A", "shape " + std::to_string(params.A.rows()) + "x" + std::to_string(params.A.cols()) +
                              ", expected " + std::to_string(dx) + "x" + std::to_string(dx)});
    else if (!detail::all_finite(params.A))
        v.push_back({"A", "non-finite entry"});
    if (params.C.rows() != dobs || params.C.cols() != dx)
        v.push_back({"C", "shape " + std::to_string(params.C.rows()) + "x" + std::to_string(params.C.cols()) +
                              ", expected " + std::to_string(dobs) + "x" + std::to_string(dx)});
    else if (!detail::all_finite(params.C))
        v.push_back({"C", "non-finite entry"});
    if (dx >= 1) {
        detail::check_spd(params.Q, "Q", dx, v);
        detail::check_spd(params.Pi, "Pi", dx, v);
    }
    if (dobs >= 1) detail::check_spd(params.R, "R", dobs, v);
    if (params.delta_t && !(std::isfinite(*params.delta_t) && *params.delta_t > 0.0))
        v.push_back({"delta_t", "must be a positive finite number"});
    if (!v.empty()) throw InvalidModel(std::move(v));
    return params;
}

/// M simulated agents. states[m] is d_x x T (column t is x_{t+1}); likewise
/// observations[m] is d_o x T.
struct TrajectoryBundle {
    std::vector<Matrix> states;
    std::vector<Matrix> observations;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t agents() const { return states.size(); }
    [[nodiscard]] std::size_t steps() const { return states.empty() ? 0 : static_cast<std::size_t>(states[0].cols()); }
};

/// Independent generator for trajectory `index` under `seed`. Streams for
/// different indices are decorrelated through seed_seq mixing, so results do
/// not depend on the order trajectories are simulated in.
[[nodiscard]] inline std::mt19937_64 trajectory_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

namespace detail {

inline Matrix lower_factor(const Matrix& spd) {
    Eigen::LLT<Matrix> llt(symmetrized(spd));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("covariance passed to sampler is not positive definite");
    return llt.matrixL();
}

template <typename Gen>
Vector standard_normal(Gen& gen, Eigen::Index n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = nd(gen);
    return z;
}

} // namespace detail

[[nodiscard]] inline TrajectoryBundle simulate(const GhmmParams& params, std::size_t agents, std::size_t steps,
                                               std::uint64_t seed) {
    validate(params);
    if (agents < 1 || steps < 1) throw ConfigError("simulate: agents and steps must both be >= 1");
    const auto dx = params.state_dim();
    const auto dobs = params.obs_dim();
    const Matrix lp = detail::lower_factor(params.Pi);
    const Matrix lq = detail::lower_factor(params.Q);
    const Matrix lr = detail::lower_factor(params.R);
    const auto T = static_cast<Eigen::Index>(steps);

    TrajectoryBundle b;
    b.seed = seed;
    b.states.reserve(agents);
    b.observations.reserve(agents);
    for (std::size_t m = 0; m < agents; ++m) {
        auto gen = trajectory_stream(seed, m);
        Matrix xs(dx, T);
        Matrix os(dobs, T);
        Vector x = params.pi + lp * detail::standard_normal(gen, dx);
        for (Eigen::Index t = 0; t < T; ++t) {
            xs.col(t) = x;
            os.col(t) = params.C * x + lr * detail::standard_normal(gen, dobs);
            if (t + 1 < T) x = params.A * x + lq * detail::standard_normal(gen, dx);
        }
        b.states.push_back(std::move(xs));
        b.observations.push_back(std::move(os));
    }
    return b;
}

/// Gaussian summary of the population's observations at one timestep. When
/// `point_mass` is set the entry is a single exactly-known observation and
/// the upward message uses the observation likelihood directly; `cov` then
/// only records R for reporting.
struct AggregateEntry {
    Vector mean;
    Matrix cov;
    bool point_mass = false;
};

using AggregateObservations = std::vector<AggregateEntry>;

namespace detail {

/// Adds max(1e-9 * trace / d, 1e-12) * I when the covariance fails Cholesky.
inline std::optional<Matrix> regularized_spd(Matrix cov) {
    cov = symmetrized(cov);
    if (Eigen::LLT<Matrix>(cov).info() == Eigen::Success) return cov;
    const double d = static_cast<double>(cov.rows());
    const double jitter = std::max(1e-9 * cov.trace() / d, 1e-12);
    cov += jitter * Matrix::Identity(cov.rows(), cov.cols());
    if (Eigen::LLT<Matrix>(cov).info() == Eigen::Success) return cov;
    return std::nullopt;
}

} // namespace detail

/// Per-timestep sample mean and unbiased (M-1) sample covariance of the
/// observations. A single agent yields point-mass entries with cov = R.
[[nodiscard]] inline AggregateObservations fit_aggregate(const TrajectoryBundle& bundle, const GhmmParams& params) {
    const std::size_t M = bundle.agents();
    if (M < 1) throw ConfigError("fit_aggregate: empty bundle");
    const std::size_t T = bundle.steps();
    const auto dobs = bundle.observations[0].rows();
    if (dobs != params.obs_dim()) throw DimensionMismatch("fit_aggregate: observation dimension differs from model");

    AggregateObservations out(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto tc = static_cast<Eigen::Index>(t);
        Vector mean = Vector::Zero(dobs);
        for (const auto& o : bundle.observations) mean += o.col(tc);
        mean /= static_cast<double>(M);
        if (M == 1) {
            out[t] = {std::move(mean), params.R, true};
            continue;
        }
        Matrix cov = Matrix::Zero(dobs, dobs);
        for (const auto& o : bundle.observations) {
            const Vector dev = o.col(tc) - mean;
            cov.noalias() += dev * dev.transpose();
        }
        cov /= static_cast<double>(M - 1);
        auto repaired = detail::regularized_spd(std::move(cov));
        if (!repaired) throw DegenerateAggregate(t);
        out[t] = {std::move(mean), std::move(*repaired), false};
    }
    return out;
}

/// Point-mass aggregates for one agent's observation sequence (d_o x T).
[[nodiscard]] inline AggregateObservations single_agent_aggregate(const Matrix& observations, const GhmmParams& params) {
    AggregateObservations out;
    out.reserve(static_cast<std::size_t>(observations.cols()));
    for (Eigen::Index t = 0; t < observations.cols(); ++t) out.push_back({observations.col(t), params.R, true});
    return out;
}

/// Unconditional moments E[x_t], Cov(x_t) under the model for t = 1..T.
[[nodiscard]] inline MarginalTrajectory prior_moments(const GhmmParams& params, std::size_t steps) {
    MarginalTrajectory out;
    out.reserve(steps);
    MomentGaussian g{params.pi, params.Pi};
    for (std::size_t t = 0; t < steps; ++t) {
        out.push_back(g);
        g = {params.A * g.mean, symmetrized(params.A * g.cov * params.A.transpose() + params.Q)};
    }
    return out;
}

} // namespace cgfb
