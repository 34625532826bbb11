#pragma once

// Sliding-window CGFB: online inference over the latest K aggregate
// observations. History evicted from the window survives as the forward
// message assigned to the window's left-most node.

#include <cstddef>
#include <vector>

#include "cgfb/cgfb.hpp"

namespace cgfb {

struct WindowState {
    std::size_t window_len = 1;
    /// Forward boundary of the left-most node in the window.
    CanonicalGaussian prior;
    /// Last <= window_len aggregates, oldest first.
    std::vector<AggregateEntry> buffer;
    /// Number of observations consumed; the newest buffer entry is time
    /// current_index (one-based).
    std::size_t current_index = 0;
    /// Converged messages of the current window, reused as a warm start.
    MessageSet messages;
    /// Unconditional model moments at the window's left edge (naive variant).
    MomentGaussian left_edge_prior_moments;

    [[nodiscard]] std::size_t window_start() const { return current_index - buffer.size(); }
};

struct SwStepResult {
    WindowState state;
    MomentGaussian filtered;
    std::size_t sweeps = 0;
    bool converged = false;
};

/// Per-step inner budget: warm-started, capped at 50 sweeps.
[[nodiscard]] inline CgfbConfig sw_default_config() {
    CgfbConfig c;
    c.max_iters = 50;
    c.conv_tol = 1e-9;
    c.require_convergence = false;
    return c;
}

[[nodiscard]] inline WindowState sw_init(const ModelTerms& m, std::size_t window_len) {
    if (window_len < 1) throw InvalidWindow("window length K must be >= 1");
    WindowState s;
    s.window_len = window_len;
    s.prior = m.initial;
    s.buffer.reserve(window_len + 1);
    s.left_edge_prior_moments = to_moment(m.initial);
    return s;
}

namespace detail {

inline void drop_front(MessageSet& msgs) {
    msgs.fwd.erase(msgs.fwd.begin());
    msgs.bwd.erase(msgs.bwd.begin());
    msgs.up.erase(msgs.up.begin());
    msgs.down.erase(msgs.down.begin());
}

inline SwStepResult sw_advance(const ModelTerms& m, WindowState state, AggregateEntry new_obs,
                               const CgfbConfig& config, bool naive) {
    const std::size_t abs_t = state.current_index; // zero-based time of new_obs
    try {
        state.buffer.push_back(std::move(new_obs));
        ++state.current_index;

        if (state.buffer.size() > state.window_len) {
            if (naive) {
                const auto& g = state.left_edge_prior_moments;
                state.left_edge_prior_moments = {m.A * g.mean, symmetrized(m.Q + m.A * g.cov * m.A.transpose())};
                state.prior = to_canonical(state.left_edge_prior_moments);
            } else {
                // The evicted node's converged forward message is `prior`; push
                // alpha * gamma through one transition.
                state.prior = propagate_forward(m, canonical_product(state.prior, state.messages.up.front()),
                                                state.window_start());
            }
            state.buffer.erase(state.buffer.begin());
            drop_front(state.messages);
        }

        MessageSet warm = std::move(state.messages);
        if (warm.size() == 0) {
            warm = MessageSet::flat(1, m.state_dim(), m.obs_dim());
        } else {
            const CanonicalGaussian next =
                propagate_forward(m, canonical_product(warm.fwd.back(), warm.up.back()), abs_t);
            warm.fwd.push_back(next);
            warm.bwd.push_back(CanonicalGaussian::flat(m.state_dim()));
            warm.up.push_back(CanonicalGaussian::flat(m.state_dim()));
            warm.down.push_back(CanonicalGaussian::flat(m.obs_dim()));
        }

        CgfbResult res = run_cgfb(m, state.buffer, state.prior, config, &warm);
        state.messages = std::move(res.messages);
        SwStepResult out{std::move(state), std::move(res.marginals.back()), res.report.sweeps, res.report.converged};
        return out;
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("sliding-window step: ") + e.what(), abs_t);
    }
}

} // namespace detail

/// Appends one aggregate, evicts the oldest when the window overflows
/// (advancing the prior to the evicted node's outgoing forward message), runs
/// CGFB on the window and returns the right-most marginal.
[[nodiscard]] inline SwStepResult sw_step(const ModelTerms& m, WindowState state, AggregateEntry new_obs,
                                          const CgfbConfig& config = sw_default_config()) {
    return detail::sw_advance(m, std::move(state), std::move(new_obs), config, false);
}

/// Baseline that forgets evicted data: the left-most node's prior is the
/// model's unconditional marginal at that time.
[[nodiscard]] inline SwStepResult sw_step_naive(const ModelTerms& m, WindowState state, AggregateEntry new_obs,
                                                const CgfbConfig& config = sw_default_config()) {
    return detail::sw_advance(m, std::move(state), std::move(new_obs), config, true);
}

struct SwRun {
    MarginalTrajectory filtered;
    std::vector<std::size_t> sweeps;
};

/// Streams a whole aggregate sequence through the window.
[[nodiscard]] inline SwRun sw_filter(const ModelTerms& m, std::span<const AggregateEntry> agg, std::size_t window_len,
                                     bool naive = false, const CgfbConfig& config = sw_default_config()) {
    SwRun run;
    run.filtered.reserve(agg.size());
    run.sweeps.reserve(agg.size());
    WindowState state = sw_init(m, window_len);
    for (const auto& y : agg) {
        SwStepResult r = naive ? sw_step_naive(m, std::move(state), y, config) : sw_step(m, std::move(state), y, config);
        state = std::move(r.state);
        run.filtered.push_back(std::move(r.filtered));
        run.sweeps.push_back(r.sweeps);
    }
    return run;
}

} // namespace cgfb
