#pragma once

// Collective Gaussian forward-backward inference.
//
// Four canonical-form messages live on every node t of the chain:
//   fwd  alpha_t(x_t)  state belief from the past,
//   bwd  beta_t(x_t)   state belief from the future,
//   up   gamma_t(x_t)  correction from the aggregate observation y_t,
//   down xi_t(o_t)     predicted observation density (over o_t, not x_t).
// The aggregate marginal is n_t ∝ alpha_t beta_t gamma_t.
//
// With aggregate data gamma_t is a ratio of densities, not a likelihood, so
// fwd/bwd/up information matrices can be indefinite. Only the products that
// must be proper (the inner matrices below and the marginal precision) are
// required to be positive definite.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgfb/gauss.hpp"
#include "cgfb/model.hpp"

namespace cgfb {

/// Model quantities reused by every message update.
struct ModelTerms {
    Matrix A;
    Matrix Q;
    Matrix C;
    Matrix R;
    Matrix Q_inv;
    Matrix R_inv;
    Matrix At_Q_inv;   // A^T Q^-1
    Matrix At_Q_inv_A; // A^T Q^-1 A
    Matrix Ct_R_inv;   // C^T R^-1
    Matrix Ct_R_inv_C; // C^T R^-1 C
    CanonicalGaussian initial; // (Pi^-1, Pi^-1 pi)

    explicit ModelTerms(const GhmmParams& params)
        : A(params.A), Q(params.Q), C(params.C), R(params.R) {
        validate(params);
        Q_inv = spd_inverse(params.Q);
        R_inv = spd_inverse(params.R);
        At_Q_inv = A.transpose() * Q_inv;
        At_Q_inv_A = symmetrized(At_Q_inv * A);
        Ct_R_inv = C.transpose() * R_inv;
        Ct_R_inv_C = symmetrized(Ct_R_inv * C);
        initial = to_canonical(MomentGaussian{params.pi, params.Pi});
    }

    [[nodiscard]] Eigen::Index state_dim() const { return A.rows(); }
    [[nodiscard]] Eigen::Index obs_dim() const { return R.rows(); }
};

struct MessageSet {
    std::vector<CanonicalGaussian> fwd;
    std::vector<CanonicalGaussian> bwd;
    std::vector<CanonicalGaussian> up;
    std::vector<CanonicalGaussian> down;

    [[nodiscard]] std::size_t size() const { return fwd.size(); }

    [[nodiscard]] static MessageSet flat(std::size_t steps, Eigen::Index state_dim, Eigen::Index obs_dim) {
        MessageSet m;
        m.fwd.assign(steps, CanonicalGaussian::flat(state_dim));
        m.bwd.assign(steps, CanonicalGaussian::flat(state_dim));
        m.up.assign(steps, CanonicalGaussian::flat(state_dim));
        m.down.assign(steps, CanonicalGaussian::flat(obs_dim));
        return m;
    }
};

struct CgfbConfig {
    std::size_t max_iters = 200;
    double conv_tol = 1e-9;
    /// new <- (1 - damping) new + damping old, on canonical parameters.
    double damping = 0.0;
    /// Throw MaxItersExceeded instead of returning an unconverged result.
    bool require_convergence = true;

    void check() const {
        if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
        if (!(conv_tol > 0.0)) throw ConfigError("conv_tol must be > 0");
        if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("damping must lie in [0, 1)");
    }
};

/// One residual per full forward+backward sweep.
struct ConvergenceReport {
    std::vector<double> residuals;
    std::size_t sweeps = 0;
    bool converged = false;
};

struct CgfbResult {
    MessageSet messages;
    MarginalTrajectory marginals;
    ConvergenceReport report;
};

/// Sweep budget exhausted. Carries the last iterate.
class MaxItersExceeded : public NumericalError {
public:
    explicit MaxItersExceeded(CgfbResult best)
        : NumericalError("CGFB did not converge within " + std::to_string(best.report.sweeps) +
                         " sweeps (last residual " +
                         std::to_string(best.report.residuals.empty() ? 0.0 : best.report.residuals.back()) + ")"),
          best_(std::move(best)) {}

    [[nodiscard]] const CgfbResult& best() const noexcept { return best_; }

private:
    CgfbResult best_;
};

// ---------------------------------------------------------------------------
// Message kernels. Each takes the relevant product message at the neighbour
// and returns the new message. `t` is the zero-based node index used in
// error reports.

/// alpha_t from the product alpha_{t-1} gamma_{t-1}:
///   Lambda = Q^-1 - Q^-1 A (A^T Q^-1 A + Lambda_fu)^-1 A^T Q^-1
///   eta    = Q^-1 A (A^T Q^-1 A + Lambda_fu)^-1 eta_fu
[[nodiscard]] inline CanonicalGaussian propagate_forward(const ModelTerms& m, const CanonicalGaussian& fu,
                                                         std::size_t t) {
    const Matrix inner = symmetrized(m.At_Q_inv_A + fu.info_matrix);
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) throw SingularInnerMatrix("forward", t);
    const Matrix X = llt.solve(m.At_Q_inv); // inner^-1 A^T Q^-1
    return {symmetrized(m.Q_inv - m.At_Q_inv.transpose() * X), X.transpose() * fu.info_vector};
}

/// beta_t from the product beta_{t+1} gamma_{t+1}:
///   Lambda = A^T Q^-1 (Q^-1 + Lambda_bu)^-1 Lambda_bu A
///   eta    = A^T Q^-1 (Q^-1 + Lambda_bu)^-1 eta_bu
[[nodiscard]] inline CanonicalGaussian propagate_backward(const ModelTerms& m, const CanonicalGaussian& bu,
                                                          std::size_t t) {
    const Matrix inner = symmetrized(m.Q_inv + bu.info_matrix);
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) throw SingularInnerMatrix("backward", t);
    return {symmetrized(m.At_Q_inv * llt.solve(bu.info_matrix * m.A)), m.At_Q_inv * llt.solve(bu.info_vector)};
}

/// xi_t(o_t) from the product alpha_t beta_t:
///   Lambda = R^-1 - R^-1 C (C^T R^-1 C + Lambda_fb)^-1 C^T R^-1
///   eta    = R^-1 C (C^T R^-1 C + Lambda_fb)^-1 eta_fb
[[nodiscard]] inline CanonicalGaussian predict_observation(const ModelTerms& m, const CanonicalGaussian& fb,
                                                           std::size_t t) {
    const Matrix inner = symmetrized(m.Ct_R_inv_C + fb.info_matrix);
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) throw SingularInnerMatrix("downward", t);
    const Matrix X = llt.solve(m.Ct_R_inv); // inner^-1 C^T R^-1
    return {symmetrized(m.R_inv - m.Ct_R_inv.transpose() * X), X.transpose() * fb.info_vector};
}

/// gamma_t from the aggregate y_t = N(mu_hat, P_hat) and xi_t. With
/// S = R^-1 + P_hat^-1 - Lambda_d:
///   Lambda = C^T R^-1 S^-1 (P_hat^-1 - Lambda_d) C
///   eta    = C^T R^-1 S^-1 (P_hat^-1 mu_hat - eta_d)
/// This equals C^T (R + (P_hat^-1 - Lambda_d)^-1)^-1 C whenever the deficit
/// P_hat^-1 - Lambda_d is invertible, but needs only S to be positive
/// definite. A point-mass entry returns the likelihood (C^T R^-1 C, C^T R^-1 o).
[[nodiscard]] inline CanonicalGaussian observation_correction(const ModelTerms& m, const AggregateEntry& y,
                                                              const CanonicalGaussian& down, std::size_t t) {
    if (y.mean.size() != m.obs_dim()) throw DimensionMismatch("aggregate mean has wrong dimension");
    if (y.point_mass) return {m.Ct_R_inv_C, m.Ct_R_inv * y.mean};

    Eigen::LLT<Matrix> p_llt(symmetrized(y.cov));
    if (p_llt.info() != Eigen::Success) throw DegenerateAggregate(t);
    const auto dobs = m.obs_dim();
    const Matrix p_info = symmetrized(p_llt.solve(Matrix::Identity(dobs, dobs)));
    const Matrix deficit = p_info - down.info_matrix;
    Matrix s = symmetrized(m.R_inv + deficit);
    Eigen::LLT<Matrix> s_llt(s);
    if (s_llt.info() != Eigen::Success) {
        const double jitter = std::max(1e-9 * std::abs(s.trace()) / static_cast<double>(dobs), 1e-12);
        s += jitter * Matrix::Identity(dobs, dobs);
        s_llt.compute(s);
        if (s_llt.info() != Eigen::Success) throw IndefiniteDeficit(t, min_eigenvalue(s));
    }
    const Matrix Ct_Rinv_Sinv = s_llt.solve(m.Ct_R_inv.transpose()).transpose(); // C^T R^-1 S^-1
    return {symmetrized(Ct_Rinv_Sinv * deficit * m.C), Ct_Rinv_Sinv * (p_llt.solve(y.mean) - down.info_vector)};
}

// ---------------------------------------------------------------------------
// Message updates on a MessageSet (zero-based t).

[[nodiscard]] inline CanonicalGaussian update_forward(const ModelTerms& m, const MessageSet& msgs, std::size_t t) {
    return propagate_forward(m, canonical_product(msgs.fwd.at(t - 1), msgs.up.at(t - 1)), t);
}

[[nodiscard]] inline CanonicalGaussian update_backward(const ModelTerms& m, const MessageSet& msgs, std::size_t t) {
    return propagate_backward(m, canonical_product(msgs.bwd.at(t + 1), msgs.up.at(t + 1)), t);
}

[[nodiscard]] inline CanonicalGaussian update_downward(const ModelTerms& m, const MessageSet& msgs, std::size_t t) {
    return predict_observation(m, canonical_product(msgs.fwd.at(t), msgs.bwd.at(t)), t);
}

[[nodiscard]] inline CanonicalGaussian update_upward(const ModelTerms& m, const MessageSet& msgs,
                                                     std::span<const AggregateEntry> agg, std::size_t t) {
    return observation_correction(m, agg[t], msgs.down.at(t), t);
}

namespace detail {

inline void blend(CanonicalGaussian& fresh, const CanonicalGaussian& old, double damping) {
    if (damping == 0.0) return;
    fresh.info_matrix = (1.0 - damping) * fresh.info_matrix + damping * old.info_matrix;
    fresh.info_vector = (1.0 - damping) * fresh.info_vector + damping * old.info_vector;
}

inline double max_abs_diff(const std::vector<CanonicalGaussian>& a, const std::vector<CanonicalGaussian>& b) {
    double r = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].info_matrix.size() > 0)
            r = std::max(r, (a[i].info_matrix - b[i].info_matrix).cwiseAbs().maxCoeff());
        if (a[i].info_vector.size() > 0)
            r = std::max(r, (a[i].info_vector - b[i].info_vector).cwiseAbs().maxCoeff());
    }
    return r;
}

} // namespace detail

/// Sup-norm of the change in every message parameter between two sets.
[[nodiscard]] inline double max_abs_change(const MessageSet& a, const MessageSet& b) {
    return std::max({detail::max_abs_diff(a.fwd, b.fwd), detail::max_abs_diff(a.bwd, b.bwd),
                     detail::max_abs_diff(a.up, b.up), detail::max_abs_diff(a.down, b.down)});
}

/// One full sweep: forward pass t = 2..T (up t-1, fwd t, down t) then
/// backward pass t = T-1..1 (up t+1, bwd t, down t). A single-node chain has
/// no transitions; its sweep is (down 1, up 1). Returns the sweep residual.
inline double sweep(const ModelTerms& m, std::span<const AggregateEntry> agg, MessageSet& msgs, double damping = 0.0) {
    const std::size_t T = msgs.size();
    const MessageSet before = msgs;
    auto set = [damping](CanonicalGaussian& slot, CanonicalGaussian fresh) {
        detail::blend(fresh, slot, damping);
        slot = std::move(fresh);
    };
    if (T == 1) {
        set(msgs.down[0], update_downward(m, msgs, 0));
        set(msgs.up[0], update_upward(m, msgs, agg, 0));
        return max_abs_change(before, msgs);
    }
    for (std::size_t t = 1; t < T; ++t) {
        set(msgs.up[t - 1], update_upward(m, msgs, agg, t - 1));
        set(msgs.fwd[t], update_forward(m, msgs, t));
        set(msgs.down[t], update_downward(m, msgs, t));
    }
    for (std::size_t t = T - 1; t-- > 0;) {
        set(msgs.up[t + 1], update_upward(m, msgs, agg, t + 1));
        set(msgs.bwd[t], update_backward(m, msgs, t));
        set(msgs.down[t], update_downward(m, msgs, t));
    }
    return max_abs_change(before, msgs);
}

/// n_t: P_t = (Lambda_f + Lambda_b + Lambda_u)^-1, mu_t = P_t (eta_f + eta_b + eta_u).
[[nodiscard]] inline MomentGaussian node_marginal(const MessageSet& msgs, std::size_t t) {
    try {
        return to_moment(canonical_product({msgs.fwd.at(t), msgs.bwd.at(t), msgs.up.at(t)}));
    } catch (const NumericalError&) {
        throw NotPositiveDefinite("marginal precision is not positive definite", t);
    }
}

[[nodiscard]] inline MarginalTrajectory extract_marginals(const MessageSet& msgs) {
    MarginalTrajectory out;
    out.reserve(msgs.size());
    for (std::size_t t = 0; t < msgs.size(); ++t) out.push_back(node_marginal(msgs, t));
    return out;
}

/// Cold start: flat bwd/up/down, fwd[1] = prior and the rest filled by
/// propagating the prior through the dynamics with flat upward messages.
[[nodiscard]] inline MessageSet initial_messages(const ModelTerms& m, std::size_t steps,
                                                 const CanonicalGaussian& prior) {
    MessageSet msgs = MessageSet::flat(steps, m.state_dim(), m.obs_dim());
    msgs.fwd[0] = prior;
    for (std::size_t t = 1; t < steps; ++t) msgs.fwd[t] = update_forward(m, msgs, t);
    return msgs;
}

/// Runs sweeps until the residual drops to config.conv_tol. `prior` is the
/// node-1 forward boundary (the model's initial density for a full chain, a
/// carried forward message inside a sliding window). `warm_start`, when
/// given, replaces the cold initialization; its boundaries are re-pinned.
[[nodiscard]] inline CgfbResult run_cgfb(const ModelTerms& m, std::span<const AggregateEntry> agg,
                                         const CanonicalGaussian& prior, const CgfbConfig& config = {},
                                         const MessageSet* warm_start = nullptr) {
    config.check();
    const std::size_t T = agg.size();
    if (T < 1) throw ConfigError("run_cgfb: need at least one aggregate observation");
    if (prior.dim() != m.state_dim()) throw DimensionMismatch("run_cgfb: prior has wrong dimension");

    CgfbResult res;
    if (warm_start) {
        if (warm_start->size() != T) throw LengthMismatch("run_cgfb: warm start length differs from observations");
        res.messages = *warm_start;
        res.messages.fwd[0] = prior;
        res.messages.bwd[T - 1] = CanonicalGaussian::flat(m.state_dim());
    } else {
        res.messages = initial_messages(m, T, prior);
    }

    auto& rep = res.report;
    while (rep.sweeps < config.max_iters) {
        double r = sweep(m, agg, res.messages, config.damping);
        rep.residuals.push_back(r);
        ++rep.sweeps;
        if (r <= config.conv_tol) {
            rep.converged = true;
            break;
        }
    }
    res.marginals = extract_marginals(res.messages);
    if (!rep.converged && config.require_convergence) throw MaxItersExceeded(std::move(res));
    return res;
}

[[nodiscard]] inline CgfbResult run_cgfb(const GhmmParams& params, std::span<const AggregateEntry> agg,
                                         const CgfbConfig& config = {}) {
    const ModelTerms m(params);
    return run_cgfb(m, agg, m.initial, config);
}

} // namespace cgfb
