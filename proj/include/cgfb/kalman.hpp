#pragma once

// Single-agent reference engines: Kalman filter, RTS smoother, the dense
// joint-Gaussian conditioning oracle, and the M-independent-filters summary.

#include <cstddef>
#include <vector>

#include "cgfb/gauss.hpp"
#include "cgfb/model.hpp"

namespace cgfb {

struct KalmanState {
    Vector mean; // mu_{t|t}
    Matrix cov;  // P_{t|t}
    Matrix gain; // K_t used by the last correction, d_x x d_o
};

/// Mixture summary of M filters: mean of means and law-of-total-variance
/// covariance.
struct KfAggregateSummary {
    Vector mean;
    Matrix cov;
};

/// mu_{t+1|t} = A mu_{t|t}, P_{t+1|t} = Q + A P_{t|t} A^T.
[[nodiscard]] inline MomentGaussian kf_predict(const GhmmParams& params, const MomentGaussian& state) {
    return {params.A * state.mean, symmetrized(params.Q + params.A * state.cov * params.A.transpose())};
}

[[nodiscard]] inline MomentGaussian kf_predict(const GhmmParams& params, const KalmanState& state) {
    return kf_predict(params, MomentGaussian{state.mean, state.cov});
}

/// K = P C^T (R + C P C^T)^-1, mu = mu_pred + K (o - C mu_pred),
/// P = (I - K C) P_pred evaluated in Joseph form.
[[nodiscard]] inline KalmanState kf_correct(const GhmmParams& params, const Vector& mean_pred, const Matrix& cov_pred,
                                            const Vector& obs) {
    const Matrix& C = params.C;
    const Matrix innovation = symmetrized(params.R + C * cov_pred * C.transpose());
    Eigen::LLT<Matrix> llt(innovation);
    if (llt.info() != Eigen::Success) throw SingularInnovation();
    const Matrix gain = llt.solve(C * cov_pred).transpose();
    const auto dx = cov_pred.rows();
    const Matrix ikc = Matrix::Identity(dx, dx) - gain * C;
    Matrix cov = ikc * cov_pred * ikc.transpose() + gain * params.R * gain.transpose();
    return {mean_pred + gain * (obs - C * mean_pred), symmetrized(cov), gain};
}

/// Filtered states for one observation sequence (d_o x T).
[[nodiscard]] inline std::vector<KalmanState> kf_filter(const GhmmParams& params, const Matrix& observations) {
    std::vector<KalmanState> out;
    out.reserve(static_cast<std::size_t>(observations.cols()));
    MomentGaussian pred{params.pi, params.Pi};
    for (Eigen::Index t = 0; t < observations.cols(); ++t) {
        try {
            out.push_back(kf_correct(params, pred.mean, pred.cov, observations.col(t)));
        } catch (const SingularInnovation&) {
            throw SingularInnovation(static_cast<std::size_t>(t));
        }
        pred = kf_predict(params, out.back());
    }
    return out;
}

/// Rauch-Tung-Striebel smoother with gain G_t = P_{t|t} A^T P_{t+1|t}^-1.
[[nodiscard]] inline MarginalTrajectory rts_smooth(const GhmmParams& params, const Matrix& observations) {
    const auto filtered = kf_filter(params, observations);
    const std::size_t T = filtered.size();
    MarginalTrajectory out(T);
    if (T == 0) return out;
    out[T - 1] = {filtered[T - 1].mean, filtered[T - 1].cov};
    for (std::size_t t = T - 1; t-- > 0;) {
        const auto& f = filtered[t];
        const MomentGaussian pred = kf_predict(params, f);
        const Matrix gain = spd_solve(pred.cov, params.A * f.cov).transpose();
        out[t].mean = f.mean + gain * (out[t + 1].mean - pred.mean);
        out[t].cov = symmetrized(f.cov + gain * (out[t + 1].cov - pred.cov) * gain.transpose());
    }
    return out;
}

inline constexpr Eigen::Index joint_oracle_dimension_cap = 512;

/// Exact smoothing marginals by conditioning the dense joint Gaussian of
/// (x_1..x_T, o_1..o_T) on the observations. Tractable for
/// T (d_x + d_o) <= 512 only.
[[nodiscard]] inline MarginalTrajectory joint_oracle(const GhmmParams& params, const Matrix& observations) {
    validate(params);
    const Eigen::Index T = observations.cols();
    const Eigen::Index dx = params.state_dim();
    const Eigen::Index dobs = params.obs_dim();
    if (observations.rows() != dobs) throw DimensionMismatch("joint_oracle: observation dimension differs from model");
    if (T * (dx + dobs) > joint_oracle_dimension_cap)
        throw DimensionCapExceeded("joint_oracle: T (d_x + d_o) = " + std::to_string(T * (dx + dobs)) +
                                   " exceeds cap " + std::to_string(joint_oracle_dimension_cap));

    const Eigen::Index nx = T * dx;
    const Eigen::Index no = T * dobs;
    Vector mx(nx);
    Matrix sxx(nx, nx);
    {
        std::vector<Matrix> marg_cov(static_cast<std::size_t>(T));
        Vector m = params.pi;
        Matrix s = params.Pi;
        for (Eigen::Index t = 0; t < T; ++t) {
            mx.segment(t * dx, dx) = m;
            marg_cov[static_cast<std::size_t>(t)] = s;
            m = params.A * m;
            s = params.A * s * params.A.transpose() + params.Q;
        }
        // Cov(x_t, x_s) = A^{t-s} Cov(x_s) for t >= s.
        for (Eigen::Index s0 = 0; s0 < T; ++s0) {
            Matrix block = marg_cov[static_cast<std::size_t>(s0)];
            for (Eigen::Index t = s0; t < T; ++t) {
                sxx.block(t * dx, s0 * dx, dx, dx) = block;
                sxx.block(s0 * dx, t * dx, dx, dx) = block.transpose();
                block = params.A * block;
            }
        }
    }
    Matrix bigC = Matrix::Zero(no, nx);
    Matrix bigR = Matrix::Zero(no, no);
    Vector obs(no);
    for (Eigen::Index t = 0; t < T; ++t) {
        bigC.block(t * dobs, t * dx, dobs, dx) = params.C;
        bigR.block(t * dobs, t * dobs, dobs, dobs) = params.R;
        obs.segment(t * dobs, dobs) = observations.col(t);
    }
    const Matrix sxo = sxx * bigC.transpose();
    const Matrix soo = symmetrized(bigC * sxx * bigC.transpose() + bigR);
    Eigen::LDLT<Matrix> ldlt(soo);
    if (ldlt.info() != Eigen::Success) throw NotPositiveDefinite("joint_oracle: observation covariance");
    const Matrix gain = ldlt.solve(sxo.transpose()).transpose();
    const Vector post_mean = mx + gain * (obs - bigC * mx);
    const Matrix post_cov = sxx - gain * sxo.transpose();

    MarginalTrajectory out(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t)
        out[static_cast<std::size_t>(t)] = {post_mean.segment(t * dx, dx),
                                            symmetrized(post_cov.block(t * dx, t * dx, dx, dx))};
    return out;
}

/// Runs one filter per agent (identities known) and summarizes them at every
/// timestep: mu = mean of mu^m, P = (1/M) sum [P^m + (mu^m - mu)(mu^m - mu)^T].
[[nodiscard]] inline std::vector<KfAggregateSummary> kf_aggregate(const GhmmParams& params,
                                                                  const TrajectoryBundle& bundle) {
    const std::size_t M = bundle.agents();
    if (M < 1) throw ConfigError("kf_aggregate: empty bundle");
    const std::size_t T = bundle.steps();
    std::vector<std::vector<KalmanState>> runs;
    runs.reserve(M);
    for (const auto& o : bundle.observations) runs.push_back(kf_filter(params, o));

    std::vector<KfAggregateSummary> out(T);
    const double inv_m = 1.0 / static_cast<double>(M);
    for (std::size_t t = 0; t < T; ++t) {
        Vector mean = Vector::Zero(params.state_dim());
        for (const auto& r : runs) mean += r[t].mean;
        mean *= inv_m;
        Matrix cov = Matrix::Zero(params.state_dim(), params.state_dim());
        for (const auto& r : runs) {
            const Vector dev = r[t].mean - mean;
            cov += r[t].cov + dev * dev.transpose();
        }
        out[t] = {std::move(mean), symmetrized(cov * inv_m)};
    }
    return out;
}

} // namespace cgfb
