// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cgfb/all.hpp"
#include "oracles.hpp"

using namespace cgfb;
using clock_type = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& name, const std::string& detail) {
    std::printf("criterion %d %s  %s: %s\n", id, ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

double max_rel(const MarginalTrajectory& a, const MarginalTrajectory& b) {
    double r = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) r = std::max(r, oracle::rel_err(a[t], b[t]));
    return r;
}

struct Stats {
    double mean = 0.0;
    double sd = 0.0;
};

Stats stats(const std::vector<double>& v) {
    Stats s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(v.size() - 1));
    return s;
}

double pooled(const Stats& a, const Stats& b) { return std::sqrt(0.5 * (a.sd * a.sd + b.sd * b.sd)); }

std::vector<std::uint64_t> seeds(std::size_t n) {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 1; i <= n; ++i) s.push_back(i);
    return s;
}

// 1 ------------------------------------------------------------------------
void kalman_reduction() {
    const auto p = damped_oscillator_model();
    const ModelTerms m(p);
    const auto b = simulate(p, 1, 100, 2024);
    const auto agg = fit_aggregate(b, p);
    const auto t0 = clock_type::now();
    const auto run = sw_filter(m, agg, 1);
    const double secs = seconds_since(t0);
    const auto kf = to_trajectory(kf_filter(p, b.observations[0]));
    double mu = 0.0, cov = 0.0;
    for (std::size_t t = 0; t < kf.size(); ++t) {
        mu = std::max(mu, oracle::rel_err(run.filtered[t].mean, kf[t].mean));
        cov = std::max(cov, oracle::rel_err(run.filtered[t].cov, kf[t].cov));
    }
    const bool ok = mu <= 1e-10 && cov <= 1e-10 && secs < 1.0;
    report(1, ok, "SW-CGFB K=1 M=1 equals Kalman filter (T=100)",
           "max rel dev mu " + fmt("%.2e", mu) + ", P " + fmt("%.2e", cov) + " (tol 1e-10); " + fmt("%.3f", secs) +
               " s (limit 1 s)");
}

// 2 ------------------------------------------------------------------------
void smoother_reduction() {
    oracle::Rng rng(20240602);
    const int trials = 200;
    double worst_rts = 0.0, worst_joint = 0.0;
    const auto t0 = clock_type::now();
    for (int i = 0; i < trials; ++i) {
        const auto p = rng.model(rng.integer(1, 3), rng.integer(1, 2));
        const auto T = static_cast<std::size_t>(rng.integer(1, 8));
        const auto b = simulate(p, 1, T, static_cast<std::uint64_t>(i));
        CgfbConfig c;
        c.conv_tol = 1e-12;
        const auto res = run_cgfb(p, fit_aggregate(b, p), c);
        worst_rts = std::max(worst_rts, max_rel(res.marginals, rts_smooth(p, b.observations[0])));
        worst_joint = std::max(worst_joint, max_rel(res.marginals, joint_oracle(p, b.observations[0])));
    }
    const double secs = seconds_since(t0);
    const bool ok = worst_rts <= 1e-6 && worst_joint <= 1e-6 && secs < 30.0;
    report(2, ok, "CGFB M=1 equals RTS smoother and joint oracle",
           std::to_string(trials) + " random models d_x<=3 d_o<=2 T<=8; max rel dev vs RTS " +
               fmt("%.2e", worst_rts) + ", vs joint " + fmt("%.2e", worst_joint) + " (tol 1e-6); " +
               fmt("%.2f", secs) + " s (limit 30 s)");
}

// 3 ------------------------------------------------------------------------
void information_form_identity() {
    oracle::Rng rng(31337);
    const int n = 1000;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto p = rng.model(rng.integer(1, 5), rng.integer(1, 4));
        const Vector mu = rng.gaussian(p.state_dim(), 1);
        const Matrix cov = rng.spd(p.state_dim());
        const Vector o = rng.gaussian(p.obs_dim(), 1);
        const auto s = kf_correct(p, mu, cov, o);
        worst = std::max(worst, oracle::rel_err(MomentGaussian{s.mean, s.cov},
                                                oracle::kf_correct_information(p.C, p.R, mu, cov, o)));
    }
    report(3, worst <= 1e-10, "covariance-form and information-form correction agree",
           std::to_string(n) + " random SPD inputs; max rel dev " + fmt("%.2e", worst) + " (tol 1e-10)");
}

// 4 ------------------------------------------------------------------------
void moment_form_equivalence() {
    oracle::Rng rng(4242);
    const int n = 1000;
    double wf = 0.0, wb = 0.0, wd = 0.0, wu = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto dx = rng.integer(1, 4);
        const auto dobs = rng.integer(1, 3);
        const auto p = rng.model(dx, dobs);
        const ModelTerms m(p);
        const CanonicalGaussian fu{rng.spd(dx), rng.gaussian(dx, 1)};
        wf = std::max(wf, oracle::rel_err(propagate_forward(m, fu, 0), oracle::forward_moment(p.A, p.Q, fu)));
        const CanonicalGaussian b{rng.spd(dx), rng.gaussian(dx, 1)};
        const CanonicalGaussian u{rng.spd(dx), rng.gaussian(dx, 1)};
        wb = std::max(wb, oracle::rel_err(propagate_backward(m, canonical_product(b, u), 0),
                                          oracle::backward_sigma(p.A, p.Q, b, u)));
        const CanonicalGaussian fb{rng.spd(dx), rng.gaussian(dx, 1)};
        const auto down = predict_observation(m, fb, 0);
        wd = std::max(wd, oracle::rel_err(down, oracle::downward_moment(p.C, p.R, fb)));
        const AggregateEntry y{rng.gaussian(dobs, 1), rng.spd(dobs), false};
        wu = std::max(wu, oracle::rel_err(observation_correction(m, y, down, 0),
                                          oracle::upward_sigma(p.C, p.R, y.cov, y.mean, down)));
    }
    const double worst = std::max({wf, wb, wd, wu});
    report(4, worst <= 1e-8, "canonical updates agree with moment-form derivations",
           std::to_string(n) + " inputs per message; max rel dev fwd " + fmt("%.1e", wf) + ", bwd " +
               fmt("%.1e", wb) + ", down " + fmt("%.1e", wd) + ", up " + fmt("%.1e", wu) + " (tol 1e-8)");
}

// 5 ------------------------------------------------------------------------
void convergence_property() {
    const auto p = damped_oscillator_model();
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : seeds(5)) {
        const auto agg = fit_aggregate(simulate(p, 200, 100, seed), p);
        CgfbConfig c;
        c.conv_tol = 1e-10;
        c.max_iters = 200;
        c.require_convergence = false;
        const auto res = run_cgfb(p, agg, c);
        const auto& r = res.report.residuals;
        bool monotone = true;
        for (std::size_t k = 2; k < r.size(); ++k) monotone = monotone && r[k] <= r[k - 1];
        std::size_t first = 0;
        for (std::size_t k = 0; k < r.size() && !first; ++k)
            if (r[k] <= 1e-8) first = k + 1;
        ok = ok && monotone && first > 0;
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) +
                  (monotone ? " monotone" : " NOT monotone") + ", <=1e-8 at sweep " +
                  (first ? std::to_string(first) : "never");
    }
    report(5, ok, "residual monotone after sweep 2 and <= 1e-8 within 200 sweeps (M=200, T=100)", detail);
}

// 6 ------------------------------------------------------------------------
void error_vs_agents() {
    ExperimentSpec spec;
    spec.model = damped_oscillator_model();
    spec.steps = 100;
    spec.seeds = seeds(10);
    auto run = [&](std::size_t M) {
        spec.agents = M;
        std::vector<double> me, ce;
        for (const auto& r : run_experiment(spec).rows) {
            me.push_back(r.mean_sq_err);
            ce.push_back(r.cov_sq_err);
        }
        return std::pair{stats(me), stats(ce)};
    };
    const auto [m10, c10] = run(10);
    const auto [m500, c500] = run(500);
    const bool ok = m500.mean < m10.mean && c500.mean < c10.mean;
    report(6, ok, "errors at M=500 below M=10 (10 seeds, T=100)",
           "mean_sq_err " + fmt("%.3e", m10.mean) + " -> " + fmt("%.3e", m500.mean) + ", cov_sq_err " +
               fmt("%.3e", c10.mean) + " -> " + fmt("%.3e", c500.mean));
}

// 7 ------------------------------------------------------------------------
void sliding_window_trends() {
    ExperimentSpec spec;
    spec.model = damped_oscillator_model();
    spec.agents = 100;
    spec.steps = 100;
    spec.seeds = seeds(10);
    auto run = [&](Algorithm a, std::size_t K) {
        spec.algorithm = a;
        spec.window = K;
        std::vector<double> me;
        for (const auto& r : run_experiment(spec).rows) me.push_back(r.mean_sq_err);
        return stats(me);
    };
    const auto p20 = run(Algorithm::sw_cgfb, 20), p30 = run(Algorithm::sw_cgfb, 30);
    const auto n20 = run(Algorithm::sw_naive, 20), n30 = run(Algorithm::sw_naive, 30);
    // "a >= b within one pooled SD" reads as a >= b - pooled SD.
    const bool a20 = n20.mean >= p20.mean - pooled(n20, p20);
    const bool a30 = n30.mean >= p30.mean - pooled(n30, p30);
    const bool b = p30.mean <= p20.mean + pooled(p20, p30);
    const bool strict = n20.mean >= p20.mean && n30.mean >= p30.mean && p30.mean <= p20.mean;
    report(7, a20 && a30 && b, "sliding-window trends (M=100, 10 seeds, T=100)",
           "mean_sq_err naive/prior K=20 " + fmt("%.4e", n20.mean) + "/" + fmt("%.4e", p20.mean) + ", K=30 " +
               fmt("%.4e", n30.mean) + "/" + fmt("%.4e", p30.mean) + "; prior K=30 vs K=20 " +
               fmt("%.4e", p30.mean) + " vs " + fmt("%.4e", p20.mean) + " (pooled sd " +
               fmt("%.2e", pooled(p20, p30)) + "); strict ordering " + (strict ? "holds" : "does not hold"));
}

// 8 ------------------------------------------------------------------------
void timing_property() {
    TimingSpec spec;
    spec.model = damped_oscillator_model();
    spec.agents = 100;
    spec.steps = 100;
    spec.window = 20;
    spec.seed = 1;
    spec.repeats = 5;
    const auto rows = compare_timing(spec);
    auto median = [&](std::size_t from, std::size_t to, bool sw) {
        std::vector<double> v;
        for (std::size_t t = from; t <= to; ++t) v.push_back(sw ? rows[t - 1].sw_ms : rows[t - 1].baseline_ms);
        std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
        return v[v.size() / 2];
    };
    const double base_ratio = rows[99].baseline_ms / rows[19].baseline_ms;
    // Warmup ends when the window saturates at t = K.
    const double sw_early = median(21, 40, true), sw_late = median(81, 100, true);
    const double sw_ratio = sw_late / sw_early;
    const bool ok = base_ratio >= 2.0 && sw_ratio <= 1.5;
    report(8, ok, "baseline time grows, SW-CGFB time flat (M=100, K=20, T=100)",
           "baseline t=100/t=20 " + fmt("%.2f", base_ratio) + " (need >= 2); SW median t=81..100 / t=21..40 " +
               fmt("%.2f", sw_ratio) + " (need <= 1.5); baseline t=100 " + fmt("%.2f", rows[99].baseline_ms) +
               " ms, SW late " + fmt("%.3f", sw_late) + " ms");
}

// 9 ------------------------------------------------------------------------
void invariant_suite() {
    oracle::Rng rng(99991);
    std::size_t cases = 0, failed = 0;
    std::string first_failure;
    auto check = [&](bool ok, const std::string& what) {
        ++cases;
        if (!ok) {
            ++failed;
            if (first_failure.empty()) first_failure = what;
        }
    };

    // Moment/canonical round trip, product order independence, symmetry.
    for (int i = 0; i < 300; ++i) {
        const auto d = rng.integer(1, 5);
        const MomentGaussian g{rng.gaussian(d, 1), rng.spd(d, 0.05, 5.0)};
        const auto c = to_canonical(g);
        check(oracle::rel_err(to_moment(c), g) <= tolerance::round_trip && is_symmetric(c.info_matrix),
              "round trip");
        const CanonicalGaussian a{rng.spd(d), rng.gaussian(d, 1)}, b{rng.spd(d), rng.gaussian(d, 1)};
        check(oracle::rel_err(canonical_product({a, b, c}), canonical_product({c, b, a})) <= 1e-14,
              "product order");
    }

    // CGFB on random models and populations. M = 1 or M > d_o, so every
    // fitted aggregate covariance has full rank.
    for (int i = 0; i < 120; ++i) {
        const auto p = rng.model(rng.integer(1, 3), rng.integer(1, 2));
        const ModelTerms m(p);
        const auto M = i % 4 == 0 ? std::size_t{1} : static_cast<std::size_t>(rng.integer(1, 60) + p.obs_dim());
        const auto T = static_cast<std::size_t>(rng.integer(1, 12));
        const auto agg = fit_aggregate(simulate(p, M, T, static_cast<std::uint64_t>(1000 + i)), p);
        const std::string tag = "case " + std::to_string(i) + " (M=" + std::to_string(M) + ", T=" + std::to_string(T) + ")";
        try {
            auto msgs = initial_messages(m, T, m.initial);
            for (int s = 0; s < 5; ++s) {
                (void)sweep(m, agg, msgs);
                bool sym = true, pinned = true, proper = true, psd = true;
                pinned = msgs.fwd[0].info_matrix == m.initial.info_matrix &&
                         msgs.fwd[0].info_vector == m.initial.info_vector && msgs.bwd[T - 1].info_matrix.isZero(0.0) &&
                         msgs.bwd[T - 1].info_vector.isZero(0.0);
                for (std::size_t t = 0; t < T; ++t) {
                    sym = sym && is_symmetric(msgs.fwd[t].info_matrix) && is_symmetric(msgs.bwd[t].info_matrix) &&
                          is_symmetric(msgs.up[t].info_matrix) && is_symmetric(msgs.down[t].info_matrix);
                    proper = proper &&
                             is_positive_definite(canonical_product({msgs.fwd[t], msgs.bwd[t], msgs.up[t]}).info_matrix);
                    if (M == 1)
                        psd = psd && min_eigenvalue(msgs.fwd[t].info_matrix) >= -tolerance::psd &&
                              min_eigenvalue(msgs.bwd[t].info_matrix) >= -tolerance::psd &&
                              min_eigenvalue(msgs.up[t].info_matrix) >= -tolerance::psd;
                }
                check(sym, tag + " symmetry");
                check(pinned, tag + " boundary pinning");
                check(proper, tag + " marginal propriety");
                check(psd, tag + " single-agent PSD messages");
            }
            // Random models may contract slowly; the budget is generous.
            CgfbConfig c;
            c.max_iters = 5000;
            auto res = run_cgfb(m, agg, m.initial, c);
            for (const auto& g : res.marginals)
                check(is_positive_definite(g.cov) && g.cov.allFinite(), tag + " marginal covariance SPD");
            auto again = res.messages;
            check(sweep(m, agg, again) <= c.conv_tol, tag + " fixed-point stationarity");
            const auto res2 = run_cgfb(m, agg, m.initial, c);
            bool same = res2.report.residuals == res.report.residuals;
            for (std::size_t t = 0; t < T; ++t)
                same = same && res2.marginals[t].mean == res.marginals[t].mean &&
                       res2.marginals[t].cov == res.marginals[t].cov;
            check(same, tag + " determinism");
            // Sliding window before saturation reproduces full CGFB filtering.
            CgfbConfig tight;
            tight.conv_tol = 1e-13;
            tight.max_iters = 5000;
            tight.require_convergence = false; // the residual may stall at rounding level
            const auto sw = sw_filter(m, agg, T, false, tight);
            const auto full = run_cgfb(m, agg, m.initial, tight);
            const double sw_dev = oracle::rel_err(sw.filtered.back(), full.marginals.back());
            check(sw_dev <= 1e-10, tag + " SW exactness (rel dev " + fmt("%.1e", sw_dev) + ")");
        } catch (const std::exception& e) {
            check(false, tag + " threw: " + e.what());
        }
    }

    // Rank-deficient aggregates (2 <= M <= d_o) lie outside the well-posed
    // regime; there CGFB must either return proper marginals or raise.
    for (int i = 0; i < 60; ++i) {
        const auto p = rng.model(rng.integer(1, 3), 2);
        const auto agg = fit_aggregate(simulate(p, 2, static_cast<std::size_t>(rng.integer(1, 10)),
                                                static_cast<std::uint64_t>(7000 + i)),
                                       p);
        CgfbConfig c;
        c.require_convergence = false;
        bool ok = true;
        try {
            for (const auto& g : run_cgfb(p, agg, c).marginals) ok = ok && g.cov.allFinite() && is_positive_definite(g.cov);
        } catch (const NumericalError&) {
        }
        check(ok, "rank-deficient case " + std::to_string(i) + " returned an improper marginal");
    }

    // Simulation reproducibility.
    for (int i = 0; i < 50; ++i) {
        const auto p = rng.model(rng.integer(1, 3), rng.integer(1, 2));
        const auto a = simulate(p, 3, 6, static_cast<std::uint64_t>(i));
        const auto b = simulate(p, 3, 6, static_cast<std::uint64_t>(i));
        bool same = true;
        for (std::size_t m = 0; m < 3; ++m) same = same && a.states[m] == b.states[m] && a.observations[m] == b.observations[m];
        check(same, "simulation reproducibility");
    }

    const bool ok = failed == 0 && cases >= 1000;
    report(9, ok, "invariant property suite",
           std::to_string(cases) + " cases, " + std::to_string(failed) + " failed" +
               (first_failure.empty() ? "" : " (first: " + first_failure + ")"));
}

} // namespace

int main() {
    const std::vector<std::function<void()>> criteria{kalman_reduction,       smoother_reduction,     information_form_identity,
                                                      moment_form_equivalence, convergence_property,   error_vs_agents,
                                                      sliding_window_trends,  timing_property,        invariant_suite};
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        try {
            criteria[i]();
        } catch (const std::exception& e) {
            report(static_cast<int>(i + 1), false, "criterion aborted", e.what());
        }
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
