// cgfb command-line harness: simulate, infer, sw-infer, kalman, experiment,
// timing. Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgfb/all.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using namespace cgfb;

namespace {

struct Options {
    std::string model_path;
    std::string input;
    std::string out;
    std::string format = "csv";
    std::vector<std::size_t> agents{100};
    std::size_t steps = 100;
    std::vector<std::uint64_t> seeds{0};
    std::optional<std::size_t> window;
    bool naive = false;
    bool stream = false;
    bool plot = false;
    bool per_step = false;
    double tol = 1e-9;
    std::size_t max_iters = 200;
    double damping = 0.0;
    std::string algorithm = "cgfb";
    std::string truth = "auto";
    std::vector<std::string> metrics{"mean_err", "cov_err", "runtime"};
    std::size_t repeats = 3;
};

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("stage ") + stage + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("stage ") + stage + ": " + e.what());
    }
}

GhmmParams load(const Options& o) {
    return o.model_path.empty() ? damped_oscillator_model() : io::load_model(o.model_path);
}

CgfbConfig config_of(const Options& o) {
    CgfbConfig c;
    c.conv_tol = o.tol;
    c.max_iters = o.max_iters;
    c.damping = o.damping;
    return c;
}

std::size_t single(const std::vector<std::size_t>& v, const char* flag) {
    if (v.size() != 1) throw ConfigError(std::string(flag) + " takes a single value for this subcommand");
    return v.front();
}

std::uint64_t single_seed(const Options& o) {
    if (o.seeds.size() != 1) throw ConfigError("--seeds takes a single value for this subcommand; use --seed");
    return o.seeds.front();
}

/// Writes `name` under --out, or to stdout when --out is absent and `primary`.
class Sink {
public:
    explicit Sink(std::string dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) {
            std::error_code ec;
            fs::create_directories(dir_, ec);
            if (ec) throw ConfigError("cannot create output directory '" + dir_ + "': " + ec.message());
        }
    }

    template <typename F>
    void write(const std::string& name, bool primary, F&& body) {
        if (dir_.empty()) {
            if (primary) body(std::cout);
            return;
        }
        const auto path = fs::path(dir_) / name;
        std::ofstream f(path);
        if (!f) throw ConfigError("cannot write '" + path.string() + "'");
        body(f);
    }

    [[nodiscard]] bool to_files() const { return !dir_.empty(); }

private:
    std::string dir_;
};

AggregateObservations aggregates_for(const Options& o, const GhmmParams& p) {
    if (!o.input.empty()) {
        std::ifstream in(o.input);
        if (!in) throw ConfigError("cannot open input '" + o.input + "'");
        return staged("read_input", [&] { return io::read_aggregates_csv(in, p.obs_dim()); });
    }
    const auto M = single(o.agents, "--agents");
    const auto seed = single_seed(o);
    const auto bundle = staged("simulate", [&] { return simulate(p, M, o.steps, seed); });
    return staged("fit_aggregate", [&] { return fit_aggregate(bundle, p); });
}

// ------------------------------------------------------------------ commands

int cmd_simulate(const Options& o) {
    const auto p = load(o);
    const auto bundle = staged("simulate", [&] { return simulate(p, single(o.agents, "--agents"), o.steps, single_seed(o)); });
    const auto agg = staged("fit_aggregate", [&] { return fit_aggregate(bundle, p); });
    Sink sink(o.out);
    sink.write("trajectories.csv", false, [&](std::ostream& s) { io::write_trajectories_csv(s, bundle); });
    sink.write("aggregates.csv", true, [&](std::ostream& s) { io::write_aggregates_csv(s, agg); });
    return 0;
}

int cmd_infer(const Options& o) {
    const auto p = load(o);
    const auto agg = aggregates_for(o, p);
    const ModelTerms m(p);
    CgfbConfig c = config_of(o);
    c.require_convergence = false;
    const auto res = staged("infer", [&] { return run_cgfb(m, agg, m.initial, c); });
    Sink sink(o.out);
    sink.write("marginals.csv", true, [&](std::ostream& s) { io::write_marginals_csv(s, res.marginals); });
    sink.write("convergence.csv", false, [&](std::ostream& s) { io::write_convergence_csv(s, res.report); });
    if (o.plot && sink.to_files()) {
        cgfb_cli::Chart ch{"CGFB convergence", "sweep", "sup-norm residual", true, {}};
        cgfb_cli::Series s{"residual", {}, res.report.residuals};
        for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i + 1));
        ch.series.push_back(std::move(s));
        sink.write("convergence.svg", false, [&](std::ostream& out) { cgfb_cli::write_svg(out, ch); });
    }
    if (!res.report.converged) {
        std::cerr << "warning: not converged after " << res.report.sweeps << " sweeps (residual "
                  << res.report.residuals.back() << ")\n";
        throw MaxItersExceeded(res);
    }
    return 0;
}

int cmd_sw_infer(const Options& o) {
    const auto p = load(o);
    const ModelTerms m(p);
    CgfbConfig c = sw_default_config();
    c.conv_tol = o.tol;
    c.damping = o.damping;
    c.max_iters = std::min(c.max_iters, o.max_iters);
    const std::size_t K = *o.window;
    auto step = [&](WindowState s, AggregateEntry y) {
        return o.naive ? sw_step_naive(m, std::move(s), std::move(y), c) : sw_step(m, std::move(s), std::move(y), c);
    };

    if (o.stream) {
        // One record per input line, one marginal row per output line.
        WindowState state = sw_init(m, K);
        io::write_marginal_header(std::cout, p.state_dim(), "sweeps");
        std::string line;
        while (std::getline(std::cin, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto [t, y] = io::parse_stream_record(line, p.obs_dim());
            if (t != state.current_index + 1)
                throw ConfigError("stream record t=" + std::to_string(t) + " out of order; expected " +
                                  std::to_string(state.current_index + 1));
            auto r = staged("sw_step", [&] { return step(std::move(state), std::move(y)); });
            state = std::move(r.state);
            io::write_marginal_row(std::cout, t, r.filtered);
            std::cout << ',' << r.sweeps << std::endl;
        }
        return 0;
    }

    const auto agg = aggregates_for(o, p);
    const auto run = staged("sw_filter", [&] { return sw_filter(m, agg, K, o.naive, c); });
    Sink sink(o.out);
    sink.write("filtered.csv", true, [&](std::ostream& s) {
        io::write_marginal_header(s, p.state_dim(), "sweeps");
        for (std::size_t t = 0; t < run.filtered.size(); ++t) {
            io::write_marginal_row(s, t + 1, run.filtered[t]);
            s << ',' << run.sweeps[t] << '\n';
        }
    });
    return 0;
}

int cmd_kalman(const Options& o) {
    const auto p = load(o);
    Sink sink(o.out);
    Matrix obs;
    std::optional<TrajectoryBundle> bundle;
    if (!o.input.empty()) {
        std::ifstream in(o.input);
        if (!in) throw ConfigError("cannot open input '" + o.input + "'");
        obs = staged("read_input", [&] { return io::read_observations_csv(in, p.obs_dim()); });
    } else {
        bundle = staged("simulate", [&] { return simulate(p, single(o.agents, "--agents"), o.steps, single_seed(o)); });
        obs = bundle->observations[0];
    }
    const auto filtered = staged("kf_filter", [&] { return to_trajectory(kf_filter(p, obs)); });
    const auto smoothed = staged("rts_smooth", [&] { return rts_smooth(p, obs); });
    sink.write("filtered.csv", true, [&](std::ostream& s) { io::write_marginals_csv(s, filtered); });
    sink.write("smoothed.csv", false, [&](std::ostream& s) { io::write_marginals_csv(s, smoothed); });
    if (bundle && bundle->agents() > 1) {
        const auto summary = staged("kf_aggregate", [&] { return to_trajectory(kf_aggregate(p, *bundle)); });
        sink.write("kf_aggregate.csv", false, [&](std::ostream& s) { io::write_marginals_csv(s, summary); });
    }
    return 0;
}

TruthKind parse_truth(const std::string& s) {
    if (s == "auto") return TruthKind::automatic;
    if (s == "sample") return TruthKind::sample;
    if (s == "model") return TruthKind::model;
    if (s == "exact") return TruthKind::exact;
    throw ConfigError("unknown --truth '" + s + "'");
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& v) {
    MeanSd r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        for (double x : v) r.sd += (x - r.mean) * (x - r.mean);
        r.sd = std::sqrt(r.sd / static_cast<double>(v.size() - 1));
    }
    return r;
}

int cmd_experiment(const Options& o) {
    ExperimentSpec spec;
    spec.model = load(o);
    spec.steps = o.steps;
    spec.seeds = o.seeds;
    spec.algorithm = parse_algorithm(o.algorithm);
    spec.window = o.window;
    spec.truth = parse_truth(o.truth);
    spec.config = config_of(o);
    spec.per_step = o.per_step;
    spec.metrics = {false, false, false};
    for (const auto& m : o.metrics) {
        if (m == "mean_err") spec.metrics.mean_err = true;
        else if (m == "cov_err") spec.metrics.cov_err = true;
        else if (m == "runtime") spec.metrics.runtime = true;
        else throw ConfigError("unknown metric '" + m + "'");
    }
    const std::string alg = to_string(spec.algorithm);

    std::vector<std::pair<std::size_t, ExperimentResult>> cells;
    for (std::size_t M : o.agents) {
        spec.agents = M;
        spec.check();
        cells.emplace_back(M, run_experiment(spec));
    }

    Sink sink(o.out);
    sink.write("metrics.csv", true, [&](std::ostream& s) {
        s << "algorithm,agents,seed,t";
        if (spec.metrics.mean_err) s << ",mean_sq_err";
        if (spec.metrics.cov_err) s << ",cov_sq_err";
        if (spec.metrics.runtime) s << ",wall_ms";
        s << '\n';
        for (const auto& [M, res] : cells)
            for (const auto& r : res.rows) {
                s << alg << ',' << M << ',' << r.seed << ',' << (r.t ? std::to_string(*r.t) : "avg");
                if (spec.metrics.mean_err) s << ',' << io::fmt(r.mean_sq_err);
                if (spec.metrics.cov_err) s << ',' << io::fmt(r.cov_sq_err);
                if (spec.metrics.runtime) s << ',' << io::fmt(r.t ? 0.0 : r.wall_ms);
                s << '\n';
            }
    });

    std::vector<double> xs, mean_err, cov_err;
    sink.write("summary.csv", false, [&](std::ostream& s) {
        s << "algorithm,agents,seeds,mean_sq_err,mean_sq_err_sd,cov_sq_err,cov_sq_err_sd\n";
        for (const auto& [M, res] : cells) {
            std::vector<double> me, ce;
            for (const auto& r : res.rows)
                if (!r.t) {
                    me.push_back(r.mean_sq_err);
                    ce.push_back(r.cov_sq_err);
                }
            const auto a = mean_sd(me), b = mean_sd(ce);
            s << alg << ',' << M << ',' << me.size() << ',' << io::fmt(a.mean) << ',' << io::fmt(a.sd) << ','
              << io::fmt(b.mean) << ',' << io::fmt(b.sd) << '\n';
            xs.push_back(static_cast<double>(M));
            mean_err.push_back(a.mean);
            cov_err.push_back(b.mean);
        }
    });

    if (spec.algorithm == Algorithm::cgfb)
        sink.write("convergence.csv", false, [&](std::ostream& s) {
            s << "agents,seed,sweep,residual\n";
            for (const auto& [M, res] : cells)
                for (const auto& out : res.outcomes)
                    for (std::size_t i = 0; i < out.convergence->residuals.size(); ++i)
                        s << M << ',' << out.seed << ',' << i + 1 << ',' << io::fmt(out.convergence->residuals[i])
                          << '\n';
        });
    if (is_sliding_window(spec.algorithm))
        sink.write("sweeps.csv", false, [&](std::ostream& s) {
            s << "agents,seed,t,sweeps\n";
            for (const auto& [M, res] : cells)
                for (const auto& out : res.outcomes)
                    for (std::size_t t = 0; t < out.sweeps.size(); ++t)
                        s << M << ',' << out.seed << ',' << t + 1 << ',' << out.sweeps[t] << '\n';
        });

    if (o.plot && sink.to_files()) {
        cgfb_cli::Chart ch{alg + " error vs agents", "agents M", "quadratic error", true,
                           {{"mean", xs, mean_err}, {"covariance", xs, cov_err}}};
        sink.write("errors.svg", false, [&](std::ostream& s) { cgfb_cli::write_svg(s, ch); });
        if (spec.algorithm == Algorithm::cgfb) {
            cgfb_cli::Chart cv{"CGFB convergence", "sweep", "sup-norm residual", true, {}};
            const auto& [M, res] = cells.back();
            for (const auto& out : res.outcomes) {
                cgfb_cli::Series s{"M=" + std::to_string(M) + " seed " + std::to_string(out.seed), {},
                                   out.convergence->residuals};
                for (std::size_t i = 0; i < s.y.size(); ++i) s.x.push_back(static_cast<double>(i + 1));
                cv.series.push_back(std::move(s));
            }
            sink.write("convergence.svg", false, [&](std::ostream& s) { cgfb_cli::write_svg(s, cv); });
        }
    }
    return 0;
}

int cmd_timing(const Options& o) {
    TimingSpec spec;
    spec.model = load(o);
    spec.agents = single(o.agents, "--agents");
    spec.steps = o.steps;
    spec.seed = single_seed(o);
    spec.window = o.window.value_or(20);
    spec.config = config_of(o);
    spec.repeats = o.repeats;
    const auto rows = staged("timing", [&] { return compare_timing(spec); });
    Sink sink(o.out);
    sink.write("timing.csv", true, [&](std::ostream& s) {
        s << "t,baseline_ms,sw_ms\n";
        for (const auto& r : rows) s << r.t << ',' << io::fmt(r.baseline_ms) << ',' << io::fmt(r.sw_ms) << '\n';
    });
    if (o.plot && sink.to_files()) {
        cgfb_cli::Chart ch{"per-step inference time", "t", "ms", false, {}};
        cgfb_cli::Series b{"full CGFB", {}, {}}, w{"SW-CGFB K=" + std::to_string(spec.window), {}, {}};
        for (const auto& r : rows) {
            b.x.push_back(static_cast<double>(r.t));
            b.y.push_back(r.baseline_ms);
            w.x.push_back(static_cast<double>(r.t));
            w.y.push_back(r.sw_ms);
        }
        ch.series = {b, w};
        sink.write("timing.svg", false, [&](std::ostream& s) { cgfb_cli::write_svg(s, ch); });
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collective Gaussian forward-backward inference for aggregate HMM data"};
    app.require_subcommand(1);
    Options o;
    std::optional<std::uint64_t> seed;

    auto common = [&](CLI::App* sub, bool multi_agents, bool multi_seeds) {
        sub->add_option("--model", o.model_path, "model JSON file (default: built-in damped oscillator)");
        auto* a = sub->add_option("--agents", o.agents, "number of agents M")->check(CLI::PositiveNumber);
        if (multi_agents) a->delimiter(',');
        else a->expected(1);
        sub->add_option("--steps", o.steps, "trajectory length T")->check(CLI::PositiveNumber);
        auto* s1 = sub->add_option("--seed", seed, "RNG seed");
        if (multi_seeds) sub->add_option("--seeds", o.seeds, "comma-separated seeds")->delimiter(',')->excludes(s1);
        sub->add_option("--out", o.out, "output directory (default: primary CSV to stdout)");
        sub->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv"}));
    };
    auto solver = [&](CLI::App* sub) {
        sub->add_option("--tol", o.tol, "convergence tolerance on the sweep residual")->check(CLI::PositiveNumber);
        sub->add_option("--max-iters", o.max_iters, "sweep budget")->check(CLI::PositiveNumber);
        sub->add_option("--damping", o.damping, "message damping in [0, 1)")->check(CLI::Range(0.0, 0.999999));
    };

    auto* sim = app.add_subcommand("simulate", "simulate agents and write trajectories and aggregates");
    common(sim, false, false);

    auto* inf = app.add_subcommand("infer", "full-chain CGFB on aggregate observations");
    common(inf, false, false);
    solver(inf);
    inf->add_option("--input", o.input, "aggregates CSV (default: simulate)")->check(CLI::ExistingFile);
    inf->add_flag("--plot", o.plot, "also write convergence.svg");

    auto* sw = app.add_subcommand("sw-infer", "sliding-window CGFB filter");
    common(sw, false, false);
    solver(sw);
    sw->add_option("--window", o.window, "window length K")->required()->check(CLI::PositiveNumber);
    sw->add_flag("--naive", o.naive, "forget evicted history (baseline)");
    sw->add_option("--input", o.input, "aggregates CSV (default: simulate)")->check(CLI::ExistingFile);
    sw->add_flag("--stream", o.stream, "read records 't,mu_hat...,P_hat...' from stdin");

    auto* kf = app.add_subcommand("kalman", "single-agent Kalman filter and RTS smoother");
    common(kf, false, false);
    kf->add_option("--input", o.input, "trajectories CSV with an obs(1) series (default: simulate)")
        ->check(CLI::ExistingFile);

    auto* ex = app.add_subcommand("experiment", "simulate, infer and score against ground truth");
    common(ex, true, true);
    solver(ex);
    ex->add_option("--algorithm", o.algorithm, "cgfb | sw_cgfb | sw_naive | kf_aggregate");
    ex->add_option("--window", o.window, "window length K (sliding-window algorithms)")->check(CLI::PositiveNumber);
    ex->add_option("--truth", o.truth, "auto | sample | model | exact");
    ex->add_option("--metrics", o.metrics, "mean_err,cov_err,runtime")->delimiter(',');
    ex->add_flag("--per-step", o.per_step, "also emit one row per timestep");
    ex->add_flag("--plot", o.plot, "also write SVG charts");

    auto* tm = app.add_subcommand("timing", "per-step time of full CGFB vs SW-CGFB");
    common(tm, false, false);
    solver(tm);
    tm->add_option("--window", o.window, "window length K (default 20)")->check(CLI::PositiveNumber);
    tm->add_option("--repeats", o.repeats, "timing repeats; the minimum is kept")->check(CLI::PositiveNumber);
    tm->add_flag("--plot", o.plot, "also write timing.svg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (seed) o.seeds = {*seed};

    try {
        if (sim->parsed()) return cmd_simulate(o);
        if (inf->parsed()) return cmd_infer(o);
        if (sw->parsed()) return cmd_sw_infer(o);
        if (kf->parsed()) return cmd_kalman(o);
        if (ex->parsed()) return cmd_experiment(o);
        if (tm->parsed()) return cmd_timing(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
