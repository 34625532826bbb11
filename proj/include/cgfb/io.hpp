#pragma once

// Model files (JSON) and the CSV schemas used by the CLI.
//
// Model file:
//   {
//     "d_x": 2, "d_o": 1,
//     "A":  [d_x*d_x, row-major],  "C":  [d_o*d_x],
//     "Q":  [d_x*d_x],             "R":  [d_o*d_o],
//     "pi": [d_x],                 "Pi": [d_x*d_x],
//     "delta_t": 0.05              (optional, provenance only)
//   }

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgfb/cgfb.hpp"
#include "cgfb/model.hpp"

namespace cgfb::io {

/// Shortest round-trippable decimal form of a double.
[[nodiscard]] inline std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline Matrix read_array(const nlohmann::json& doc, const char* key, Eigen::Index rows, Eigen::Index cols) {
    if (!doc.contains(key)) throw ModelParseError(key, "missing");
    const auto& a = doc.at(key);
    if (!a.is_array()) throw ModelParseError(key, "expected a flat numeric array");
    if (static_cast<Eigen::Index>(a.size()) != rows * cols)
        throw ModelParseError(key, "expected " + std::to_string(rows * cols) + " entries (" + std::to_string(rows) +
                                       "x" + std::to_string(cols) + " row-major), got " + std::to_string(a.size()));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            const auto& v = a[static_cast<std::size_t>(i * cols + j)];
            if (!v.is_number()) throw ModelParseError(key, "entry " + std::to_string(i * cols + j) + " is not a number");
            m(i, j) = v.get<double>();
        }
    return m;
}

inline Eigen::Index read_dim(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key)) throw ModelParseError(key, "missing");
    const auto& v = doc.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1) throw ModelParseError(key, "expected a positive integer");
    return static_cast<Eigen::Index>(v.get<long long>());
}

inline nlohmann::json flat(const Matrix& m) {
    auto a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
    return a;
}

} // namespace detail

/// Parses and validates a model document. Errors name the offending field.
[[nodiscard]] inline GhmmParams parse_model(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelParseError("<document>", e.what());
    }
    if (!doc.is_object()) throw ModelParseError("<document>", "expected a JSON object");
    static const char* known[] = {"d_x", "d_o", "A", "C", "Q", "R", "pi", "Pi", "delta_t"};
    for (const auto& [key, _] : doc.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ModelParseError(key, "unknown field");
    }
    const Eigen::Index dx = detail::read_dim(doc, "d_x");
    const Eigen::Index dobs = detail::read_dim(doc, "d_o");
    GhmmParams p;
    p.A = detail::read_array(doc, "A", dx, dx);
    p.C = detail::read_array(doc, "C", dobs, dx);
    p.Q = detail::read_array(doc, "Q", dx, dx);
    p.R = detail::read_array(doc, "R", dobs, dobs);
    p.pi = detail::read_array(doc, "pi", dx, 1);
    p.Pi = detail::read_array(doc, "Pi", dx, dx);
    if (doc.contains("delta_t")) {
        if (!doc["delta_t"].is_number()) throw ModelParseError("delta_t", "expected a number");
        p.delta_t = doc["delta_t"].get<double>();
    }
    validate(p);
    return p;
}

[[nodiscard]] inline GhmmParams load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str());
}

[[nodiscard]] inline std::string model_to_json(const GhmmParams& p) {
    nlohmann::ordered_json doc;
    doc["d_x"] = p.state_dim();
    doc["d_o"] = p.obs_dim();
    doc["A"] = detail::flat(p.A);
    doc["C"] = detail::flat(p.C);
    doc["Q"] = detail::flat(p.Q);
    doc["R"] = detail::flat(p.R);
    doc["pi"] = detail::flat(p.pi);
    doc["Pi"] = detail::flat(p.Pi);
    if (p.delta_t) doc["delta_t"] = *p.delta_t;
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Long-format series CSV: `t,series,component,value`, t one-based. Series are
// state(m) and obs(m) with m one-based, mu_hat, and P_hat(i,j) whose
// component is the one-based row-major index (i-1)*d_o + j. P_hat series
// names are double-quoted since they contain a comma.

inline void write_trajectories_csv(std::ostream& out, const TrajectoryBundle& b) {
    out << "t,series,component,value\n";
    for (std::size_t m = 0; m < b.agents(); ++m) {
        const std::string sm = std::to_string(m + 1);
        for (Eigen::Index t = 0; t < b.states[m].cols(); ++t) {
            for (Eigen::Index i = 0; i < b.states[m].rows(); ++i)
                out << t + 1 << ",state(" << sm << ")," << i + 1 << ',' << fmt(b.states[m](i, t)) << '\n';
            for (Eigen::Index i = 0; i < b.observations[m].rows(); ++i)
                out << t + 1 << ",obs(" << sm << ")," << i + 1 << ',' << fmt(b.observations[m](i, t)) << '\n';
        }
    }
}

inline void write_aggregates_csv(std::ostream& out, const AggregateObservations& agg) {
    out << "t,series,component,value\n";
    for (std::size_t t = 0; t < agg.size(); ++t) {
        const auto& y = agg[t];
        for (Eigen::Index i = 0; i < y.mean.size(); ++i) out << t + 1 << ",mu_hat," << i + 1 << ',' << fmt(y.mean(i)) << '\n';
        for (Eigen::Index i = 0; i < y.cov.rows(); ++i)
            for (Eigen::Index j = 0; j < y.cov.cols(); ++j)
                out << t + 1 << ",\"P_hat(" << i + 1 << ',' << j + 1 << ")\"," << i * y.cov.cols() + j + 1 << ','
                    << fmt(y.cov(i, j)) << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            continue;
        }
        if (c == ',' && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": '" + s + "' is not a number");
    }
}

} // namespace detail

/// Reads mu_hat / P_hat rows of the long-format CSV. Other series are skipped.
[[nodiscard]] inline AggregateObservations read_aggregates_csv(std::istream& in, Eigen::Index obs_dim) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,series,component,value", 0) != 0)
        throw ConfigError("aggregate CSV: expected header 't,series,component,value'");
    AggregateObservations agg;
    std::vector<std::vector<bool>> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cols = detail::split_csv(line);
        const std::string where = "aggregate CSV line " + std::to_string(lineno);
        if (cols.size() != 4) throw ConfigError(where + ": expected 4 columns");
        const auto t = static_cast<long long>(detail::parse_double(cols[0], where));
        if (t < 1) throw ConfigError(where + ": t must be >= 1");
        const auto tt = static_cast<std::size_t>(t - 1);
        const bool is_mean = cols[1] == "mu_hat";
        const bool is_cov = cols[1].rfind("P_hat(", 0) == 0;
        if (!is_mean && !is_cov) continue;
        if (agg.size() <= tt) {
            agg.resize(tt + 1, AggregateEntry{Vector::Zero(obs_dim), Matrix::Zero(obs_dim, obs_dim), false});
            seen.resize(tt + 1, std::vector<bool>(static_cast<std::size_t>(obs_dim + obs_dim * obs_dim), false));
        }
        const auto comp = static_cast<long long>(detail::parse_double(cols[2], where));
        const double value = detail::parse_double(cols[3], where);
        if (is_mean) {
            if (comp < 1 || comp > obs_dim) throw ConfigError(where + ": mu_hat component out of range");
            agg[tt].mean(comp - 1) = value;
            seen[tt][static_cast<std::size_t>(comp - 1)] = true;
        } else {
            if (comp < 1 || comp > obs_dim * obs_dim) throw ConfigError(where + ": P_hat component out of range");
            agg[tt].cov((comp - 1) / obs_dim, (comp - 1) % obs_dim) = value;
            seen[tt][static_cast<std::size_t>(obs_dim + comp - 1)] = true;
        }
    }
    for (std::size_t t = 0; t < agg.size(); ++t)
        for (bool s : seen[t])
            if (!s) throw ConfigError("aggregate CSV: incomplete entry at t=" + std::to_string(t + 1));
    if (agg.empty()) throw ConfigError("aggregate CSV: no mu_hat/P_hat rows");
    return agg;
}

/// Reads one agent's observation series (default `obs(1)`) from the long
/// format into a d_o x T matrix.
[[nodiscard]] inline Matrix read_observations_csv(std::istream& in, Eigen::Index obs_dim,
                                                  const std::string& series = "obs(1)") {
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,series,component,value", 0) != 0)
        throw ConfigError("observation CSV: expected header 't,series,component,value'");
    std::vector<Vector> cols;
    std::vector<std::vector<bool>> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        const std::string where = "observation CSV line " + std::to_string(lineno);
        if (cells.size() != 4) throw ConfigError(where + ": expected 4 columns");
        if (cells[1] != series) continue;
        const auto t = static_cast<long long>(detail::parse_double(cells[0], where));
        const auto comp = static_cast<long long>(detail::parse_double(cells[2], where));
        if (t < 1) throw ConfigError(where + ": t must be >= 1");
        if (comp < 1 || comp > obs_dim) throw ConfigError(where + ": component out of range");
        const auto tt = static_cast<std::size_t>(t - 1);
        if (cols.size() <= tt) {
            cols.resize(tt + 1, Vector::Zero(obs_dim));
            seen.resize(tt + 1, std::vector<bool>(static_cast<std::size_t>(obs_dim), false));
        }
        cols[tt](comp - 1) = detail::parse_double(cells[3], where);
        seen[tt][static_cast<std::size_t>(comp - 1)] = true;
    }
    if (cols.empty()) throw ConfigError("observation CSV: no rows for series '" + series + "'");
    Matrix out(obs_dim, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t t = 0; t < cols.size(); ++t) {
        for (bool s : seen[t])
            if (!s) throw ConfigError("observation CSV: incomplete entry at t=" + std::to_string(t + 1));
        out.col(static_cast<Eigen::Index>(t)) = cols[t];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Wide per-timestep marginals: `t,mu_1..mu_dx,P_11..P_dxdx`.

inline void write_marginal_header(std::ostream& out, Eigen::Index dx, const std::string& extra = {}) {
    out << 't';
    for (Eigen::Index i = 0; i < dx; ++i) out << ",mu_" << i + 1;
    for (Eigen::Index i = 0; i < dx; ++i)
        for (Eigen::Index j = 0; j < dx; ++j) out << ",P_" << i + 1 << j + 1;
    if (!extra.empty()) out << ',' << extra;
    out << '\n';
}

inline void write_marginal_row(std::ostream& out, std::size_t t, const MomentGaussian& g) {
    out << t;
    for (Eigen::Index i = 0; i < g.mean.size(); ++i) out << ',' << fmt(g.mean(i));
    for (Eigen::Index i = 0; i < g.cov.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cov.cols(); ++j) out << ',' << fmt(g.cov(i, j));
}

inline void write_marginals_csv(std::ostream& out, const MarginalTrajectory& traj) {
    write_marginal_header(out, traj.empty() ? 0 : traj.front().dim());
    for (std::size_t t = 0; t < traj.size(); ++t) {
        write_marginal_row(out, t + 1, traj[t]);
        out << '\n';
    }
}

inline void write_convergence_csv(std::ostream& out, const ConvergenceReport& rep) {
    out << "sweep,residual\n";
    for (std::size_t i = 0; i < rep.residuals.size(); ++i) out << i + 1 << ',' << fmt(rep.residuals[i]) << '\n';
}

/// One streaming record: `t, mu_hat components..., P_hat row-major...`.
[[nodiscard]] inline std::pair<std::size_t, AggregateEntry> parse_stream_record(const std::string& line,
                                                                               Eigen::Index obs_dim) {
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(detail::parse_double(cell, "stream record"));
    const auto need = static_cast<std::size_t>(1 + obs_dim + obs_dim * obs_dim);
    if (v.size() != need)
        throw ConfigError("stream record: expected " + std::to_string(need) + " fields, got " + std::to_string(v.size()));
    if (v[0] < 1) throw ConfigError("stream record: t must be >= 1");
    AggregateEntry y{Vector(obs_dim), Matrix(obs_dim, obs_dim), false};
    for (Eigen::Index i = 0; i < obs_dim; ++i) y.mean(i) = v[static_cast<std::size_t>(1 + i)];
    for (Eigen::Index i = 0; i < obs_dim * obs_dim; ++i)
        y.cov(i / obs_dim, i % obs_dim) = v[static_cast<std::size_t>(1 + obs_dim + i)];
    return {static_cast<std::size_t>(v[0]), std::move(y)};
}

[[nodiscard]] inline std::string format_stream_record(std::size_t t, const AggregateEntry& y) {
    std::string s = std::to_string(t);
    for (Eigen::Index i = 0; i < y.mean.size(); ++i) s += "," + fmt(y.mean(i));
    for (Eigen::Index i = 0; i < y.cov.rows(); ++i)
        for (Eigen::Index j = 0; j < y.cov.cols(); ++j) s += "," + fmt(y.cov(i, j));
    return s;
}

} // namespace cgfb::io
