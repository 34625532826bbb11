#include <gtest/gtest.h>

#include <sstream>

#include "cgfb/io.hpp"

using namespace cgfb;

namespace {

const char* kModel = R"({
  "d_x": 2, "d_o": 1,
  "A": [1.0, 0.05, -0.05, 0.975],
  "C": [0.0, 0.05],
  "Q": [0.005, 0.0, 0.0, 0.005],
  "R": [0.035],
  "pi": [1.0, 0.0],
  "Pi": [1.0, 0.2, 0.2, 1.0],
  "delta_t": 0.05
})";

std::string field_of(const std::string& text) {
    try {
        (void)io::parse_model(text);
    } catch (const ModelParseError& e) {
        return e.field();
    } catch (const InvalidModel& e) {
        return e.violations().front().field;
    }
    return "";
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    s.replace(s.find(from), from.size(), to);
    return s;
}

} // namespace

TEST(ParseModel, Oscillator) {
    const auto p = io::parse_model(kModel);
    const auto ref = damped_oscillator_model();
    // The built-in model multiplies by dt, so compare to rounding.
    EXPECT_TRUE(p.A.isApprox(ref.A, 1e-15));
    EXPECT_TRUE(p.C.isApprox(ref.C, 1e-15));
    EXPECT_TRUE(p.Q.isApprox(ref.Q, 1e-15));
    EXPECT_TRUE(p.R.isApprox(ref.R, 1e-15));
    EXPECT_EQ(p.pi, ref.pi);
    EXPECT_EQ(p.Pi, ref.Pi);
    ASSERT_TRUE(p.delta_t);
    EXPECT_EQ(*p.delta_t, 0.05);
}

TEST(ParseModel, RoundTrip) {
    const auto p = damped_oscillator_model();
    const auto q = io::parse_model(io::model_to_json(p));
    EXPECT_EQ(p.A, q.A);
    EXPECT_EQ(p.Pi, q.Pi);
}

TEST(ParseModel, ErrorsNameTheField) {
    EXPECT_EQ(field_of(replace(kModel, "[0.035]", "[0.035, 1]")), "R");
    EXPECT_EQ(field_of(replace(kModel, "\"A\": [1.0,", "\"A\": [\"x\",")), "A");
    EXPECT_EQ(field_of(replace(kModel, "\"d_o\": 1", "\"d_o\": 0")), "d_o");
    EXPECT_EQ(field_of(replace(kModel, "\"delta_t\"", "\"dt\"")), "dt");
    EXPECT_EQ(field_of(replace(kModel, "[0.005, 0.0, 0.0, 0.005]", "[0, 0, 0, 0]")), "Q");
    EXPECT_EQ(field_of(replace(kModel, "\"pi\": [1.0, 0.0],", "")), "pi");
    EXPECT_EQ(field_of("{not json"), "<document>");
    EXPECT_EQ(field_of("[1, 2]"), "<document>");
}

TEST(LoadModel, MissingFile) { EXPECT_THROW((void)io::load_model("/nonexistent/model.json"), ConfigError); }

TEST(AggregateCsv, RoundTripBitExact) {
    const auto p = damped_oscillator_model();
    const auto agg = fit_aggregate(simulate(p, 7, 6, 3), p);
    std::stringstream ss;
    io::write_aggregates_csv(ss, agg);
    const auto back = io::read_aggregates_csv(ss, 1);
    ASSERT_EQ(back.size(), agg.size());
    for (std::size_t t = 0; t < agg.size(); ++t) {
        EXPECT_EQ(back[t].mean, agg[t].mean);
        EXPECT_EQ(back[t].cov, agg[t].cov);
    }
}

TEST(AggregateCsv, MultiDimensionalRoundTrip) {
    AggregateObservations agg(2);
    for (auto& y : agg) {
        y.mean = Vector::LinSpaced(2, 0.1, 0.2);
        y.cov = Matrix::Identity(2, 2);
        y.cov(0, 1) = y.cov(1, 0) = 0.3;
    }
    std::stringstream ss;
    io::write_aggregates_csv(ss, agg);
    EXPECT_NE(ss.str().find("\"P_hat(1,2)\",2,"), std::string::npos);
    const auto back = io::read_aggregates_csv(ss, 2);
    EXPECT_EQ(back[1].cov, agg[1].cov);
}

TEST(AggregateCsv, Malformed) {
    std::stringstream bad_header("a,b\n");
    EXPECT_THROW((void)io::read_aggregates_csv(bad_header, 1), ConfigError);
    std::stringstream missing("t,series,component,value\n1,mu_hat,1,0.5\n");
    EXPECT_THROW((void)io::read_aggregates_csv(missing, 1), ConfigError);
    std::stringstream nan_cell("t,series,component,value\n1,mu_hat,1,abc\n");
    EXPECT_THROW((void)io::read_aggregates_csv(nan_cell, 1), ConfigError);
}

TEST(TrajectoryCsv, Layout) {
    const auto b = simulate(damped_oscillator_model(), 2, 3, 1);
    std::stringstream ss;
    io::write_trajectories_csv(ss, b);
    std::string line;
    std::getline(ss, line);
    EXPECT_EQ(line, "t,series,component,value");
    std::getline(ss, line);
    EXPECT_EQ(line.rfind("1,state(1),1,", 0), 0u);
    std::size_t rows = 1;
    while (std::getline(ss, line)) ++rows;
    EXPECT_EQ(rows, 2u * 3u * 3u);
}

TEST(MarginalCsv, HeaderAndRows) {
    std::stringstream ss;
    io::write_marginals_csv(ss, {{Vector::Constant(2, 0.5), Matrix::Identity(2, 2)}});
    EXPECT_EQ(ss.str(), "t,mu_1,mu_2,P_11,P_12,P_21,P_22\n1,0.5,0.5,1,0,0,1\n");
}

TEST(ConvergenceCsv, Layout) {
    ConvergenceReport r;
    r.residuals = {0.5, 0.25};
    std::stringstream ss;
    io::write_convergence_csv(ss, r);
    EXPECT_EQ(ss.str(), "sweep,residual\n1,0.5\n2,0.25\n");
}

TEST(StreamRecord, RoundTrip) {
    AggregateEntry y{Vector::Constant(1, 0.125), Matrix::Constant(1, 1, 1e-3), false};
    const auto line = io::format_stream_record(4, y);
    EXPECT_EQ(line, "4,0.125,0.001");
    const auto [t, back] = io::parse_stream_record(line, 1);
    EXPECT_EQ(t, 4u);
    EXPECT_EQ(back.mean, y.mean);
    EXPECT_EQ(back.cov, y.cov);
    EXPECT_THROW((void)io::parse_stream_record("1,2", 1), ConfigError);
    EXPECT_THROW((void)io::parse_stream_record("0,1,1", 1), ConfigError);
}

TEST(Fmt, ShortestRoundTrip) {
    EXPECT_EQ(io::fmt(0.1), "0.1");
    EXPECT_EQ(std::stod(io::fmt(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(ObservationCsv, ReadsOneAgent) {
    const auto b = simulate(damped_oscillator_model(), 3, 5, 2);
    std::stringstream ss;
    io::write_trajectories_csv(ss, b);
    const Matrix o = io::read_observations_csv(ss, 1, "obs(2)");
    EXPECT_EQ(o, b.observations[1]);
    std::stringstream none("t,series,component,value\n1,state(1),1,0\n");
    EXPECT_THROW((void)io::read_observations_csv(none, 1), ConfigError);
}
