#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "qsync/errors.hpp"
#include "qsync/hybrid_sim.hpp"

namespace qsync {
namespace {

SimConfig chua_config(double t_fin, double Ts = 0.04) {
  const CoderConfig coder{5.0, std::exp(-0.3 * Ts), 0.0, Ts};
  return SimConfig{chua_build(10.0, 15.6, 0.33, 0.945),
                   10.0,
                   coder,
                   Eigen::Vector3d(3.0, -1.0, 0.3),
                   Eigen::Vector3d::Zero(),
                   t_fin,
                   default_dt(Ts),
                   1};
}

double sup_error(const SimTrace& trace) {
  double m = 0.0;
  for (const auto& row : trace.rows) m = std::max(m, row.e.norm());
  return m;
}

TEST(DefaultDt, GridAlignedAndClamped) {
  EXPECT_DOUBLE_EQ(default_dt(0.04), 0.002);
  EXPECT_DOUBLE_EQ(default_dt(0.02), 0.001);
  EXPECT_DOUBLE_EQ(default_dt(0.1), 0.002);
  EXPECT_DOUBLE_EQ(default_dt(1.0 / 22.5), 1.0 / 22.5 / 23.0);
  EXPECT_LE(default_dt(0.3), 0.002);
}

TEST(SimConfig, RejectsMisalignedGridAndBadHorizon) {
  auto cfg = chua_config(1.0);
  cfg.dt = 0.003;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = chua_config(1.0);
  cfg.t_fin = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = chua_config(1.0);
  cfg.z0 = Eigen::Vector2d::Zero();
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = chua_config(1.0);
  cfg.record_stride = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Simulation, OpenLoopIdenticalStartsStayTogether) {
  auto cfg = chua_config(50.0);
  cfg.K = 0.0;
  cfg.z0 = cfg.x0;
  const auto trace = run_simulation(cfg);
  for (const auto& row : trace.rows) {
    ASSERT_EQ(row.e.norm(), 0.0) << row.t;
    ASSERT_EQ(row.u, 0.0);
  }
  EXPECT_EQ(metric_q(trace), 0.0);
}

TEST(Simulation, ZeroGainSlaveFollowsMasterDynamics) {
  auto cfg = chua_config(5.0);
  cfg.K = 0.0;
  cfg.z0 = Eigen::Vector3d(-0.5, 0.2, 1.0);
  const auto coupled = run_simulation(cfg);

  auto alone = cfg;
  alone.x0 = cfg.z0;
  alone.z0 = cfg.z0;
  const auto reference = run_simulation(alone);
  ASSERT_EQ(coupled.rows.size(), reference.rows.size());
  for (std::size_t i = 0; i < coupled.rows.size(); ++i) {
    EXPECT_LT((coupled.rows[i].z - reference.rows[i].x).norm(), 1e-9) << coupled.rows[i].t;
  }
}

TEST(Simulation, ErrorScalesLinearlyWithRangeFromSynchronizedStart) {
  std::vector<double> sups;
  for (double M0 : {1.0, 0.1, 0.01}) {
    auto cfg = chua_config(10.0);
    cfg.z0 = cfg.x0;
    cfg.coder.M0 = M0;
    const auto trace = run_simulation(cfg);
    sups.push_back(sup_error(trace));
    EXPECT_GT(sups.back(), 0.0);
  }
  EXPECT_NEAR(sups[0] / sups[1], 10.0, 0.5);
  EXPECT_NEAR(sups[1] / sups[2], 10.0, 0.05);
}

TEST(Simulation, TraceInvariants) {
  auto cfg = chua_config(20.0);
  cfg.record_stride = 3;
  const auto trace = run_simulation(cfg);
  ASSERT_FALSE(trace.rows.empty());
  EXPECT_EQ(trace.rows.front().t, 0.0);
  EXPECT_NEAR(trace.rows.back().t, 20.0, 1e-12);
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    const auto& r = trace.rows[i];
    if (i > 0) ASSERT_GT(r.t, trace.rows[i - 1].t);
    // Identities hold to a few units in the last place of the largest term.
    const double scale = std::max({r.x.norm(), r.e.norm(), std::abs(r.eps_bar),
                                   std::abs(r.delta_q), std::abs(r.delta_s)});
    const double ulps = 4.0 * std::numeric_limits<double>::epsilon() * scale;
    EXPECT_LE((r.x - r.z - r.e).norm(), ulps);
    EXPECT_NEAR(r.eps, cfg.sys.C() * r.e, ulps);
    EXPECT_NEAR(r.delta, r.delta_q + r.delta_s, ulps);
    EXPECT_EQ(r.u, cfg.K * r.eps_bar);
    EXPECT_EQ(std::abs(r.eps_bar), r.M_k);
    if (!r.overflow) EXPECT_LE(std::abs(r.delta_q), r.M_k);
  }
}

TEST(Simulation, SamplesFallOnTheGridAndControlHoldsBetweenThem) {
  auto cfg = chua_config(4.0);
  const auto trace = run_simulation(cfg);
  ASSERT_EQ(trace.samples.size(), 101u);
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    EXPECT_EQ(trace.samples[k].k, static_cast<std::int64_t>(k));
    EXPECT_DOUBLE_EQ(trace.samples[k].t, static_cast<double>(k) * 0.04);
    if (!trace.samples[k].overflow) {
      EXPECT_LE(std::abs(trace.samples[k].eps - trace.samples[k].eps_bar), trace.samples[k].M_k);
    }
  }
  const std::int64_t per_sample = cfg.steps_per_sample();
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    const auto k = static_cast<std::size_t>(static_cast<std::int64_t>(i) / per_sample);
    EXPECT_EQ(trace.rows[i].eps_bar, trace.samples[k].eps_bar) << i;
  }
}

TEST(Simulation, IsDeterministic) {
  const auto cfg = chua_config(30.0);
  const auto a = run_simulation(cfg);
  const auto b = run_simulation(cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    ASSERT_EQ(a.rows[i].x, b.rows[i].x);
    ASSERT_EQ(a.rows[i].e, b.rows[i].e);
    ASSERT_EQ(a.rows[i].bit, b.rows[i].bit);
  }
}

TEST(Simulation, StepHalvingConvergesOnSmoothRun) {
  // A tanh plant stays smooth, so RK4 converges at fourth order.
  const LurieSystem sys(Eigen::Matrix2d{{0.0, 1.0}, {-2.0, -1.0}}, Eigen::Vector2d(0.0, 1.0),
                        Eigen::RowVector2d(1.0, 1.0),
                        GenericNonlinearity{"tanh", [](double y) { return std::tanh(y); }, 1.0});
  std::vector<double> finals;
  for (int N : {20, 40, 80}) {
    SimConfig cfg{sys, 0.0, CoderConfig{1.0, 1.0, 0.0, 0.04}, Eigen::Vector2d(1.0, 0.0),
                  Eigen::Vector2d(0.0, 0.5), 5.0, 0.04 / N, 1000};
    finals.push_back(run_simulation(cfg).rows.back().e.norm());
  }
  EXPECT_LT(std::abs(finals[1] - finals[2]) / finals[2], 1e-6);
  EXPECT_LT(std::abs(finals[1] - finals[2]), std::abs(finals[0] - finals[1]));
}

SimConfig unstable_config() {
  const LurieSystem sys(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Ones(1),
                        Eigen::RowVectorXd::Ones(1), PiecewiseLinear{});
  return SimConfig{sys, 0.0, CoderConfig{1.0, 1.0, 0.0, 0.04}, Eigen::VectorXd::Ones(1),
                   Eigen::VectorXd::Zero(1), 50.0, 0.002, 10};
}

TEST(Simulation, DivergenceIsReported) {
  const auto cfg = unstable_config();
  const auto trace = run_simulation(cfg);
  EXPECT_TRUE(trace.status.diverged);
  EXPECT_TRUE(std::isfinite(trace.status.divergence_time));
  // x = e^t crosses the 1e6 guard at t = ln(1e6).
  EXPECT_NEAR(trace.status.divergence_time, std::log(1e6), 0.01);
  EXPECT_FALSE(trace.rows.empty());
}

TEST(MetricQ, SlaveAtOriginGivesMasterRatio) {
  auto cfg = chua_config(40.0);
  cfg.K = 0.0;
  auto trace = run_simulation(cfg);
  for (auto& row : trace.rows) {
    row.z.setZero();
    row.e = row.x;
  }
  double max_x = 0.0, tail = 0.0;
  for (const auto& row : trace.rows) {
    max_x = std::max(max_x, row.x.norm());
    if (row.t >= 32.0 - 1e-9) tail = std::max(tail, row.x.norm());
  }
  EXPECT_DOUBLE_EQ(metric_q(trace), tail / max_x);
  EXPECT_LE(metric_q(trace), 1.0);
}

TEST(MetricQ, AllZeroMasterIsRejected) {
  SimTrace trace;
  trace.t_fin = 1.0;
  TraceRow row;
  row.x = Eigen::Vector3d::Zero();
  row.e = Eigen::Vector3d::Zero();
  trace.rows.push_back(row);
  EXPECT_THROW(metric_q(trace), ConfigError);
}

TEST(CheckEnvelope, ZeroErrorPassesAndInflatedErrorFails) {
  const double rho = 0.99, M0 = 2.0;
  SimTrace zero, inflated;
  for (int k = 0; k < 50; ++k) {
    SampleRecord s;
    s.k = k;
    zero.samples.push_back(s);
    s.e_norm = 3.0 * std::pow(rho, k) * M0;
    s.eps = s.e_norm;
    inflated.samples.push_back(s);
  }
  const auto ok = check_envelope(zero, rho, M0, 0.0);
  EXPECT_TRUE(ok.bound_satisfied);
  ASSERT_EQ(ok.bound_series.size(), 50u);
  EXPECT_DOUBLE_EQ(ok.bound_series[10], 2.0 * std::pow(rho, 10) * M0);
  EXPECT_FALSE(check_envelope(inflated, rho, M0, 1e-6 * M0).bound_satisfied);

  EnvelopeChecker online(rho, M0, 0.0, false);
  for (const auto& s : inflated.samples) online.on_sample(s);
  EXPECT_EQ(online.violations(), 50);
  EXPECT_EQ(online.first_violation(), 0);
  EXPECT_NEAR(online.worst_ratio(), 1.5, 1e-12);
}

TEST(TransientTime, FirstEntryIntoBandThatLasts) {
  SimTrace trace;
  for (int i = 0; i <= 10; ++i) {
    TraceRow row;
    row.t = i;
    row.x = Eigen::Vector2d(1.0, 0.0);
    const double e = (i == 2 || i >= 6) ? 0.01 : 1.0;
    row.e = Eigen::Vector2d(e, 0.0);
    trace.rows.push_back(row);
  }
  EXPECT_EQ(transient_time(trace, 0.1), 6.0);
  trace.rows.back().e(0) = 1.0;
  EXPECT_TRUE(std::isinf(transient_time(trace, 0.1)));
}

TEST(Sweep, MatchesDirectRunsRegardlessOfOrderAndThreads) {
  const auto base = chua_config(30.0);
  SweepSettings settings;
  settings.rho_decay_rate = 0.3;
  const std::vector<double> rates{25.0, 10.0, 17.5};
  const auto serial = sweep_rate(base, rates, settings);
  settings.threads = 3;
  const std::vector<double> permuted{17.5, 25.0, 10.0};
  const auto parallel = sweep_rate(base, permuted, settings);
  ASSERT_EQ(serial.size(), 3u);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].R, parallel[i].R);
    EXPECT_EQ(serial[i].Q, parallel[i].Q);
    EXPECT_EQ(serial[i].rho, parallel[i].rho);
  }
  EXPECT_EQ(serial[0].R, 10.0);
  EXPECT_EQ(serial[2].R, 25.0);

  const auto direct_cfg = config_for_rate(base, 25.0, settings);
  EXPECT_DOUBLE_EQ(direct_cfg.coder.rho, std::exp(-0.3 / 25.0));
  EXPECT_EQ(metric_q(run_simulation(direct_cfg)), serial[2].Q);
}

TEST(Sweep, DivergedRunsRecordInfinity) {
  const auto base = unstable_config();
  const std::vector<double> rates{25.0};
  const auto rows = sweep_rate(base, rates, SweepSettings{});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].diverged);
  EXPECT_TRUE(std::isinf(rows[0].Q));
  EXPECT_FALSE(rows[0].bound_satisfied);
}

TEST(Sweep, RejectsNonPositiveRates) {
  const std::vector<double> rates{10.0, 0.0};
  EXPECT_THROW(sweep_rate(chua_config(1.0), rates, SweepSettings{}), ConfigError);
}

}  // namespace
}  // namespace qsync
