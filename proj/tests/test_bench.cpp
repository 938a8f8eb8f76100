#include <gtest/gtest.h>

#include <regex>

#include "rmpc/bench.hpp"

using namespace rmpc;

namespace {

const Scenario & scenario()
{
  static const Scenario sc = load_scenario(std::string(RMPC_DATA_DIR) + "/double_integrator.json");
  return sc;
}

}  // namespace

TEST(PlantStep, Examples)
{
  const auto & sys = scenario().system;
  const Eigen::VectorXd u1 = Eigen::VectorXd::Constant(1, 1.0), w0 = Eigen::VectorXd::Zero(1);
  EXPECT_TRUE(plant_step(sys, Eigen::Vector2d(0, 0), u1, w0).isApprox(Eigen::Vector2d(0, 1)));
  EXPECT_TRUE(plant_step(sys, Eigen::Vector2d(2, 3), Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0))
                .isApprox(Eigen::Vector2d(5.1, 2)));
}

TEST(Sampling, DeterministicFeasibleOutsideTarget)
{
  const auto & sc = scenario();
  const CondensedQp qp = sc.build(Formulation::MinMax, 5);
  const auto a = sample_initial_states(qp, sc.terminal_robust, 50, 7);
  const auto b = sample_initial_states(qp, sc.terminal_robust, 50, 7);
  const auto c = sample_initial_states(qp, sc.terminal_robust, 50, 8);
  ASSERT_EQ(a.size(), 50u);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    differs = differs || a[i] != c[i];
    EXPECT_TRUE(is_feasible(qp, a[i]));
    EXPECT_FALSE(sc.terminal_robust.contains(a[i], 0.0));
  }
  EXPECT_TRUE(differs);
}

TEST(Sampling, StallsWhenEverythingExcluded)
{
  const auto & sc = scenario();
  const CondensedQp qp = sc.build(Formulation::Nominal, 3);
  const Polytope everything = Polytope::box(Eigen::Vector2d(-20, -20), Eigen::Vector2d(20, 20));
  try {
    sample_initial_states(qp, everything, 5, 1);
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::SamplingStalled);
  }
}

TEST(Disturbance, PoliciesAndReproducibility)
{
  const auto & D = scenario().Dset;
  int lo = 0, hi = 0;
  double mean = 0.0;
  for (std::uint64_t k = 0; k < 2000; ++k) {
    const auto v = sample_disturbance(D, DisturbancePolicy::VertexAdversarial, 4, 0, k);
    EXPECT_EQ(std::abs(v(0)), 1.0);
    (v(0) < 0 ? lo : hi) += 1;
    const auto u = sample_disturbance(D, DisturbancePolicy::Uniform, 4, 1, k);
    EXPECT_LE(std::abs(u(0)), 1.0);
    mean += u(0) / 2000.0;
    EXPECT_EQ(sample_disturbance(D, DisturbancePolicy::Zero, 4, 1, k)(0), 0.0);
  }
  EXPECT_GT(lo, 900);
  EXPECT_GT(hi, 900);
  EXPECT_NEAR(mean, 0.0, 0.1);
  EXPECT_EQ(sample_disturbance(D, DisturbancePolicy::Uniform, 9, 3, 2), sample_disturbance(D, DisturbancePolicy::Uniform, 9, 3, 2));
  EXPECT_NE(sample_disturbance(D, DisturbancePolicy::Uniform, 9, 3, 2), sample_disturbance(D, DisturbancePolicy::Uniform, 9, 3, 3));
  EXPECT_EQ(policy_from_string("vertex"), DisturbancePolicy::VertexAdversarial);
}

TEST(Trajectory, StartInTargetTakesNoSteps)
{
  const auto & sc = scenario();
  const auto qp = std::make_shared<const CondensedQp>(sc.build(Formulation::MinMax, 3));
  Controller ctl(qp, {Variant::Basic, 15, sc.target(Formulation::MinMax), Formulation::MinMax});
  const auto log = run_trajectory(ctl, sc.system, Eigen::Vector2d(0, 0), [](int) { return Eigen::VectorXd::Zero(1); });
  EXPECT_EQ(log.steps, 0);
  EXPECT_EQ(log.qps_solved, 0);
  EXPECT_EQ(log.dqp_pct(), 0.0);
}

TEST(Trajectory, AccountingAndMaxSteps)
{
  const auto & sc = scenario();
  const auto qp = std::make_shared<const CondensedQp>(sc.build(Formulation::Tube, 5));
  const auto zero = [](int) { return Eigen::VectorXd::Zero(1); };
  Controller ptp(qp, {Variant::PointByPoint, 15, sc.target(Formulation::Tube), Formulation::Tube});
  const auto a = run_trajectory(ptp, sc.system, Eigen::Vector2d(-7, 1.5), zero);
  EXPECT_GT(a.steps, 0);
  EXPECT_EQ(a.qps_solved, a.steps);
  EXPECT_EQ(a.dqp(), 0);
  Controller basic(qp, {Variant::Basic, 15, sc.target(Formulation::Tube), Formulation::Tube});
  const auto b = run_trajectory(basic, sc.system, Eigen::Vector2d(-7, 1.5), zero);
  int events = 0;
  for (const auto & r : b.records) { events += r.e; }
  EXPECT_EQ(events, b.qps_solved);
  EXPECT_EQ(b.dqp(), b.steps - b.qps_solved);
  EXPECT_EQ(b.steps, static_cast<int>(b.records.size()));
  EXPECT_TRUE(sc.target(Formulation::Tube).contains(b.x_final, 1e-9));
  Controller cut(qp, {Variant::Basic, 15, sc.target(Formulation::Tube), Formulation::Tube});
  const auto c = run_trajectory(cut, sc.system, Eigen::Vector2d(-7, 1.5), zero, 2);
  EXPECT_TRUE(c.max_steps_hit);
  EXPECT_EQ(c.steps, 2);
}

TEST(Benchmark, SmallRunIsDeterministic)
{
  BenchConfig cfg;
  cfg.approaches = {Formulation::Nominal, Formulation::Tube};
  cfg.horizons = {3};
  cfg.samples = 8;
  cfg.seed = 11;
  const auto r1 = run_benchmark(scenario(), cfg);
  const auto r2 = run_benchmark(scenario(), cfg);
  EXPECT_EQ(report_csv(r1), report_csv(r2));
  ASSERT_EQ(r1.cells.size(), 6u);
  for (const auto & c : r1.cells) {
    EXPECT_EQ(c.n_traj + c.max_steps_hit + c.infeasible, cfg.samples);
    EXPECT_TRUE(std::isnan(c.rel_time));
    EXPECT_GE(c.mean_dqp_pct, 0.0);
    EXPECT_LE(c.mean_dqp_pct, 100.0);
  }
  const std::string csv = report_csv(r1);
  EXPECT_NE(csv.find(",NA,"), std::string::npos);
  EXPECT_EQ(report_json(r1)["cells"].size(), 6u);
}

TEST(Plot, SvgStructure)
{
  const auto & sc = scenario();
  const auto qp = std::make_shared<const CondensedQp>(sc.build(Formulation::MinMax, 5));
  Controller ctl(qp, {Variant::Basic, 15, sc.target(Formulation::MinMax), Formulation::MinMax});
  ctl.record_laws(true);
  const auto log = run_trajectory(ctl, sc.system, Eigen::Vector2d(-7, 2), [](int) { return Eigen::VectorXd::Zero(1); });
  const std::string svg = emit_plot(log, ctl.history(), sc.X, sc.U, sc.target(Formulation::MinMax));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  const std::regex circle("<circle");
  const auto n = std::distance(std::sregex_iterator(svg.begin(), svg.end(), circle), std::sregex_iterator());
  int events = 0;
  for (const auto & r : log.records) { events += r.e; }
  EXPECT_EQ(n, static_cast<long>(log.records.size()) + 1 + events);
  const Polytope X3 = Polytope::box(Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1));
  try {
    emit_plot(log, {}, X3, sc.U, sc.target(Formulation::MinMax));
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionTooHigh);
  }
}

TEST(Plot, RegionPolygonVerticesOnFacets)
{
  const auto & sc = scenario();
  const CondensedQp qp = sc.build(Formulation::MinMax, 5);
  const auto law = build_regional_law(qp, solve(qp, Eigen::Vector2d(-6, 2)).active);
  const Polytope clipped = law.region.intersect(sc.X);
  const auto poly = region_polygon(law, sc.X);
  ASSERT_GE(poly.size(), 3u);
  for (const auto & v : poly) {
    EXPECT_LE(clipped.violation(v), 1e-9);
    int tight = 0;
    for (Eigen::Index i = 0; i < clipped.rows(); ++i) { tight += std::abs(clipped.T.row(i).dot(v) - clipped.d(i)) <= 1e-8; }
    EXPECT_GE(tight, 2);
  }
}
