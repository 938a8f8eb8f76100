#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "rmpc/bench.hpp"
#include "rmpc/condense.hpp"
#include "rmpc/control.hpp"
#include "rmpc/geometry.hpp"
#include "rmpc/io.hpp"
#include "rmpc/numerics.hpp"
#include "rmpc/regional.hpp"
#include "rmpc/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

#ifdef RMPC_DEFAULT_CONFIG
const std::string kDefaultConfig = RMPC_DEFAULT_CONFIG;
#else
const std::string kDefaultConfig = "data/double_integrator.json";
#endif

int cmd_sets(const std::string & config, bool fixtures, const std::string & out)
{
  const fs::path cfg_path(config);
  const json cfg = rmpc::io::read_json(cfg_path);
  const rmpc::Scenario computed = rmpc::make_scenario(cfg, cfg_path.parent_path(), false);
  rmpc::MrpiInfo info;
  const rmpc::Polytope rpi =
    rmpc::mrpi_approximation(computed.system.A_cl, rmpc::linear_map(computed.system.D, computed.Dset), 1e-2, &info);

  json doc{
    {"P", rmpc::io::to_json(computed.P)},
    {"K_inf", rmpc::io::to_json(computed.system.K_inf)},
    {"rpi_set", rmpc::io::to_json(rpi)},
    {"rpi_info", {{"terms", info.terms}, {"alpha", info.alpha}, {"inflation", info.inflation}}},
    {"terminal_set", rmpc::io::to_json(computed.terminal_robust)},
    {"terminal_set_nominal", rmpc::io::to_json(computed.terminal_nominal)},
  };

  int status = 0;
  if (fixtures) {
    const rmpc::Scenario fixed = rmpc::make_scenario(cfg, cfg_path.parent_path(), true);
    const fs::path weight_path = cfg_path.parent_path() / "fixtures" / "terminal_weight.json";
    json cmp;
    if (fs::exists(weight_path)) {
      const Eigen::MatrixXd P_ref = rmpc::io::matrix_from_json(rmpc::io::read_json(weight_path).at("P"));
      cmp["P_max_rel_error"] = ((computed.P - P_ref).array() / P_ref.array()).abs().maxCoeff();
    }
    const rmpc::Polytope T_from_fixture_rpi =
      rmpc::robust_terminal_set(computed.system, computed.X, computed.U, fixed.rpi);
    cmp["terminal_rows"] = T_from_fixture_rpi.rows();
    cmp["terminal_row_match_error"] = rmpc::row_match_error(T_from_fixture_rpi, fixed.terminal_robust);
    cmp["rpi_support_gap"] = rmpc::support_gap(rpi, fixed.rpi);
    cmp["rpi_rows"] = {{"computed", rpi.rows()}, {"fixture", fixed.rpi.rows()}};
    doc["fixture_comparison"] = cmp;
  }
  const std::string text = doc.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    rmpc::io::write_text(out, text);
  }
  return status;
}

int cmd_build(const std::string & config, const std::string & approach, int N, const std::string & out)
{
  const rmpc::Scenario sc = rmpc::load_scenario(config);
  const rmpc::CondensedQp qp = sc.build(rmpc::formulation_from_string(approach), N);
  const std::string text = rmpc::to_json(qp).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    rmpc::io::write_text(out, text);
    std::cout << approach << " N=" << N << ": q=" << qp.q() << " p=" << qp.p() << " -> " << out << "\n";
  }
  return 0;
}

struct SimulateArgs
{
  std::string config = kDefaultConfig;
  std::string approach = "minmax";
  std::string variant = "basic";
  int N = 5;
  std::vector<double> x0;
  std::uint64_t seed = 1;
  std::string policy = "uniform";
  int max_steps = 200;
  std::string plot;
  std::string log;
};

int cmd_simulate(const SimulateArgs & a)
{
  const rmpc::Scenario sc = rmpc::load_scenario(a.config);
  const auto f = rmpc::formulation_from_string(a.approach);
  const auto qp = std::make_shared<const rmpc::CondensedQp>(sc.build(f, a.N));
  Eigen::VectorXd x0;
  if (a.x0.empty()) {
    const auto& exclude = f == rmpc::Formulation::Nominal ? sc.terminal_nominal : sc.terminal_robust;
    x0 = rmpc::sample_initial_states(*qp, exclude, 1, a.seed).front();
  } else {
    x0 = Eigen::Map<const Eigen::VectorXd>(a.x0.data(), static_cast<Eigen::Index>(a.x0.size()));
  }
  rmpc::Controller ctl(qp, {rmpc::variant_from_string(a.variant), sc.M, sc.target(f), f});
  ctl.record_laws(true);
  const auto policy = f == rmpc::Formulation::Nominal ? rmpc::DisturbancePolicy::Zero : rmpc::policy_from_string(a.policy);
  const rmpc::DisturbanceStream dist = [&](int k) {
    return rmpc::sample_disturbance(sc.Dset, policy, a.seed, 0, static_cast<std::uint64_t>(k));
  };
  const rmpc::TrajectoryLog log = rmpc::run_trajectory(ctl, sc.system, x0, dist, a.max_steps);

  json records = json::array();
  for (const auto & r : log.records) {
    records.push_back({{"k", r.k}, {"x", rmpc::io::to_json(r.x)}, {"u", rmpc::io::to_json(r.u)},
                       {"w", rmpc::io::to_json(r.w)}, {"e", r.e}});
  }
  json summary{{"approach", a.approach}, {"variant", a.variant}, {"N", a.N},
               {"x0", rmpc::io::to_json(x0)}, {"steps", log.steps}, {"qps_solved", log.qps_solved},
               {"dqp", log.dqp()}, {"dqp_pct", log.dqp_pct()}, {"laws_built", log.laws_built},
               {"max_steps_hit", log.max_steps_hit}, {"violations", log.violations}};
  std::cout << summary.dump(2) << "\n";
  if (!a.log.empty()) {
    json doc = summary;
    doc["records"] = records;
    json laws = json::array();
    for (const auto & law : ctl.history()) { laws.push_back(rmpc::to_json(law)); }
    doc["laws"] = laws;
    rmpc::io::write_text(a.log, doc.dump(2) + "\n");
  }
  if (!a.plot.empty()) {
    try {
      rmpc::io::write_text(a.plot, rmpc::emit_plot(log, ctl.history(), sc.X, sc.U, sc.target(f)));
    } catch (const rmpc::Error & e) {
      if (e.kind() != rmpc::ErrorKind::DimensionTooHigh) { throw; }
      std::cerr << "warning: " << e.what() << "; plot skipped\n";
    }
  }
  return log.violations == 0 ? 0 : 3;
}

struct BenchArgs
{
  std::string config = kDefaultConfig;
  std::vector<std::string> approaches{"minmax", "tube", "nominal"};
  std::vector<std::string> variants{"basic", "asu", "subopt"};
  std::vector<int> horizons{3, 5, 10};
  int samples = 500;
  std::uint64_t seed = 1;
  std::string policy = "uniform";
  int max_steps = 200;
  bool timing = false;
  std::string out = "bench_out";
};

int cmd_bench(const BenchArgs & a)
{
  const rmpc::Scenario sc = rmpc::load_scenario(a.config);
  rmpc::BenchConfig cfg;
  cfg.approaches.clear();
  for (const auto & s : a.approaches) { cfg.approaches.push_back(rmpc::formulation_from_string(s)); }
  cfg.variants.clear();
  for (const auto & s : a.variants) { cfg.variants.push_back(rmpc::variant_from_string(s)); }
  cfg.horizons = a.horizons;
  cfg.samples = a.samples;
  cfg.seed = a.seed;
  cfg.policy = rmpc::policy_from_string(a.policy);
  cfg.max_steps = a.max_steps;
  cfg.timing = a.timing;

  const rmpc::BenchReport report = rmpc::run_benchmark(sc, cfg);
  const fs::path out(a.out);
  const std::string csv = rmpc::report_csv(report);
  rmpc::io::write_text(out / "bench.csv", csv);
  rmpc::io::write_text(out / "bench.json", rmpc::report_json(report).dump(2) + "\n");
  std::cout << csv;

  int failures = 0;
  for (const auto & c : report.cells) {
    if (c.max_steps_hit > 0) {
      std::cerr << "note: " << rmpc::to_string(c.approach) << '/' << rmpc::to_string(c.variant) << " N=" << c.N
                << ": " << c.max_steps_hit << " trajectories hit max_steps (excluded from means)\n";
    }
    if (c.infeasible > 0 || c.violations > 0) {
      std::cerr << "error: " << rmpc::to_string(c.approach) << '/' << rmpc::to_string(c.variant) << " N=" << c.N
                << ": " << c.infeasible << " infeasible trajectories, " << c.violations << " constraint violations\n";
      ++failures;
    }
  }
  return failures == 0 ? 0 : 3;
}

int cmd_horizon_rule(const std::string & config, int s, int q_R, int q_TM, int q_TT)
{
  if (s <= 0 || q_R <= 0 || q_TM <= 0 || q_TT <= 0) {
    const rmpc::Scenario sc = rmpc::load_scenario(config);
    if (s <= 0) { s = static_cast<int>(sc.system.s()); }
    if (q_R <= 0) { q_R = static_cast<int>(sc.rpi.rows()); }
    if (q_TM <= 0) { q_TM = static_cast<int>(sc.terminal_robust.rows()); }
    if (q_TT <= 0) { q_TT = static_cast<int>(sc.terminal_robust.rows()); }
  }
  const int N_hat = rmpc::horizon_rule(s, q_R, q_TM, q_TT);
  json doc{{"s", s}, {"q_R", q_R}, {"q_TM", q_TM}, {"q_TT", q_TT},
           {"bound", rmpc::horizon_bound(s, q_R, q_TM, q_TT)}, {"N_hat", N_hat}};
  std::cout << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Regional min-max MPC toolkit"};
  app.require_subcommand(1);

  std::string config = kDefaultConfig;

  auto * sets = app.add_subcommand("sets", "Compute P, K_inf, the RPI set and terminal sets");
  bool fixtures = false;
  std::string sets_out;
  sets->add_option("--config", config, "Scenario JSON")->check(CLI::ExistingFile);
  sets->add_flag("--fixtures", fixtures, "Compare against the fixture sets referenced by the config");
  sets->add_option("--out", sets_out, "Write JSON here instead of stdout");

  auto * build = app.add_subcommand("build", "Dump a condensed QP as JSON");
  std::string build_approach = "minmax", build_out;
  int build_N = 5;
  build->add_option("--config", config, "Scenario JSON")->check(CLI::ExistingFile);
  build->add_option("--approach", build_approach, "minmax|tube|nominal")
    ->check(CLI::IsMember({"minmax", "tube", "nominal"}));
  build->add_option("--N", build_N, "Horizon")->check(CLI::PositiveNumber);
  build->add_option("--out", build_out, "Output file");

  auto * simulate = app.add_subcommand("simulate", "Simulate one closed-loop trajectory");
  SimulateArgs sim;
  simulate->add_option("--config", sim.config, "Scenario JSON")->check(CLI::ExistingFile);
  simulate->add_option("--approach", sim.approach, "minmax|tube|nominal")
    ->check(CLI::IsMember({"minmax", "tube", "nominal"}));
  simulate->add_option("--variant", sim.variant, "basic|asu|subopt|ptp")
    ->check(CLI::IsMember({"basic", "asu", "subopt", "ptp"}));
  simulate->add_option("--N", sim.N, "Horizon")->check(CLI::PositiveNumber);
  simulate->add_option("--x0", sim.x0, "Initial state, comma separated (default: sampled)")->delimiter(',');
  simulate->add_option("--seed", sim.seed, "Seed for sampling and disturbances");
  simulate->add_option("--policy", sim.policy, "uniform|vertex|zero")->check(CLI::IsMember({"uniform", "vertex", "zero"}));
  simulate->add_option("--max-steps", sim.max_steps, "Step limit")->check(CLI::PositiveNumber);
  simulate->add_option("--plot", sim.plot, "Write an SVG plot");
  simulate->add_option("--log", sim.log, "Write the trajectory and laws as JSON");

  auto * bench = app.add_subcommand("bench", "Monte-Carlo benchmark grid");
  BenchArgs ba;
  bench->add_option("--config", ba.config, "Scenario JSON")->check(CLI::ExistingFile);
  bench->add_option("--approach", ba.approaches, "minmax,tube,nominal")
    ->delimiter(',')
    ->check(CLI::IsMember({"minmax", "tube", "nominal"}));
  bench->add_option("--variant", ba.variants, "basic,asu,subopt,ptp")
    ->delimiter(',')
    ->check(CLI::IsMember({"basic", "asu", "subopt", "ptp"}));
  bench->add_option("--N", ba.horizons, "Horizons, comma separated")->delimiter(',')->check(CLI::PositiveNumber);
  bench->add_option("--samples", ba.samples, "Trajectories per cell")->check(CLI::PositiveNumber);
  bench->add_option("--seed", ba.seed, "Seed");
  bench->add_option("--policy", ba.policy, "uniform|vertex")->check(CLI::IsMember({"uniform", "vertex"}));
  bench->add_option("--max-steps", ba.max_steps, "Step limit per trajectory")->check(CLI::PositiveNumber);
  bench->add_flag("--timing", ba.timing, "Measure time relative to point-by-point solving");
  bench->add_option("--out", ba.out, "Output directory");

  auto * hr = app.add_subcommand("horizon-rule", "Largest horizon where min-max has fewer rows than tube");
  int hr_s = 0, hr_qR = 0, hr_qTM = 0, hr_qTT = 0;
  hr->add_option("--config", config, "Scenario JSON (fills unspecified counts)")->check(CLI::ExistingFile);
  hr->add_option("--s", hr_s, "Disturbance dimension");
  hr->add_option("--qR", hr_qR, "Rows of the RPI set");
  hr->add_option("--qTM", hr_qTM, "Terminal rows, min-max");
  hr->add_option("--qTT", hr_qTT, "Terminal rows, tube");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sets) { return cmd_sets(config, fixtures, sets_out); }
    if (*build) { return cmd_build(config, build_approach, build_N, build_out); }
    if (*simulate) { return cmd_simulate(sim); }
    if (*bench) { return cmd_bench(ba); }
    if (*hr) { return cmd_horizon_rule(config, hr_s, hr_qR, hr_qTM, hr_qTT); }
  } catch (const rmpc::Error & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
