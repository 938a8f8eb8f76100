// Acceptance checks for the double-integrator scenario. One PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "rmpc/bench.hpp"
#include "rmpc/geometry.hpp"
#include "rmpc/io.hpp"
#include "rmpc/numerics.hpp"
#include "rmpc/scenario.hpp"

using namespace rmpc;
namespace fs = std::filesystem;

namespace {

const fs::path kData = RMPC_DATA_DIR;
std::string g_cli;

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(double v)
{
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

const Scenario & scenario()
{
  static const Scenario sc = load_scenario(kData / "double_integrator.json");
  return sc;
}

std::vector<Eigen::VectorXd> feasible_states(const CondensedQp & qp, int count, unsigned seed)
{
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<Eigen::VectorXd> out;
  while (static_cast<int>(out.size()) < count) {
    const Eigen::Vector2d x(u(rng), u(rng));
    if (is_feasible(qp, x)) { out.emplace_back(x); }
  }
  return out;
}

// 1. Constraint and variable counts per approach and horizon.
Outcome counts()
{
  const std::vector<std::tuple<Formulation, int, int, int>> table{
    {Formulation::MinMax, 3, 32, 4},  {Formulation::MinMax, 5, 68, 6},  {Formulation::MinMax, 10, 1090, 11},
    {Formulation::Tube, 3, 74, 5},    {Formulation::Tube, 5, 86, 7},    {Formulation::Tube, 10, 116, 12},
    {Formulation::Nominal, 3, 24, 3}, {Formulation::Nominal, 5, 36, 5}, {Formulation::Nominal, 10, 66, 10}};
  Outcome o{true, ""};
  for (const auto & [f, N, q, p] : table) {
    const CondensedQp qp = scenario().build(f, N);
    const bool ok = qp.q() == q && qp.p() == p;
    o.pass = o.pass && ok;
    o.detail += std::string(to_string(f)) + "/" + std::to_string(N) + "=" + std::to_string(qp.q()) + "/" +
                std::to_string(qp.p()) + (ok ? " " : "(!) ");
  }
  return o;
}

// 2. Horizon rule, cross-checked against (2s)^N < q_R + q_TT - q_TM.
Outcome horizon()
{
  const int n_hat = horizon_rule(1, 50, 6, 6);
  auto holds = [](int N) { return std::pow(2.0, N) < 50.0 + 6.0 - 6.0; };
  const bool ok = n_hat == 5 && holds(5) && !holds(6);
  return {ok, "N_hat=" + std::to_string(n_hat) + " cond(5)=" + std::to_string(holds(5)) +
                " cond(6)=" + std::to_string(holds(6))};
}

// 3. Terminal weight.
Outcome terminal_weight()
{
  const auto & sc = scenario();
  const Eigen::MatrixXd P_ref = io::matrix_from_json(io::read_json(kData / "fixtures/terminal_weight.json")["P"]);
  const auto res = solve_dare(sc.system.A, sc.system.B, sc.Q, sc.R);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < P_ref.size(); ++i) {
    worst = std::max(worst, std::abs(res.P.data()[i] - P_ref.data()[i]) / std::abs(P_ref.data()[i]));
  }
  return {worst <= 1e-5, "max relative error " + fmt(worst)};
}

// 4. Terminal set from the fixture RPI set, rows paired by brute-force nearest match.
Outcome terminal_set()
{
  const auto & sc = scenario();
  const Polytope R = io::read_polytope(kData / "fixtures/rpi_set.json");
  const Polytope ref = io::read_polytope(kData / "fixtures/terminal_set.json").normalized();
  const Polytope T = robust_terminal_set(sc.system, sc.X, sc.U, R).normalized();
  if (T.rows() != ref.rows()) {
    return {false, "row count " + std::to_string(T.rows()) + " vs " + std::to_string(ref.rows())};
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ref.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < T.rows(); ++j) {
      double dev = std::abs(T.d(j) - ref.d(i));
      for (Eigen::Index c = 0; c < T.dim(); ++c) { dev = std::max(dev, std::abs(T.T(j, c) - ref.T(i, c))); }
      best = std::min(best, dev);
    }
    worst = std::max(worst, best);
  }
  return {worst <= 1e-4, std::to_string(T.rows()) + " rows, max entry deviation " + fmt(worst)};
}

// 5. Invariance slack of the fixture RPI set and distance of the computed approximation.
Outcome rpi()
{
  const auto & sc = scenario();
  const Polytope R = io::read_polytope(kData / "fixtures/rpi_set.json").normalized();
  const Eigen::MatrixXd & Acl = sc.system.A_cl;
  const Eigen::MatrixXd & D = sc.system.D;
  double min_slack = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    const Eigen::VectorXd t = R.T.row(i).transpose();
    // h_{D W}(t) for the box W = [-1, 1]^s.
    const double hD = (D.transpose() * t).cwiseAbs().sum();
    min_slack = std::min(min_slack, R.d(i) - support(R, Acl.transpose() * t) - hD);
  }
  const Polytope Rc = mrpi_approximation(Acl, linear_map(D, sc.Dset));
  double gap = 0.0;
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    gap = std::max(gap, std::abs(support(Rc, R.T.row(i).transpose()) - R.d(i)));
  }
  const bool ok = min_slack >= -1e-8 && gap <= 0.02;
  return {ok, "min invariance slack " + fmt(min_slack) + " (need >= -1e-08), support gap " + fmt(gap) +
                " (need <= 0.02)"};
}

// 6. Regional law against the QP along simulated trajectories.
Outcome regional_equivalence()
{
  const auto & sc = scenario();
  long pairs = 0, bad_u = 0, bad_set = 0;
  double worst = 0.0;
  for (const int N : {3, 5}) {
    for (const auto f : {Formulation::MinMax, Formulation::Tube, Formulation::Nominal}) {
      const auto qp = std::make_shared<const CondensedQp>(sc.build(f, N));
      const auto starts = sample_initial_states(*qp, sc.target(f), 20, 100 + static_cast<std::uint64_t>(N));
      for (const auto v : {Variant::Basic, Variant::ActiveSetUpdates}) {
        for (std::size_t t = 0; t < starts.size(); ++t) {
          Controller ctl(qp, {v, sc.M, sc.target(f), f});
          Eigen::VectorXd x = starts[t];
          for (int k = 0; k < 200 && !sc.target(f).contains(x, 1e-9); ++k) {
            const StepResult res = ctl.step(x);
            const QpSolution sol = solve(*qp, x);
            const Eigen::VectorXd u_qp = qp->input(sol.epsilon, x);
            if (ctl.law()) {
              ++pairs;
              const RegionalLaw & law = *ctl.law();
              const double err = (apply(law, x) - u_qp).cwiseAbs().maxCoeff();
              worst = std::max(worst, err);
              if (err > 1e-6 * (1.0 + u_qp.cwiseAbs().maxCoeff())) { ++bad_u; }
              // Rows in only one of the two sets must carry a zero multiplier there.
              const Eigen::VectorXd lam_law = law.K_lambda * x + law.b_lambda;
              for (std::size_t a = 0; a < law.active.size(); ++a) {
                const auto i = law.active[a];
                if (std::find(sol.active.begin(), sol.active.end(), i) == sol.active.end() &&
                    std::abs(lam_law(static_cast<Eigen::Index>(a))) > 1e-7) {
                  ++bad_set;
                }
              }
              for (const auto i : sol.active) {
                if (std::find(law.active.begin(), law.active.end(), i) == law.active.end() && sol.lambda(i) > 1e-7) {
                  ++bad_set;
                }
              }
            }
            const Eigen::VectorXd w = f == Formulation::Nominal
                                        ? Eigen::VectorXd::Zero(1)
                                        : sample_disturbance(sc.Dset, DisturbancePolicy::Uniform, 77, t,
                                                             static_cast<std::uint64_t>(k));
            x = plant_step(sc.system, x, res.u, w);
          }
        }
      }
    }
  }
  const bool ok = pairs >= 500 && bad_u == 0 && bad_set == 0;
  return {ok, std::to_string(pairs) + " pairs, max |du| " + fmt(worst) + ", input mismatches " +
                std::to_string(bad_u) + ", active-set mismatches " + std::to_string(bad_set)};
}

// 7. Nested brute force at N = 2: refine a grid over V, worst case over disturbance vertex sequences.
double brute_force_minmax(const ProblemData & data, const Eigen::VectorXd & x0)
{
  const auto & sys = data.system;
  std::vector<Eigen::Vector2d> Ws;
  for (const double a : {-1.0, 1.0}) {
    for (const double b : {-1.0, 1.0}) { Ws.emplace_back(a, b); }
  }
  auto worst = [&](const Eigen::Vector2d & V) {
    double value = -std::numeric_limits<double>::infinity();
    for (const auto & W : Ws) {
      Eigen::VectorXd x = x0;
      double cost = 0.0;
      for (int i = 0; i < 2; ++i) {
        const Eigen::VectorXd u = -sys.K_inf * x + Eigen::VectorXd::Constant(1, V(i));
        if (!data.X.contains(x, 1e-9) || !data.U.contains(u, 1e-9)) { return std::numeric_limits<double>::infinity(); }
        cost += x.dot(data.Q * x) + u.dot(data.R * u);
        x = sys.A * x + sys.B * u + sys.D * Eigen::VectorXd::Constant(1, W(i));
      }
      if (!data.terminal.contains(x, 1e-9)) { return std::numeric_limits<double>::infinity(); }
      value = std::max(value, cost + x.dot(data.P * x));
    }
    return value;
  };
  Eigen::Vector2d centre(0, 0);
  double half = 12.0, best = std::numeric_limits<double>::infinity();
  for (int level = 0; level < 9; ++level) {
    const int n = 40;
    const double h = 2.0 * half / n;
    Eigen::Vector2d arg = centre;
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n; ++j) {
        const Eigen::Vector2d V(centre(0) - half + i * h, centre(1) - half + j * h);
        const double f = worst(V);
        if (f < best) {
          best = f;
          arg = V;
        }
      }
    }
    centre = arg;
    half = 4.0 * h;
  }
  return best;
}

Outcome small_minmax()
{
  const ProblemData data = scenario().data(Formulation::MinMax, 2);
  const CondensedQp qp = build_minmax_qp(data);
  double worst = 0.0;
  for (const auto & x : feasible_states(qp, 20, 2024)) {
    const QpSolution sol = solve(qp, x);
    const double value = sol.objective + x.dot(qp.cost_offset * x);
    worst = std::max(worst, std::abs(value - brute_force_minmax(data, x)));
  }
  return {worst <= 1e-4, "20 states, max |J_qp - J_grid| " + fmt(worst)};
}

// Shared benchmark grid for criteria 8 and 9.
const BenchReport & grid()
{
  static const BenchReport report = [] {
    BenchConfig cfg;
    cfg.samples = 500;
    cfg.seed = 1;
    return run_benchmark(scenario(), cfg);
  }();
  return report;
}

const BenchCell * cell(const BenchReport & r, Formulation f, Variant v, int N)
{
  for (const auto & c : r.cells) {
    if (c.approach == f && c.variant == v && c.N == N) { return &c; }
  }
  return nullptr;
}

// 8. Monte-Carlo bands at N = 5.
Outcome statistics()
{
  const auto & r = grid();
  const auto * basic = cell(r, Formulation::MinMax, Variant::Basic, 5);
  const auto * asu = cell(r, Formulation::MinMax, Variant::ActiveSetUpdates, 5);
  const auto * sub = cell(r, Formulation::MinMax, Variant::Suboptimal, 5);
  const auto * nom = cell(r, Formulation::Nominal, Variant::Basic, 5);
  if (!basic || !asu || !sub || !nom) { return {false, "missing cells"}; }
  struct Band
  {
    std::string name;
    double value, centre, width;
  };
  const std::vector<Band> bands{{"minmax steps", basic->mean_steps, 9.35, 1.5},
                                {"basic dQP%", basic->mean_dqp_pct, 22.49, 10.0},
                                {"asu dQP%", asu->mean_dqp_pct, 88.85, 10.0},
                                {"subopt dQP%", sub->mean_dqp_pct, 33.41, 10.0}};
  Outcome o{nom->mean_dqp_pct == 0.0, ""};
  for (const auto & b : bands) {
    const bool ok = std::abs(b.value - b.centre) <= b.width;
    o.pass = o.pass && ok;
    o.detail += b.name + " " + fmt(b.value) + (ok ? "" : "(!)") + ", ";
  }
  o.detail += "nominal basic dQP% " + fmt(nom->mean_dqp_pct) + ", n_traj " + std::to_string(basic->n_traj);
  return o;
}

// 9. Constraint audit on every robust cell plus a vertex-adversarial run.
Outcome robustness()
{
  long violations = 0, infeasible = 0, cut = 0, cells = 0;
  auto audit = [&](const BenchReport & r) {
    for (const auto & c : r.cells) {
      if (c.approach == Formulation::Nominal) { continue; }
      violations += c.violations;
      infeasible += c.infeasible;
      cut += c.max_steps_hit;
      ++cells;
    }
  };
  audit(grid());
  BenchConfig adv;
  adv.approaches = {Formulation::MinMax, Formulation::Tube};
  adv.horizons = {5};
  adv.samples = 100;
  adv.seed = 2;
  adv.policy = DisturbancePolicy::VertexAdversarial;
  audit(run_benchmark(scenario(), adv));
  return {violations == 0 && infeasible == 0,
          std::to_string(cells) + " cells, violations " + std::to_string(violations) + ", infeasible " +
            std::to_string(infeasible) + ", max-steps trajectories " + std::to_string(cut)};
}

// 10. Two CLI bench runs, byte comparison.
Outcome determinism()
{
  if (g_cli.empty()) { return {false, "CLI path not given"}; }
  const fs::path root = fs::temp_directory_path() / ("rmpc_accept_" + std::to_string(::getpid()));
  std::string first;
  for (const std::string run : {"a", "b"}) {
    const fs::path out = root / run;
    const std::string cmd = "\"" + g_cli + "\" bench --config \"" + (kData / "double_integrator.json").string() +
                            "\" --N 3,5 --samples 40 --seed 7 --out \"" + out.string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) { return {false, "bench run failed"}; }
    std::ifstream in(out / "bench.csv", std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (run == "a") {
      first = text;
    } else {
      fs::remove_all(root);
      return {!first.empty() && text == first, std::to_string(first.size()) + " bytes, identical=" +
                                                 std::to_string(text == first)};
    }
  }
  return {false, "unreachable"};
}

}  // namespace

int main(int argc, char ** argv)
{
  if (argc > 1) { g_cli = argv[1]; }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    {"constraint/variable counts", counts},   {"horizon rule", horizon},
    {"terminal weighting", terminal_weight},  {"terminal set", terminal_set},
    {"RPI fixture", rpi},                     {"regional-law oracle equivalence", regional_equivalence},
    {"small-instance min-max oracle", small_minmax}, {"statistical reproduction", statistics},
    {"robustness audit", robustness},         {"determinism", determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception & e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::printf("criterion %zu %s: %s - %s [%.1f s]\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
