#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>

#include <json.hpp>

#include "rmpc/condense.hpp"
#include "rmpc/error.hpp"
#include "rmpc/geometry.hpp"
#include "rmpc/io.hpp"
#include "rmpc/numerics.hpp"
#include "rmpc/polytope.hpp"

namespace rmpc {

/// Everything needed to build any of the three QPs for a plant.
struct Scenario
{
  LtiSystem system;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd P;
  Polytope X;
  Polytope U;
  Polytope Dset;
  /// RPI set of the pre-stabilized loop (tube cross-section and robust target).
  Polytope rpi;
  /// Robust terminal set used by the min-max and tube formulations.
  Polytope terminal_robust;
  /// Terminal set of the undisturbed problem (also the nominal target).
  Polytope terminal_nominal;
  int horizon = 5;
  int M = 15;

  ProblemData data(Formulation f, int N) const
  {
    ProblemData d;
    d.system = system;
    d.X = X;
    d.U = U;
    d.Dset = Dset;
    d.Q = Q;
    d.R = R;
    d.P = P;
    d.terminal = f == Formulation::Nominal ? terminal_nominal : terminal_robust;
    d.N = N;
    return d;
  }

  CondensedQp build(Formulation f, int N) const
  {
    switch (f) {
      case Formulation::MinMax: return build_minmax_qp(data(f, N));
      case Formulation::Nominal: return build_nominal_qp(data(f, N));
      case Formulation::Tube: return build_tube_qp(data(f, N), rpi);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown formulation");
  }

  /// Target of the closed loop: the RPI set for robust formulations, the terminal set otherwise.
  const Polytope & target(Formulation f) const { return f == Formulation::Nominal ? terminal_nominal : rpi; }
};

/// Robust terminal set: maximal admissible set of A_cl inside {x in X - R, -K x in U - K R}.
inline Polytope robust_terminal_set(const LtiSystem & sys, const Polytope & X, const Polytope & U, const Polytope & R_set)
{
  const Polytope Xt = pontryagin_difference(X, R_set);
  Polytope Ut = U;
  for (Eigen::Index k = 0; k < U.rows(); ++k) {
    Ut.d(k) -= support(R_set, sys.K_inf.transpose() * U.T.row(k).transpose());
  }
  return maximal_admissible_set(sys.A_cl, Xt.intersect(Ut.preimage(-sys.K_inf)));
}

/// Nominal terminal set: maximal admissible set of A_cl inside {x in X, -K x in U}.
inline Polytope nominal_terminal_set(const LtiSystem & sys, const Polytope & X, const Polytope & U)
{
  return maximal_admissible_set(sys.A_cl, X.intersect(U.preimage(-sys.K_inf)));
}

namespace detail {

inline Polytope bounds_box(const nlohmann::json & j)
{
  return Polytope::box(io::vector_from_json(j.at("lower")), io::vector_from_json(j.at("upper")));
}

}  // namespace detail

/**
 * @brief Assemble a scenario from a JSON config.
 *
 * Keys: A, B, D, Q, R, state_bounds, input_bounds, disturbance_bounds ({lower, upper}),
 * horizon, M; optional rpi_set / terminal_set (paths relative to base_dir) that replace
 * the computed sets. P and K_inf always come from the Riccati equation.
 */
inline Scenario make_scenario(const nlohmann::json & cfg, const std::filesystem::path & base_dir, bool use_fixtures = true)
{
  Scenario sc;
  const Eigen::MatrixXd A = io::matrix_from_json(cfg.at("A"));
  const Eigen::MatrixXd B = io::matrix_from_json(cfg.at("B"));
  const Eigen::MatrixXd D = io::matrix_from_json(cfg.at("D"));
  sc.Q = io::matrix_from_json(cfg.at("Q"));
  sc.R = io::matrix_from_json(cfg.at("R"));
  const DareResult dare = solve_dare(A, B, sc.Q, sc.R);
  sc.P = dare.P;
  sc.system = LtiSystem(A, B, D, dare.K_inf);
  sc.X = detail::bounds_box(cfg.at("state_bounds"));
  sc.U = detail::bounds_box(cfg.at("input_bounds"));
  sc.Dset = detail::bounds_box(cfg.at("disturbance_bounds"));
  sc.horizon = cfg.value("horizon", 5);
  sc.M = cfg.value("M", 15);
  if (sc.M < 1) { throw Error(ErrorKind::InvalidArgument, "M must be at least 1"); }

  if (use_fixtures && cfg.contains("rpi_set")) {
    sc.rpi = io::read_polytope(base_dir / cfg.at("rpi_set").get<std::string>());
  } else {
    sc.rpi = mrpi_approximation(sc.system.A_cl, linear_map(sc.system.D, sc.Dset));
  }
  if (use_fixtures && cfg.contains("terminal_set")) {
    sc.terminal_robust = io::read_polytope(base_dir / cfg.at("terminal_set").get<std::string>());
  } else {
    sc.terminal_robust = robust_terminal_set(sc.system, sc.X, sc.U, sc.rpi);
  }
  sc.terminal_nominal = nominal_terminal_set(sc.system, sc.X, sc.U);
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path & config_path, bool use_fixtures = true)
{
  return make_scenario(io::read_json(config_path), config_path.parent_path(), use_fixtures);
}

}  // namespace rmpc
