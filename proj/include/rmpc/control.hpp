#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rmpc/condense.hpp"
#include "rmpc/error.hpp"
#include "rmpc/polytope.hpp"
#include "rmpc/qpsolve.hpp"
#include "rmpc/regional.hpp"

namespace rmpc {

enum class Variant { Basic, ActiveSetUpdates, Suboptimal, PointByPoint };

inline std::string_view to_string(Variant v)
{
  switch (v) {
    case Variant::Basic: return "basic";
    case Variant::ActiveSetUpdates: return "asu";
    case Variant::Suboptimal: return "subopt";
    case Variant::PointByPoint: return "ptp";
  }
  return "unknown";
}

inline Variant variant_from_string(std::string_view name)
{
  if (name == "basic") { return Variant::Basic; }
  if (name == "asu" || name == "active_set_updates") { return Variant::ActiveSetUpdates; }
  if (name == "subopt" || name == "suboptimal") { return Variant::Suboptimal; }
  if (name == "ptp" || name == "point_by_point") { return Variant::PointByPoint; }
  throw Error(ErrorKind::InvalidArgument, "unknown variant '" + std::string(name) + "'");
}

struct ControllerConfig
{
  Variant variant = Variant::Basic;
  int M = 15;
  Polytope target;
  Formulation formulation = Formulation::MinMax;
};

inline bool in_target(const ControllerConfig & cfg, const Eigen::VectorXd & x) { return cfg.target.contains(x, 1e-9); }

struct StepResult
{
  Eigen::VectorXd u;
  /// Event flag: true iff a QP was solved in this step.
  bool qp_solved = false;
  int laws_built = 0;
};

/// Closed-loop regional controller; one instance per plant.
class Controller
{
public:
  Controller(std::shared_ptr<const CondensedQp> qp, ControllerConfig cfg) : qp_(std::move(qp)), cfg_(std::move(cfg))
  {
    if (cfg_.M < 1) { throw Error(ErrorKind::InvalidArgument, "M must be at least 1"); }
  }

  StepResult step(const Eigen::VectorXd & x)
  {
    StepResult res;
    switch (cfg_.variant) {
      case Variant::PointByPoint: res = solve_step(x, false); break;
      case Variant::Basic: res = step_basic(x); break;
      case Variant::ActiveSetUpdates: res = step_active_set_updates(x); break;
      case Variant::Suboptimal: res = step_suboptimal(x); break;
    }
    events_.push_back(res.qp_solved ? 1 : 0);
    laws_built_ += res.laws_built;
    prev_x_ = x;
    return res;
  }

  void reset()
  {
    law_.reset();
    prev_x_.reset();
    last_working_set_.clear();
    counter_ = 0;
    irreversible_ = false;
    events_.clear();
    laws_built_ = 0;
    history_.clear();
  }

  const ControllerConfig & config() const { return cfg_; }
  const CondensedQp & qp() const { return *qp_; }
  const std::optional<RegionalLaw> & law() const { return law_; }
  const std::vector<int> & events() const { return events_; }
  bool irreversible() const { return irreversible_; }
  int laws_built() const { return laws_built_; }
  const SolverStats & solver_stats() const { return solver_.stats(); }
  /// Every law adopted so far (kept only when record_laws is set).
  const std::vector<RegionalLaw> & history() const { return history_; }
  void record_laws(bool on) { record_ = on; }

private:
  std::shared_ptr<const CondensedQp> qp_;
  ControllerConfig cfg_;
  QpSolver solver_;
  std::optional<RegionalLaw> law_;
  std::optional<Eigen::VectorXd> prev_x_;
  IndexSet last_working_set_;
  int counter_ = 0;
  bool irreversible_ = false;
  std::vector<int> events_;
  int laws_built_ = 0;
  bool record_ = false;
  std::vector<RegionalLaw> history_;

  void adopt(RegionalLaw law)
  {
    if (record_) { history_.push_back(law); }
    law_ = std::move(law);
  }

  StepResult solve_step(const Eigen::VectorXd & x, bool build_law)
  {
    const IndexSet * warm = last_working_set_.empty() ? nullptr : &last_working_set_;
    const QpSolution sol = solver_.solve(*qp_, x, warm);
    last_working_set_ = sol.working_set;
    StepResult res;
    res.qp_solved = true;
    res.u = qp_->input(sol.epsilon, x);
    law_.reset();
    if (!build_law) { return res; }
    try {
      adopt(build_regional_law(*qp_, sol.active));
      res.laws_built = 1;
    } catch (const Error & e) {
      if (e.kind() != ErrorKind::RankDeficient && e.kind() != ErrorKind::IllConditioned) { throw; }
    }
    return res;
  }

  StepResult reuse(const Eigen::VectorXd & x) const
  {
    StepResult res;
    res.u = apply(*law_, x);
    return res;
  }

  StepResult step_basic(const Eigen::VectorXd & x)
  {
    if (law_ && contains(*law_, x, ContainsMode::Full)) { return reuse(x); }
    return solve_step(x, true);
  }

  StepResult step_active_set_updates(const Eigen::VectorXd & x)
  {
    if (law_ && contains(*law_, x, ContainsMode::Full)) { return reuse(x); }
    if (law_ && prev_x_) {
      LineUpdate upd = update_active_set_along_line(*qp_, *law_, *prev_x_, x);
      if (!upd.fallback_required() && !upd.laws.empty() && contains(upd.laws.back(), x, ContainsMode::Full)) {
        const int built = static_cast<int>(upd.laws.size());
        for (std::size_t k = 0; k + 1 < upd.laws.size(); ++k) {
          if (record_) { history_.push_back(upd.laws[k]); }
        }
        adopt(std::move(upd.laws.back()));
        StepResult res = reuse(x);
        res.laws_built = built;
        return res;
      }
    }
    return solve_step(x, true);
  }

  StepResult step_suboptimal(const Eigen::VectorXd & x)
  {
    if (irreversible_) { return solve_step(x, false); }
    if (law_ && contains(*law_, x, ContainsMode::FeasibleOnly)) {
      if (counter_ + 1 > cfg_.M) {
        irreversible_ = true;
        return solve_step(x, false);
      }
      ++counter_;
      return reuse(x);
    }
    counter_ = 0;
    return solve_step(x, true);
  }
};

}  // namespace rmpc
