#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmpc/condense.hpp"
#include "rmpc/control.hpp"
#include "rmpc/error.hpp"
#include "rmpc/geometry.hpp"
#include "rmpc/io.hpp"
#include "rmpc/polytope.hpp"
#include "rmpc/qpsolve.hpp"
#include "rmpc/regional.hpp"
#include "rmpc/scenario.hpp"

namespace rmpc {

inline Eigen::VectorXd plant_step(
  const LtiSystem & sys, const Eigen::VectorXd & x, const Eigen::VectorXd & u, const Eigen::VectorXd & w)
{
  return sys.A * x + sys.B * u + sys.D * w;
}

namespace detail {

inline std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> keys)
{
  std::vector<std::uint32_t> words;
  for (const auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffULL));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// Uniform double in [0, 1) from the top 53 bits, identical across standard libraries.
inline double unit_draw(std::mt19937_64 & rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/**
 * @brief Rejection-sample states of the QP's feasible set outside `exclude`.
 *
 * Candidates are uniform on the bounding box of the state constraint set.
 */
inline std::vector<Eigen::VectorXd> sample_initial_states(
  const CondensedQp & qp, const Polytope & exclude, int count, std::uint64_t seed)
{
  if (count < 1) { throw Error(ErrorKind::InvalidArgument, "sample count must be positive"); }
  const auto [lo, hi] = bounding_box(qp.state_set);
  auto rng = detail::make_rng({seed, 0x5a3e11ULL});
  std::vector<Eigen::VectorXd> out;
  long attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    ++attempts;
    Eigen::VectorXd x(lo.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) { x(i) = lo(i) + (hi(i) - lo(i)) * detail::unit_draw(rng); }
    if (!exclude.contains(x, 0.0) && is_feasible(qp, x)) { out.push_back(std::move(x)); }
    if (attempts >= 20000 && static_cast<double>(out.size()) < 1e-4 * static_cast<double>(attempts)) {
      throw Error(ErrorKind::SamplingStalled, "initial-state acceptance rate below 1e-4");
    }
  }
  return out;
}

enum class DisturbancePolicy { Uniform, VertexAdversarial, Zero };

inline DisturbancePolicy policy_from_string(std::string_view name)
{
  if (name == "uniform") { return DisturbancePolicy::Uniform; }
  if (name == "vertex" || name == "vertex_adversarial") { return DisturbancePolicy::VertexAdversarial; }
  if (name == "zero") { return DisturbancePolicy::Zero; }
  throw Error(ErrorKind::InvalidArgument, "unknown disturbance policy '" + std::string(name) + "'");
}

/// Draw w(k) of trajectory `traj`; reproducible per (seed, traj, k).
inline Eigen::VectorXd sample_disturbance(
  const Polytope & Dset, DisturbancePolicy policy, std::uint64_t seed, std::uint64_t traj, std::uint64_t k)
{
  const auto box = as_box(Dset);
  if (!box) { throw Error(ErrorKind::InvalidArgument, "disturbance set must be a box"); }
  const auto & [lo, hi] = *box;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(lo.size());
  if (policy == DisturbancePolicy::Zero) { return w; }
  auto rng = detail::make_rng({seed, traj, k});
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double r = detail::unit_draw(rng);
    w(i) = policy == DisturbancePolicy::Uniform ? lo(i) + (hi(i) - lo(i)) * r : (r < 0.5 ? lo(i) : hi(i));
  }
  return w;
}

struct StepRecord
{
  int k = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd w;
  int e = 0;
};

struct TrajectoryLog
{
  std::vector<StepRecord> records;
  Eigen::VectorXd x_final;
  int steps = 0;
  int qps_solved = 0;
  int laws_built = 0;
  bool max_steps_hit = false;
  int violations = 0;
  double seconds = 0.0;

  int dqp() const { return steps - qps_solved; }
  double dqp_pct() const { return steps > 0 ? 100.0 * dqp() / steps : 0.0; }
};

using DisturbanceStream = std::function<Eigen::VectorXd(int k)>;

/// Simulate until the controller's target is reached or max_steps elapse, auditing x in X and u in U.
inline TrajectoryLog run_trajectory(
  Controller & controller, const LtiSystem & sys, const Eigen::VectorXd & x0, const DisturbanceStream & disturbance,
  int max_steps = 200)
{
  TrajectoryLog log;
  const auto & qp = controller.qp();
  Eigen::VectorXd x = x0;
  const auto t0 = std::chrono::steady_clock::now();
  int k = 0;
  while (!in_target(controller.config(), x)) {
    if (k >= max_steps) {
      log.max_steps_hit = true;
      break;
    }
    const StepResult res = controller.step(x);
    if (!qp.state_set.contains(x, 1e-7) || !qp.input_set.contains(res.u, 1e-7)) { ++log.violations; }
    const Eigen::VectorXd w = disturbance(k);
    log.records.push_back({k, x, res.u, w, res.qp_solved ? 1 : 0});
    log.qps_solved += res.qp_solved ? 1 : 0;
    log.laws_built += res.laws_built;
    x = plant_step(sys, x, res.u, w);
    ++k;
  }
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log.steps = k;
  log.x_final = x;
  return log;
}

struct BenchConfig
{
  std::vector<Formulation> approaches{Formulation::MinMax, Formulation::Tube, Formulation::Nominal};
  std::vector<Variant> variants{Variant::Basic, Variant::ActiveSetUpdates, Variant::Suboptimal};
  std::vector<int> horizons{3, 5, 10};
  int samples = 500;
  std::uint64_t seed = 1;
  int max_steps = 200;
  DisturbancePolicy policy = DisturbancePolicy::Uniform;
  /// Measure wall time against the point-by-point baseline (non-deterministic output).
  bool timing = false;
};

struct BenchCell
{
  Formulation approach = Formulation::MinMax;
  Variant variant = Variant::Basic;
  int N = 0;
  Eigen::Index q = 0;
  Eigen::Index p = 0;
  int n_traj = 0;
  double mean_steps = 0.0;
  double mean_qps = 0.0;
  double mean_dqp = 0.0;
  /// Mean of per-trajectory percentages.
  double mean_dqp_pct = 0.0;
  /// Avoided QPs over all steps of the cell.
  double pooled_dqp_pct = 0.0;
  double mean_laws = 0.0;
  double rel_time = std::nan("");
  int max_steps_hit = 0;
  int infeasible = 0;
  int violations = 0;
  int irreversible = 0;
};

struct BenchReport
{
  BenchConfig config;
  std::vector<BenchCell> cells;
};

namespace detail {

struct CellRun
{
  std::vector<TrajectoryLog> logs;
  int infeasible = 0;
  int irreversible = 0;
  double seconds = 0.0;
};

inline CellRun run_cell(
  const Scenario & sc, const std::shared_ptr<const CondensedQp> & qp, Formulation approach, Variant variant,
  const std::vector<Eigen::VectorXd> & starts, const BenchConfig & cfg)
{
  CellRun run;
  const DisturbancePolicy policy = approach == Formulation::Nominal ? DisturbancePolicy::Zero : cfg.policy;
  ControllerConfig ccfg{variant, sc.M, sc.target(approach), approach};
  for (std::size_t t = 0; t < starts.size(); ++t) {
    Controller ctl(qp, ccfg);
    const DisturbanceStream dist = [&, t](int k) {
      return sample_disturbance(sc.Dset, policy, cfg.seed, t, static_cast<std::uint64_t>(k));
    };
    try {
      run.logs.push_back(run_trajectory(ctl, sc.system, starts[t], dist, cfg.max_steps));
      run.seconds += run.logs.back().seconds;
      run.irreversible += ctl.irreversible() ? 1 : 0;
    } catch (const Error & e) {
      if (e.kind() != ErrorKind::Infeasible) { throw; }
      ++run.infeasible;
    }
  }
  return run;
}

}  // namespace detail

inline BenchReport run_benchmark(const Scenario & sc, const BenchConfig & cfg)
{
  BenchReport report{cfg, {}};
  for (const auto approach : cfg.approaches) {
    for (const int N : cfg.horizons) {
      std::shared_ptr<const CondensedQp> qp;
      std::vector<Eigen::VectorXd> starts;
      try {
        qp = std::make_shared<const CondensedQp>(sc.build(approach, N));
        const Polytope & exclude = approach == Formulation::Nominal ? sc.terminal_nominal : sc.terminal_robust;
        starts = sample_initial_states(*qp, exclude, cfg.samples, cfg.seed + static_cast<std::uint64_t>(N));
      } catch (const Error & e) {
        throw Error(e.kind(), std::string(to_string(approach)) + " N=" + std::to_string(N) + ": " + e.what());
      }
      double baseline_seconds = std::nan("");
      if (cfg.timing) {
        baseline_seconds = detail::run_cell(sc, qp, approach, Variant::PointByPoint, starts, cfg).seconds;
      }
      for (const auto variant : cfg.variants) {
        detail::CellRun run;
        try {
          run = detail::run_cell(sc, qp, approach, variant, starts, cfg);
        } catch (const Error & e) {
          throw Error(
            e.kind(), std::string(to_string(approach)) + "/" + std::string(to_string(variant)) + " N=" +
                        std::to_string(N) + ": " + e.what());
        }
        BenchCell cell;
        cell.approach = approach;
        cell.variant = variant;
        cell.N = N;
        cell.q = qp->q();
        cell.p = qp->p();
        cell.infeasible = run.infeasible;
        cell.irreversible = run.irreversible;
        long total_steps = 0, total_dqp = 0;
        int pct_count = 0;
        for (const auto & log : run.logs) {
          cell.violations += log.violations;
          if (log.max_steps_hit) {
            ++cell.max_steps_hit;
            continue;
          }
          ++cell.n_traj;
          cell.mean_steps += log.steps;
          cell.mean_qps += log.qps_solved;
          cell.mean_dqp += log.dqp();
          cell.mean_laws += log.laws_built;
          total_steps += log.steps;
          total_dqp += log.dqp();
          if (log.steps > 0) {
            cell.mean_dqp_pct += log.dqp_pct();
            ++pct_count;
          }
        }
        if (cell.n_traj > 0) {
          cell.mean_steps /= cell.n_traj;
          cell.mean_qps /= cell.n_traj;
          cell.mean_dqp /= cell.n_traj;
          cell.mean_laws /= cell.n_traj;
        }
        if (pct_count > 0) { cell.mean_dqp_pct /= pct_count; }
        if (total_steps > 0) { cell.pooled_dqp_pct = 100.0 * static_cast<double>(total_dqp) / total_steps; }
        if (cfg.timing && baseline_seconds > 0.0) { cell.rel_time = run.seconds / baseline_seconds; }
        report.cells.push_back(cell);
      }
    }
  }
  return report;
}

namespace detail {

inline std::string fmt(double v, int digits = 6)
{
  if (std::isnan(v)) { return "NA"; }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string report_csv(const BenchReport & report)
{
  std::ostringstream os;
  os << "approach,variant,N,q,p,mean_steps,mean_dqp,mean_dqp_pct,rel_time,n_traj,seed\n";
  for (const auto & c : report.cells) {
    os << to_string(c.approach) << ',' << to_string(c.variant) << ',' << c.N << ',' << c.q << ',' << c.p << ','
       << detail::fmt(c.mean_steps) << ',' << detail::fmt(c.mean_dqp) << ',' << detail::fmt(c.mean_dqp_pct) << ','
       << detail::fmt(c.rel_time) << ',' << c.n_traj << ',' << report.config.seed << '\n';
  }
  return os.str();
}

inline nlohmann::json report_json(const BenchReport & report)
{
  nlohmann::json cells = nlohmann::json::array();
  for (const auto & c : report.cells) {
    cells.push_back({
      {"approach", std::string(to_string(c.approach))},
      {"variant", std::string(to_string(c.variant))},
      {"N", c.N},
      {"q", c.q},
      {"p", c.p},
      {"n_traj", c.n_traj},
      {"mean_steps", c.mean_steps},
      {"mean_qps", c.mean_qps},
      {"mean_dqp", c.mean_dqp},
      {"mean_dqp_pct", c.mean_dqp_pct},
      {"pooled_dqp_pct", c.pooled_dqp_pct},
      {"mean_laws_built", c.mean_laws},
      {"rel_time", std::isnan(c.rel_time) ? nlohmann::json(nullptr) : nlohmann::json(c.rel_time)},
      {"max_steps_hit", c.max_steps_hit},
      {"infeasible", c.infeasible},
      {"violations", c.violations},
      {"irreversible_switches", c.irreversible},
    });
  }
  return nlohmann::json{
    {"seed", report.config.seed},
    {"samples", report.config.samples},
    {"max_steps", report.config.max_steps},
    {"cells", cells},
  };
}

// ---------------------------------------------------------------------------
// SVG output

namespace detail {

class SvgPanel
{
public:
  SvgPanel(double x, double y, double w, double h, double xmin, double xmax, double ymin, double ymax)
      : x_(x), y_(y), w_(w), h_(h), xmin_(xmin), xmax_(xmax), ymin_(ymin), ymax_(ymax)
  {
    if (xmax_ <= xmin_) { xmax_ = xmin_ + 1.0; }
    if (ymax_ <= ymin_) { ymax_ = ymin_ + 1.0; }
  }

  double px(double v) const { return x_ + (v - xmin_) / (xmax_ - xmin_) * w_; }
  double py(double v) const { return y_ + h_ - (v - ymin_) / (ymax_ - ymin_) * h_; }

  void axes(std::ostringstream & os, const std::string & title) const
  {
    os << "<rect x='" << x_ << "' y='" << y_ << "' width='" << w_ << "' height='" << h_
       << "' fill='none' stroke='black'/>\n";
    os << "<text x='" << x_ + 4 << "' y='" << y_ - 4 << "' font-size='11'>" << title << "</text>\n";
    os << "<text x='" << x_ << "' y='" << y_ + h_ + 12 << "' font-size='9'>" << fmt(xmin_, 2) << "</text>\n";
    os << "<text x='" << x_ + w_ - 24 << "' y='" << y_ + h_ + 12 << "' font-size='9'>" << fmt(xmax_, 2)
       << "</text>\n";
    os << "<text x='" << x_ - 34 << "' y='" << y_ + h_ << "' font-size='9'>" << fmt(ymin_, 2) << "</text>\n";
    os << "<text x='" << x_ - 34 << "' y='" << y_ + 9 << "' font-size='9'>" << fmt(ymax_, 2) << "</text>\n";
  }

  void polyline(std::ostringstream & os, const std::vector<std::pair<double, double>> & pts, const std::string & style,
                bool closed = false) const
  {
    if (pts.empty()) { return; }
    os << '<' << (closed ? "polygon" : "polyline") << " points='";
    for (const auto & [a, b] : pts) { os << fmt(px(a), 3) << ',' << fmt(py(b), 3) << ' '; }
    os << "' " << style << "/>\n";
  }

  void hline(std::ostringstream & os, double v, const std::string & color) const
  {
    if (v < ymin_ || v > ymax_) { return; }
    os << "<line x1='" << x_ << "' y1='" << fmt(py(v), 3) << "' x2='" << x_ + w_ << "' y2='" << fmt(py(v), 3)
       << "' stroke='" << color << "' stroke-dasharray='4,3'/>\n";
  }

private:
  double x_, y_, w_, h_, xmin_, xmax_, ymin_, ymax_;
};

inline std::vector<std::pair<double, double>> polygon_points(const Polytope & P)
{
  std::vector<std::pair<double, double>> out;
  for (const auto & v : vertices(P)) { out.emplace_back(v(0), v(1)); }
  return out;
}

}  // namespace detail

/// Polygon vertices of a law's region clipped to the state constraint set.
inline std::vector<Eigen::VectorXd> region_polygon(const RegionalLaw & law, const Polytope & X)
{
  return vertices(law.region.intersect(X));
}

/**
 * @brief State-space plot (regions, target, trajectory) and time series of x, u, w, e.
 *
 * Returns the SVG document. Throws DimensionTooHigh unless the state is planar.
 */
inline std::string emit_plot(
  const TrajectoryLog & log, const std::vector<RegionalLaw> & laws, const Polytope & X, const Polytope & U,
  const Polytope & target)
{
  if (X.dim() != 2) { throw Error(ErrorKind::DimensionTooHigh, "plots need a planar state"); }
  std::ostringstream os;
  const double W = 960, H = 720;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "' viewBox='0 0 " << W << ' '
     << H << "'>\n<rect width='100%' height='100%' fill='white'/>\n";

  const auto [lo, hi] = bounding_box(X);
  detail::SvgPanel ss(60, 30, 400, 400, lo(0), hi(0), lo(1), hi(1));
  ss.axes(os, "state space (x1, x2)");
  for (const auto & law : laws) {
    try {
      ss.polyline(os, detail::polygon_points(law.region.intersect(X)),
                  "fill='#ffdddd' fill-opacity='0.4' stroke='red' stroke-width='0.8'", true);
    } catch (const Error &) {
    }
  }
  try {
    ss.polyline(os, detail::polygon_points(target), "fill='none' stroke='blue' stroke-width='1.2'", true);
  } catch (const Error &) {
  }
  std::vector<std::pair<double, double>> path;
  for (const auto & r : log.records) { path.emplace_back(r.x(0), r.x(1)); }
  if (log.x_final.size() == 2) { path.emplace_back(log.x_final(0), log.x_final(1)); }
  ss.polyline(os, path, "fill='none' stroke='black' stroke-width='1.2'");
  for (const auto & [a, b] : path) {
    os << "<circle cx='" << detail::fmt(ss.px(a), 3) << "' cy='" << detail::fmt(ss.py(b), 3)
       << "' r='2' fill='black'/>\n";
  }

  const int steps = std::max(1, static_cast<int>(log.records.size()));
  auto series_panel = [&](double y, const std::string & title, double vmin, double vmax,
                          const std::function<double(const StepRecord &)> & f, const std::vector<double> & limits,
                          bool stairs) {
    detail::SvgPanel pn(540, y, 380, 120, 0.0, steps, vmin, vmax);
    pn.axes(os, title);
    for (const double v : limits) { pn.hline(os, v, "gray"); }
    std::vector<std::pair<double, double>> pts;
    for (const auto & r : log.records) {
      if (stairs) {
        pts.emplace_back(r.k, f(r));
        pts.emplace_back(r.k + 1, f(r));
      } else {
        pts.emplace_back(r.k, f(r));
      }
    }
    pn.polyline(os, pts, "fill='none' stroke='black' stroke-width='1'");
  };
  auto bounds = [](const Polytope & P, int axis) {
    const auto [l, h] = bounding_box(P);
    return std::pair<double, double>{l(axis), h(axis)};
  };
  const auto [x1l, x1h] = bounds(X, 0);
  const auto [x2l, x2h] = bounds(X, 1);
  const auto [ul, uh] = bounds(U, 0);
  series_panel(30, "x1(k)", x1l, x1h, [](const StepRecord & r) { return r.x(0); }, {x1l, x1h}, false);
  series_panel(200, "x2(k)", x2l, x2h, [](const StepRecord & r) { return r.x(1); }, {x2l, x2h}, false);
  series_panel(370, "u(k)", ul * 1.1, uh * 1.1, [](const StepRecord & r) { return r.u(0); }, {ul, uh}, true);
  double wmax = 1.0;
  for (const auto & r : log.records) { wmax = std::max(wmax, r.w.size() > 0 ? r.w.cwiseAbs().maxCoeff() : 0.0); }
  series_panel(540, "w(k) and e(k)", -wmax * 1.1, wmax * 1.1,
               [](const StepRecord & r) { return r.w.size() > 0 ? r.w(0) : 0.0; }, {}, true);
  detail::SvgPanel ev(540, 540, 380, 120, 0.0, steps, -wmax * 1.1, wmax * 1.1);
  for (const auto & r : log.records) {
    if (r.e) {
      os << "<circle cx='" << detail::fmt(ev.px(r.k + 0.5), 3) << "' cy='" << detail::fmt(ev.py(0.0), 3)
         << "' r='3' fill='red'/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace rmpc
