#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ntnopt/common.hpp"
#include "ntnopt/conic/program.hpp"
#include "ntnopt/conic/solver.hpp"
#include "ntnopt/energy.hpp"
#include "ntnopt/linkmodel.hpp"
#include "ntnopt/robustify.hpp"
#include "ntnopt/scenario.hpp"

namespace ntnopt {

/// Tuning knobs shared by the iterative block solvers.
struct ScaSettings {
  int max_iters = 30;
  double tol = 1e-3;         // relative objective change that stops a loop
  double zeta0 = -1.0;       // initial rank-one penalty weight; <0 means 10*eta1
  double zeta_growth = 5.0;  // multiplier applied when the rank residual stalls
  double rank_tol = 1e-4;    // target for (trace(W) - lambda_max(W))/trace(W)
  // Replace the exact cone composition of the slot-split coupling by an
  // iterated tangent approximation (see solve_time_split).
  bool iterate_time_split = false;
  bool standard_coefficients = false;  // see bti_slack
  // Drop the outage certificate and hold the forwarding rate only at the
  // nominal (zero phase error) channel. Baseline behaviour for comparisons.
  bool nonrobust = false;
  conic::SolveSettings conic;
};

/// One block update: the plan with the block's variables replaced, the block
/// objective at the returned plan, and the objective after each internal
/// iteration (a single entry for one-shot programs).
struct SubResult {
  Plan plan;
  double objective = 0.0;
  std::vector<double> iterates;
};

namespace soldetail {

// Splits below this floor (or above one minus it) would blow up the
// compute-energy and forwarding-exponent denominators, so solver outputs are
// kept strictly inside the unit interval.
constexpr double kRhoFloor = 1e-3;

// Relative headroom each block restores on the constraints it owns. Blocks
// hand each other exactly-binding plans otherwise, and interior-point
// tolerance then makes the incumbent look infeasible to the next block.
// Must stay below the validate_plan tolerance.
constexpr double kFeasPad = 1e-6;

inline double clamp_rho(double rho) {
  return std::clamp(rho, kRhoFloor, 1.0 - kRhoFloor);
}

inline const conic::ConicSolution& require_usable(const conic::ConicSolution& sol,
                                                  const std::string& what) {
  if (sol.status == conic::SolveStatus::optimal ||
      sol.status == conic::SolveStatus::inaccurate)
    return sol;
  if (sol.status == conic::SolveStatus::infeasible)
    throw InfeasibleError(what + ": infeasible (" + sol.message + ")");
  throw SolveError(what + ": solver returned " +
                   std::string(conic::to_string(sol.status)) + " (" +
                   sol.message + ")");
}

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

// Coefficients multiplying the norm and eigenvalue auxiliaries in the
// certificate row; must stay in lockstep with bti_slack.
inline std::pair<double, double> certificate_coefficients(double eps,
                                                          bool standard) {
  const double lg = -std::log(eps);
  if (standard) return {std::sqrt(2.0 * lg), lg};
  return {2.0 * std::sqrt(lg), 2.0 * lg};
}

// Adds t >= u^3 for u >= 0 through two rotated cones and one auxiliary:
// r >= u^2 and t*u >= r^2. Callers should scale u to order one.
inline void add_cubic_epigraph(conic::ConicProgram& prog, conic::LinExpr t,
                               conic::LinExpr u) {
  const auto r = conic::LinExpr::variable(prog.add_var());
  prog.add_rsoc(r * 0.5, 1.0, {u});
  prog.add_rsoc(t * 0.5, std::move(u), {r});
}

// Bits node k can push to the relay in slot n when it owns the whole uplink
// share, at the plan's waypoint, power and split.
inline double offload_capacity_bits(const ScenarioConfig& cfg, const Plan& plan,
                                    int n, int k) {
  const double h =
      ground_air_gain(plan.q[n + 1], cfg.node_positions[k], cfg.beta0);
  const double snr = plan.p(n, k) * h / cfg.sigma0_sq;
  return plan.rho[n] * cfg.slot_duration() * cfg.B1 * std::log2(1.0 + snr);
}

// Deterministic margin of the certificate row at zero forwarded bits. The
// norm and eigenvalue auxiliaries sit at their lower bounds when the beam is
// fixed, so the whole row folds into this one constant: a load L is
// certifiable iff 2^{exp_rate * L} <= margin. In non-robust mode the margin
// is simply one plus the SNR at the nominal channel.
inline double certificate_margin(const ScenarioConfig& cfg,
                                 const SatLinkNominal& link,
                                 const Eigen::MatrixXcd& W, double rho,
                                 double eps, const ScaSettings& settings) {
  const QuadSurrogate surr = quad_surrogate(W, link.g_hat);
  if (settings.nonrobust) return 1.0 + std::max(0.0, surr.zsum);
  const BernsteinBlock blk =
      bernstein_block(surr, cfg.varrho, 0.0, rho, cfg, eps);
  return bti_slack(blk, settings.standard_coefficients) + 1.0;
}

// Per-slot bit budgets with the beam, split, powers and waypoints all fixed.
struct OffloadCaps {
  Eigen::MatrixXd rate;      // uplink bits if node k owns slot n
  Eigen::VectorXd comp;      // edge-compute bit budget
  Eigen::VectorXd fwd;       // certified forwardable bits
  Eigen::VectorXd margin;    // certificate margin at zero load
  Eigen::VectorXd exp_rate;  // certificate exponent per forwarded bit
};

inline OffloadCaps offload_caps(const ScenarioConfig& cfg, const Plan& plan,
                                const std::vector<SatLinkNominal>& links,
                                const ScaSettings& settings) {
  const int N = cfg.N;
  const int K = cfg.K;
  const double dt = cfg.slot_duration();
  OffloadCaps caps;
  caps.rate.resize(N, K);
  caps.comp.resize(N);
  caps.fwd.resize(N);
  caps.margin.resize(N);
  caps.exp_rate.resize(N);
  for (int n = 0; n < N; ++n) {
    const double rho = plan.rho[n];
    for (int k = 0; k < K; ++k)
      caps.rate(n, k) = offload_capacity_bits(cfg, plan, n, k);
    caps.comp[n] = std::max(0.0, rho * dt * cfg.f_max / cfg.c0);
    // Budget one pad under the beam's certificate. The split consumes the
    // same derated budget, so whatever this block packs stays feasible there,
    // and the beam pass can re-certify the result with the pad on top without
    // asking for more power than the incumbent beam already spends.
    const double raw = certificate_margin(cfg, links[n], plan.W[n], rho,
                                          cfg.eps[n], settings);
    caps.margin[n] = 1.0 + (raw - 1.0) / (1.0 + kFeasPad);
    if (rho < 1.0 - 1e-12) {
      caps.exp_rate[n] = cfg.o / (dt * (1.0 - rho) * cfg.B2);
      caps.fwd[n] = caps.margin[n] > 1.0
                        ? std::log2(caps.margin[n]) / caps.exp_rate[n]
                        : 0.0;
    } else {
      caps.exp_rate[n] = std::numeric_limits<double>::infinity();
      caps.fwd[n] = 0.0;
    }
  }
  return caps;
}

inline void check_links(const ScenarioConfig& cfg,
                        const std::vector<SatLinkNominal>& links,
                        const char* who) {
  if (static_cast<int>(links.size()) != cfg.N)
    throw std::invalid_argument(std::string(who) +
                                ": need one link realization per slot");
  for (const auto& l : links)
    if (l.g_hat.size() != cfg.M)
      throw std::invalid_argument(std::string(who) +
                                  ": link vector length != M");
}

}  // namespace soldetail

/// Fixes the per-slot schedule to the strongest relaxed entry (ties resolved
/// toward the lowest node index) and re-solves the data amounts so demand,
/// compute, uplink and certified forwarding budgets hold again.
inline SubResult round_schedule(const ScenarioConfig& cfg,
                                const Eigen::MatrixXd& chi_relaxed,
                                const Plan& plan,
                                const std::vector<SatLinkNominal>& links,
                                const ScaSettings& settings = {}) {
  const int N = cfg.N;
  const int K = cfg.K;
  if (chi_relaxed.rows() != N || chi_relaxed.cols() != K)
    throw std::invalid_argument("round_schedule: chi has wrong shape");
  soldetail::check_links(cfg, links, "round_schedule");
  const double dt = cfg.slot_duration();
  const auto caps =
      soldetail::offload_caps(cfg, plan, links, settings);

  std::vector<int> owner(N);
  for (int n = 0; n < N; ++n) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (chi_relaxed(n, k) > chi_relaxed(n, best)) best = k;
    owner[n] = best;
  }

  // A node's demand must fit into the slots it now owns. The bound matches
  // the demand rows below, so a pass here means the repair program has a
  // feasible point.
  for (int k = 0; k < K; ++k) {
    double reach = 0.0;
    for (int n = 0; n < N; ++n)
      if (owner[n] == k)
        reach += std::min(caps.rate(n, k), std::min(caps.comp[n], caps.fwd[n]));
    if (reach < cfg.D[k] * (1.0 - 0.1 * soldetail::kFeasPad) - 1e-9)
      throw InfeasibleError(
          "round_schedule: demand of node " + std::to_string(k + 1) +
          " infeasible after rounding (" + soldetail::fmt(reach) + " of " +
          soldetail::fmt(cfg.D[k]) + " bits reachable)");
  }

  // Data repair: spread each node's bits over its slots so the cubic compute
  // energy is smallest while every per-slot budget still holds.
  conic::ConicProgram prog;
  const double Ls = std::max(1.0, cfg.D.size() > 0 ? cfg.D.maxCoeff() : 1.0);
  std::vector<int> lv(N, -1);
  conic::LinExpr obj;
  for (int n = 0; n < N; ++n) {
    const int k = owner[n];
    const double cap = std::min(caps.rate(n, k), std::min(caps.comp[n], caps.fwd[n]));
    if (cap <= 0.0) continue;
    lv[n] = prog.add_var("l[" + std::to_string(n) + "]");
    const auto l = conic::LinExpr::variable(lv[n]);
    prog.add_ineq(l);
    prog.add_ineq(conic::LinExpr(std::min(caps.rate(n, k), caps.comp[n]) / Ls) - l);
    if (caps.fwd[n] < caps.comp[n]) {
      const auto e = conic::LinExpr::variable(prog.add_var());
      prog.add_expcone(l * (std::log(2.0) * caps.exp_rate[n] * Ls), 1.0, e);
      prog.add_ineq(conic::LinExpr(caps.margin[n]) - e);
    }
    const double S = caps.comp[n];  // bits, > 0 here
    const double kappa =
        cfg.gamma * cube(cfg.c0 * S) / sq(dt * plan.rho[n]);
    const auto t = conic::LinExpr::variable(prog.add_var());
    soldetail::add_cubic_epigraph(prog, t, l * (Ls / S));
    obj += t * (cfg.eta1 * kappa);
  }
  for (int k = 0; k < K; ++k) {
    conic::LinExpr got(-cfg.D[k] * (1.0 - 0.1 * soldetail::kFeasPad) / Ls);
    for (int n = 0; n < N; ++n)
      if (owner[n] == k && lv[n] >= 0) got += conic::LinExpr::variable(lv[n]);
    prog.add_ineq(got);
  }
  prog.minimize(obj);
  const auto sol = soldetail::require_usable(
      conic::solve(prog, settings.conic), "round_schedule repair");

  SubResult out;
  out.plan = plan;
  out.plan.chi.setZero();
  out.plan.l.setZero();
  for (int n = 0; n < N; ++n) {
    out.plan.chi(n, owner[n]) = 1.0;
    if (lv[n] >= 0)
      out.plan.l(n, owner[n]) = std::max(0.0, sol.x[lv[n]] * Ls);
  }
  // Trim any over-delivery back onto the demand (excess is wasted compute
  // energy the cubic cost is too flat to push out on its own; a zero-demand
  // node sheds solver residue the same way). Never scale up: that would push
  // slots past the certified forwarding cap the later blocks budget against,
  // and the sliver of undershoot the demand rows allow stays well inside the
  // plan tolerance.
  for (int k = 0; k < K; ++k) {
    const double got = out.plan.l.col(k).sum();
    if (got > cfg.D[k]) out.plan.l.col(k) *= cfg.D[k] / got;
  }
  out.objective = energy_offload(cfg, out.plan) +
                  cfg.eta1 * energy_compute(cfg, out.plan);
  out.iterates = {out.objective};
  return out;
}

/// Reassigns the uplink schedule and per-slot data amounts with waypoints,
/// powers, splits and beams held fixed. Solves the continuous relaxation of
/// the one-node-per-slot rule as a single conic program (linear offload
/// energy, cubic compute energy epigraph, certified forwarding budget through
/// an exponential cone), then restores a binary schedule via round_schedule.
inline SubResult solve_offload_schedule(const ScenarioConfig& cfg,
                                        const Plan& plan,
                                        const std::vector<SatLinkNominal>& links,
                                        const ScaSettings& settings = {}) {
  const int N = cfg.N;
  const int K = cfg.K;
  soldetail::check_links(cfg, links, "solve_offload_schedule");
  const double dt = cfg.slot_duration();
  const auto caps =
      soldetail::offload_caps(cfg, plan, links, settings);

  // Ignoring slot competition, every node must still be able to reach its
  // demand; this turns an opaque infeasible status into a named culprit.
  for (int k = 0; k < K; ++k) {
    double reach = 0.0;
    for (int n = 0; n < N; ++n)
      reach += std::min(caps.rate(n, k), std::min(caps.comp[n], caps.fwd[n]));
    if (reach < cfg.D[k] * (1.0 - 0.1 * soldetail::kFeasPad) - 1e-9)
      throw InfeasibleError(
          "solve_offload_schedule: demand of node " + std::to_string(k + 1) +
          " cannot be met (" + soldetail::fmt(reach) + " of " +
          soldetail::fmt(cfg.D[k]) + " bits reachable)");
  }

  conic::ConicProgram prog;
  const double Ls = std::max(1.0, cfg.D.size() > 0 ? cfg.D.maxCoeff() : 1.0);
  Eigen::MatrixXi chi_idx(N, K), l_idx(N, K);
  conic::LinExpr obj;
  for (int n = 0; n < N; ++n) {
    conic::LinExpr chi_sum(-1.0);
    conic::LinExpr load;
    const bool movable = caps.comp[n] > 0.0 && caps.margin[n] > 1.0 + 1e-12;
    for (int k = 0; k < K; ++k) {
      chi_idx(n, k) = prog.add_var("chi[" + std::to_string(n) + "][" +
                                   std::to_string(k) + "]");
      const auto chi = conic::LinExpr::variable(chi_idx(n, k));
      prog.add_ineq(chi);
      chi_sum += chi;
      obj += chi * (plan.rho[n] * dt * plan.p(n, k));
      l_idx(n, k) = -1;
      if (!movable || caps.rate(n, k) <= 0.0) continue;
      l_idx(n, k) = prog.add_var("l[" + std::to_string(n) + "][" +
                                 std::to_string(k) + "]");
      const auto l = conic::LinExpr::variable(l_idx(n, k));
      prog.add_ineq(l);
      prog.add_ineq(chi * (caps.rate(n, k) / Ls) - l);
      load += l;
    }
    prog.add_eq(chi_sum);
    if (!movable) continue;
    prog.add_ineq(conic::LinExpr(caps.comp[n] / Ls) - load);
    if (caps.fwd[n] < caps.comp[n]) {
      const auto e = conic::LinExpr::variable(prog.add_var());
      prog.add_expcone(load * (std::log(2.0) * caps.exp_rate[n] * Ls), 1.0, e);
      prog.add_ineq(conic::LinExpr(caps.margin[n]) - e);
    }
    const double S = caps.comp[n];
    const double kappa = cfg.gamma * cube(cfg.c0 * S) / sq(dt * plan.rho[n]);
    const auto t = conic::LinExpr::variable(prog.add_var());
    soldetail::add_cubic_epigraph(prog, t, load * (Ls / S));
    obj += t * (cfg.eta1 * kappa);
  }
  for (int k = 0; k < K; ++k) {
    conic::LinExpr got(-cfg.D[k] * (1.0 - 0.1 * soldetail::kFeasPad) / Ls);
    for (int n = 0; n < N; ++n)
      if (l_idx(n, k) >= 0) got += conic::LinExpr::variable(l_idx(n, k));
    prog.add_ineq(got);
  }
  prog.minimize(obj);
  const auto sol = soldetail::require_usable(
      conic::solve(prog, settings.conic), "solve_offload_schedule relaxation");

  Eigen::MatrixXd chi_rel(N, K);
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k)
      chi_rel(n, k) = std::clamp(sol.x[chi_idx(n, k)], 0.0, 1.0);

  try {
    SubResult out = round_schedule(cfg, chi_rel, plan, links, settings);
    out.iterates.insert(out.iterates.begin(), sol.objective);
    return out;
  } catch (const InfeasibleError&) {
    // Plain rounding starved a node whose relaxed share was small everywhere.
    // Reassign slots greedily, largest usable capacity first, donors only if
    // their own demand stays covered, then repair on the fixed schedule.
  }
  std::vector<int> owner(N);
  for (int n = 0; n < N; ++n) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (chi_rel(n, k) > chi_rel(n, best)) best = k;
    owner[n] = best;
  }
  const auto cap = [&](int n, int k) {
    return std::min(caps.rate(n, k), std::min(caps.comp[n], caps.fwd[n]));
  };
  Eigen::VectorXd reach = Eigen::VectorXd::Zero(K);
  for (int n = 0; n < N; ++n) reach[owner[n]] += cap(n, owner[n]);
  for (int guard = 0; guard < N * K; ++guard) {
    int worst = -1;
    double worst_gap = 1e-9;
    for (int k = 0; k < K; ++k) {
      const double gap = cfg.D[k] - reach[k];
      if (gap > std::max(worst_gap, 1e-9 * cfg.D[k])) {
        worst = k;
        worst_gap = gap;
      }
    }
    if (worst < 0) break;
    int pick = -1;
    double pick_cap = 0.0;
    for (int n = 0; n < N; ++n) {
      const int j = owner[n];
      if (j == worst || cap(n, worst) <= 0.0) continue;
      if (reach[j] - cap(n, j) < cfg.D[j]) continue;
      if (cap(n, worst) > pick_cap) {
        pick = n;
        pick_cap = cap(n, worst);
      }
    }
    if (pick < 0)
      throw InfeasibleError(
          "solve_offload_schedule: demand of node " + std::to_string(worst + 1) +
          " cannot be met by any rounding of the relaxed schedule");
    reach[owner[pick]] -= cap(pick, owner[pick]);
    reach[worst] += pick_cap;
    owner[pick] = worst;
  }
  Eigen::MatrixXd chi_fix = Eigen::MatrixXd::Zero(N, K);
  for (int n = 0; n < N; ++n) chi_fix(n, owner[n]) = 1.0;
  SubResult out = round_schedule(cfg, chi_fix, plan, links, settings);
  out.iterates.insert(out.iterates.begin(), sol.objective);
  return out;
}

/// Re-optimizes the per-slot offload/forward time split with everything else
/// fixed. The forwarding requirement couples the split to the certificate row
/// through 2^{c/(1-rho)}; by default that composition is imposed exactly with
/// an auxiliary t >= 1/(1-rho) (rotated cone) feeding an exponential cone.
/// With iterate_time_split set, the 1/(1-rho) factor is instead replaced by
/// its tangent at the current split and re-solved until the objective stops
/// moving; fixed points of that iteration satisfy the exact constraint.
inline SubResult solve_time_split(const ScenarioConfig& cfg, const Plan& plan,
                                  const std::vector<SatLinkNominal>& links,
                                  const ScaSettings& settings = {}) {
  const int N = cfg.N;
  const int K = cfg.K;
  soldetail::check_links(cfg, links, "solve_time_split");
  const double dt = cfg.slot_duration();

  Eigen::VectorXd load(N), lo(N), hi(N), margin(N), cexp(N), slope(N);
  Eigen::VectorXd rho_fix = plan.rho;
  std::vector<bool> pinned(N, false);
  for (int n = 0; n < N; ++n) {
    load[n] = plan.l.row(n).sum();
    cexp[n] = cfg.o * load[n] / (dt * cfg.B2);
    slope[n] = dt * plan.chi.row(n).dot(plan.p.row(n)) -
               cfg.eta1 * dt * plan.W[n].real().trace();
    double bound = soldetail::kRhoFloor;
    bound = std::max(bound, cfg.c0 * load[n] / (dt * cfg.f_max));
    for (int k = 0; k < K; ++k) {
      if (plan.l(n, k) <= 1e-9) continue;
      if (plan.chi(n, k) <= 1e-9)
        throw InfeasibleError("solve_time_split: slot " + std::to_string(n + 1) +
                              " carries data for an unscheduled node");
      const double h =
          ground_air_gain(plan.q[n + 1], cfg.node_positions[k], cfg.beta0);
      const double per_rho =
          plan.chi(n, k) * dt * cfg.B1 *
          std::log2(1.0 + plan.p(n, k) * h / cfg.sigma0_sq);
      if (per_rho <= 0.0)
        throw InfeasibleError("solve_time_split: slot " + std::to_string(n + 1) +
                              " has data but zero uplink rate");
      bound = std::max(bound, plan.l(n, k) / per_rho);
    }
    lo[n] = bound;
    hi[n] = 1.0 - soldetail::kRhoFloor;
    // Budget one pad under the beam's certificate so the beam pass can
    // re-certify whatever split comes out without growing its power. The
    // schedule packed against the same derated budget, so the incumbent
    // split sits inside the window up to solver roundoff.
    const double raw = soldetail::certificate_margin(
        cfg, links[n], plan.W[n], plan.rho[n], cfg.eps[n], settings);
    margin[n] = 1.0 + (raw - 1.0) / (1.0 + soldetail::kFeasPad);
    if (load[n] > 1e-9) {
      if (margin[n] <= 1.0)
        throw InfeasibleError("solve_time_split: slot " + std::to_string(n + 1) +
                              " cannot certify its forwarded bits at any split");
      const double hi_fwd = 1.0 - cexp[n] / std::log2(margin[n]);
      if (lo[n] > std::min(hi_fwd, hi[n]) + 1e-6)
        throw InfeasibleError(
            "solve_time_split: slot " + std::to_string(n + 1) +
            " has no feasible split (uplink/compute need rho >= " +
            soldetail::fmt(lo[n]) + ", forwarding allows at most " +
            soldetail::fmt(hi_fwd) + ")");
      hi[n] = std::min(hi[n], hi_fwd);
    }
    if (lo[n] > 1.0 - soldetail::kRhoFloor)
      throw InfeasibleError("solve_time_split: slot " + std::to_string(n + 1) +
                            " needs rho >= " + soldetail::fmt(lo[n]));
    // When the other blocks solved to binding, the headroom they restore
    // (kFeasPad) is all the room this slot has left; roundoff can even invert
    // the box. A box that tight has nothing worth optimizing and destabilizes
    // the interior-point step, so hold the slot at its incumbent split.
    if (hi[n] < lo[n]) hi[n] = lo[n];
    if (hi[n] - lo[n] < 1e-4) {
      pinned[n] = true;
      rho_fix[n] = std::clamp(plan.rho[n], lo[n], hi[n]);
    }
  }

  // One pass of the program; tangent mode swaps the cone composition for a
  // linear-in-rho exponent around rho0 and gets called repeatedly.
  const auto solve_pass = [&](const Eigen::VectorXd* rho0) {
    conic::ConicProgram prog;
    std::vector<int> rv(N, -1);
    conic::LinExpr obj;
    for (int n = 0; n < N; ++n) {
      if (pinned[n]) continue;
      rv[n] = prog.add_var("rho[" + std::to_string(n) + "]");
      const auto rho = conic::LinExpr::variable(rv[n]);
      prog.add_ineq(rho - lo[n]);
      prog.add_ineq(conic::LinExpr(1.0 - soldetail::kRhoFloor) - rho);
      obj += rho * slope[n];
      if (load[n] <= 1e-9) continue;
      const auto psi = conic::LinExpr::variable(prog.add_var());
      prog.add_ineq(psi);
      prog.add_ineq(conic::LinExpr(margin[n] - 1.0) - psi);
      conic::LinExpr arg;
      if (rho0 == nullptr) {
        const auto t = conic::LinExpr::variable(prog.add_var());
        prog.add_rsoc(t, conic::LinExpr(1.0) - rho, {std::sqrt(2.0)});
        arg = t * (std::log(2.0) * cexp[n]);
      } else {
        const double r0 = (*rho0)[n];
        arg = (conic::LinExpr(1.0 - 2.0 * r0) +
               conic::LinExpr::variable(rv[n])) *
              (std::log(2.0) * cexp[n] / sq(1.0 - r0));
      }
      prog.add_expcone(arg, 1.0, psi + 1.0);
    }
    prog.minimize(obj);
    const auto sol = soldetail::require_usable(conic::solve(prog, settings.conic),
                                               "solve_time_split");
    Eigen::VectorXd rho = rho_fix;
    for (int n = 0; n < N; ++n)
      if (rv[n] >= 0) rho[n] = std::clamp(sol.x[rv[n]], lo[n], hi[n]);
    return rho;
  };

  SubResult out;
  out.plan = plan;
  const auto objective_at = [&](const Plan& p) {
    return energy_offload(cfg, p) + cfg.eta1 * energy_forward(cfg, p);
  };
  if (std::all_of(pinned.begin(), pinned.end(), [](bool b) { return b; })) {
    out.plan.rho = rho_fix;
    out.objective = objective_at(out.plan);
    out.iterates = {out.objective};
    return out;
  }
  if (!settings.iterate_time_split) {
    out.plan.rho = solve_pass(nullptr);
    out.objective = objective_at(out.plan);
    out.iterates = {out.objective};
    return out;
  }
  Eigen::VectorXd rho0 = plan.rho.cwiseMax(lo).cwiseMin(1.0 - soldetail::kRhoFloor);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < std::max(1, settings.max_iters); ++it) {
    out.plan.rho = solve_pass(&rho0);
    out.objective = objective_at(out.plan);
    out.iterates.push_back(out.objective);
    if (std::abs(prev - out.objective) <=
        settings.tol * std::max(1.0, std::abs(prev)))
      break;
    prev = out.objective;
    rho0 = out.plan.rho;
  }
  return out;
}

namespace soldetail {

// One slot of the beam subproblem: a penalized semidefinite program driven
// toward a rank-one beam. psi_req is the forwarding SNR the certificate row
// must clear. Returns the rank-one extraction lambda_max * w w^H.
inline Eigen::MatrixXcd beamforming_slot(const ScenarioConfig& cfg,
                                         const SatLinkNominal& link, double rho,
                                         double psi_req,
                                         const Eigen::MatrixXcd& W_init,
                                         const ScaSettings& settings,
                                         int slot_1based,
                                         std::vector<double>* trace_out) {
  const int M = cfg.M;
  const double xi = cfg.varrho;
  // Aim a hair above the requirement so the returned beam certifies it with
  // headroom; downstream blocks rely on that slack (see kFeasPad).
  const double psi_target = psi_req * (1.0 + kFeasPad);
  const auto [cx, cy] = certificate_coefficients(
      cfg.eps[slot_1based - 1], settings.standard_coefficients);
  const Eigen::MatrixXcd C =
      link.g_hat.conjugate() * link.g_hat.transpose();  // C(i,j) = conj(g_i) g_j

  // Subgradient direction: dominant eigenvector of the previous beam, or the
  // matched filter when starting from nothing.
  Eigen::VectorXcd dir;
  if (W_init.size() == M * M && W_init.cwiseAbs().maxCoeff() > 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(W_init);
    dir = es.eigenvectors().col(M - 1);
  } else {
    dir = link.g_hat / link.g_hat.norm();
  }

  double zeta = settings.zeta0 < 0.0 ? 10.0 * cfg.eta1 : settings.zeta0;
  const std::string where =
      "solve_beamforming slot " + std::to_string(slot_1based);

  const auto build_and_solve = [&](bool min_power) {
    conic::ConicProgram prog;
    Eigen::MatrixXi ia(M, M);
    Eigen::MatrixXi ib(M, M);
    for (int i = 0; i < M; ++i)
      for (int j = i; j < M; ++j) {
        ia(i, j) = ia(j, i) = prog.add_var("A[" + std::to_string(i) + "][" +
                                           std::to_string(j) + "]");
        if (j > i)
          ib(i, j) = ib(j, i) = prog.add_var("B[" + std::to_string(i) + "][" +
                                             std::to_string(j) + "]");
      }
    const int xv = settings.nonrobust ? -1 : prog.add_var("x");
    const int yv = settings.nonrobust ? -1 : prog.add_var("y");
    const auto Ae = [&](int i, int j) {
      return conic::LinExpr::variable(ia(i, j));
    };
    const auto Be = [&](int i, int j) -> conic::LinExpr {
      if (i == j) return conic::LinExpr(0.0);
      return conic::LinExpr::variable(ib(i, j), i < j ? 1.0 : -1.0);
    };
    const auto Xe = [&](int i, int j) {
      return Ae(i, j) * C(i, j).real() - Be(i, j) * C(i, j).imag();
    };
    const auto Ye = [&](int i, int j) {
      return Be(i, j) * C(i, j).real() + Ae(i, j) * C(i, j).imag();
    };
    const auto Qe = [&](int i, int j) {
      conic::LinExpr e = Xe(i, j);
      if (i == j)
        for (int m = 0; m < M; ++m) e -= Xe(i, m);
      return e * (xi * xi);
    };

    // Lifted beam stays positive semidefinite (real embedding of A + iB).
    std::vector<conic::LinExpr> emb(4 * M * M);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) {
        emb[i * 2 * M + j] = Ae(i, j);
        emb[i * 2 * M + (M + j)] = -Be(i, j);
        emb[(M + i) * 2 * M + j] = Be(i, j);
        emb[(M + i) * 2 * M + (M + j)] = Ae(i, j);
      }
    prog.add_psd(2 * M, emb);

    if (!settings.nonrobust) {
      // Eigenvalue auxiliary: y I + Q is positive semidefinite.
      std::vector<conic::LinExpr> shift(M * M);
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) {
          shift[i * M + j] = Qe(i, j);
          if (i == j) shift[i * M + j] += conic::LinExpr::variable(yv);
        }
      prog.add_psd(M, shift);
      prog.add_ineq(conic::LinExpr::variable(yv));

      // Norm auxiliary: x bounds the Frobenius norm of Q stacked with the
      // scaled linear term.
      std::vector<conic::LinExpr> soc;
      soc.push_back(conic::LinExpr::variable(xv));
      for (int i = 0; i < M; ++i) soc.push_back(Qe(i, i));
      for (int i = 0; i < M; ++i)
        for (int j = i + 1; j < M; ++j) soc.push_back(Qe(i, j) * std::sqrt(2.0));
      for (int i = 0; i < M; ++i) {
        conic::LinExpr r;
        for (int j = 0; j < M; ++j) r += Ye(i, j);
        soc.push_back(r * (xi * std::sqrt(2.0)));
      }
      prog.add_soc(std::move(soc));
    }

    // Threshold row: the certificate margin (or, non-robust, the nominal
    // SNR alone) must clear the forwarding requirement.
    conic::LinExpr row(-psi_target);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) row += Xe(i, j);
    if (!settings.nonrobust) {
      for (int i = 0; i < M; ++i) row += Qe(i, i);
      row -= conic::LinExpr::variable(xv, cx);
      row -= conic::LinExpr::variable(yv, cy);
    }
    prog.add_ineq(row);

    conic::LinExpr power;
    for (int i = 0; i < M; ++i) power += Ae(i, i);
    if (!min_power)
      prog.add_ineq(conic::LinExpr(cfg.p_uav_max) - power);

    if (min_power) {
      prog.minimize(power);
    } else {
      const Eigen::MatrixXcd P = dir * dir.adjoint();
      conic::LinExpr inner;
      for (int i = 0; i < M; ++i) inner += Ae(i, i) * P(i, i).real();
      for (int i = 0; i < M; ++i)
        for (int j = i + 1; j < M; ++j)
          inner += (Ae(i, j) * P(i, j).real() + Be(i, j) * P(i, j).imag()) * 2.0;
      prog.minimize(power * (cfg.eta1 * ((1.0 - rho) * cfg.slot_duration() + zeta)) -
                    inner * (cfg.eta1 * zeta));
    }
    auto sol = conic::solve(prog, settings.conic);
    Eigen::MatrixXcd W(M, M);
    if (sol.status == conic::SolveStatus::optimal ||
        sol.status == conic::SolveStatus::inaccurate) {
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) {
          const double a = sol.x[ia(i, j)];
          const double b = i == j ? 0.0 : (i < j ? 1.0 : -1.0) * sol.x[ib(std::min(i, j), std::max(i, j))];
          W(i, j) = std::complex<double>(a, b);
        }
      W = 0.5 * (W + W.adjoint().eval());
    }
    return std::make_pair(std::move(sol), std::move(W));
  };

  double prev_resid = std::numeric_limits<double>::infinity();
  Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(M, M);
  bool solved = false;
  for (int it = 0; it < std::max(1, settings.max_iters); ++it) {
    auto [sol, Wit] = build_and_solve(false);
    if (sol.status != conic::SolveStatus::optimal &&
        sol.status != conic::SolveStatus::inaccurate) {
      if (solved) break;  // keep the last usable penalty iterate
      // A pinned split consumes the incumbent certificate exactly, leaving a
      // program that is feasible only on its boundary; the interior-point
      // method can misreport that as infeasible. Keep the incumbent beam
      // when it already clears the raw requirement within budget.
      if (W_init.size() == M * M && psi_req > 0.0) {
        const double have =
            certificate_margin(cfg, link, W_init, rho,
                               cfg.eps[slot_1based - 1], settings) -
            1.0;
        if (have >= psi_req * (1.0 - 1e-9) &&
            W_init.real().trace() <= cfg.p_uav_max * (1.0 + kFeasPad)) {
          W = W_init;
          solved = true;
          break;
        }
      }
      if (sol.status == conic::SolveStatus::infeasible) {
        auto [cert, Wc] = build_and_solve(true);
        if (cert.status == conic::SolveStatus::optimal ||
            cert.status == conic::SolveStatus::inaccurate)
          throw InfeasibleError(where + ": certified forwarding needs " +
                                fmt(cert.objective) +
                                " W of beam power, budget is " +
                                fmt(cfg.p_uav_max) + " W");
        throw InfeasibleError(where +
                              ": forwarding threshold unreachable at any power");
      }
      require_usable(sol, where);
    }
    W = Wit;
    solved = true;
    if (trace_out) trace_out->push_back(sol.objective);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(W);
    const double tr = std::max(W.real().trace(), 0.0);
    const double lam = std::max(es.eigenvalues()[M - 1], 0.0);
    const double resid = tr > 1e-12 ? (tr - lam) / tr : 0.0;
    dir = es.eigenvectors().col(M - 1);
    if (resid <= settings.rank_tol) break;
    if (resid > 0.9 * prev_resid)
      zeta = std::min(zeta * settings.zeta_growth, 1e9);
    prev_resid = resid;
  }
  if (!solved) throw SolveError(where + ": no usable iterate");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(W);
  const double lam = std::max(es.eigenvalues()[M - 1], 0.0);
  if (lam <= 0.0) return Eigen::MatrixXcd::Zero(M, M);
  const Eigen::VectorXcd w = es.eigenvectors().col(M - 1);
  Eigen::MatrixXcd Wout = lam * (w * w.adjoint());
  // The rank-one projection loses a little margin and the solver leaves a
  // little slack. The margin is linear in the beam scale, so snap it back
  // onto the padded requirement exactly; the power cap wins a collision.
  if (psi_req > 0.0) {
    const double got = certificate_margin(cfg, link, Wout, rho,
                                          cfg.eps[slot_1based - 1], settings) -
                       1.0;
    if (got > 0.0) {
      double c = psi_target / got;
      if (lam * c > cfg.p_uav_max) c = cfg.p_uav_max / lam;
      Wout *= c;
    }
  }
  return Wout;
}

}  // namespace soldetail

/// Redesigns the per-slot downlink beams with schedule, data and splits held
/// fixed. Each slot is an independent semidefinite program over the lifted
/// beam; a growing penalty on trace(W) - lambda_max(W) (linearized through
/// the dominant eigenvector) drives the lifted beam to rank one, and the
/// result is extracted as lambda_max * w w^H.
inline SubResult solve_beamforming(const ScenarioConfig& cfg, const Plan& plan,
                                   const std::vector<SatLinkNominal>& links,
                                   const ScaSettings& settings = {}) {
  const int N = cfg.N;
  soldetail::check_links(cfg, links, "solve_beamforming");
  const double dt = cfg.slot_duration();

  SubResult out;
  out.plan = plan;
  for (int n = 0; n < N; ++n) {
    const double load = plan.l.row(n).sum();
    if (load <= 1e-9) {
      out.plan.W[n].setZero();
      continue;
    }
    const double rho = soldetail::clamp_rho(plan.rho[n]);
    const double psi_req =
        std::exp2(cfg.o * load / (dt * (1.0 - rho) * cfg.B2)) - 1.0;
    out.plan.W[n] = soldetail::beamforming_slot(
        cfg, links[n], rho, psi_req, plan.W[n], settings, n + 1, &out.iterates);
  }
  out.objective = cfg.eta1 * energy_forward(cfg, out.plan);
  return out;
}

/// Re-plans the waypoints and uplink powers with schedule, data, splits and
/// beams held fixed. The propulsion energy is handled through per-slot
/// epigraph variables (quadratic and cubic distance terms plus the induced
/// slack z); the one nonconvex row couples z to the slot displacement and is
/// linearized at the current iterate, which keeps every iterate feasible and
/// the objective non-increasing. Uplink demands enter as joint power/position
/// cones, and the propulsion total must fit both its epigraph and the budget.
inline SubResult solve_trajectory_power(const ScenarioConfig& cfg,
                                        const Plan& plan,
                                        const ScaSettings& settings = {}) {
  const int N = cfg.N;
  const int K = cfg.K;
  const double dt = cfg.slot_duration();
  const auto& pc = cfg.prop;
  const double vcap = cfg.V_max * dt;

  // Demanded uplink SNR per scheduled slot; fixed by chi, l, rho.
  Eigen::MatrixXd snr_req = Eigen::MatrixXd::Zero(N, K);
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      if (plan.l(n, k) <= 1e-9) continue;
      if (plan.chi(n, k) <= 1e-9)
        throw InfeasibleError("solve_trajectory_power: slot " +
                              std::to_string(n + 1) +
                              " carries data for an unscheduled node");
      const double rho = soldetail::clamp_rho(plan.rho[n]);
      snr_req(n, k) = std::exp2(plan.l(n, k) /
                                (plan.chi(n, k) * rho * dt * cfg.B1)) -
                      1.0;
      const double dz = plan.q[n + 1].z() - cfg.node_positions[k].z();
      if (snr_req(n, k) * cfg.sigma0_sq * dz * dz / cfg.beta0 >
          cfg.p_max * (1.0 + 1e-9))
        throw InfeasibleError(
            "solve_trajectory_power: slot " + std::to_string(n + 1) +
            " node " + std::to_string(k + 1) +
            " needs more than p_max even directly above the node");
    }

  // Induced-power slack at a given displacement, from the defining equality.
  const auto z_of = [&](double dist) {
    const double d2 = dist * dist / (2.0 * pc.v0 * pc.v0);
    return std::sqrt(
        std::max(std::sqrt(sq(sq(dt)) + d2 * d2) - d2, 0.0));
  };

  std::vector<Eigen::Vector3d> q0(plan.q);
  Eigen::VectorXd z0(N);
  for (int n = 0; n < N; ++n) z0[n] = z_of((q0[n + 1] - q0[n]).norm());

  SubResult out;
  out.plan = plan;
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int it = 0; it < std::max(1, settings.max_iters); ++it) {
    conic::ConicProgram prog;
    Eigen::MatrixXi qi(N + 1, 2);
    for (int n = 1; n < N; ++n) {
      qi(n, 0) = prog.add_var("qx[" + std::to_string(n) + "]");
      qi(n, 1) = prog.add_var("qy[" + std::to_string(n) + "]");
    }
    const auto qe = [&](int n, int axis) -> conic::LinExpr {
      if (n == 0) return conic::LinExpr(plan.q.front()[axis]);
      if (n == N) return conic::LinExpr(plan.q.back()[axis]);
      return conic::LinExpr::variable(qi(n, axis));
    };

    const int e4v = prog.add_var("E4");
    conic::LinExpr prop_sum;
    conic::LinExpr obj = conic::LinExpr::variable(e4v, cfg.eta2);
    for (int n = 1; n <= N; ++n) {
      const double dz = plan.q[n].z() - plan.q[n - 1].z();
      const conic::LinExpr dx = qe(n, 0) - qe(n - 1, 0);
      const conic::LinExpr dy = qe(n, 1) - qe(n - 1, 1);

      const auto delta = conic::LinExpr::variable(
          prog.add_var("delta[" + std::to_string(n) + "]"));
      prog.add_soc({delta, dx, dy, conic::LinExpr(dz)});
      prog.add_ineq(conic::LinExpr(vcap) - delta);

      const auto a = conic::LinExpr::variable(prog.add_var());
      prog.add_rsoc(a * 0.5, 1.0, {delta});
      const auto b = conic::LinExpr::variable(prog.add_var());
      soldetail::add_cubic_epigraph(prog, b, delta * (1.0 / vcap));
      const auto z = conic::LinExpr::variable(
          prog.add_var("z[" + std::to_string(n) + "]"));
      prop_sum += conic::LinExpr(pc.P0 * dt);
      prop_sum += a * (3.0 * pc.P0 / (sq(pc.U_tip) * dt));
      prop_sum += z * pc.Pi;
      prop_sum += b * (0.5 * pc.d0 * pc.rho_air * pc.s * pc.A * cube(vcap) / sq(dt));

      // Linearized coupling: the tangent of z^2 + |delta|^2/v0^2 at the
      // expansion point must still clear dt^4 / z^2 (imposed through two
      // rotated cones: c z >= dt^2, r >= c^2).
      const auto c = conic::LinExpr::variable(prog.add_var());
      prog.add_rsoc(c, z, {std::sqrt(2.0) * dt});
      const auto r = conic::LinExpr::variable(prog.add_var());
      prog.add_rsoc(r, 0.5, {c});
      const Eigen::Vector3d d0vec = q0[n] - q0[n - 1];
      const double z00 = std::max(z0[n - 1], 1e-9);
      conic::LinExpr lin(-z00 * z00 - d0vec.squaredNorm() / sq(pc.v0));
      lin += z * (2.0 * z00);
      lin += dx * (2.0 * d0vec.x() / sq(pc.v0));
      lin += dy * (2.0 * d0vec.y() / sq(pc.v0));
      lin += conic::LinExpr(dz * 2.0 * d0vec.z() / sq(pc.v0));
      prog.add_ineq(lin - r);
    }
    prog.add_ineq(conic::LinExpr::variable(e4v) - prop_sum);
    prog.add_ineq(conic::LinExpr(cfg.E_prop) - prop_sum);

    Eigen::MatrixXi pidx = Eigen::MatrixXi::Constant(N, K, -1);
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) {
        if (snr_req(n, k) <= 0.0) continue;
        pidx(n, k) = prog.add_var("p[" + std::to_string(n) + "][" +
                                  std::to_string(k) + "]");
        const auto p = conic::LinExpr::variable(pidx(n, k));
        prog.add_ineq(conic::LinExpr(cfg.p_max) - p);
        const double coef = cfg.beta0 / (snr_req(n, k) * cfg.sigma0_sq);
        const auto& w = cfg.node_positions[k];
        prog.add_rsoc(p * (0.5 * coef), 1.0,
                      {qe(n + 1, 0) - w.x(), qe(n + 1, 1) - w.y(),
                       conic::LinExpr(plan.q[n + 1].z() - w.z())});
        obj += p * (plan.chi(n, k) * plan.rho[n] * dt);
      }
    prog.minimize(obj);

    auto sol = conic::solve(prog, settings.conic);
    if (sol.status == conic::SolveStatus::infeasible && it == 0)
      throw InfeasibleError(
          "solve_trajectory_power: no feasible trajectory (propulsion budget "
          "or uplink demands too tight)");
    if (sol.status != conic::SolveStatus::optimal &&
        sol.status != conic::SolveStatus::inaccurate)
      break;  // keep the last accepted iterate
    if (sol.objective > prev_obj + 1e-7 * std::max(1.0, std::abs(prev_obj)))
      break;
    out.iterates.push_back(sol.objective);

    for (int n = 1; n < N; ++n) {
      out.plan.q[n].x() = sol.x[qi(n, 0)];
      out.plan.q[n].y() = sol.x[qi(n, 1)];
    }
    out.plan.p.setZero();
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k)
        if (pidx(n, k) >= 0)
          out.plan.p(n, k) = std::clamp(sol.x[pidx(n, k)], 0.0, cfg.p_max);

    const bool done = std::abs(prev_obj - sol.objective) <=
                      settings.tol * std::max(1.0, std::abs(prev_obj));
    prev_obj = sol.objective;
    q0 = out.plan.q;
    for (int n = 0; n < N; ++n) z0[n] = z_of((q0[n + 1] - q0[n]).norm());
    if (done) break;
  }
  if (out.iterates.empty())
    throw SolveError("solve_trajectory_power: no usable iterate");
  // Leave the uplink rows a hair above binding (see kFeasPad); the cone rows
  // only hold to solver tolerance.
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      if (snr_req(n, k) <= 0.0) continue;
      const double d2 =
          (out.plan.q[n + 1] - cfg.node_positions[k]).squaredNorm();
      const double need =
          snr_req(n, k) * cfg.sigma0_sq * d2 / cfg.beta0;
      out.plan.p(n, k) = std::min(
          cfg.p_max,
          std::max(out.plan.p(n, k), need * (1.0 + soldetail::kFeasPad)));
    }
  out.objective = energy_offload(cfg, out.plan) +
                  cfg.eta2 * energy_propulsion(cfg, out.plan);
  return out;
}

}  // namespace ntnopt
