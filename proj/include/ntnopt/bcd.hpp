#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ntnopt/common.hpp"
#include "ntnopt/energy.hpp"
#include "ntnopt/linkmodel.hpp"
#include "ntnopt/rng.hpp"
#include "ntnopt/scenario.hpp"
#include "ntnopt/solvers.hpp"

namespace ntnopt {

/// Outer-loop controls. The four block solvers share one ScaSettings.
struct BcdSettings {
  double eps0 = 1e-2;  // stop when the accepted total energy moves less [J]
  int max_outer = 30;
  // Accept a block update only if the full weighted energy does not grow.
  // The split subproblem prices offloading and forwarding but not the
  // rho-dependent compute energy, so without this guard a split update could
  // raise the total.
  bool safeguard = true;
  ScaSettings sub;
};

/// What happened inside one outer iteration, per block in solve order
/// (schedule, split, beams, trajectory).
struct BcdIteration {
  EnergyBreakdown energy;             // accepted plan after the full pass
  std::array<double, 4> objective{};  // block objective at its candidate
  std::array<double, 4> delta{};      // candidate total-energy change
  std::array<bool, 4> accepted{};
};

struct BcdTrace {
  std::vector<BcdIteration> iterations;
  // Weighted total of the accepted plan: entry 0 is the initial plan, one
  // more entry per outer iteration. Non-increasing by construction.
  std::vector<double> accepted_energy;
  double wall_seconds = 0.0;
};

struct BcdResult {
  Plan plan;
  EnergyBreakdown energy;
  BcdTrace trace;
};

/// Per-slot relay-to-satellite channel realizations for one mission: common
/// geometry, independent rain attenuation draws.
inline std::vector<SatLinkNominal> draw_links(const ScenarioConfig& cfg,
                                              RandomStream& rng) {
  std::vector<SatLinkNominal> links;
  links.reserve(cfg.N);
  for (int n = 0; n < cfg.N; ++n)
    links.push_back(nominal_link_vector(
        cfg, rain_gain_sample(rng, cfg.mu_rain_dB, cfg.sd_rain_dB)));
  return links;
}

namespace bcddetail {

// Nearest-neighbour tour over the node projections, q_start first and
// q_finish last, all at flight height.
inline std::vector<Eigen::Vector3d> tour_points(const ScenarioConfig& cfg) {
  std::vector<Eigen::Vector3d> pts = {cfg.q_start};
  std::vector<bool> used(cfg.K, false);
  for (int step = 0; step < cfg.K; ++step) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.K; ++k) {
      if (used[k]) continue;
      const double d =
          (cfg.node_positions[k].head<2>() - pts.back().head<2>()).norm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    used[best] = true;
    pts.emplace_back(cfg.node_positions[best].x(), cfg.node_positions[best].y(),
                     cfg.H);
  }
  pts.push_back(cfg.q_finish);
  return pts;
}

inline double polyline_length(const std::vector<Eigen::Vector3d>& pts) {
  double L = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) L += (pts[i] - pts[i - 1]).norm();
  return L;
}

// Point at arc position s along the polyline.
inline Eigen::Vector3d polyline_at(const std::vector<Eigen::Vector3d>& pts,
                                   double s) {
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = (pts[i] - pts[i - 1]).norm();
    if (s <= seg || i + 1 == pts.size()) {
      if (seg <= 0.0) return pts[i];
      return pts[i - 1] + (pts[i] - pts[i - 1]) * std::clamp(s / seg, 0.0, 1.0);
    }
    s -= seg;
  }
  return pts.back();
}

}  // namespace bcddetail

/// Waypoint seed: the nearest-neighbour tour resampled to N equal-time
/// segments. Detours get dropped farthest-first if the tour cannot be flown
/// within the speed limit.
inline std::vector<Eigen::Vector3d> init_trajectory(const ScenarioConfig& cfg) {
  std::vector<Eigen::Vector3d> pts = bcddetail::tour_points(cfg);
  while (bcddetail::polyline_length(pts) > cfg.V_max * cfg.T * (1.0 - 1e-9) &&
         pts.size() > 2) {
    std::size_t worst = 1;
    double worst_gain = -1.0;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
      const double gain = (pts[i] - pts[i - 1]).norm() +
                          (pts[i + 1] - pts[i]).norm() -
                          (pts[i + 1] - pts[i - 1]).norm();
      if (gain > worst_gain) {
        worst_gain = gain;
        worst = i;
      }
    }
    pts.erase(pts.begin() + worst);
  }
  const double L = bcddetail::polyline_length(pts);
  if (L > cfg.V_max * cfg.T * (1.0 + 1e-9))
    throw InfeasibleError("init_trajectory: endpoints " + soldetail::fmt(L) +
                          " m apart need more than V_max * T");
  std::vector<Eigen::Vector3d> q(cfg.N + 1);
  for (int n = 0; n <= cfg.N; ++n)
    q[n] = bcddetail::polyline_at(pts, L * n / cfg.N);
  q.front() = cfg.q_start;
  q.back() = cfg.q_finish;
  return q;
}

/// Feasible starting plan: tour trajectory, even split, round-robin schedule
/// with demand spread evenly, minimum uplink powers, full-power matched
/// filter beams.
inline Plan init_plan(const ScenarioConfig& cfg,
                      const std::vector<SatLinkNominal>& links) {
  soldetail::check_links(cfg, links, "init_plan");
  const double dt = cfg.slot_duration();
  Plan plan = blank_plan(cfg);
  plan.q = init_trajectory(cfg);
  plan.rho.setConstant(0.5);
  plan.chi.setZero();
  plan.l.setZero();
  plan.p.setZero();

  std::vector<int> owned(cfg.K, 0);
  for (int n = 0; n < cfg.N; ++n) ++owned[n % cfg.K];
  for (int n = 0; n < cfg.N; ++n) {
    const int k = n % cfg.K;
    plan.chi(n, k) = 1.0;
    plan.l(n, k) = cfg.D[k] / owned[k];
    if (plan.l(n, k) <= 0.0) continue;
    const double snr_req =
        std::exp2(plan.l(n, k) / (plan.rho[n] * dt * cfg.B1)) - 1.0;
    const double h =
        ground_air_gain(plan.q[n + 1], cfg.node_positions[k], cfg.beta0);
    plan.p(n, k) = std::min(cfg.p_max, snr_req * cfg.sigma0_sq / h);
  }
  for (int n = 0; n < cfg.N; ++n) {
    const Eigen::VectorXcd u = links[n].g_hat / links[n].g_hat.norm();
    plan.W[n] = cfg.p_uav_max * (u * u.adjoint());
  }

  const auto violations = validate_plan(cfg, plan);
  if (!violations.empty())
    throw InfeasibleError("init_plan: seed plan violates " +
                          to_string(violations.front()) +
                          (violations.size() > 1
                               ? " (+" + std::to_string(violations.size() - 1) +
                                     " more)"
                               : ""));
  return plan;
}

/// Convenience: draw the channels from the stream, then seed.
inline Plan init_plan(const ScenarioConfig& cfg, RandomStream& rng) {
  const auto links = draw_links(cfg, rng);
  return init_plan(cfg, links);
}

/// Pluggable trajectory block: the fixed-path baseline swaps in a speed-only
/// optimizer here while everything else runs unchanged.
using TrajectorySolver = std::function<SubResult(
    const ScenarioConfig&, const Plan&, const ScaSettings&)>;

/// Cyclic pass over the four blocks (schedule, split, beams, trajectory)
/// until the accepted total energy settles. With the safeguard on, a block's
/// candidate is kept only when the full weighted energy does not increase,
/// which makes the accepted-energy trace non-increasing regardless of what
/// each block prices locally.
inline BcdResult run_bcd(const ScenarioConfig& cfg, const Plan& plan0,
                         const std::vector<SatLinkNominal>& links,
                         const BcdSettings& settings,
                         const TrajectorySolver& trajectory_block) {
  if (settings.eps0 <= 0.0)
    throw std::invalid_argument("run_bcd: eps0 must be > 0");
  soldetail::check_links(cfg, links, "run_bcd");
  {
    const auto violations = validate_plan(cfg, plan0);
    if (!violations.empty())
      throw InfeasibleError("run_bcd: starting plan violates " +
                            to_string(violations.front()));
  }
  const auto t0 = std::chrono::steady_clock::now();

  BcdResult out;
  out.plan = plan0;
  double E = energy_total(cfg, out.plan).E_total;
  out.trace.accepted_energy.push_back(E);

  static constexpr std::array<const char*, 4> kBlock = {
      "offload schedule", "time split", "beamforming", "trajectory/power"};
  for (int it = 0; it < std::max(1, settings.max_outer); ++it) {
    BcdIteration rec;
    for (int b = 0; b < 4; ++b) {
      SubResult r;
      try {
        switch (b) {
          case 0:
            r = solve_offload_schedule(cfg, out.plan, links, settings.sub);
            break;
          case 1:
            r = solve_time_split(cfg, out.plan, links, settings.sub);
            break;
          case 2:
            r = solve_beamforming(cfg, out.plan, links, settings.sub);
            break;
          default:
            r = trajectory_block(cfg, out.plan, settings.sub);
            break;
        }
      } catch (const InfeasibleError& e) {
        throw InfeasibleError("run_bcd: outer iteration " +
                              std::to_string(it + 1) + ", " + kBlock[b] + ": " +
                              e.what());
      }
      const double cand = energy_total(cfg, r.plan).E_total;
      rec.objective[b] = r.objective;
      rec.delta[b] = cand - E;
      rec.accepted[b] = !settings.safeguard || cand <= E;
      if (rec.accepted[b]) {
        out.plan = std::move(r.plan);
        E = cand;
      }
    }
    rec.energy = energy_total(cfg, out.plan);
    out.trace.iterations.push_back(rec);
    const double prev = out.trace.accepted_energy.back();
    out.trace.accepted_energy.push_back(E);
    if (prev - E < settings.eps0) break;
  }

  out.energy = energy_total(cfg, out.plan);
  out.trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

inline BcdResult run_bcd(const ScenarioConfig& cfg, const Plan& plan0,
                         const std::vector<SatLinkNominal>& links,
                         const BcdSettings& settings = {}) {
  return run_bcd(cfg, plan0, links, settings,
                 [](const ScenarioConfig& c, const Plan& p,
                    const ScaSettings& s) {
                   return solve_trajectory_power(c, p, s);
                 });
}

}  // namespace ntnopt
