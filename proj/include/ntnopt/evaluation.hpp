#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "ntnopt/bcd.hpp"
#include "ntnopt/common.hpp"
#include "ntnopt/energy.hpp"
#include "ntnopt/linkmodel.hpp"
#include "ntnopt/robustify.hpp"
#include "ntnopt/scenario.hpp"
#include "ntnopt/solvers.hpp"

namespace ntnopt {

/// One solved scheme with plot-ready traces. Rows of slot_energy are
/// (offload, compute, forward, propulsion) before objective weighting.
struct ExperimentReport {
  std::string scheme;
  Plan plan;
  EnergyBreakdown energy;
  Eigen::VectorXd speed;         // [m/s] per slot
  Eigen::VectorXd offload_bits;  // per slot, summed over nodes
  Eigen::MatrixXd slot_energy;   // N x 4 [J]
  std::vector<double> completion_samples;
  BcdTrace trace;
};

inline ExperimentReport make_report(const ScenarioConfig& cfg,
                                    std::string scheme, BcdResult res) {
  const int N = cfg.N;
  const double dt = cfg.slot_duration();
  ExperimentReport rep;
  rep.scheme = std::move(scheme);
  rep.energy = res.energy;
  rep.trace = std::move(res.trace);
  rep.plan = std::move(res.plan);
  rep.speed.resize(N);
  rep.offload_bits.resize(N);
  rep.slot_energy.resize(N, 4);
  for (int n = 0; n < N; ++n) {
    rep.speed[n] = slot_speed(cfg, rep.plan, n + 1);
    rep.offload_bits[n] = rep.plan.l.row(n).sum();
    const double time = rep.plan.rho[n] * dt;
    const double cycles = cfg.c0 * rep.offload_bits[n];
    rep.slot_energy(n, 0) =
        time * (rep.plan.chi.row(n).array() * rep.plan.p.row(n).array()).sum();
    rep.slot_energy(n, 1) =
        cycles > 0.0 ? cfg.gamma * cube(cycles) / sq(time) : 0.0;
    rep.slot_energy(n, 2) =
        rep.plan.W[n].real().trace() * (1.0 - rep.plan.rho[n]) * dt;
    rep.slot_energy(n, 3) = propulsion_power(rep.speed[n], cfg.prop) * dt;
  }
  return rep;
}

/// Full pipeline with the outage certificate in force.
inline ExperimentReport run_robust(const ScenarioConfig& cfg, const Plan& plan0,
                                   const std::vector<SatLinkNominal>& links,
                                   const BcdSettings& settings = {}) {
  return make_report(cfg, "robust optimized-trajectory",
                     run_bcd(cfg, plan0, links, settings));
}

/// Same pipeline with the forwarding rate held only at the nominal channel;
/// the baseline every robust scheme is compared against.
inline ExperimentReport run_nonrobust(const ScenarioConfig& cfg,
                                      const Plan& plan0,
                                      const std::vector<SatLinkNominal>& links,
                                      const BcdSettings& settings = {}) {
  BcdSettings s = settings;
  s.sub.nonrobust = true;
  return make_report(cfg, "non-robust optimized-trajectory",
                     run_bcd(cfg, plan0, links, s));
}

namespace evaldetail {

// Frozen flight path as a polyline with cumulative arc lengths.
struct PathRail {
  std::vector<Eigen::Vector3d> pts;
  std::vector<double> cum;

  double length() const { return cum.back(); }

  static PathRail from_waypoints(const std::vector<Eigen::Vector3d>& q) {
    PathRail r;
    r.pts.push_back(q.front());
    r.cum.push_back(0.0);
    for (std::size_t i = 1; i < q.size(); ++i) {
      const double seg = (q[i] - r.pts.back()).norm();
      if (seg <= 1e-9) continue;
      r.pts.push_back(q[i]);
      r.cum.push_back(r.cum.back() + seg);
    }
    return r;
  }

  // Segment holding arc position s; at an interior vertex the forward
  // segment wins.
  int segment(double s) const {
    if (pts.size() < 2) return 0;
    int i = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), s) -
                             cum.begin()) -
            1;
    return std::clamp(i, 0, static_cast<int>(pts.size()) - 2);
  }

  Eigen::Vector3d tangent(int seg) const {
    return (pts[seg + 1] - pts[seg]).normalized();
  }

  Eigen::Vector3d at(double s) const {
    if (pts.size() < 2) return pts.front();
    const int seg = segment(std::clamp(s, 0.0, length()));
    return pts[seg] + tangent(seg) * (std::clamp(s, 0.0, length()) - cum[seg]);
  }

  // Arc position of the closest point on the rail.
  double project(const Eigen::Vector3d& q) const {
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const Eigen::Vector3d d = pts[i + 1] - pts[i];
      const double seg = d.norm();
      const double t =
          std::clamp((q - pts[i]).dot(d) / (seg * seg), 0.0, 1.0);
      const Eigen::Vector3d c = pts[i] + t * d;
      if ((q - c).norm() < best_d) {
        best_d = (q - c).norm();
        best_s = cum[i] + t * seg;
      }
    }
    return best_s;
  }
};

}  // namespace evaldetail

/// Trajectory block for the fixed-path baseline: waypoints slide along the
/// frozen rail (monotone arc positions, endpoints pinned) and only the speed
/// profile and uplink powers are re-optimized. Within one pass each waypoint
/// stays on its current rail segment, where the position is an exact affine
/// function of its arc coordinate; corners are crossed between passes. The
/// induced-power coupling is linearized exactly as in the free-trajectory
/// block, so accepted iterates keep the true objective non-increasing.
inline SubResult solve_speed_profile(const ScenarioConfig& cfg,
                                     const Plan& plan,
                                     const evaldetail::PathRail& rail,
                                     const ScaSettings& settings = {}) {
  const int N = cfg.N;
  const int K = cfg.K;
  const double dt = cfg.slot_duration();
  const auto& pc = cfg.prop;
  const double vcap = cfg.V_max * dt;
  const double L = rail.length();

  Eigen::MatrixXd snr_req = Eigen::MatrixXd::Zero(N, K);
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      if (plan.l(n, k) <= 1e-9) continue;
      if (plan.chi(n, k) <= 1e-9)
        throw InfeasibleError("solve_speed_profile: slot " +
                              std::to_string(n + 1) +
                              " carries data for an unscheduled node");
      const double rho = soldetail::clamp_rho(plan.rho[n]);
      snr_req(n, k) =
          std::exp2(plan.l(n, k) / (plan.chi(n, k) * rho * dt * cfg.B1)) - 1.0;
    }

  const auto z_of = [&](double dist) {
    const double d2 = dist * dist / (2.0 * pc.v0 * pc.v0);
    return std::sqrt(std::max(std::sqrt(sq(sq(dt)) + d2 * d2) - d2, 0.0));
  };

  // Arc coordinates of the incoming waypoints, forced monotone.
  Eigen::VectorXd s0(N + 1);
  for (int n = 0; n <= N; ++n) s0[n] = rail.project(plan.q[n]);
  s0[0] = 0.0;
  s0[N] = L;
  for (int n = 1; n <= N; ++n) s0[n] = std::max(s0[n], s0[n - 1]);

  SubResult out;
  out.plan = plan;
  const auto write_back = [&](const Eigen::VectorXd& s) {
    for (int n = 1; n < N; ++n) out.plan.q[n] = rail.at(s[n]);
  };

  double prev_obj = std::numeric_limits<double>::infinity();
  for (int it = 0; it < std::max(1, settings.max_iters); ++it) {
    conic::ConicProgram prog;
    std::vector<int> sv(N + 1, -1);
    std::vector<Eigen::Vector3d> base(N + 1), tang(N + 1);
    for (int n = 0; n <= N; ++n) {
      base[n] = rail.at(s0[n]);
      tang[n] = L > 1e-9 ? rail.tangent(rail.segment(s0[n]))
                         : Eigen::Vector3d::Zero();
      if (n == 0 || n == N || L <= 1e-9) continue;
      sv[n] = prog.add_var("s[" + std::to_string(n) + "]");
      const auto s = conic::LinExpr::variable(sv[n]);
      const int seg = rail.segment(s0[n]);
      prog.add_ineq(s - rail.cum[seg]);
      prog.add_ineq(conic::LinExpr(rail.cum[seg + 1]) - s);
    }
    const auto se = [&](int n) -> conic::LinExpr {
      if (sv[n] < 0) return conic::LinExpr(s0[n]);
      return conic::LinExpr::variable(sv[n]);
    };
    for (int n = 1; n <= N; ++n)
      if (sv[n] >= 0 || sv[n - 1] >= 0) prog.add_ineq(se(n) - se(n - 1));
    const auto qe = [&](int n, int axis) {
      return (se(n) - s0[n]) * tang[n][axis] + base[n][axis];
    };

    const int e4v = prog.add_var("E4");
    conic::LinExpr prop_sum;
    conic::LinExpr obj = conic::LinExpr::variable(e4v, cfg.eta2);
    for (int n = 1; n <= N; ++n) {
      const auto delta = conic::LinExpr::variable(
          prog.add_var("delta[" + std::to_string(n) + "]"));
      prog.add_soc({delta, qe(n, 0) - qe(n - 1, 0), qe(n, 1) - qe(n - 1, 1),
                    qe(n, 2) - qe(n - 1, 2)});
      prog.add_ineq(conic::LinExpr(vcap) - delta);

      const auto a = conic::LinExpr::variable(prog.add_var());
      prog.add_rsoc(a * 0.5, 1.0, {delta});
      const auto b = conic::LinExpr::variable(prog.add_var());
      soldetail::add_cubic_epigraph(prog, b, delta * (1.0 / vcap));
      const auto z = conic::LinExpr::variable(prog.add_var());
      prop_sum += conic::LinExpr(pc.P0 * dt);
      prop_sum += a * (3.0 * pc.P0 / (sq(pc.U_tip) * dt));
      prop_sum += z * pc.Pi;
      prop_sum +=
          b * (0.5 * pc.d0 * pc.rho_air * pc.s * pc.A * cube(vcap) / sq(dt));

      const auto c = conic::LinExpr::variable(prog.add_var());
      prog.add_rsoc(c, z, {std::sqrt(2.0) * dt});
      const auto r = conic::LinExpr::variable(prog.add_var());
      prog.add_rsoc(r, 0.5, {c});
      const Eigen::Vector3d d0vec = base[n] - base[n - 1];
      const double z00 = std::max(z_of(d0vec.norm()), 1e-9);
      conic::LinExpr lin(-z00 * z00 - d0vec.squaredNorm() / sq(pc.v0));
      lin += z * (2.0 * z00);
      for (int ax = 0; ax < 3; ++ax)
        lin += (qe(n, ax) - qe(n - 1, ax)) * (2.0 * d0vec[ax] / sq(pc.v0));
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
                       qe(n + 1, 2) - w.z()});
        obj += p * (plan.chi(n, k) * plan.rho[n] * dt);
      }
    prog.minimize(obj);

    auto sol = conic::solve(prog, settings.conic);
    if (sol.status == conic::SolveStatus::infeasible && it == 0)
      throw InfeasibleError(
          "solve_speed_profile: no feasible speed profile on the fixed path");
    if (sol.status != conic::SolveStatus::optimal &&
        sol.status != conic::SolveStatus::inaccurate)
      break;
    if (sol.objective > prev_obj + 1e-7 * std::max(1.0, std::abs(prev_obj)))
      break;
    out.iterates.push_back(sol.objective);

    Eigen::VectorXd s = s0;
    for (int n = 1; n < N; ++n)
      if (sv[n] >= 0) s[n] = std::clamp(sol.x[sv[n]], 0.0, L);
    for (int n = 1; n <= N; ++n) s[n] = std::max(s[n], s[n - 1]);
    write_back(s);
    out.plan.p.setZero();
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k)
        if (pidx(n, k) >= 0)
          out.plan.p(n, k) = std::clamp(sol.x[pidx(n, k)], 0.0, cfg.p_max);

    const bool done = std::abs(prev_obj - sol.objective) <=
                      settings.tol * std::max(1.0, std::abs(prev_obj));
    prev_obj = sol.objective;
    s0 = s;
    if (done || L <= 1e-9) break;
  }
  if (out.iterates.empty())
    throw SolveError("solve_speed_profile: no usable iterate");
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      if (snr_req(n, k) <= 0.0) continue;
      const double d2 =
          (out.plan.q[n + 1] - cfg.node_positions[k]).squaredNorm();
      const double need = snr_req(n, k) * cfg.sigma0_sq * d2 / cfg.beta0;
      out.plan.p(n, k) = std::min(
          cfg.p_max,
          std::max(out.plan.p(n, k), need * (1.0 + soldetail::kFeasPad)));
    }
  out.objective = energy_offload(cfg, out.plan) +
                  cfg.eta2 * energy_propulsion(cfg, out.plan);
  return out;
}

/// Baseline that keeps the seed tour geometry and only retimes flight along
/// it; all communication and computation blocks run as usual.
inline ExperimentReport run_fixed_trajectory(
    const ScenarioConfig& cfg, const Plan& plan0,
    const std::vector<SatLinkNominal>& links, const BcdSettings& settings = {},
    bool robust = true) {
  const auto rail = evaldetail::PathRail::from_waypoints(plan0.q);
  BcdSettings s = settings;
  s.sub.nonrobust = !robust;
  auto res = run_bcd(cfg, plan0, links, s,
                     [&rail](const ScenarioConfig& c, const Plan& p,
                             const ScaSettings& sub) {
                       return solve_speed_profile(c, p, rail, sub);
                     });
  return make_report(cfg,
                     robust ? "robust fixed-trajectory"
                            : "non-robust fixed-trajectory",
                     std::move(res));
}

/// Monte Carlo completion ratios of a solved plan under sampled phase errors.
struct CompletionHistogram {
  std::vector<double> ratios;     // achieved/required, loaded slots only
  Eigen::VectorXd slot_required;  // forwarding requirement [bits] per slot
  Eigen::VectorXd slot_outage;    // fraction of draws missing the requirement
  double mean = 0.0;
  double q05 = 0.0, q50 = 0.0, q95 = 0.0;
};

inline CompletionHistogram completion_histogram(
    const ScenarioConfig& cfg, const Plan& plan,
    const std::vector<SatLinkNominal>& links, int samples, RandomStream& rng) {
  if (samples < 1000)
    throw std::invalid_argument("completion_histogram: samples must be >= 1000");
  soldetail::check_links(cfg, links, "completion_histogram");
  const double dt = cfg.slot_duration();

  CompletionHistogram out;
  out.slot_required.resize(cfg.N);
  out.slot_outage = Eigen::VectorXd::Zero(cfg.N);
  for (int n = 0; n < cfg.N; ++n) {
    const double req = cfg.o * plan.l.row(n).sum();
    out.slot_required[n] = req;
    if (req <= 0.0) continue;
    const double time = (1.0 - plan.rho[n]) * dt;
    int misses = 0;
    for (int i = 0; i < samples; ++i) {
      const Eigen::VectorXd theta = sample_phase_error(rng, cfg.varrho, cfg.M);
      const double snr = exact_snr(plan.W[n], links[n].g_hat, theta);
      const double achieved = time * cfg.B2 * std::log2(1.0 + snr);
      out.ratios.push_back(achieved / req);
      if (achieved < req) ++misses;
    }
    out.slot_outage[n] = static_cast<double>(misses) / samples;
  }
  if (!out.ratios.empty()) {
    std::vector<double> sorted = out.ratios;
    std::sort(sorted.begin(), sorted.end());
    const auto quantile = [&](double q) {
      const auto idx = static_cast<std::size_t>(q * (sorted.size() - 1));
      return sorted[idx];
    };
    out.mean = 0.0;
    for (double v : sorted) out.mean += v;
    out.mean /= static_cast<double>(sorted.size());
    out.q05 = quantile(0.05);
    out.q50 = quantile(0.50);
    out.q95 = quantile(0.95);
  }
  return out;
}

/// Full pipeline per parameter value with common random numbers, for trend
/// comparisons. Supported parameters: T, D_k, f_max, eps.
inline std::vector<ExperimentReport> sweep(const ScenarioConfig& base,
                                           const std::string& parameter,
                                           const std::vector<double>& values,
                                           std::uint64_t seed,
                                           const BcdSettings& settings = {}) {
  std::vector<ExperimentReport> reports;
  reports.reserve(values.size());
  for (double v : values) {
    ScenarioConfig cfg = base;
    if (parameter == "T")
      cfg.T = v;
    else if (parameter == "D_k")
      cfg.D.setConstant(v);
    else if (parameter == "f_max")
      cfg.f_max = v;
    else if (parameter == "eps")
      cfg.eps.setConstant(v);
    else
      throw std::invalid_argument("sweep: unknown parameter '" + parameter +
                                  "' (expected T, D_k, f_max or eps)");
    finalize_config(cfg);
    RandomStream rng(seed, "links");
    const auto links = draw_links(cfg, rng);
    const Plan plan0 = init_plan(cfg, links);
    auto rep = run_robust(cfg, plan0, links, settings);
    rep.scheme += " [" + parameter + "=" + soldetail::fmt(v) + "]";
    reports.push_back(std::move(rep));
  }
  return reports;
}

namespace evaldetail {

inline std::ostream& csv_stream(std::ostream& os) {
  os << std::defaultfloat << std::setprecision(12);
  return os;
}

}  // namespace evaldetail

inline void write_trajectory_csv(std::ostream& os,
                                 const ExperimentReport& rep) {
  evaldetail::csv_stream(os) << "slot,x,y,z,speed\n";
  for (int n = 0; n < rep.speed.size(); ++n) {
    const auto& q = rep.plan.q[n + 1];
    os << n + 1 << ',' << q.x() << ',' << q.y() << ',' << q.z() << ','
       << rep.speed[n] << '\n';
  }
}

inline void write_offload_csv(std::ostream& os, const ExperimentReport& rep) {
  evaldetail::csv_stream(os) << "slot,node,bits,rho,power\n";
  for (int n = 0; n < rep.offload_bits.size(); ++n) {
    int owner = 0;
    rep.plan.chi.row(n).maxCoeff(&owner);
    os << n + 1 << ',' << owner + 1 << ',' << rep.offload_bits[n] << ','
       << rep.plan.rho[n] << ',' << rep.plan.p(n, owner) << '\n';
  }
}

inline void write_energy_csv(std::ostream& os,
                             const std::vector<ExperimentReport>& reps) {
  evaldetail::csv_stream(os)
      << "scheme,offload_J,compute_J,forward_J,propulsion_J,total_weighted_J\n";
  for (const auto& r : reps)
    os << r.scheme << ',' << r.energy.E1 << ',' << r.energy.E2 << ','
       << r.energy.E3 << ',' << r.energy.E4 << ',' << r.energy.E_total << '\n';
}

inline void write_histogram_csv(std::ostream& os,
                                const CompletionHistogram& hist,
                                int bins = 40) {
  evaldetail::csv_stream(os) << "bin_lo,bin_hi,count,fraction\n";
  if (hist.ratios.empty() || bins < 1) return;
  const auto [mn, mx] =
      std::minmax_element(hist.ratios.begin(), hist.ratios.end());
  const double lo = *mn;
  const double width = std::max(*mx - *mn, 1e-12) / bins;
  std::vector<int> count(bins, 0);
  for (double v : hist.ratios) {
    int b = static_cast<int>((v - lo) / width);
    ++count[std::clamp(b, 0, bins - 1)];
  }
  for (int b = 0; b < bins; ++b)
    os << lo + b * width << ',' << lo + (b + 1) * width << ',' << count[b]
       << ','
       << static_cast<double>(count[b]) / static_cast<double>(hist.ratios.size())
       << '\n';
}

}  // namespace ntnopt
