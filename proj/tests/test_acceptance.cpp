// Acceptance gate: one PASS/FAIL line per release criterion, exit nonzero if
// any fail. Runs the full pipeline on the desk scenario (3 nodes, 20 slots,
// 4 antennas, 20 s, 5 Mbit per node), so it doubles as an end-to-end check.
#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ntnopt/evaluation.hpp"
#include "ntnopt/propulsion.hpp"
#include "ntnopt/robustify.hpp"

using namespace ntnopt;

namespace {

int failures = 0;

void report(bool ok, const std::string& label, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  " << label;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  if (!ok) ++failures;
}

std::string num(double v, int prec = 5) {
  std::ostringstream ss;
  ss << std::setprecision(prec) << v;
  return ss.str();
}

constexpr int kSeed = 7;
constexpr int kMcSamples = 10000;

ExperimentReport solve_desk(ScenarioConfig cfg, const std::string& mode,
                            const BcdSettings& bs = {}) {
  RandomStream rng(kSeed, "links");
  const auto links = draw_links(cfg, rng);
  const Plan plan0 = init_plan(cfg, links);
  if (mode == "nonrobust") return run_nonrobust(cfg, plan0, links, bs);
  if (mode == "fixed") return run_fixed_trajectory(cfg, plan0, links, bs);
  return run_robust(cfg, plan0, links, bs);
}

CompletionHistogram sample_outage(const ScenarioConfig& cfg, const Plan& plan) {
  RandomStream lrng(kSeed, "links");
  const auto links = draw_links(cfg, lrng);
  RandomStream mc(kSeed, "mc");
  return completion_histogram(cfg, plan, links, kMcSamples, mc);
}

double rank_one_residual(const Plan& plan) {
  double worst = 0.0;
  for (const auto& W : plan.W) {
    const double tr = W.real().trace();
    if (tr <= 1e-9) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(W);
    const double lam = std::max(es.eigenvalues()[W.rows() - 1], 0.0);
    worst = std::max(worst, (tr - lam) / tr);
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string desk_path = argc > 1 ? argv[1] : "configs/desk.json";
  ScenarioConfig desk;
  try {
    desk = load_config(desk_path);
  } catch (const std::exception& e) {
    std::cout << "FAIL  desk scenario config (" << e.what() << ")\n";
    return 1;
  }

  // Closed-form link and propulsion constants.
  try {
    const double hover = propulsion_power(0.0, PropulsionConstants{});
    const double loss_db = linear_to_db(free_space_loss(6.0e5, 20.0e9));
    const double phi3 = 1.0 * pi / 180.0;
    const double gain_db = linear_to_db(receive_antenna_gain(phi3, phi3, 1.0));
    const bool ok = std::abs(hover - 168.49) <= 1e-9 &&
                    std::abs(loss_db + 174.0) <= 0.1 &&
                    std::abs(gain_db + 3.0) <= 0.2;
    report(ok, "closed-form constants",
           "hover " + num(hover) + " W, path loss " + num(loss_db) +
               " dB, 3 dB-edge gain " + num(gain_db) + " dB");
  } catch (const std::exception& e) {
    report(false, "closed-form constants", e.what());
  }

  // The propulsion curve has an interior minimum near 12 m/s.
  try {
    double v_best = 0.0;
    double p_best = std::numeric_limits<double>::infinity();
    for (double v = 0.0; v <= 30.0 + 1e-9; v += 0.01) {
      const double p = propulsion_power(v, PropulsionConstants{});
      if (p < p_best) {
        p_best = p;
        v_best = v;
      }
    }
    const bool ok = v_best >= 8.0 && v_best <= 16.0 && v_best > 0.01 &&
                    v_best < 29.99;
    report(ok, "propulsion curve minimum",
           "argmin " + num(v_best) + " m/s at " + num(p_best) + " W");
  } catch (const std::exception& e) {
    report(false, "propulsion curve minimum", e.what());
  }

  // Quadratic SNR surrogate: exact at zero phase error, close for small ones.
  try {
    RandomStream rng(2024, "surrogate");
    const int M = 4;
    double worst_zero = 0.0, worst_small = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::MatrixXcd A(M, M);
      Eigen::VectorXcd g(M);
      for (int i = 0; i < M; ++i) {
        g[i] = std::complex<double>(rng.next_normal(), rng.next_normal());
        for (int j = 0; j < M; ++j)
          A(i, j) = std::complex<double>(rng.next_normal(), rng.next_normal());
      }
      const Eigen::MatrixXcd W = A * A.adjoint();
      const QuadSurrogate s = quad_surrogate(W, g);

      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(M);
      const double e0 = exact_snr(W, g, zero);
      worst_zero = std::max(
          worst_zero, std::abs(surrogate_value(s, zero) - e0) /
                          std::max(std::abs(e0), 1e-9));

      Eigen::VectorXd theta(M);
      for (int i = 0; i < M; ++i)
        theta[i] = std::clamp(0.025 * rng.next_normal(), -0.05, 0.05);
      const double ex = exact_snr(W, g, theta);
      worst_small = std::max(
          worst_small, std::abs(surrogate_value(s, theta) - ex) /
                           std::max(std::abs(ex), 1e-9));
    }
    const bool ok = worst_zero <= 1e-12 && worst_small <= 1e-2;
    report(ok, "surrogate exactness",
           "rel err " + num(worst_zero, 3) + " at zero, " +
               num(worst_small, 3) + " for |theta| <= 0.05 over 100 pairs");
  } catch (const std::exception& e) {
    report(false, "surrogate exactness", e.what());
  }

  // Full desk solves shared by the remaining criteria.
  std::optional<ExperimentReport> rob, rob_tight, nonrob;
  std::vector<std::pair<std::string, Plan>> final_plans;
  try {
    rob = solve_desk(desk, "robust");
    final_plans.emplace_back("robust eps=0.2", rob->plan);

    ScenarioConfig tight = desk;
    tight.eps.setConstant(0.05);
    rob_tight = solve_desk(tight, "robust");
    final_plans.emplace_back("robust eps=0.05", rob_tight->plan);

    nonrob = solve_desk(desk, "nonrobust");
    final_plans.emplace_back("non-robust", nonrob->plan);
  } catch (const std::exception& e) {
    report(false, "desk pipeline", e.what());
  }

  // Certified plans hold their outage targets under Monte Carlo phase error;
  // the non-robust baseline does not.
  try {
    if (!rob || !rob_tight || !nonrob)
      throw std::runtime_error("desk solves unavailable");
    const double out02 = sample_outage(desk, rob->plan).slot_outage.maxCoeff();
    ScenarioConfig tight = desk;
    tight.eps.setConstant(0.05);
    const double out005 =
        sample_outage(tight, rob_tight->plan).slot_outage.maxCoeff();
    const double out_nr =
        sample_outage(desk, nonrob->plan).slot_outage.maxCoeff();
    const bool ok = out02 <= 0.22 && out005 <= 0.065 && out_nr > 0.2;
    report(ok, "chance-constraint certification",
           "max outage " + num(out02) + " at eps 0.2, " + num(out005) +
               " at eps 0.05, non-robust " + num(out_nr));
  } catch (const std::exception& e) {
    report(false, "chance-constraint certification", e.what());
  }

  // Accepted energy decreases monotonically across outer iterations.
  try {
    BcdSettings bs;
    bs.eps0 = 1e-15;  // in effect: run all outer iterations
    bs.max_outer = 6;
    const auto mono = solve_desk(desk, "robust", bs);
    final_plans.emplace_back("monotonicity run", mono.plan);
    const auto& acc = mono.trace.accepted_energy;
    bool decreasing = acc.size() >= 6;  // initial plan plus >= 5 iterations
    for (std::size_t i = 1; i < acc.size(); ++i)
      decreasing = decreasing && acc[i] <= acc[i - 1] + 1e-9;
    const double last_delta =
        acc.size() >= 2 ? acc[acc.size() - 2] - acc.back() : 1e9;
    const bool ok = decreasing && last_delta < 1e-2;
    report(ok, "BCD monotonicity",
           std::to_string(acc.size() - 1) + " iterations, " + num(acc.front()) +
               " -> " + num(acc.back()) + " J, final step " + num(last_delta, 3) +
               " J");
  } catch (const std::exception& e) {
    report(false, "BCD monotonicity", e.what());
  }

  // Every final beam matrix is numerically rank one.
  try {
    if (final_plans.empty()) throw std::runtime_error("no plans available");
    double worst = 0.0;
    for (const auto& [name, plan] : final_plans)
      worst = std::max(worst, rank_one_residual(plan));
    report(worst <= 1e-4, "rank-one extraction",
           "worst (trace - lambda_max)/trace = " + num(worst, 3));
  } catch (const std::exception& e) {
    report(false, "rank-one extraction", e.what());
  }

  // Relax-and-round scheduling matches exhaustive search on a tiny instance.
  try {
    ScenarioConfig toy;
    toy.T = 30.0;
    toy.N = 3;
    toy.K = 2;
    toy.M = 2;
    toy.q_start = {0.0, 0.0, 100.0};
    toy.q_finish = {300.0, 0.0, 100.0};
    toy.node_positions = {{100.0, 40.0, 0.0}, {200.0, -40.0, 0.0}};
    toy.D = Eigen::VectorXd::Constant(2, 1.5e6);
    finalize_config(toy);
    RandomStream rng(kSeed, "links");
    const auto links = draw_links(toy, rng);
    const Plan plan = init_plan(toy, links);
    const double got = solve_offload_schedule(toy, plan, links).objective;

    double best = std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < 8; ++mask) {
      Eigen::MatrixXd chi = Eigen::MatrixXd::Zero(3, 2);
      for (int n = 0; n < 3; ++n) chi(n, (mask >> n) & 1) = 1.0;
      try {
        best = std::min(best, round_schedule(toy, chi, plan, links).objective);
      } catch (const InfeasibleError&) {
      }
    }
    const bool ok = std::isfinite(best) && got <= best * 1.05 + 1e-9 &&
                    got >= best * (1.0 - 1e-6) - 1e-9;
    report(ok, "brute-force scheduling equivalence",
           "rounded " + num(got) + " J vs exhaustive " + num(best) + " J");
  } catch (const std::exception& e) {
    report(false, "brute-force scheduling equivalence", e.what());
  }

  // Qualitative trends under a common seed.
  try {
    if (!rob || !nonrob) throw std::runtime_error("desk solves unavailable");

    // A tighter deadline forces a faster, costlier flight over the same path.
    ScenarioConfig shorter = desk;
    shorter.q_finish = {280.0, 0.0, 100.0};
    ScenarioConfig rushed = shorter;
    rushed.T = 10.0;
    const auto e_t20 = solve_desk(shorter, "robust");
    const auto e_t10 = solve_desk(rushed, "robust");
    final_plans.emplace_back("T=20 s", e_t20.plan);
    final_plans.emplace_back("T=10 s", e_t10.plan);
    const bool trend_t = e_t10.energy.E_total > e_t20.energy.E_total;

    ScenarioConfig doubled = desk;
    doubled.D *= 2.0;
    const auto e_2d = solve_desk(doubled, "robust");
    final_plans.emplace_back("doubled demand", e_2d.plan);
    const bool trend_d = e_2d.energy.E2 > rob->energy.E2 &&
                         e_2d.energy.E_total > rob->energy.E_total;

    const auto fixed = solve_desk(desk, "fixed");
    final_plans.emplace_back("fixed trajectory", fixed.plan);
    const bool trend_f =
        fixed.energy.E4 >= rob->energy.E4 * (1.0 - 1e-9);

    const bool trend_r =
        nonrob->energy.E_total <= rob->energy.E_total * (1.0 + 1e-9);

    report(trend_t && trend_d && trend_f && trend_r, "qualitative trends",
           "E(T=10)=" + num(e_t10.energy.E_total) + " > E(T=20)=" +
               num(e_t20.energy.E_total) + "; 2x demand " +
               num(rob->energy.E_total) + " -> " + num(e_2d.energy.E_total) +
               "; fixed-path E4 " + num(fixed.energy.E4) + " >= " +
               num(rob->energy.E4) + "; non-robust " +
               num(nonrob->energy.E_total) + " <= robust " +
               num(rob->energy.E_total));
  } catch (const std::exception& e) {
    report(false, "qualitative trends", e.what());
  }

  // Every plan produced above satisfies the deterministic constraint set.
  try {
    if (final_plans.empty()) throw std::runtime_error("no plans available");
    std::string bad;
    for (const auto& [name, plan] : final_plans) {
      const ScenarioConfig* cfg = &desk;
      ScenarioConfig local = desk;
      if (name == "T=20 s" || name == "T=10 s") {
        local.q_finish = {280.0, 0.0, 100.0};
        if (name == "T=10 s") local.T = 10.0;
        cfg = &local;
      } else if (name == "doubled demand") {
        local.D *= 2.0;
        cfg = &local;
      } else if (name == "robust eps=0.05") {
        local.eps.setConstant(0.05);
        cfg = &local;
      }
      const auto violations = validate_plan(*cfg, plan);
      if (!violations.empty())
        bad += (bad.empty() ? "" : "; ") + name + ": " +
               violations.front().constraint;
    }
    report(bad.empty(), "plan feasibility",
           bad.empty()
               ? std::to_string(final_plans.size()) + " plans validated"
               : bad);
  } catch (const std::exception& e) {
    report(false, "plan feasibility", e.what());
  }

  return failures == 0 ? 0 : 1;
}
