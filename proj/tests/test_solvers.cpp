#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "ntnopt/energy.hpp"
#include "ntnopt/linkmodel.hpp"
#include "ntnopt/robustify.hpp"
#include "ntnopt/scenario.hpp"
#include "ntnopt/solvers.hpp"

using namespace ntnopt;
using Catch::Approx;

namespace {

// Rain gain at the mean attenuation, so link draws are reproducible.
constexpr double kRain = 0.1380384264602885;

ScenarioConfig line_config(double T, int N, int K, int M, Eigen::Vector3d start,
                           Eigen::Vector3d finish,
                           std::vector<Eigen::Vector3d> nodes, double D_bits) {
  ScenarioConfig cfg;
  cfg.T = T;
  cfg.N = N;
  cfg.K = K;
  cfg.M = M;
  cfg.H = start.z();
  cfg.q_start = std::move(start);
  cfg.q_finish = std::move(finish);
  cfg.node_positions = std::move(nodes);
  cfg.D = Eigen::VectorXd::Constant(K, D_bits);
  finalize_config(cfg);
  return cfg;
}

std::vector<SatLinkNominal> uniform_links(const ScenarioConfig& cfg,
                                          double rain = kRain) {
  return std::vector<SatLinkNominal>(cfg.N, nominal_link_vector(cfg, rain));
}

Eigen::MatrixXcd mrt_beam(const Eigen::VectorXcd& g, double power) {
  const Eigen::VectorXcd u = g / g.norm();
  return power * (u * u.adjoint());
}

double min_uplink_power(const ScenarioConfig& cfg, const Plan& plan, int n,
                        int k) {
  const double need = std::exp2(plan.l(n, k) / (plan.chi(n, k) * plan.rho[n] *
                                                cfg.slot_duration() * cfg.B1)) -
                      1.0;
  const double h =
      ground_air_gain(plan.q[n + 1], cfg.node_positions[k], cfg.beta0);
  return need * cfg.sigma0_sq / h;
}

// Round-robin schedule, demand split evenly, minimum uplink power, matched
// filter beams; feasible on the toys below by construction.
Plan seeded_plan(const ScenarioConfig& cfg,
                 const std::vector<SatLinkNominal>& links, double beam_power) {
  Plan plan = blank_plan(cfg);
  plan.chi.setZero();
  std::vector<int> owned(cfg.K, 0);
  for (int n = 0; n < cfg.N; ++n) ++owned[n % cfg.K];
  for (int n = 0; n < cfg.N; ++n) {
    const int k = n % cfg.K;
    plan.chi(n, k) = 1.0;
    plan.l(n, k) = cfg.D[k] / owned[k];
  }
  for (int n = 0; n < cfg.N; ++n)
    for (int k = 0; k < cfg.K; ++k)
      if (plan.l(n, k) > 0.0)
        plan.p(n, k) =
            std::min(cfg.p_max, min_uplink_power(cfg, plan, n, k) * (1.0 + 1e-9));
  for (int n = 0; n < cfg.N; ++n)
    plan.W[n] = mrt_beam(links[n].g_hat, beam_power);
  return plan;
}

double certificate_margin_of(const ScenarioConfig& cfg,
                             const SatLinkNominal& link,
                             const Eigen::MatrixXcd& W, double rho,
                             double eps) {
  const auto surr = quad_surrogate(W, link.g_hat);
  const auto blk = bernstein_block(surr, cfg.varrho, 0.0, rho, cfg, eps);
  return bti_slack(blk) + 1.0;
}

}  // namespace

TEST_CASE("relaxed-and-rounded schedule tracks the exhaustive optimum") {
  auto cfg = line_config(30.0, 3, 2, 2, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{100.0, 40.0, 0.0}, {200.0, -40.0, 0.0}}, 0.0);
  cfg.D << 2.0e6, 1.0e6;
  const auto links = uniform_links(cfg);
  Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  // distinct offload powers so the assignment actually matters
  plan.p.col(0).setConstant(0.3);
  plan.p.col(1).setConstant(0.8);

  const auto res = solve_offload_schedule(cfg, plan, links);
  for (int n = 0; n < cfg.N; ++n) {
    double row = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
      CHECK((res.plan.chi(n, k) == 0.0 || res.plan.chi(n, k) == 1.0));
      row += res.plan.chi(n, k);
    }
    CHECK(row == Approx(1.0));
  }
  CHECK(validate_plan(cfg, res.plan).empty());

  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < 8; ++mask) {
    Eigen::MatrixXd chi = Eigen::MatrixXd::Zero(3, 2);
    for (int n = 0; n < 3; ++n) chi(n, (mask >> n) & 1) = 1.0;
    try {
      best = std::min(best, round_schedule(cfg, chi, plan, links).objective);
    } catch (const InfeasibleError&) {
    }
  }
  REQUIRE(std::isfinite(best));
  CHECK(res.objective <= best * 1.05 + 1e-9);
  CHECK(res.objective >= best * (1.0 - 1e-6) - 1e-9);
}

TEST_CASE("single-node scenarios schedule every slot to that node") {
  auto cfg = line_config(30.0, 3, 1, 2, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{150.0, 0.0, 0.0}}, 3.0e6);
  const auto links = uniform_links(cfg);
  const Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  const auto res = solve_offload_schedule(cfg, plan, links);
  for (int n = 0; n < cfg.N; ++n) CHECK(res.plan.chi(n, 0) == 1.0);
  // demand is met up to the sliver of slack the repair rows run with
  CHECK(res.plan.l.sum() >= 3.0e6 * (1.0 - 1e-6));
  CHECK(res.plan.l.sum() <= 3.0e6 * (1.0 + 1e-9));
}

TEST_CASE("zero demand produces an empty data plan") {
  auto cfg = line_config(30.0, 3, 2, 2, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{100.0, 40.0, 0.0}, {200.0, -40.0, 0.0}}, 0.0);
  const auto links = uniform_links(cfg);
  Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  plan.l.setZero();
  plan.p.col(0).setConstant(0.2);
  plan.p.col(1).setConstant(0.9);
  const auto res = solve_offload_schedule(cfg, plan, links);
  CHECK(res.plan.l.cwiseAbs().maxCoeff() <= 1e-6);
  // offload energy alone decides, so the cheap node takes every slot
  for (int n = 0; n < cfg.N; ++n) CHECK(res.plan.chi(n, 0) == 1.0);
}

TEST_CASE("unreachable demand names the starved node") {
  auto cfg = line_config(30.0, 3, 2, 2, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{100.0, 40.0, 0.0}, {200.0, -40.0, 0.0}}, 0.0);
  cfg.D << 1.0e6, 1.0e15;
  const auto links = uniform_links(cfg);
  const Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  CHECK_THROWS_MATCHES(solve_offload_schedule(cfg, plan, links), InfeasibleError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("node 2")));
}

TEST_CASE("rounding keeps binary schedules, breaks ties low, and repairs data") {
  auto cfg = line_config(30.0, 3, 2, 2, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{100.0, 40.0, 0.0}, {200.0, -40.0, 0.0}}, 0.0);
  cfg.D << 2.0e6, 1.0e6;
  const auto links = uniform_links(cfg);
  Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  plan.p.setConstant(0.5);

  Eigen::MatrixXd rel(3, 2);
  rel << 0.6, 0.4,  // argmax
      0.5, 0.5,     // tie goes to the lower index
      0.2, 0.8;
  const auto res = round_schedule(cfg, rel, plan, links);
  CHECK(res.plan.chi(0, 0) == 1.0);
  CHECK(res.plan.chi(1, 0) == 1.0);
  CHECK(res.plan.chi(2, 1) == 1.0);
  CHECK(validate_plan(cfg, res.plan).empty());

  // already-binary schedules round to themselves
  const auto again = round_schedule(cfg, res.plan.chi, plan, links);
  CHECK(again.plan.chi == res.plan.chi);
}

TEST_CASE("slot split heads to its bounds when no data moves") {
  auto cfg = line_config(30.0, 3, 1, 2, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{150.0, 0.0, 0.0}}, 0.0);
  const auto links = uniform_links(cfg);

  SECTION("offload power dominates: split drops to its floor") {
    Plan plan = seeded_plan(cfg, links, 0.0);
    plan.l.setZero();
    plan.p.setConstant(0.5);
    const auto res = solve_time_split(cfg, plan, links);
    for (int n = 0; n < cfg.N; ++n) CHECK(res.plan.rho[n] <= 2e-3);
  }
  SECTION("forward power dominates: split rises to its ceiling") {
    Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
    plan.l.setZero();
    plan.p.setZero();
    const auto res = solve_time_split(cfg, plan, links);
    for (int n = 0; n < cfg.N; ++n) CHECK(res.plan.rho[n] >= 1.0 - 2e-3);
  }
}

TEST_CASE("edge compute capacity pins the slot split from below") {
  auto cfg = line_config(1.0, 1, 1, 2, {0.0, 0.0, 2.5}, {0.0, 0.0, 2.5},
                         {{0.0, 0.0, 0.0}}, 3.0e7);
  const auto links = uniform_links(cfg);
  Plan plan = blank_plan(cfg);
  plan.l(0, 0) = 3.0e7;  // needs half the slot at full CPU speed
  plan.p(0, 0) = 1.0;
  plan.W[0] = 4.0 * Eigen::MatrixXcd::Identity(2, 2);

  // sanity on the constructed window: the certificate must allow rho = 0.5
  const double margin =
      certificate_margin_of(cfg, links[0], plan.W[0], 0.5, cfg.eps[0]);
  const double hi = 1.0 - cfg.o * 3.0e7 / (cfg.B2 * std::log2(margin));
  REQUIRE(hi > 0.51);

  const auto res = solve_time_split(cfg, plan, links);
  CHECK(res.plan.rho[0] == Approx(0.5).margin(2e-4));
}

TEST_CASE("exact and tangent-iterated splits agree on a small case") {
  auto cfg = line_config(50.0, 5, 1, 2, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{150.0, 20.0, 0.0}}, 5.0e6);
  const auto links = uniform_links(cfg);
  Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  for (int n = 0; n < cfg.N; ++n)
    plan.p(n, 0) = std::min(cfg.p_max, plan.p(n, 0) * 1.2);

  const auto exact = solve_time_split(cfg, plan, links);
  ScaSettings sca;
  sca.iterate_time_split = true;
  sca.max_iters = 50;
  sca.tol = 1e-8;
  const auto tangent = solve_time_split(cfg, plan, links, sca);
  CHECK(tangent.objective ==
        Approx(exact.objective).epsilon(1e-3).margin(1e-9));
}

TEST_CASE("beam design returns zero beams when nothing is forwarded") {
  auto cfg = line_config(30.0, 3, 1, 4, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{150.0, 0.0, 0.0}}, 0.0);
  const auto links = uniform_links(cfg);
  Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  plan.l.setZero();
  const auto res = solve_beamforming(cfg, plan, links);
  for (int n = 0; n < cfg.N; ++n) CHECK(res.plan.W[n].norm() == 0.0);
  CHECK(res.objective == 0.0);
}

TEST_CASE("single-antenna beams reduce to the scalar power inversion") {
  auto cfg = line_config(1.0, 1, 1, 1, {0.0, 0.0, 100.0}, {0.0, 0.0, 100.0},
                         {{10.0, 0.0, 0.0}}, 1.0e6);
  const auto links = uniform_links(cfg);
  Plan plan = blank_plan(cfg);
  plan.l(0, 0) = 1.0e6;
  const double psi_req =
      std::exp2(cfg.o * 1.0e6 / (0.5 * cfg.slot_duration() * cfg.B2)) - 1.0;
  const double expect = psi_req / std::norm(links[0].g_hat[0]);
  REQUIRE(expect < cfg.p_uav_max);

  const auto res = solve_beamforming(cfg, plan, links);
  CHECK(res.plan.W[0](0, 0).real() == Approx(expect).epsilon(1e-5));
  CHECK(std::abs(res.plan.W[0](0, 0).imag()) <= 1e-12);
}

TEST_CASE("beam design certifies the load with near-minimal rank-one power") {
  auto cfg = line_config(20.0, 2, 1, 4, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{150.0, 0.0, 0.0}}, 1.0e7);
  std::vector<SatLinkNominal> links = {nominal_link_vector(cfg, kRain),
                                       nominal_link_vector(cfg, 0.25)};
  Plan plan = blank_plan(cfg);
  plan.rho << 0.4, 0.6;
  plan.l(0, 0) = 2.0e6;
  plan.l(1, 0) = 8.0e6;

  const auto res = solve_beamforming(cfg, plan, links);
  const double dt = cfg.slot_duration();
  for (int n = 0; n < cfg.N; ++n) {
    const auto& W = res.plan.W[n];
    const double psi_req =
        std::exp2(cfg.o * plan.l.row(n).sum() /
                  (dt * (1.0 - plan.rho[n]) * cfg.B2)) -
        1.0;

    // exactly rank one after extraction
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(W);
    const double tr = W.real().trace();
    REQUIRE(tr > 0.0);
    CHECK(tr - es.eigenvalues().maxCoeff() <= 1e-9 * tr);

    // certificate still clears the threshold (small extraction loss allowed)
    const double margin =
        certificate_margin_of(cfg, links[n], W, plan.rho[n], cfg.eps[n]);
    CHECK(margin - 1.0 >= psi_req * (1.0 - 5e-4) - 1e-9);

    // no worse than the matched-filter ray, which the program contains
    const Eigen::MatrixXcd Wmrt = mrt_beam(links[n].g_hat, 1.0);
    const double kappa =
        certificate_margin_of(cfg, links[n], Wmrt, plan.rho[n], cfg.eps[n]) -
        1.0;
    REQUIRE(kappa > 0.0);
    CHECK(tr <= (psi_req / kappa) * (1.0 + 1e-3));
    CHECK(tr <= cfg.p_uav_max * (1.0 + 1e-9));
  }
}

TEST_CASE("per-slot beam programs are independent") {
  auto cfg = line_config(20.0, 2, 1, 4, {0.0, 0.0, 100.0}, {300.0, 0.0, 100.0},
                         {{150.0, 0.0, 0.0}}, 1.0e7);
  std::vector<SatLinkNominal> links = {nominal_link_vector(cfg, kRain),
                                       nominal_link_vector(cfg, 0.25)};
  Plan plan = blank_plan(cfg);
  plan.rho << 0.4, 0.6;
  plan.l(0, 0) = 2.0e6;
  plan.l(1, 0) = 8.0e6;
  const auto res = solve_beamforming(cfg, plan, links);

  Plan swapped = plan;
  swapped.rho << 0.6, 0.4;
  swapped.l(0, 0) = 8.0e6;
  swapped.l(1, 0) = 2.0e6;
  std::vector<SatLinkNominal> rlinks = {links[1], links[0]};
  const auto res2 = solve_beamforming(cfg, swapped, rlinks);

  CHECK((res2.plan.W[0] - res.plan.W[1]).norm() <=
        1e-7 * (1.0 + res.plan.W[1].norm()));
  CHECK((res2.plan.W[1] - res.plan.W[0]).norm() <=
        1e-7 * (1.0 + res.plan.W[0].norm()));
}

TEST_CASE("beam design reports the power shortfall on impossible loads") {
  auto cfg = line_config(1.0, 1, 1, 4, {0.0, 0.0, 100.0}, {0.0, 0.0, 100.0},
                         {{10.0, 0.0, 0.0}}, 2.0e8);
  const auto links = uniform_links(cfg);
  Plan plan = blank_plan(cfg);
  plan.l(0, 0) = 2.0e8;
  CHECK_THROWS_MATCHES(solve_beamforming(cfg, plan, links), InfeasibleError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("beam power")));
}

TEST_CASE("with no data the trajectory is a straight run at efficient speed") {
  const PropulsionConstants pc;
  const double vstar = min_power_speed(pc, 30.0);
  const double T = 20.0;
  const int N = 10;
  auto cfg = line_config(T, N, 1, 2, {0.0, 0.0, 100.0},
                         {vstar * T, 0.0, 100.0}, {{5000.0, 5000.0, 0.0}}, 0.0);
  Plan plan = blank_plan(cfg);
  plan.l.setZero();

  const auto res = solve_trajectory_power(cfg, plan);
  for (std::size_t i = 1; i + 1 < res.plan.q.size(); ++i) {
    CHECK(std::abs(res.plan.q[i].y()) <= 0.5);
    CHECK(res.plan.q[i].x() >= res.plan.q[i - 1].x() - 0.5);
  }
  const double e4 = energy_propulsion(cfg, res.plan);
  CHECK(e4 <= T * propulsion_power(vstar, pc) * (1.0 + 1e-3));
  for (std::size_t i = 1; i < res.iterates.size(); ++i)
    CHECK(res.iterates[i] <= res.iterates[i - 1] + 1e-7);
}

TEST_CASE("coincident endpoints still reward flying a loop over hovering") {
  auto cfg = line_config(20.0, 10, 1, 2, {0.0, 0.0, 100.0}, {0.0, 0.0, 100.0},
                         {{5000.0, 5000.0, 0.0}}, 0.0);
  Plan plan = blank_plan(cfg);
  plan.l.setZero();
  // Sluggish out-and-back seed; a coincident-waypoint seed is a stationary
  // point of the surrogate (zero displacement gradient) and must be avoided.
  for (int i = 0; i <= cfg.N; ++i)
    plan.q[i].x() = 6.0 * std::min(i, cfg.N - i);
  const double seed = energy_propulsion(cfg, plan);

  const auto res = solve_trajectory_power(cfg, plan);
  for (std::size_t i = 1; i < res.iterates.size(); ++i)
    CHECK(res.iterates[i] <= res.iterates[i - 1] + 1e-7);
  const double hover = 20.0 * propulsion_power(0.0, cfg.prop);
  CHECK(energy_propulsion(cfg, res.plan) < 0.99 * hover);
  CHECK(energy_propulsion(cfg, res.plan) < 0.98 * seed);
}

TEST_CASE("tight demand bends the path toward the node") {
  auto cfg = line_config(20.0, 20, 1, 2, {0.0, 0.0, 100.0},
                         {300.0, 0.0, 100.0}, {{150.0, 120.0, 0.0}}, 1.2e8);
  cfg.eta2 = 1e-4;  // cheap propulsion so proximity wins
  const auto links = uniform_links(cfg);
  Plan plan = seeded_plan(cfg, links, cfg.p_uav_max);
  plan.l.setZero();
  for (int n = 5; n < 15; ++n) plan.l(n, 0) = 1.2e7;
  for (int n = 0; n < cfg.N; ++n)
    plan.p(n, 0) = plan.l(n, 0) > 0.0
                       ? std::min(cfg.p_max, min_uplink_power(cfg, plan, n, 0))
                       : 0.0;

  const auto dist_to_node = [&](const Plan& p) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : p.q)
      best = std::min(best,
                      (q.head<2>() - cfg.node_positions[0].head<2>()).norm());
    return best;
  };
  const double before = dist_to_node(plan);
  const double obj_before = energy_offload(cfg, plan) +
                            cfg.eta2 * energy_propulsion(cfg, plan);
  const auto res = solve_trajectory_power(cfg, plan);
  CHECK(dist_to_node(res.plan) < before - 1.0);
  CHECK(res.objective < obj_before);
  CHECK(validate_plan(cfg, res.plan).empty());
}

TEST_CASE("an undersized battery makes the trajectory subproblem infeasible") {
  auto cfg = line_config(20.0, 10, 1, 2, {0.0, 0.0, 100.0},
                         {200.0, 0.0, 100.0}, {{100.0, 0.0, 0.0}}, 0.0);
  cfg.E_prop = 1000.0;  // far below any feasible propulsion total
  Plan plan = blank_plan(cfg);
  plan.l.setZero();
  CHECK_THROWS_AS(solve_trajectory_power(cfg, plan), InfeasibleError);
}

TEST_CASE("surrogate tangents match their originals at the expansion point") {
  RandomStream rng(7, "tangents");

  // split coupling: tangent of 1/(1-r) stays below and touches at r0
  for (double r0 = 0.1; r0 < 0.95; r0 += 0.1) {
    const auto tangent = [&](double r) {
      return (1.0 + r - 2.0 * r0) / sq(1.0 - r0);
    };
    CHECK(tangent(r0) == Approx(1.0 / (1.0 - r0)).epsilon(1e-10));
    for (double r = 0.05; r < 0.99; r += 0.07)
      CHECK(tangent(r) <= 1.0 / (1.0 - r) + 1e-12);
  }

  // dominant-eigenvalue linearization stays below and touches at W0
  for (int trial = 0; trial < 20; ++trial) {
    const int M = 3;
    Eigen::MatrixXcd A(M, M), B(M, M);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) {
        A(i, j) = std::complex<double>(rng.next_normal(), rng.next_normal());
        B(i, j) = std::complex<double>(rng.next_normal(), rng.next_normal());
      }
    const Eigen::MatrixXcd W0 = A.adjoint() * A;
    const Eigen::MatrixXcd W1 = B.adjoint() * B;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es0(W0), es1(W1);
    const Eigen::VectorXcd u0 = es0.eigenvectors().col(M - 1);
    const double lin_at_self = (u0.adjoint() * W0 * u0).real()(0, 0);
    CHECK(lin_at_self == Approx(es0.eigenvalues().maxCoeff()).epsilon(1e-9));
    const double lin_at_other = (u0.adjoint() * W1 * u0).real()(0, 0);
    CHECK(lin_at_other <= es1.eigenvalues().maxCoeff() + 1e-9);
  }

  // induced-power coupling: tangent of z^2 + |d|^2/v0^2 stays below
  const double v0 = PropulsionConstants{}.v0;
  const auto lhs = [&](double z, const Eigen::Vector2d& d) {
    return z * z + d.squaredNorm() / sq(v0);
  };
  for (int trial = 0; trial < 50; ++trial) {
    const double z0 = 0.1 + std::abs(rng.next_normal());
    const Eigen::Vector2d d0(10.0 * rng.next_normal(), 10.0 * rng.next_normal());
    const auto tangent = [&](double z, const Eigen::Vector2d& d) {
      return 2.0 * z0 * z - z0 * z0 +
             (2.0 * d0.dot(d) - d0.squaredNorm()) / sq(v0);
    };
    CHECK(tangent(z0, d0) == Approx(lhs(z0, d0)).epsilon(1e-10));
    const double z = 0.1 + std::abs(rng.next_normal());
    const Eigen::Vector2d d(10.0 * rng.next_normal(), 10.0 * rng.next_normal());
    CHECK(tangent(z, d) <= lhs(z, d) + 1e-9);
  }
}
