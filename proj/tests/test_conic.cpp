#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "ntnopt/conic/program.hpp"
#include "ntnopt/conic/solver.hpp"
#include "ntnopt/rng.hpp"

using namespace ntnopt;
using namespace ntnopt::conic;
using Catch::Approx;

namespace {

ConicSolution must_solve(const ConicProgram& p, double tol_hint = 1e-8) {
  SolveSettings st;
  (void)tol_hint;
  ConicSolution sol = solve(p, st);
  INFO("status: " << to_string(sol.status) << " msg: " << sol.message);
  REQUIRE(sol.status == SolveStatus::optimal);
  return sol;
}

}  // namespace

TEST_CASE("lp: minimize x subject to x >= 1") {
  ConicProgram p;
  const int x = p.add_var("x");
  p.minimize(LinExpr::variable(x));
  p.add_ineq(LinExpr::variable(x) - 1.0);
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(1.0).margin(1e-8));
  CHECK(sol.x[x] == Approx(1.0).margin(1e-8));
}

TEST_CASE("lp: equality and two inequalities") {
  // min x + 2y  s.t.  x + y = 3, x >= 0.5, y >= 0.5  ->  x=2.5, y=0.5.
  ConicProgram p;
  const int x = p.add_var("x"), y = p.add_var("y");
  p.minimize(LinExpr::variable(x) + 2.0 * LinExpr::variable(y));
  p.add_eq(LinExpr::variable(x) + LinExpr::variable(y) - 3.0);
  p.add_ineq(LinExpr::variable(x) - 0.5);
  p.add_ineq(LinExpr::variable(y) - 0.5);
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(3.5).margin(1e-7));
  CHECK(sol.x[x] == Approx(2.5).margin(1e-6));
}

TEST_CASE("lp: infeasible pair of bounds") {
  ConicProgram p;
  const int x = p.add_var("x");
  p.minimize(LinExpr::variable(x));
  p.add_ineq(LinExpr::variable(x) - 1.0);   // x >= 1
  p.add_ineq(-LinExpr::variable(x) - 1.0);  // x <= -1
  const auto sol = solve(p);
  CHECK(sol.status == SolveStatus::infeasible);
}

TEST_CASE("lp: unbounded below") {
  ConicProgram p;
  const int x = p.add_var("x");
  p.minimize(LinExpr::variable(x));
  p.add_ineq(-LinExpr::variable(x));  // x <= 0
  const auto sol = solve(p);
  CHECK(sol.status == SolveStatus::unbounded);
}

TEST_CASE("socp: norm of a constant vector") {
  // min t  s.t.  t >= ||(1,2)||  ->  sqrt(5).
  ConicProgram p;
  const int t = p.add_var("t");
  p.minimize(LinExpr::variable(t));
  p.add_soc({LinExpr::variable(t), LinExpr(1.0), LinExpr(2.0)});
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(std::sqrt(5.0)).epsilon(1e-7));
}

TEST_CASE("socp: projection with a linear bound") {
  // min t  s.t.  t >= ||(x-3, 4)||, x >= 5  ->  t = sqrt(20) at x = 5.
  ConicProgram p;
  const int t = p.add_var("t"), x = p.add_var("x");
  p.minimize(LinExpr::variable(t));
  p.add_soc({LinExpr::variable(t), LinExpr::variable(x) - 3.0, LinExpr(4.0)});
  p.add_ineq(LinExpr::variable(x) - 5.0);
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(std::sqrt(20.0)).epsilon(1e-7));
  CHECK(sol.x[x] == Approx(5.0).margin(1e-6));
}

TEST_CASE("rotated cone: t*(1-rho) >= 1 at rho = 0.5 gives t = 2") {
  ConicProgram p;
  const int t = p.add_var("t");
  p.minimize(LinExpr::variable(t));
  // 2 * t * ((1-rho)/2 scaled): use 2ab >= ||w||^2 with a=t, b=1-rho, w=sqrt(2).
  p.add_rsoc(LinExpr::variable(t), LinExpr(0.5), {LinExpr(std::sqrt(2.0))});
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(2.0).epsilon(1e-7));
}

TEST_CASE("sdp: trace minimization with a diagonal floor") {
  // min tr(W)  s.t.  W psd, W00 >= 2  ->  2.
  ConicProgram p;
  const int w00 = p.add_var("w00"), w10 = p.add_var("w10"),
            w11 = p.add_var("w11");
  p.minimize(LinExpr::variable(w00) + LinExpr::variable(w11));
  p.add_ineq(LinExpr::variable(w00) - 2.0);
  p.add_psd(2, {LinExpr::variable(w00), LinExpr::variable(w10),
                LinExpr::variable(w10), LinExpr::variable(w11)});
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(2.0).margin(1e-7));
  CHECK(sol.x[w11] == Approx(0.0).margin(1e-6));
  CHECK(sol.x[w10] == Approx(0.0).margin(1e-6));
}

TEST_CASE("sdp: fixed off-diagonal forces diagonal mass") {
  // W = [[a, 3], [3, b]] psd  ->  ab >= 9, min a+b = 6 at a=b=3.
  ConicProgram p;
  const int a = p.add_var("a"), b = p.add_var("b");
  p.minimize(LinExpr::variable(a) + LinExpr::variable(b));
  p.add_psd(2, {LinExpr::variable(a), LinExpr(3.0), LinExpr(3.0),
                LinExpr::variable(b)});
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(6.0).epsilon(1e-6));
  CHECK(sol.x[a] == Approx(3.0).epsilon(1e-5));
}

TEST_CASE("exp cone: z >= e^x with x pinned") {
  // min z  s.t.  (x, 1, z) in Kexp, x >= 2  ->  z = e^2.
  ConicProgram p;
  const int x = p.add_var("x"), z = p.add_var("z");
  p.minimize(LinExpr::variable(z));
  p.add_expcone(LinExpr::variable(x), LinExpr(1.0), LinExpr::variable(z));
  p.add_ineq(LinExpr::variable(x) - 2.0);
  const auto sol = must_solve(p);
  CHECK(sol.objective == Approx(std::exp(2.0)).epsilon(1e-7));
}

TEST_CASE("exp cone: base-2 log constraint composition") {
  // max t  s.t.  log2(psi + 1) >= t, psi <= 3  ->  t = 2.
  ConicProgram p;
  const int t = p.add_var("t"), psi = p.add_var("psi");
  p.minimize(-LinExpr::variable(t));
  // exp(t ln 2) <= psi + 1  encoded as (t*ln2, 1, psi+1) in Kexp.
  p.add_expcone(LinExpr::variable(t, std::log(2.0)), LinExpr(1.0),
                LinExpr::variable(psi) + 1.0);
  p.add_ineq(3.0 - LinExpr::variable(psi));
  p.add_ineq(LinExpr::variable(psi));
  const auto sol = must_solve(p);
  CHECK(-sol.objective == Approx(2.0).epsilon(1e-7));
}

TEST_CASE("hermitian embedding: identity and eigenvalue doubling") {
  CHECK(embed_hermitian(Eigen::MatrixXcd::Identity(2, 2))
            .isApprox(Eigen::MatrixXd::Identity(4, 4)));

  RandomStream rng(42, "embed-test");
  const int M = 4;
  Eigen::MatrixXcd B(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j)
      B(i, j) = std::complex<double>(rng.next_normal(), rng.next_normal());
  const Eigen::MatrixXcd H = B * B.adjoint();  // random PSD Hermitian
  const Eigen::MatrixXd E = embed_hermitian(H);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eh(H);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ee(E);
  REQUIRE(ee.eigenvalues().size() == 2 * M);
  CHECK(ee.eigenvalues().minCoeff() >= -1e-10);
  // Each eigenvalue of H appears twice in the embedding.
  for (int i = 0; i < M; ++i) {
    CHECK(ee.eigenvalues()[2 * i] == Approx(eh.eigenvalues()[i]).margin(1e-9));
    CHECK(ee.eigenvalues()[2 * i + 1] ==
          Approx(eh.eigenvalues()[i]).margin(1e-9));
  }
  CHECK(E.trace() == Approx(2.0 * H.real().trace()).epsilon(1e-12));

  Eigen::MatrixXcd bad = H;
  bad(0, 1) += std::complex<double>(0.1, 0.0);
  CHECK_THROWS_AS(embed_hermitian(bad), std::invalid_argument);
}

TEST_CASE("dump/parse round trip preserves the solved objective") {
  ConicProgram p;
  const int t = p.add_var("t"), x = p.add_var("x"), z = p.add_var("z");
  const int a = p.add_var("a"), b = p.add_var("b");
  p.minimize(LinExpr::variable(t) + 0.25 * LinExpr::variable(z) +
             LinExpr::variable(a) + LinExpr::variable(b));
  p.add_soc({LinExpr::variable(t), LinExpr::variable(x) - 3.0, LinExpr(4.0)});
  p.add_ineq(LinExpr::variable(x) - 5.0);
  p.add_rsoc(LinExpr::variable(t), LinExpr(0.5), {LinExpr(1.0)});
  p.add_psd(2, {LinExpr::variable(a), LinExpr(1.5), LinExpr(1.5),
                LinExpr::variable(b)});
  p.add_expcone(LinExpr::variable(x, 0.1), LinExpr(1.0), LinExpr::variable(z));
  const auto s1 = must_solve(p);

  const std::string text = p.dump();
  ConicProgram q = ConicProgram::parse(text);
  CHECK(q.dump() == text);  // canonical form is stable
  const auto s2 = must_solve(q);
  CHECK(s2.objective == Approx(s1.objective).margin(1e-8));
}

TEST_CASE("nt scaling algebra on a mixed cone") {
  using namespace ntnopt::conic::detail;
  ConeLayout lay;
  lay.nonneg = 3;
  lay.soc = {4};
  lay.psd = {3};
  ConeOps ops(lay);
  const int m = ops.dim();
  REQUIRE(m == 3 + 4 + 6);

  RandomStream rng(7, "nt-test");
  auto interior = [&]() {
    // Random strictly interior point: shift a random vector inward.
    Eigen::VectorXd u(m);
    for (int i = 0; i < m; ++i) u[i] = rng.next_normal();
    const double theta = ops.outside(u);
    u += (theta + 1.0) * ops.identity();
    REQUIRE(ops.outside(u) < 0.0);
    return u;
  };
  const Eigen::VectorXd s = interior(), z = interior();
  const Scaling sc = ops.nt_scaling(s, z);

  // Defining identities of the scaling point: lambda = W z = W^{-T} s.
  CHECK((ops.W(sc, z) - sc.lambda).norm() < 1e-9 * sc.lambda.norm());
  CHECK((ops.Wti(sc, s) - sc.lambda).norm() < 1e-9 * sc.lambda.norm());

  // Inverses and adjoints compose to identity.
  Eigen::VectorXd u(m);
  for (int i = 0; i < m; ++i) u[i] = rng.next_normal();
  CHECK((ops.Winv(sc, ops.W(sc, u)) - u).norm() < 1e-10 * u.norm());
  CHECK((ops.Wti(sc, ops.Wt(sc, u)) - u).norm() < 1e-10 * u.norm());

  // Jordan product and its inverse around lambda.
  const Eigen::VectorXd v = ops.jordan(sc.lambda, u);
  CHECK((ops.jordan_solve(sc.lambda, v) - u).norm() < 1e-9 * u.norm());

  // W^T W triplets against operator application.
  std::vector<Trip> trips;
  ops.add_wtw_triplets(sc, trips, 0, 1.0);
  SpMat WtW(m, m);
  WtW.setFromTriplets(trips.begin(), trips.end());
  CHECK((WtW * u - ops.Wt(sc, ops.W(sc, u))).norm() < 1e-9 * u.norm());

  // max_step lands on the cone boundary.
  Eigen::VectorXd du(m);
  for (int i = 0; i < m; ++i) du[i] = rng.next_normal();
  const double am = ops.max_step(s, du);
  if (std::isfinite(am)) {
    CHECK(ops.outside(s + 0.999 * am * du) <= 1e-9);
    CHECK(ops.outside(s + 1.01 * am * du) > 0.0);
  }
}

TEST_CASE("random feasible programs solve within certified accuracy") {
  RandomStream rng(20240815, "random-battery");
  for (int inst = 0; inst < 12; ++inst) {
    const int n = 4 + static_cast<int>(rng.next_u64() % 4);  // 4..7 vars
    ConicProgram p;
    std::vector<int> xs = p.add_vars("x", n);
    Eigen::VectorXd xstar(n);
    for (int i = 0; i < n; ++i) xstar[i] = rng.next_normal();

    auto rand_expr = [&](double slack) {
      // Affine expr nonnegative (by `slack`) at xstar.
      LinExpr e;
      double val = 0.0;
      for (int i = 0; i < n; ++i) {
        const double c = rng.next_normal();
        e += LinExpr::variable(xs[i], c);
        val += c * xstar[i];
      }
      e += LinExpr(slack - val);
      return e;
    };

    // Objective and a box of linear rows strictly feasible at xstar.
    LinExpr obj;
    for (int i = 0; i < n; ++i)
      obj += LinExpr::variable(xs[i], rng.next_normal());
    p.minimize(obj);
    for (int r = 0; r < n + 2; ++r)
      p.add_ineq(rand_expr(0.5 + rng.next_uniform()));
    // Keep the feasible set bounded: ||x - xstar|| <= radius.
    {
      std::vector<LinExpr> soc;
      soc.push_back(LinExpr(3.0 + rng.next_uniform()));
      for (int i = 0; i < n; ++i)
        soc.push_back(LinExpr::variable(xs[i]) - xstar[i]);
      p.add_soc(std::move(soc));
    }
    // A PSD row: C0 + sum x_k B_k with C0 chosen PD at xstar.
    {
      const int d = 2;
      std::vector<Eigen::MatrixXd> B(n);
      Eigen::MatrixXd C0 = Eigen::MatrixXd::Identity(d, d) * (d + 1.0);
      for (int k = 0; k < n; ++k) {
        Eigen::MatrixXd Bk(d, d);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) Bk(i, j) = rng.next_normal() * 0.3;
        Bk = ((Bk + Bk.transpose()) / 2.0).eval();
        B[k] = Bk;
        C0 -= xstar[k] * Bk;
      }
      std::vector<LinExpr> entries(d * d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          LinExpr e(C0(i, j));
          for (int k = 0; k < n; ++k)
            e += LinExpr::variable(xs[k], B[k](i, j));
          entries[i * d + j] = e;
        }
      p.add_psd(d, entries);
    }

    ConicSolution sol = solve(p);
    INFO("instance " << inst << " status " << to_string(sol.status) << " "
                     << sol.message);
    REQUIRE(sol.status == SolveStatus::optimal);
    // Residual invariants and optimality versus the known feasible point.
    CHECK(sol.primal_residual <= 1e-7);
    CHECK(sol.dual_residual <= 1e-7);
    const double at_xstar = p.objective().evaluate(xstar);
    CHECK(sol.objective <= at_xstar + 1e-6 * (1.0 + std::abs(at_xstar)));

    // Determinism: identical rerun gives the identical objective.
    ConicSolution sol2 = solve(p);
    CHECK(sol2.objective == sol.objective);
  }
}
