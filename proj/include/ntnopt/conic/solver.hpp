#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "ntnopt/common.hpp"
#include "ntnopt/conic/program.hpp"

namespace ntnopt::conic {

enum class SolveStatus { optimal, infeasible, unbounded, inaccurate, failed };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::inaccurate: return "inaccurate";
    case SolveStatus::failed: return "failed";
  }
  return "?";
}

struct SolveSettings {
  int max_iters = 100;
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  // Thresholds below which a non-converged run still counts as usable.
  double feastol_inacc = 1e-5;
  double reltol_inacc = 1e-5;
  // Exponential-cone rows are enforced by outer tangent cuts; the solve
  // loop refines until the worst violation drops under exp_tol.
  double exp_tol = 1e-9;
  int max_cut_rounds = 60;
  bool verbose = false;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::failed;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd x;
  double solve_time = 0.0;  // [s]
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double duality_gap = std::numeric_limits<double>::infinity();
  std::string message;
};

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

inline int svec_len(int d) { return d * (d + 1) / 2; }

// Symmetric-vectorization with sqrt(2) on off-diagonals so that
// <A, B>_F = svec(A).svec(B). Column-major lower triangle ordering.
inline Eigen::MatrixXd svec_to_mat(const Eigen::VectorXd& u, int d) {
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Eigen::MatrixXd U(d, d);
  int k = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i, ++k) {
      if (i == j) {
        U(i, j) = u[k];
      } else {
        U(i, j) = u[k] * inv_sqrt2;
        U(j, i) = U(i, j);
      }
    }
  return U;
}

inline Eigen::VectorXd mat_to_svec(const Eigen::MatrixXd& U) {
  static const double sqrt2 = std::sqrt(2.0);
  const int d = static_cast<int>(U.rows());
  Eigen::VectorXd u(svec_len(d));
  int k = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i, ++k)
      u[k] = (i == j) ? U(i, j) : 0.5 * (U(i, j) + U(j, i)) * sqrt2;
  return u;
}

struct ConeLayout {
  int nonneg = 0;
  std::vector<int> soc;  // cone dims
  std::vector<int> psd;  // matrix dims

  int dim() const {
    int m = nonneg;
    for (int q : soc) m += q;
    for (int d : psd) m += svec_len(d);
    return m;
  }
  // Barrier degree: 1 per nonneg ray, 1 per SOC, d per PSD block.
  int degree() const {
    int deg = nonneg + static_cast<int>(soc.size());
    for (int d : psd) deg += d;
    return deg;
  }
};

struct Scaling {
  Eigen::VectorXd wnn;  // nonneg block: W = diag(wnn)
  struct Soc {
    double eta = 1.0;
    Eigen::VectorXd v;  // hyperbolic Householder vector, v'Jv = 1
  };
  std::vector<Soc> soc;
  struct Psd {
    Eigen::MatrixXd R, Rinv;
  };
  std::vector<Psd> psd;
  Eigen::VectorXd lambda;  // scaled point, lambda = W z = W^{-T} s
};

// Blockwise operations on the symmetric cone K = R+^l x SOC x PSD.
class ConeOps {
 public:
  explicit ConeOps(ConeLayout lay) : lay_(std::move(lay)) {
    int off = lay_.nonneg;
    for (int q : lay_.soc) {
      soc_off_.push_back(off);
      off += q;
    }
    for (int d : lay_.psd) {
      psd_off_.push_back(off);
      off += svec_len(d);
    }
    dim_ = off;
  }

  int dim() const { return dim_; }
  int degree() const { return lay_.degree(); }
  const ConeLayout& layout() const { return lay_; }

  Eigen::VectorXd identity() const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim_);
    e.head(lay_.nonneg).setOnes();
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) e[soc_off_[k]] = 1.0;
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      int idx = psd_off_[k];
      for (int j = 0; j < d; ++j) {
        e[idx] = 1.0;        // diagonal entry (j,j)
        idx += d - j;        // advance to next diagonal in column-major svec
      }
    }
    return e;
  }

  // Signed distance outside the cone: positive means u is not in K,
  // negative magnitude is the interior margin (smallest eigenvalue).
  double outside(const Eigen::VectorXd& u) const {
    double theta = -std::numeric_limits<double>::infinity();
    if (lay_.nonneg > 0) theta = std::max(theta, -u.head(lay_.nonneg).minCoeff());
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) {
      const auto b = u.segment(soc_off_[k], lay_.soc[k]);
      theta = std::max(theta, b.tail(b.size() - 1).norm() - b[0]);
    }
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      const Eigen::MatrixXd U = svec_to_mat(u.segment(psd_off_[k], svec_len(d)), d);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(U, Eigen::EigenvaluesOnly);
      theta = std::max(theta, -es.eigenvalues().minCoeff());
    }
    return theta;
  }

  // Largest alpha >= 0 with u + alpha*du in K (inf when the ray stays inside).
  double max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lay_.nonneg; ++i)
      if (du[i] < 0.0) alpha = std::min(alpha, -u[i] / du[i]);
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) {
      const int q = lay_.soc[k];
      const auto uu = u.segment(soc_off_[k], q);
      const auto dd = du.segment(soc_off_[k], q);
      alpha = std::min(alpha, soc_max_step(uu, dd));
    }
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      const Eigen::MatrixXd U = svec_to_mat(u.segment(psd_off_[k], svec_len(d)), d);
      const Eigen::MatrixXd D = svec_to_mat(du.segment(psd_off_[k], svec_len(d)), d);
      alpha = std::min(alpha, psd_max_step(U, D));
    }
    return alpha;
  }

  // Nesterov-Todd scaling at a strictly interior primal-dual pair.
  Scaling nt_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z) const {
    Scaling sc;
    sc.lambda.resize(dim_);
    sc.wnn = (s.head(lay_.nonneg).array() / z.head(lay_.nonneg).array()).sqrt();
    sc.lambda.head(lay_.nonneg) =
        (s.head(lay_.nonneg).array() * z.head(lay_.nonneg).array()).sqrt();
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) {
      const int q = lay_.soc[k];
      const auto sb = s.segment(soc_off_[k], q);
      const auto zb = z.segment(soc_off_[k], q);
      const double sjs = jnorm2(sb);
      const double zjz = jnorm2(zb);
      if (sjs <= 0.0 || zjz <= 0.0)
        throw SolveError("soc scaling point not interior");
      Scaling::Soc blk;
      blk.eta = std::pow(sjs / zjz, 0.25);
      const Eigen::VectorXd sn = sb / std::sqrt(sjs);
      const Eigen::VectorXd zn = zb / std::sqrt(zjz);
      const double gamma = std::sqrt((1.0 + sn.dot(zn)) / 2.0);
      // Scaling point wbar, then the half-angle Householder vector v with
      // v'Jv = 1 so that W = eta*(2vv' - J) satisfies W^2 z = s.
      Eigen::VectorXd wbar = sn;
      wbar[0] += zn[0];
      wbar.tail(q - 1) -= zn.tail(q - 1);
      wbar /= (2.0 * gamma);
      Eigen::VectorXd v = wbar;
      v[0] += 1.0;
      v /= std::sqrt(2.0 * (1.0 + wbar[0]));
      blk.v = std::move(v);
      sc.soc.push_back(blk);
      sc.lambda.segment(soc_off_[k], q) = soc_W(blk, zb);
    }
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      const Eigen::MatrixXd S = svec_to_mat(s.segment(psd_off_[k], svec_len(d)), d);
      const Eigen::MatrixXd Z = svec_to_mat(z.segment(psd_off_[k], svec_len(d)), d);
      Eigen::LLT<Eigen::MatrixXd> ls(S), lz(Z);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success)
        throw SolveError("psd scaling point not interior");
      const Eigen::MatrixXd Ls = ls.matrixL();
      const Eigen::MatrixXd Lz = lz.matrixL();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(Lz.transpose() * Ls,
                                            Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Eigen::VectorXd sig = svd.singularValues();
      if (sig.minCoeff() <= 0.0) throw SolveError("psd scaling degenerate");
      const Eigen::VectorXd sqrt_sig = sig.array().sqrt();
      Scaling::Psd blk;
      blk.R = Ls * svd.matrixV() * sqrt_sig.cwiseInverse().asDiagonal();
      blk.Rinv = sqrt_sig.asDiagonal() * svd.matrixV().transpose() *
                 Ls.triangularView<Eigen::Lower>().solve(
                     Eigen::MatrixXd::Identity(d, d));
      // In this frame the scaled point is the diagonal singular-value matrix.
      Eigen::VectorXd lam = Eigen::VectorXd::Zero(svec_len(d));
      int idx = 0;
      for (int j = 0; j < d; ++j) {
        lam[idx] = sig[j];
        idx += d - j;
      }
      sc.lambda.segment(psd_off_[k], svec_len(d)) = lam;
      sc.psd.push_back(std::move(blk));
    }
    return sc;
  }

  // W, W^T, W^{-1}, W^{-T} as linear maps on cone-space vectors.
  Eigen::VectorXd W(const Scaling& sc, const Eigen::VectorXd& u) const {
    return apply(sc, u, Mode::W);
  }
  Eigen::VectorXd Wt(const Scaling& sc, const Eigen::VectorXd& u) const {
    return apply(sc, u, Mode::Wt);
  }
  Eigen::VectorXd Winv(const Scaling& sc, const Eigen::VectorXd& u) const {
    return apply(sc, u, Mode::Winv);
  }
  Eigen::VectorXd Wti(const Scaling& sc, const Eigen::VectorXd& u) const {
    return apply(sc, u, Mode::Wti);
  }

  // Jordan product a o b, blockwise.
  Eigen::VectorXd jordan(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    Eigen::VectorXd out(dim_);
    out.head(lay_.nonneg) =
        a.head(lay_.nonneg).array() * b.head(lay_.nonneg).array();
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) {
      const int q = lay_.soc[k];
      const auto ab = a.segment(soc_off_[k], q);
      const auto bb = b.segment(soc_off_[k], q);
      out[soc_off_[k]] = ab.dot(bb);
      out.segment(soc_off_[k] + 1, q - 1) =
          ab[0] * bb.tail(q - 1) + bb[0] * ab.tail(q - 1);
    }
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      const Eigen::MatrixXd A = svec_to_mat(a.segment(psd_off_[k], svec_len(d)), d);
      const Eigen::MatrixXd B = svec_to_mat(b.segment(psd_off_[k], svec_len(d)), d);
      out.segment(psd_off_[k], svec_len(d)) =
          mat_to_svec(0.5 * (A * B + B * A));
    }
    return out;
  }

  // Solve lam o u = rhs for u (lam strictly interior).
  Eigen::VectorXd jordan_solve(const Eigen::VectorXd& lam,
                               const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd out(dim_);
    out.head(lay_.nonneg) =
        rhs.head(lay_.nonneg).array() / lam.head(lay_.nonneg).array();
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) {
      const int q = lay_.soc[k];
      const auto lb = lam.segment(soc_off_[k], q);
      const auto db = rhs.segment(soc_off_[k], q);
      const double l0 = lb[0];
      const auto lbar = lb.tail(q - 1);
      const double det = l0 * l0 - lbar.squaredNorm();
      if (det <= 0.0 || l0 <= 0.0) throw SolveError("soc jordan solve singular");
      const double u0 = (l0 * db[0] - lbar.dot(db.tail(q - 1))) / det;
      out[soc_off_[k]] = u0;
      out.segment(soc_off_[k] + 1, q - 1) = (db.tail(q - 1) - u0 * lbar) / l0;
    }
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      const Eigen::MatrixXd L =
          svec_to_mat(lam.segment(psd_off_[k], svec_len(d)), d);
      const Eigen::MatrixXd B =
          svec_to_mat(rhs.segment(psd_off_[k], svec_len(d)), d);
      // Solve the Lyapunov system (L U + U L)/2 = B in the eigenbasis of L.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
      const Eigen::MatrixXd& Q = es.eigenvectors();
      const Eigen::VectorXd& ev = es.eigenvalues();
      Eigen::MatrixXd Bt = Q.transpose() * B * Q;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          const double denom = 0.5 * (ev[i] + ev[j]);
          if (denom <= 0.0) throw SolveError("psd jordan solve singular");
          Bt(i, j) /= denom;
        }
      out.segment(psd_off_[k], svec_len(d)) =
          mat_to_svec(Q * Bt * Q.transpose());
    }
    return out;
  }

 private:
  enum class Mode { W, Wt, Winv, Wti };

  static double jnorm2(const Eigen::Ref<const Eigen::VectorXd>& u) {
    return u[0] * u[0] - u.tail(u.size() - 1).squaredNorm();
  }

  static Eigen::VectorXd jmul(const Eigen::Ref<const Eigen::VectorXd>& u) {
    Eigen::VectorXd r = -u;
    r[0] = u[0];
    return r;
  }

  // u -> eta * (2 v (v.u) - J u)
  static Eigen::VectorXd soc_W(const Scaling::Soc& b,
                               const Eigen::Ref<const Eigen::VectorXd>& u) {
    Eigen::VectorXd r = 2.0 * b.v.dot(u) * b.v - jmul(u);
    return b.eta * r;
  }
  // u -> (1/eta) * (2 (Jv)(v.(Ju)) - Ju)  ==  W^{-1} u = (1/eta) J H(v) J u
  static Eigen::VectorXd soc_Winv(const Scaling::Soc& b,
                                  const Eigen::Ref<const Eigen::VectorXd>& u) {
    const Eigen::VectorXd ju = jmul(u);
    Eigen::VectorXd r = 2.0 * b.v.dot(ju) * jmul(b.v) - ju;
    return r / b.eta;
  }

  static double soc_max_step(const Eigen::Ref<const Eigen::VectorXd>& u,
                             const Eigen::Ref<const Eigen::VectorXd>& d) {
    const double inf = std::numeric_limits<double>::infinity();
    const double c2 = d[0] * d[0] - d.tail(d.size() - 1).squaredNorm();
    const double c1 =
        2.0 * (u[0] * d[0] - u.tail(u.size() - 1).dot(d.tail(d.size() - 1)));
    const double c0 = u[0] * u[0] - u.tail(u.size() - 1).squaredNorm();
    double alpha = inf;
    if (d[0] < 0.0) alpha = std::min(alpha, -u[0] / d[0]);
    // Smallest positive root of c2 a^2 + c1 a + c0 = 0 (c0 > 0 interior).
    if (std::abs(c2) < 1e-300) {
      if (c1 < 0.0) alpha = std::min(alpha, -c0 / c1);
    } else {
      const double disc = c1 * c1 - 4.0 * c2 * c0;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        // Numerically stable root pair.
        const double qq = -0.5 * (c1 + (c1 >= 0.0 ? sq : -sq));
        double r1 = qq / c2;
        double r2 = (qq != 0.0) ? c0 / qq : inf;
        if (r1 > r2) std::swap(r1, r2);
        if (r1 > 0.0)
          alpha = std::min(alpha, r1);
        else if (r2 > 0.0)
          alpha = std::min(alpha, r2);
      }
    }
    return alpha;
  }

  static double psd_max_step(const Eigen::MatrixXd& U, const Eigen::MatrixXd& D) {
    Eigen::LLT<Eigen::MatrixXd> llt(U);
    if (llt.info() != Eigen::Success)
      throw SolveError("psd max_step at non-interior point");
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::MatrixXd M = L.triangularView<Eigen::Lower>().solve(
        L.triangularView<Eigen::Lower>().solve(D).transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()),
                                                      Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
  }

  Eigen::VectorXd apply(const Scaling& sc, const Eigen::VectorXd& u,
                        Mode mode) const {
    Eigen::VectorXd out(dim_);
    switch (mode) {
      case Mode::W:
      case Mode::Wt:
        out.head(lay_.nonneg) =
            u.head(lay_.nonneg).array() * sc.wnn.array();
        break;
      case Mode::Winv:
      case Mode::Wti:
        out.head(lay_.nonneg) =
            u.head(lay_.nonneg).array() / sc.wnn.array();
        break;
    }
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) {
      const int q = lay_.soc[k];
      const auto ub = u.segment(soc_off_[k], q);
      out.segment(soc_off_[k], q) = (mode == Mode::W || mode == Mode::Wt)
                                        ? soc_W(sc.soc[k], ub)
                                        : soc_Winv(sc.soc[k], ub);
    }
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      const Eigen::MatrixXd U = svec_to_mat(u.segment(psd_off_[k], svec_len(d)), d);
      const Eigen::MatrixXd& R = sc.psd[k].R;
      const Eigen::MatrixXd& Ri = sc.psd[k].Rinv;
      Eigen::MatrixXd V;
      switch (mode) {
        case Mode::W: V = R.transpose() * U * R; break;
        case Mode::Wt: V = R * U * R.transpose(); break;
        case Mode::Winv: V = Ri.transpose() * U * Ri; break;
        case Mode::Wti: V = Ri * U * Ri.transpose(); break;
      }
      out.segment(psd_off_[k], svec_len(d)) = mat_to_svec(V);
    }
    return out;
  }

  ConeLayout lay_;
  std::vector<int> soc_off_, psd_off_;
  int dim_ = 0;

 public:
  // Dense blocks of scale * W^T W appended as triplets at row/col offset
  // row0 (the (3,3) block of the KKT matrix uses scale = -1).
  void add_wtw_triplets(const Scaling& sc, std::vector<Trip>& trips, int row0,
                        double scale) const {
    for (int i = 0; i < lay_.nonneg; ++i)
      trips.emplace_back(row0 + i, row0 + i, scale * sc.wnn[i] * sc.wnn[i]);
    for (std::size_t k = 0; k < lay_.soc.size(); ++k) {
      const int q = lay_.soc[k];
      const Eigen::VectorXd& v = sc.soc[k].v;
      Eigen::MatrixXd H = 2.0 * v * v.transpose();
      H(0, 0) -= 1.0;
      for (int i = 1; i < q; ++i) H(i, i) += 1.0;
      const Eigen::MatrixXd WW = (sc.soc[k].eta * sc.soc[k].eta) * (H * H);
      const int off = row0 + soc_off_[k];
      for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
          trips.emplace_back(off + i, off + j, scale * WW(i, j));
    }
    for (std::size_t k = 0; k < lay_.psd.size(); ++k) {
      const int d = lay_.psd[k];
      const int sl = svec_len(d);
      const Eigen::MatrixXd T = sc.psd[k].R * sc.psd[k].R.transpose();
      // Operator u -> svec(T mat(u) T), assembled columnwise from outer
      // products of T's columns.
      static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
      const int off = row0 + psd_off_[k];
      int col = 0;
      for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i, ++col) {
          Eigen::MatrixXd C;
          if (i == j)
            C = T.col(i) * T.row(i);
          else
            C = (T.col(i) * T.row(j) + T.col(j) * T.row(i)) * inv_sqrt2;
          const Eigen::VectorXd sc_col = mat_to_svec(C);
          for (int r = 0; r < sl; ++r)
            trips.emplace_back(off + r, off + col, scale * sc_col[r]);
        }
    }
  }

  int psd_offset(std::size_t k) const { return psd_off_[k]; }
};

// ---------------------------------------------------------------------------
// Standard-form data:  min c'x  s.t.  A x = b,  G x + s = h,  s in K,
// with K = R+^l x SOC(q_1..) x PSD(d_1..). Exponential-cone constraints are
// kept symbolically and enforced through tangent cuts appended to the
// nonnegative block.
// ---------------------------------------------------------------------------

struct StdFormBase {
  int n = 0;
  Eigen::VectorXd c;
  double c0 = 0.0;
  std::vector<Trip> Atrip;
  std::vector<double> b;
  std::vector<Trip> Glin;
  std::vector<double> hlin;
  std::vector<Trip> Gsoc;
  std::vector<double> hsoc;
  std::vector<int> soc_dims;
  std::vector<Trip> Gpsd;
  std::vector<double> hpsd;
  std::vector<int> psd_dims;
  std::vector<ExpCon> exps;
};

// Appends an s-row for "expr >= 0" style cone membership: s = expr means
// G row = -coefs and h = +constant.
inline void push_cone_row(const LinExpr& e, int row, double scale,
                          std::vector<Trip>& trips, std::vector<double>& h) {
  for (const auto& [j, v] : e.coefficients())
    trips.emplace_back(row, j, -scale * v);
  h.push_back(scale * e.constant());
}

inline StdFormBase to_std_form(const ConicProgram& prog) {
  static const double sqrt2 = std::sqrt(2.0);
  StdFormBase sf;
  sf.n = prog.num_vars();
  sf.c = Eigen::VectorXd::Zero(sf.n);
  for (const auto& [j, v] : prog.objective().coefficients()) sf.c[j] = v;
  sf.c0 = prog.objective().constant();

  for (const auto& con : prog.constraints()) {
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, EqCon>) {
            const int row = static_cast<int>(sf.b.size());
            for (const auto& [j, v] : c.e.coefficients())
              sf.Atrip.emplace_back(row, j, v);
            sf.b.push_back(-c.e.constant());
          } else if constexpr (std::is_same_v<T, IneqCon>) {
            push_cone_row(c.e, static_cast<int>(sf.hlin.size()), 1.0, sf.Glin,
                          sf.hlin);
          } else if constexpr (std::is_same_v<T, SocCon>) {
            int row = static_cast<int>(sf.hsoc.size());
            for (const auto& e : c.e)
              push_cone_row(e, row++, 1.0, sf.Gsoc, sf.hsoc);
            sf.soc_dims.push_back(static_cast<int>(c.e.size()));
          } else if constexpr (std::is_same_v<T, RsocCon>) {
            // 2ab >= ||w||^2, a,b >= 0  <=>  (a+b, a-b, sqrt2*w) in SOC.
            int row = static_cast<int>(sf.hsoc.size());
            push_cone_row(c.a + c.b, row++, 1.0, sf.Gsoc, sf.hsoc);
            push_cone_row(c.a - c.b, row++, 1.0, sf.Gsoc, sf.hsoc);
            for (const auto& e : c.w)
              push_cone_row(e, row++, sqrt2, sf.Gsoc, sf.hsoc);
            sf.soc_dims.push_back(static_cast<int>(c.w.size()) + 2);
          } else if constexpr (std::is_same_v<T, PsdCon>) {
            // svec rows, column-major lower triangle, sqrt2 off-diagonal.
            int row = static_cast<int>(sf.hpsd.size());
            for (int j = 0; j < c.dim; ++j)
              for (int i = j; i < c.dim; ++i)
                push_cone_row(c.lower[i * (i + 1) / 2 + j], row++,
                              i == j ? 1.0 : sqrt2, sf.Gpsd, sf.hpsd);
            sf.psd_dims.push_back(c.dim);
          } else if constexpr (std::is_same_v<T, ExpCon>) {
            sf.exps.push_back(c);
          }
        },
        con);
  }
  return sf;
}

struct Assembled {
  int n = 0, p = 0, m = 0;
  SpMat A, G;
  Eigen::VectorXd b, h, c;
  double c0 = 0.0;
  ConeLayout lay;
};

inline Assembled assemble(const StdFormBase& sf,
                          const std::vector<LinExpr>& cut_rows) {
  Assembled P;
  P.n = sf.n;
  P.p = static_cast<int>(sf.b.size());
  P.c = sf.c;
  P.c0 = sf.c0;
  P.lay.nonneg = static_cast<int>(sf.hlin.size() + cut_rows.size());
  P.lay.soc = sf.soc_dims;
  P.lay.psd = sf.psd_dims;
  P.m = P.lay.dim();

  P.A.resize(P.p, P.n);
  P.A.setFromTriplets(sf.Atrip.begin(), sf.Atrip.end());
  P.b.resize(P.p);
  for (int i = 0; i < P.p; ++i) P.b[i] = sf.b[i];

  std::vector<Trip> gt;
  std::vector<double> hv;
  gt.reserve(sf.Glin.size() + sf.Gsoc.size() + sf.Gpsd.size() +
             cut_rows.size() * 4);
  hv.reserve(P.m);
  for (const auto& t : sf.Glin) gt.emplace_back(t.row(), t.col(), t.value());
  for (double v : sf.hlin) hv.push_back(v);
  {
    std::vector<Trip> tmp;
    std::vector<double> htmp;
    int row = static_cast<int>(hv.size());
    for (const auto& e : cut_rows) {
      push_cone_row(e, 0, 1.0, tmp, htmp);
      for (const auto& t : tmp) gt.emplace_back(row, t.col(), t.value());
      hv.push_back(htmp[0]);
      tmp.clear();
      htmp.clear();
      ++row;
    }
  }
  const int soc_base = static_cast<int>(hv.size());
  for (const auto& t : sf.Gsoc)
    gt.emplace_back(soc_base + t.row(), t.col(), t.value());
  for (double v : sf.hsoc) hv.push_back(v);
  const int psd_base = static_cast<int>(hv.size());
  for (const auto& t : sf.Gpsd)
    gt.emplace_back(psd_base + t.row(), t.col(), t.value());
  for (double v : sf.hpsd) hv.push_back(v);

  P.G.resize(P.m, P.n);
  P.G.setFromTriplets(gt.begin(), gt.end());
  P.h.resize(P.m);
  for (int i = 0; i < P.m; ++i) P.h[i] = hv[i];
  return P;
}

// Ruiz row/column equilibration. Rows inside one SOC/PSD block share a
// single factor so cone membership is preserved; the objective is scaled
// separately. Returns the scalings needed to map solutions back.
struct Equil {
  Eigen::VectorXd d;     // column scaling, x = d .* x_scaled
  Eigen::VectorXd eA;    // eq row scaling
  Eigen::VectorXd eG;    // cone row scaling (blockwise constant)
  double cscale = 1.0;   // objective scaling
};

inline Equil equilibrate(Assembled& P, int iters = 10) {
  Equil eq;
  eq.d = Eigen::VectorXd::Ones(P.n);
  eq.eA = Eigen::VectorXd::Ones(P.p);
  eq.eG = Eigen::VectorXd::Ones(P.m);

  // Block index of every G row: -1 for nonneg rows (scaled individually),
  // otherwise an id shared by the rows of one SOC/PSD block.
  std::vector<int> block_of(P.m, -1);
  {
    int row = P.lay.nonneg, blk = 0;
    for (int q : P.lay.soc) {
      for (int i = 0; i < q; ++i) block_of[row++] = blk;
      ++blk;
    }
    for (int d : P.lay.psd) {
      for (int i = 0; i < svec_len(d); ++i) block_of[row++] = blk;
      ++blk;
    }
  }
  const int nblocks = static_cast<int>(P.lay.soc.size() + P.lay.psd.size());

  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd colmax = Eigen::VectorXd::Zero(P.n);
    Eigen::VectorXd rowA = Eigen::VectorXd::Zero(P.p);
    Eigen::VectorXd rowG = Eigen::VectorXd::Zero(P.m);
    for (int k = 0; k < P.A.outerSize(); ++k)
      for (SpMat::InnerIterator t(P.A, k); t; ++t) {
        const double a = std::abs(t.value());
        colmax[t.col()] = std::max(colmax[t.col()], a);
        rowA[t.row()] = std::max(rowA[t.row()], a);
      }
    for (int k = 0; k < P.G.outerSize(); ++k)
      for (SpMat::InnerIterator t(P.G, k); t; ++t) {
        const double a = std::abs(t.value());
        colmax[t.col()] = std::max(colmax[t.col()], a);
        rowG[t.row()] = std::max(rowG[t.row()], a);
      }
    // Uniform factor per cone block: the max row norm over the block.
    Eigen::VectorXd blkmax = Eigen::VectorXd::Zero(std::max(1, nblocks));
    for (int r = 0; r < P.m; ++r)
      if (block_of[r] >= 0)
        blkmax[block_of[r]] = std::max(blkmax[block_of[r]], rowG[r]);
    for (int r = 0; r < P.m; ++r)
      if (block_of[r] >= 0) rowG[r] = blkmax[block_of[r]];

    auto factor = [](double v) {
      return (v > 0.0 && std::isfinite(v)) ? 1.0 / std::sqrt(v) : 1.0;
    };
    Eigen::VectorXd fc = colmax.unaryExpr(factor);
    Eigen::VectorXd fa = rowA.unaryExpr(factor);
    Eigen::VectorXd fg = rowG.unaryExpr(factor);

    P.A = fa.asDiagonal() * P.A * fc.asDiagonal();
    P.G = fg.asDiagonal() * P.G * fc.asDiagonal();
    P.b = fa.asDiagonal() * P.b;
    P.h = fg.asDiagonal() * P.h;
    eq.d = eq.d.cwiseProduct(fc);
    eq.eA = eq.eA.cwiseProduct(fa);
    eq.eG = eq.eG.cwiseProduct(fg);
  }
  P.c = P.c.cwiseProduct(eq.d);
  eq.cscale = std::max(1.0, P.c.lpNorm<Eigen::Infinity>());
  P.c /= eq.cscale;
  return eq;
}

struct IpmResult {
  SolveStatus status = SolveStatus::failed;
  Eigen::VectorXd x, y, z, s;  // already divided by tau when optimal-ish
  int iters = 0;
  double pres = std::numeric_limits<double>::infinity();
  double dres = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  std::string msg;
};

// Primal-dual interior-point method on the homogeneous self-dual embedding
// with Nesterov-Todd scaling and a Mehrotra predictor-corrector step.
inline IpmResult ipm_solve(const Assembled& P, const SolveSettings& st) {
  const int n = P.n, p = P.p, m = P.m;
  const int NN = n + p + m;
  ConeOps cones(P.lay);
  IpmResult R;

  const double resx0 = std::max(1.0, P.c.norm());
  const double resy0 = std::max(1.0, P.b.norm());
  const double resz0 = std::max(1.0, P.h.norm());
  const double deg = std::max(1, cones.degree() + 1);

  // Static KKT triplets: A, A', G, G' blocks.
  std::vector<Trip> stat;
  stat.reserve(4 * (P.A.nonZeros() + P.G.nonZeros()));
  for (int k = 0; k < P.A.outerSize(); ++k)
    for (SpMat::InnerIterator t(P.A, k); t; ++t) {
      stat.emplace_back(n + static_cast<int>(t.row()),
                        static_cast<int>(t.col()), t.value());
      stat.emplace_back(static_cast<int>(t.col()),
                        n + static_cast<int>(t.row()), t.value());
    }
  for (int k = 0; k < P.G.outerSize(); ++k)
    for (SpMat::InnerIterator t(P.G, k); t; ++t) {
      stat.emplace_back(n + p + static_cast<int>(t.row()),
                        static_cast<int>(t.col()), t.value());
      stat.emplace_back(static_cast<int>(t.col()),
                        n + p + static_cast<int>(t.row()), t.value());
    }

  Eigen::SparseLU<SpMat> lu;
  SpMat K(NN, NN);
  double reg = 0.0;

  auto factor_kkt = [&](const Scaling* sc) {
    std::vector<Trip> trips = stat;
    if (sc) {
      cones.add_wtw_triplets(*sc, trips, n + p, -1.0);
    } else {
      for (int i = 0; i < m; ++i) trips.emplace_back(n + p + i, n + p + i, -1.0);
    }
    for (double r : {0.0, 1e-10, 1e-8}) {
      reg = r;
      std::vector<Trip> tr = trips;
      if (r > 0.0) {
        for (int i = 0; i < n; ++i) tr.emplace_back(i, i, r);
        for (int i = n; i < NN; ++i) tr.emplace_back(i, i, -r);
      }
      K.setZero();
      K.setFromTriplets(tr.begin(), tr.end());
      lu.compute(K);
      if (lu.info() == Eigen::Success) return;
    }
    throw SolveError("KKT factorization failed");
  };

  auto solve_kkt = [&](const Eigen::VectorXd& rhs) {
    Eigen::VectorXd x = lu.solve(rhs);
    // One step of iterative refinement.
    Eigen::VectorXd r = rhs - K * x;
    x += lu.solve(r);
    if (!x.allFinite()) throw SolveError("KKT solve produced non-finite values");
    return x;
  };

  // --- initial point ---
  Eigen::VectorXd x, y, z, s;
  {
    factor_kkt(nullptr);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(NN);
    rhs.segment(n, p) = P.b;
    rhs.tail(m) = P.h;
    Eigen::VectorXd sol = solve_kkt(rhs);
    x = sol.head(n);
    s = -sol.tail(m);
    const double ts = cones.outside(s);
    if (ts >= -1e-8 * std::max(1.0, s.norm()))
      s += (1.0 + ts) * cones.identity();

    rhs.setZero();
    rhs.head(n) = -P.c;
    sol = solve_kkt(rhs);
    y = sol.segment(n, p);
    z = sol.tail(m);
    const double tz = cones.outside(z);
    if (tz >= -1e-8 * std::max(1.0, z.norm()))
      z += (1.0 + tz) * cones.identity();
  }
  double tau = 1.0, kappa = 1.0;

  const Eigen::VectorXd e = cones.identity();
  double pres = 0, dres = 0, gap_t = 0, relgap = 0;

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd rx = P.A.transpose() * y + P.G.transpose() * z + P.c * tau;
    const Eigen::VectorXd ry = P.A * x - P.b * tau;
    const Eigen::VectorXd rz = P.G * x + s - P.h * tau;
    const double rt = kappa + P.c.dot(x) + P.b.dot(y) + P.h.dot(z);
    const double gap = s.dot(z);
    const double mu = (gap + tau * kappa) / deg;

    const double pcost = P.c.dot(x) / tau;
    const double dcost = -(P.b.dot(y) + P.h.dot(z)) / tau;
    pres = std::max(ry.norm() / resy0, rz.norm() / resz0) / tau;
    dres = rx.norm() / resx0 / tau;
    gap_t = gap / (tau * tau);
    const double rel_denom = pcost < 0.0 ? -pcost : (dcost > 0.0 ? dcost : -1.0);
    relgap = rel_denom > 0.0 ? gap_t / rel_denom
                             : std::numeric_limits<double>::infinity();

    R.iters = iter;
    if (pres <= st.feastol && dres <= st.feastol &&
        (gap_t <= st.abstol || relgap <= st.reltol)) {
      R.status = SolveStatus::optimal;
      break;
    }
    // Infeasibility certificates.
    const double hz_by = -(P.b.dot(y) + P.h.dot(z));
    if (hz_by > 0.0) {
      const double pinfres =
          (P.A.transpose() * y + P.G.transpose() * z).norm() / resx0 / hz_by;
      if (pinfres <= st.feastol) {
        R.status = SolveStatus::infeasible;
        R.msg = "primal infeasibility certificate found";
        break;
      }
    }
    if (P.c.dot(x) < 0.0) {
      const double cx = -P.c.dot(x);
      const double dinfres =
          std::max((P.A * x).norm() / resy0, (P.G * x + s).norm() / resz0) / cx;
      if (dinfres <= st.feastol) {
        R.status = SolveStatus::unbounded;
        R.msg = "dual infeasibility certificate found (objective unbounded)";
        break;
      }
    }
    if (iter >= st.max_iters) {
      const bool usable = pres <= st.feastol_inacc && dres <= st.feastol_inacc &&
                          (relgap <= st.reltol_inacc || gap_t <= st.feastol_inacc);
      R.status = usable ? SolveStatus::inaccurate : SolveStatus::failed;
      R.msg = usable ? "max iterations reached at reduced accuracy"
                     : "max iterations reached without convergence";
      break;
    }

    Scaling sc;
    try {
      sc = cones.nt_scaling(s, z);
      factor_kkt(&sc);
    } catch (const SolveError& err) {
      const bool usable = pres <= st.feastol_inacc && dres <= st.feastol_inacc &&
                          relgap <= st.reltol_inacc;
      R.status = usable ? SolveStatus::inaccurate : SolveStatus::failed;
      R.msg = err.what();
      break;
    }
    const Eigen::VectorXd& lam = sc.lambda;
    const Eigen::VectorXd lam2 = cones.jordan(lam, lam);

    // Constant-objective direction, reused by both predictor and corrector.
    Eigen::VectorXd rhs1 = Eigen::VectorXd::Zero(NN);
    rhs1.head(n) = -P.c;
    rhs1.segment(n, p) = P.b;
    rhs1.tail(m) = P.h;
    const Eigen::VectorXd sol1 = solve_kkt(rhs1);
    const Eigen::VectorXd x1 = sol1.head(n);
    const Eigen::VectorXd y1 = sol1.segment(n, p);
    const Eigen::VectorXd z1 = sol1.tail(m);
    const double den_tau = P.c.dot(x1) + P.b.dot(y1) + P.h.dot(z1) - kappa / tau;

    Eigen::VectorXd dx, dy, dz, ds;
    double dtau = 0, dkappa = 0;
    auto direction = [&](double theta, const Eigen::VectorXd& bs, double bk) {
      const Eigen::VectorXd lbs = cones.jordan_solve(lam, bs);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(NN);
      rhs.head(n) = -theta * rx;
      rhs.segment(n, p) = -theta * ry;
      rhs.tail(m) = -theta * rz - cones.Wt(sc, lbs);
      const Eigen::VectorXd sol0 = solve_kkt(rhs);
      const Eigen::VectorXd x0 = sol0.head(n);
      const Eigen::VectorXd y0 = sol0.segment(n, p);
      const Eigen::VectorXd z0 = sol0.tail(m);
      const double num =
          -theta * rt - bk / tau - (P.c.dot(x0) + P.b.dot(y0) + P.h.dot(z0));
      dtau = num / den_tau;
      dx = x0 + dtau * x1;
      dy = y0 + dtau * y1;
      dz = z0 + dtau * z1;
      ds = cones.Wt(sc, lbs - cones.W(sc, dz));
      dkappa = (bk - kappa * dtau) / tau;
    };
    auto boundary = [&]() {
      double a = std::min(cones.max_step(s, ds), cones.max_step(z, dz));
      if (dtau < 0.0) a = std::min(a, -tau / dtau);
      if (dkappa < 0.0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // Predictor (affine) step.
    direction(1.0, -lam2, -tau * kappa);
    const double a_aff = std::min(1.0, boundary());
    const double sigma = std::pow(1.0 - a_aff, 3.0);

    // Corrector (combined) step.
    const Eigen::VectorXd ds_sc = cones.Wti(sc, ds);
    const Eigen::VectorXd dz_sc = cones.W(sc, dz);
    const Eigen::VectorXd bs =
        -lam2 - cones.jordan(ds_sc, dz_sc) + sigma * mu * e;
    const double bk = -tau * kappa - dtau * dkappa + sigma * mu;
    direction(1.0 - sigma, bs, bk);
    const double alpha = std::min(1.0, 0.99 * boundary());

    if (!(alpha > 1e-10)) {
      const bool usable = pres <= st.feastol_inacc && dres <= st.feastol_inacc &&
                          relgap <= st.reltol_inacc;
      R.status = usable ? SolveStatus::inaccurate : SolveStatus::failed;
      R.msg = "step length collapsed";
      break;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
    if (st.verbose) {
      std::printf("it %3d  mu %9.2e  pres %9.2e  dres %9.2e  gap %9.2e  a %5.3f\n",
                  iter, mu, pres, dres, gap_t, alpha);
    }
  }

  R.pres = pres;
  R.dres = dres;
  R.gap = gap_t;
  if (R.status == SolveStatus::optimal || R.status == SolveStatus::inaccurate) {
    R.x = x / tau;
    R.y = y / tau;
    R.z = z / tau;
    R.s = s / tau;
  } else {
    // Certificates (unnormalized rays); callers mostly need the status.
    R.x = x;
    R.y = y;
    R.z = z;
    R.s = s;
  }
  return R;
}

}  // namespace detail

/// Solves the program with the built-in interior-point backend.
/// Exponential-cone constraints are enforced by an outer loop that adds
/// tangent cuts until the worst violation is below settings.exp_tol.
inline ConicSolution solve(const ConicProgram& prog,
                           const SolveSettings& settings = {}) {
  using namespace detail;
  const auto t_start = std::chrono::steady_clock::now();
  ConicSolution sol;

  StdFormBase sf = to_std_form(prog);

  // Pin variables that appear in no constraint: with a zero objective
  // coefficient they are arbitrary (fix at 0 to keep the KKT system
  // nonsingular); with a nonzero coefficient the program is unbounded.
  {
    std::vector<bool> used(sf.n, false);
    auto mark = [&](const std::vector<Trip>& ts) {
      for (const auto& t : ts) used[t.col()] = true;
    };
    mark(sf.Atrip);
    mark(sf.Glin);
    mark(sf.Gsoc);
    mark(sf.Gpsd);
    for (const auto& ec : sf.exps)
      for (const LinExpr* e : {&ec.x, &ec.y, &ec.z})
        for (const auto& [j, v] : e->coefficients())
          if (v != 0.0) used[j] = true;
    for (int j = 0; j < sf.n; ++j) {
      if (used[j]) continue;
      if (sf.c[j] != 0.0) {
        sol.status = SolveStatus::unbounded;
        sol.message = "variable " + std::to_string(j) +
                      " appears only in the objective";
        return sol;
      }
      const int row = static_cast<int>(sf.b.size());
      sf.Atrip.emplace_back(row, j, 1.0);
      sf.b.push_back(0.0);
    }
  }

  // Initial tangent cuts for every exponential-cone row, plus the cone's
  // linear closure facets y >= 0 and z >= 0. A tangent with slope t
  // supports {z >= y exp(x/y)} at any point with x/y = t.
  std::vector<LinExpr> cuts;
  std::vector<std::vector<double>> slopes(sf.exps.size());
  auto add_cut = [&](std::size_t k, double t) {
    const auto& ec = sf.exps[k];
    const double et = std::exp(t);
    cuts.push_back(ec.z - et * ec.x - (et * (1.0 - t)) * ec.y);
    slopes[k].push_back(t);
  };
  for (std::size_t k = 0; k < sf.exps.size(); ++k) {
    cuts.push_back(sf.exps[k].y);
    cuts.push_back(sf.exps[k].z);
    for (double t : {-16.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0})
      add_cut(k, t);
  }

  IpmResult rr;
  Assembled orig;
  int rounds = 0;
  for (;; ++rounds) {
    orig = assemble(sf, cuts);
    Assembled scaled = orig;
    const Equil eq = equilibrate(scaled);
    try {
      rr = ipm_solve(scaled, settings);
    } catch (const SolveError& err) {
      sol.status = SolveStatus::failed;
      sol.message = err.what();
      break;
    }
    sol.status = rr.status;
    sol.iterations += rr.iters;
    sol.message = rr.msg;
    if (rr.status != SolveStatus::optimal && rr.status != SolveStatus::inaccurate)
      break;

    // Undo the equilibration and report residuals against original data.
    Eigen::VectorXd xx = eq.d.cwiseProduct(rr.x);
    Eigen::VectorXd ss = rr.s.cwiseQuotient(eq.eG);
    Eigen::VectorXd yy = eq.cscale * eq.eA.cwiseProduct(rr.y);
    Eigen::VectorXd zz = eq.cscale * eq.eG.cwiseProduct(rr.z);
    sol.x = xx;
    sol.primal_residual =
        std::max((orig.A * xx - orig.b).norm() / std::max(1.0, orig.b.norm()),
                 (orig.G * xx + ss - orig.h).norm() / std::max(1.0, orig.h.norm()));
    sol.dual_residual =
        (orig.A.transpose() * yy + orig.G.transpose() * zz + orig.c).norm() /
        std::max(1.0, orig.c.norm());
    sol.duality_gap =
        std::abs(ss.dot(zz)) / std::max(1.0, std::abs(orig.c.dot(xx)));

    // Exponential-cone violations at the candidate point.
    double worst = 0.0;
    std::size_t worst_k = 0;
    for (std::size_t k = 0; k < sf.exps.size(); ++k) {
      const auto& ec = sf.exps[k];
      const double vx = ec.x.evaluate(xx);
      const double vy = ec.y.evaluate(xx);
      const double vz = ec.z.evaluate(xx);
      double viol;
      if (vy <= 1e-12) {
        viol = std::max(vx, 0.0);  // closure: x <= 0, z >= 0
      } else {
        const double ratio = std::min(vx / vy, 700.0);
        viol = (vy * std::exp(ratio) - vz) / std::max(1.0, std::abs(vz));
      }
      if (viol > worst) {
        worst = viol;
        worst_k = k;
      }
    }
    if (sf.exps.empty() || worst <= settings.exp_tol) break;
    if (rounds >= settings.max_cut_rounds) {
      if (worst > 1e-6) {
        sol.status = SolveStatus::inaccurate;
        sol.message = "exponential-cone cuts did not close the violation";
      }
      break;
    }
    // Refine the most violated row (and any others above tolerance).
    for (std::size_t k = 0; k < sf.exps.size(); ++k) {
      const auto& ec = sf.exps[k];
      const double vy = ec.y.evaluate(xx);
      if (vy <= 1e-12) continue;
      const double vx = ec.x.evaluate(xx);
      const double vz = ec.z.evaluate(xx);
      const double viol =
          (vy * std::exp(std::min(vx / vy, 700.0)) - vz) /
          std::max(1.0, std::abs(vz));
      if (k == worst_k || viol > settings.exp_tol)
        add_cut(k, std::clamp(vx / vy, -30.0, 30.0));
    }
  }

  if (sol.status == SolveStatus::optimal ||
      sol.status == SolveStatus::inaccurate) {
    sol.objective = prog.objective().evaluate(sol.x);
  }
  sol.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return sol;
}

}  // namespace ntnopt::conic
