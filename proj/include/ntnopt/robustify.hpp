#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "ntnopt/common.hpp"
#include "ntnopt/linkmodel.hpp"
#include "ntnopt/rng.hpp"
#include "ntnopt/scenario.hpp"

namespace ntnopt {

/// Second-order expansion of the forward-link SNR in the phase error.
/// With Z = diag(g_hat)^H W diag(g_hat), X = Re Z, Y = Im Z, the SNR at
/// perturbation theta is approximately theta^T F theta + g^T theta + zsum.
struct QuadSurrogate {
  Eigen::MatrixXd Fmat;  // M x M quadratic coefficient
  Eigen::VectorXd gvec;  // M linear coefficient
  double zsum = 0.0;     // value at zero perturbation
};

/// Exact forward-link SNR |g^H w|^2 summed over the beam matrix, i.e.
/// e(theta)^H Z e(theta) with unit-modulus phase factors. Reference for the
/// surrogate and the Monte Carlo certifier.
inline double exact_snr(const Eigen::MatrixXcd& W,
                        const Eigen::VectorXcd& g_hat,
                        const Eigen::VectorXd& theta) {
  const Eigen::Index M = g_hat.size();
  Eigen::VectorXcd g(M);
  for (Eigen::Index m = 0; m < M; ++m)
    g[m] = g_hat[m] * std::polar(1.0, theta[m]);
  return std::real(g.dot(W * g));  // Eigen's dot conjugates the left side
}

inline double surrogate_value(const QuadSurrogate& s,
                              const Eigen::VectorXd& theta) {
  return theta.dot(s.Fmat * theta) + s.gvec.dot(theta) + s.zsum;
}

/// Builds the surrogate coefficients from a lifted beam matrix and nominal
/// link vector. Expanding sum_ij Z_ij e^{j(theta_j - theta_i)} to second
/// order and folding the antisymmetry of Y gives
///   F = X - diag(row sums of X),  g_i = 2 * row sum of Y,  zsum = sum X.
inline QuadSurrogate quad_surrogate(const Eigen::MatrixXcd& W,
                                    const Eigen::VectorXcd& g_hat) {
  const Eigen::Index M = g_hat.size();
  if (W.rows() != M || W.cols() != M)
    throw std::invalid_argument("quad_surrogate: dimension mismatch");
  const double scale = std::max(1.0, W.norm());
  if ((W - W.adjoint()).norm() > 1e-9 * scale)
    throw std::invalid_argument("quad_surrogate: W must be Hermitian");

  const Eigen::MatrixXcd Z =
      g_hat.conjugate().asDiagonal() * W * g_hat.asDiagonal();
  const Eigen::MatrixXd X = Z.real();
  const Eigen::MatrixXd Y = Z.imag();

  QuadSurrogate s;
  s.Fmat = X;
  s.Fmat.diagonal() -= X.rowwise().sum();
  s.gvec = 2.0 * Y.rowwise().sum();
  s.zsum = X.sum();
  return s;
}

/// Deterministic sufficient condition for the forwarding chance constraint,
/// derived from a concentration bound on Gaussian quadratic forms. With
/// theta = xi*u, u standard normal, the surrogate SNR is
/// u^T Q u + 2 r^T u + zsum and the certified requirement reads
///   (a) trace(Q) - 2*sqrt(-ln eps)*x + 2*ln(eps)*y + s >= 0
///   (b) ||[vec(Q); sqrt(2) r]||_2 <= x
///   (c) y*I + Q  positive semidefinite, x, y >= 0,
/// where s folds the rate threshold into the constant term.
struct BernsteinBlock {
  Eigen::MatrixXd Qmat;  // xi^2 * F
  Eigen::VectorXd rvec;  // xi/2 * g
  double sval = 0.0;     // zsum - 2^{threshold exponent} + 1
  double x = 0.0;        // minimal feasible norm auxiliary
  double y = 0.0;        // minimal feasible eigenvalue auxiliary
  double eps = 0.0;      // outage tolerance
};

/// Assembles the block for one slot: xi is the phase error std, l_sum the
/// slot's offloaded bits, rho its offloading fraction, eps its outage
/// tolerance. The stored x and y are the smallest values satisfying (b) and
/// (c), so condition (a) evaluated with them decides feasibility.
inline BernsteinBlock bernstein_block(const QuadSurrogate& surr, double xi,
                                      double l_sum, double rho,
                                      const ScenarioConfig& cfg, double eps) {
  if (rho >= 1.0)
    throw std::invalid_argument("bernstein_block: rho must be < 1");
  if (xi < 0.0) throw std::invalid_argument("bernstein_block: xi must be >= 0");
  if (eps <= 0.0 || eps >= 1.0)
    throw std::invalid_argument("bernstein_block: eps out of (0,1)");

  BernsteinBlock b;
  b.Qmat = xi * xi * surr.Fmat;
  b.rvec = 0.5 * xi * surr.gvec;
  const double exponent =
      cfg.o * l_sum / (cfg.slot_duration() * (1.0 - rho) * cfg.B2);
  b.sval = surr.zsum - std::exp2(exponent) + 1.0;
  b.eps = eps;

  b.x = std::sqrt(b.Qmat.squaredNorm() + 2.0 * b.rvec.squaredNorm());
  if (b.Qmat.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.Qmat,
                                                      Eigen::EigenvaluesOnly);
    b.y = std::max(0.0, -es.eigenvalues().minCoeff());
  }
  return b;
}

/// Slack of condition (a) at the stored minimal auxiliaries; >= 0 means the
/// chance constraint is certified. The default coefficients follow the
/// conservative form above; standard_coefficients switches to the tighter
/// textbook pair (sqrt(-2 ln eps), -ln eps), which is also sufficient.
inline double bti_slack(const BernsteinBlock& b,
                        bool standard_coefficients = false) {
  const double lg = -std::log(b.eps);
  const double cx = standard_coefficients ? std::sqrt(2.0 * lg) : 2.0 * std::sqrt(lg);
  const double cy = standard_coefficients ? lg : 2.0 * lg;
  return b.Qmat.trace() - cx * b.x - cy * b.y + b.sval;
}

inline bool bti_feasible(const BernsteinBlock& b,
                         bool standard_coefficients = false) {
  return bti_slack(b, standard_coefficients) >= 0.0;
}

/// Dominant rank-one direction of a lifted beam matrix, scaled so that
/// w w^H carries the principal eigenvalue's power.
inline Eigen::VectorXcd principal_component(const Eigen::MatrixXcd& W) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(W);
  const Eigen::Index top = W.rows() - 1;  // eigenvalues sorted ascending
  const double lam = std::max(0.0, es.eigenvalues()[top]);
  return std::sqrt(lam) * es.eigenvectors().col(top);
}

/// Empirical probability that the forwarding rate meets the bit threshold
/// under sampled phase errors. Uses the exact perturbed channel and the
/// principal component of W, so it certifies end to end rather than through
/// the surrogate.
inline double chance_check_mc(const Eigen::MatrixXcd& W,
                              const Eigen::VectorXcd& g_hat, double varrho,
                              double threshold_bits, double rho,
                              const ScenarioConfig& cfg, int samples,
                              RandomStream& rng) {
  if (samples < 1000)
    throw std::invalid_argument("chance_check_mc: samples must be >= 1000");
  if (rho >= 1.0 && threshold_bits > 0.0) return 0.0;

  const Eigen::VectorXcd w = principal_component(W);
  const Eigen::MatrixXcd Www = w * w.adjoint();
  const double time = (1.0 - rho) * cfg.slot_duration();
  int ok = 0;
  for (int i = 0; i < samples; ++i) {
    const Eigen::VectorXd theta =
        sample_phase_error(rng, varrho, static_cast<int>(g_hat.size()));
    const double snr = exact_snr(Www, g_hat, theta);
    const double bits = time * cfg.B2 * std::log2(1.0 + snr);
    if (bits >= threshold_bits) ++ok;
  }
  return static_cast<double>(ok) / samples;
}

}  // namespace ntnopt
