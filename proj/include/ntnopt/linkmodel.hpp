#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "ntnopt/common.hpp"
#include "ntnopt/rng.hpp"
#include "ntnopt/scenario.hpp"

namespace ntnopt {

/// Integer-order Bessel function of the first kind by backward (Miller)
/// recurrence, normalized with J_0(u) + 2*sum_{k>=1} J_{2k}(u) = 1.
/// Absolute error stays below 1e-10 for the orders and arguments used by
/// the antenna pattern (n <= 8, u in (0, 40]); no external special-function
/// dependency.
inline double bessel_jn(int n, double u) {
  if (n < 0) throw std::invalid_argument("bessel_jn: order must be >= 0");
  if (u == 0.0) return n == 0 ? 1.0 : 0.0;
  if (u < 0.0) return (n % 2 ? -1.0 : 1.0) * bessel_jn(n, -u);

  // Start well above both order and argument; the unwanted solution decays
  // factorially on the way down so the seed choice washes out.
  int start = std::max(n, static_cast<int>(u)) + 52;
  if (start % 2) ++start;
  const double two_over_u = 2.0 / u;
  double jp = 0.0;   // J_{k+1}, seeded at zero
  double jc = 1e-30; // J_k, arbitrary scale fixed by normalization
  double ans = (n == start) ? jc : 0.0;
  double sum = 0.0;  // accumulates even-order terms
  for (int k = start; k >= 1; --k) {
    const double jm = k * two_over_u * jc - jp;
    jp = jc;
    jc = jm;  // jc = J_{k-1}, jp = J_k
    if (std::abs(jc) > 1e250) {
      jc *= 1e-250;
      jp *= 1e-250;
      sum *= 1e-250;
      ans *= 1e-250;
    }
    if ((k - 1) % 2 == 0) sum += jc;
    if (k - 1 == n) ans = jc;
  }
  // sum currently holds J_0 + J_2 + J_4 + ...; the identity needs J_0 once.
  const double norm = 2.0 * sum - jc;
  return ans / norm;
}

/// Ground-air channel power gain: reference gain over squared distance.
inline double ground_air_gain(const Eigen::Vector3d& q,
                              const Eigen::Vector3d& w, double beta0) {
  const double d2 = (q - w).squaredNorm();
  if (d2 == 0.0)
    throw std::invalid_argument("ground_air_gain: coincident points");
  return beta0 / d2;
}

/// Free-space path loss as a linear power gain.
inline double free_space_loss(double d_SU, double f_carr) {
  if (d_SU <= 0.0 || f_carr <= 0.0)
    throw std::invalid_argument("free_space_loss: d_SU and f_carr must be > 0");
  return sq(speed_of_light / (4.0 * pi * f_carr * d_SU));
}

/// Satellite receive antenna pattern versus off-boresight angle phi:
/// Gr_max * (J1(u)/(2u) + 36*J3(u)/u^3)^2 with u = 2.07123 sin(phi)/sin(phi_3dB).
/// The bracket tends to 1 as phi -> 0 (J1(u)/(2u) -> 1/4, 36 J3(u)/u^3 -> 3/4),
/// handled by series below the recurrence's useful range.
inline double receive_antenna_gain(double phi, double phi_3dB, double Gr_max) {
  const double u = 2.07123 * std::sin(phi) / std::sin(phi_3dB);
  double bracket;
  if (std::abs(u) < 1e-4) {
    bracket = 1.0 - 5.0 * u * u / 64.0;
  } else {
    bracket = bessel_jn(1, u) / (2.0 * u) + 36.0 * bessel_jn(3, u) / (u * u * u);
  }
  return Gr_max * sq(bracket);
}

/// Deterministic per-antenna phase from the space geometry: common range
/// term plus a linear aperture term in the antenna index.
inline Eigen::VectorXd phase_estimate(double d_SU, double lambda, double d_ant,
                                      double phi_SU, int M) {
  if (lambda <= 0.0)
    throw std::invalid_argument("phase_estimate: lambda must be > 0");
  Eigen::VectorXd theta(M);
  for (int m = 0; m < M; ++m)
    theta[m] = -2.0 * pi * d_SU / lambda - 2.0 * pi * d_ant * m * phi_SU / lambda;
  return theta;
}

/// One draw of the slow-fading rain power gain: Normal in dB, returned
/// linear. Identical across antennas (single beam covers the UAV).
inline double rain_gain_sample(RandomStream& rng, double mu_dB, double sd_dB) {
  if (sd_dB < 0.0)
    throw std::invalid_argument("rain_gain_sample: sd_dB must be >= 0");
  return db_to_linear(rng.next_normal(mu_dB, sd_dB));
}

/// Deterministic part of the UAV-satellite link vector for one slot. The
/// noise power kappa*B2*t is folded in, so the forward-link SNR is
/// |g^H w|^2 directly. The amplitude is common across antennas; only the
/// phase varies per antenna.
struct SatLinkNominal {
  Eigen::VectorXcd g_hat;     // nominal link vector (normalized amplitude)
  Eigen::VectorXd theta_hat;  // per-antenna phase estimate [rad]
  double G_PL = 0.0;          // free-space loss [linear]
  double rain_gain = 0.0;     // rain power gain [linear]
  double amplitude = 0.0;     // common |g_hat_m|
};

inline SatLinkNominal nominal_link_vector(const ScenarioConfig& cfg,
                                          double rain_gain,
                                          const Eigen::VectorXd& theta_hat) {
  if (rain_gain <= 0.0)
    throw std::invalid_argument("nominal_link_vector: rain_gain must be > 0");
  if (theta_hat.size() != cfg.M)
    throw std::invalid_argument("nominal_link_vector: theta_hat must have M entries");
  SatLinkNominal link;
  link.G_PL = free_space_loss(cfg.d_SU, cfg.f_carr);
  link.rain_gain = rain_gain;
  link.theta_hat = theta_hat;
  link.amplitude = std::sqrt(link.G_PL * cfg.GtGr /
                             (cfg.kappa * cfg.B2 * cfg.t_noise)) /
                   std::sqrt(rain_gain);
  link.g_hat.resize(cfg.M);
  for (int m = 0; m < cfg.M; ++m)
    link.g_hat[m] = std::polar(link.amplitude, theta_hat[m]);
  return link;
}

/// Convenience overload using the config's geometry for the phase estimate.
inline SatLinkNominal nominal_link_vector(const ScenarioConfig& cfg,
                                          double rain_gain) {
  return nominal_link_vector(
      cfg, rain_gain,
      phase_estimate(cfg.d_SU, cfg.lambda_carrier(), cfg.d_ant, cfg.phi_SU,
                     cfg.M));
}

/// One draw of the i.i.d. Gaussian phase error vector.
inline Eigen::VectorXd sample_phase_error(RandomStream& rng, double varrho,
                                          int M) {
  if (varrho < 0.0)
    throw std::invalid_argument("sample_phase_error: varrho must be >= 0");
  Eigen::VectorXd theta(M);
  for (int m = 0; m < M; ++m) theta[m] = rng.next_normal(0.0, varrho);
  return theta;
}

/// Realized link vector under a phase perturbation; amplitudes unchanged.
inline Eigen::VectorXcd apply_phase_error(const Eigen::VectorXcd& g_hat,
                                          const Eigen::VectorXd& theta_err) {
  if (g_hat.size() != theta_err.size())
    throw std::invalid_argument("apply_phase_error: size mismatch");
  Eigen::VectorXcd g(g_hat.size());
  for (Eigen::Index m = 0; m < g_hat.size(); ++m)
    g[m] = g_hat[m] * std::polar(1.0, theta_err[m]);
  return g;
}

}  // namespace ntnopt
