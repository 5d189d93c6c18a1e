#pragma once

#include <cmath>
#include <stdexcept>

#include "ntnopt/common.hpp"

namespace ntnopt {

/// Rotary-wing propulsion model parameters. Defaults reproduce the reference
/// platform used throughout the test suite.
struct PropulsionConstants {
  double P0 = 79.86;      // blade profile power while hovering [W]
  double Pi = 88.63;      // induced power while hovering [W]
  double U_tip = 120.0;   // rotor blade tip speed [m/s]
  double v0 = 4.03;       // mean rotor induced velocity while hovering [m/s]
  double d0 = 0.6;        // fuselage drag ratio
  double s = 0.05;        // rotor solidity
  double rho_air = 1.225; // air density [kg/m^3]
  double A = 0.503;       // rotor disc area [m^2]
};

/// Power drawn at level flight speed V: blade profile term growing with V^2,
/// induced term decaying from hover, and parasite term growing with V^3.
inline double propulsion_power(double V, const PropulsionConstants& pc) {
  if (V < 0.0) throw std::invalid_argument("propulsion_power: V must be >= 0");
  const double v2 = V * V;
  const double profile = pc.P0 * (1.0 + 3.0 * v2 / sq(pc.U_tip));
  const double ratio = v2 / (2.0 * sq(pc.v0));
  const double induced = pc.Pi * std::sqrt(std::sqrt(1.0 + sq(ratio)) - ratio);
  const double parasite = 0.5 * pc.d0 * pc.rho_air * pc.s * pc.A * v2 * V;
  return profile + induced + parasite;
}

/// Speed minimizing P(V) on [0, v_hi], by coarse grid plus golden-section
/// refinement. The power curve is unimodal on this range for sane constants.
inline double min_power_speed(const PropulsionConstants& pc, double v_hi) {
  double best_v = 0.0;
  double best_p = propulsion_power(0.0, pc);
  const int grid = 400;
  for (int i = 1; i <= grid; ++i) {
    const double v = v_hi * i / grid;
    const double p = propulsion_power(v, pc);
    if (p < best_p) {
      best_p = p;
      best_v = v;
    }
  }
  double lo = std::max(0.0, best_v - v_hi / grid);
  double hi = std::min(v_hi, best_v + v_hi / grid);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - invphi * (hi - lo), b = lo + invphi * (hi - lo);
  double fa = propulsion_power(a, pc), fb = propulsion_power(b, pc);
  for (int it = 0; it < 80; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - invphi * (hi - lo);
      fa = propulsion_power(a, pc);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + invphi * (hi - lo);
      fb = propulsion_power(b, pc);
    }
  }
  return 0.5 * (lo + hi);
}

/// Speed minimizing energy per meter P(V)/V on (0, v_hi], same scheme.
/// Together with min_power_speed this brackets the "most efficient" cruise
/// speed, which depends on whether hover time or distance is the budget.
inline double min_energy_per_meter_speed(const PropulsionConstants& pc,
                                         double v_hi) {
  auto per_meter = [&](double v) { return propulsion_power(v, pc) / v; };
  const int grid = 400;
  double best_v = v_hi / grid;
  double best_p = per_meter(best_v);
  for (int i = 2; i <= grid; ++i) {
    const double v = v_hi * i / grid;
    const double p = per_meter(v);
    if (p < best_p) {
      best_p = p;
      best_v = v;
    }
  }
  double lo = std::max(v_hi / grid, best_v - v_hi / grid);
  double hi = std::min(v_hi, best_v + v_hi / grid);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - invphi * (hi - lo), b = lo + invphi * (hi - lo);
  double fa = per_meter(a), fb = per_meter(b);
  for (int it = 0; it < 80; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - invphi * (hi - lo);
      fa = per_meter(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + invphi * (hi - lo);
      fb = per_meter(b);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace ntnopt
