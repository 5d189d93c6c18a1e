#pragma once

#include <cmath>

#include "ntnopt/common.hpp"
#include "ntnopt/propulsion.hpp"
#include "ntnopt/scenario.hpp"

namespace ntnopt {

/// Ground-node transmission energy: active-node power over the offloading
/// fraction of each slot.
inline double energy_offload(const ScenarioConfig& cfg, const Plan& plan) {
  const double dt = cfg.slot_duration();
  double e = 0.0;
  for (int n = 0; n < cfg.N; ++n)
    e += plan.rho[n] * dt * (plan.chi.row(n).array() * plan.p.row(n).array()).sum();
  return e;
}

/// UAV edge-computation energy: the slot's cycle load c0*sum_k l is spread
/// over the offloading time, and dynamic power scales with frequency cubed,
/// giving gamma*(c0*sum_k l)^3 / (rho*dt)^2 per slot.
inline double energy_compute(const ScenarioConfig& cfg, const Plan& plan) {
  const double dt = cfg.slot_duration();
  double e = 0.0;
  for (int n = 0; n < cfg.N; ++n) {
    const double cycles = cfg.c0 * plan.l.row(n).sum();
    if (cycles == 0.0) continue;
    const double time = plan.rho[n] * dt;
    if (time <= 0.0)
      throw InfeasibleError("energy_compute: compute time zero at slot " +
                            std::to_string(n + 1));
    e += cfg.gamma * cycles * cycles * cycles / (time * time);
  }
  return e;
}

/// UAV-satellite forwarding energy: transmit power trace(W) over the
/// forwarding fraction of each slot.
inline double energy_forward(const ScenarioConfig& cfg, const Plan& plan) {
  const double dt = cfg.slot_duration();
  double e = 0.0;
  for (int n = 0; n < cfg.N; ++n)
    e += plan.W[n].real().trace() * (1.0 - plan.rho[n]) * dt;
  return e;
}

/// Propulsion energy: slot-wise power at the flown speed times slot length.
inline double energy_propulsion(const ScenarioConfig& cfg, const Plan& plan) {
  const double dt = cfg.slot_duration();
  double e = 0.0;
  for (int n = 1; n <= cfg.N; ++n)
    e += propulsion_power(slot_speed(cfg, plan, n), cfg.prop) * dt;
  return e;
}

inline bool propulsion_within_budget(const ScenarioConfig& cfg,
                                     const Plan& plan) {
  return energy_propulsion(cfg, plan) <= cfg.E_prop;
}

/// Weighted total: node energy at full weight, UAV computation and
/// forwarding under eta1, propulsion under eta2.
inline EnergyBreakdown energy_total(const ScenarioConfig& cfg,
                                    const Plan& plan) {
  EnergyBreakdown eb;
  eb.E1 = energy_offload(cfg, plan);
  eb.E2 = energy_compute(cfg, plan);
  eb.E3 = energy_forward(cfg, plan);
  eb.E4 = energy_propulsion(cfg, plan);
  eb.E_total = eb.E1 + cfg.eta1 * (eb.E2 + eb.E3) + cfg.eta2 * eb.E4;
  return eb;
}

}  // namespace ntnopt
