#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ntnopt/common.hpp"
#include "ntnopt/propulsion.hpp"
#include "ntnopt/rng.hpp"

namespace ntnopt {

/// Full description of one mission instance: geometry, timing, link budgets,
/// computation model, energy weights. All members are SI/linear; dB and
/// degree forms exist only as config-file keys (suffixes _dB/_dBm/_deg).
///
/// Immutable by convention after finalize_config; safe to share across
/// threads read-only.
struct ScenarioConfig {
  // Mission timing and geometry.
  double T = 110.0;  // horizon [s]
  int N = 110;       // slot count
  int K = 10;        // ground node count
  int M = 8;         // satellite receive antennas
  double H = 100.0;  // cruise altitude [m]
  Eigen::Vector3d q_start{0.0, 500.0, 100.0};   // [m]
  Eigen::Vector3d q_finish{500.0, 0.0, 100.0};  // [m]
  double V_max = 30.0;                          // speed limit [m/s]

  // Ground node layout. Empty node_positions are synthesized by
  // finalize_config: uniform over [0, node_area]^2 at z=0, deterministic in
  // node_seed.
  std::vector<Eigen::Vector3d> node_positions;
  std::uint64_t node_seed = 1;
  double node_area = 1000.0;  // side of the placement square [m]

  // Offloading demand and ground-air link.
  Eigen::VectorXd D;                 // per-node demand [bits], size K
  double B1 = 3.0e6;                 // ground-air bandwidth [Hz]
  double sigma0_sq = 3.1622776601683794e-14;  // noise power [W] (-105 dBm)
  double beta0 = 1.0e-6;             // channel gain at 1 m [linear] (-60 dB)
  double p_max = 1.0;                // per-node transmit budget [W]

  // Edge computation.
  double c0 = 100.0;    // cycles per bit
  double f_max = 6.0e9; // max CPU frequency [Hz]
  double gamma = 1.0e-27;  // effective capacitance [J*s^2/cycle^3]
  double o = 0.1;       // result bits per input bit, in (0,1)

  // UAV-satellite forward link.
  double B2 = 30.0e6;      // forward bandwidth [Hz]
  double p_uav_max = 10.0; // UAV transmit budget [W]
  double d_SU = 6.0e5;     // UAV-satellite distance [m]
  double f_carr = 20.0e9;  // carrier frequency [Hz]
  double GtGr = 63.095734448019364;  // combined peak antenna gain (18 dB)
  double phi_3dB = pi / 180.0;       // half-power beamwidth [rad]
  double d_ant = 0.0075;   // antenna spacing [m], default half wavelength
  double phi_SU = 1.0;     // boresight direction cosine
  double kappa = 1.38e-23; // Boltzmann constant [J/K]
  double t_noise = 207.0;  // receiver noise temperature [K]
  double mu_rain_dB = -8.6;  // rain attenuation mean [dB]
  double sd_rain_dB = 0.3;   // rain attenuation std [dB]
  double varrho = (50.0 / 360.0) * pi / 180.0;  // phase error std [rad]
  Eigen::VectorXd eps;     // per-slot outage tolerance in (0,1), size N

  // Objective weights and energy budget.
  double eta1 = 0.1;    // weight on computation + forwarding energy
  double eta2 = 1.0e-3; // weight on propulsion energy
  double E_prop = 2.0e4;  // propulsion battery [J]
  PropulsionConstants prop;

  double slot_duration() const { return T / N; }
  double lambda_carrier() const { return speed_of_light / f_carr; }
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace detail

/// Fills sized defaults (demand, outage tolerances, node layout) and checks
/// every config invariant, naming the offending field and bound on failure.
/// load_config calls this; call it manually after editing fields in code.
inline void finalize_config(ScenarioConfig& cfg) {
  using detail::require;
  require(cfg.N >= 1, "N must be >= 1");
  require(cfg.K >= 1, "K must be >= 1");
  require(cfg.M >= 1, "M must be >= 1");
  require(cfg.T > 0.0, "T must be > 0");
  require(cfg.H > 0.0, "H must be > 0");
  require(cfg.V_max > 0.0, "V_max must be > 0");
  require(cfg.B1 > 0.0, "B1 must be > 0");
  require(cfg.B2 > 0.0, "B2 must be > 0");
  require(cfg.sigma0_sq > 0.0, "sigma0_sq must be > 0");
  require(cfg.beta0 > 0.0, "beta0 must be > 0");
  require(cfg.p_max > 0.0, "p_max must be > 0");
  require(cfg.c0 > 0.0, "c0 must be > 0");
  require(cfg.f_max > 0.0, "f_max must be > 0");
  require(cfg.gamma > 0.0, "gamma must be > 0");
  require(cfg.o > 0.0 && cfg.o < 1.0, "o out of (0,1)");
  require(cfg.p_uav_max > 0.0, "p_uav_max must be > 0");
  require(cfg.d_SU > 0.0, "d_SU must be > 0");
  require(cfg.f_carr > 0.0, "f_carr must be > 0");
  require(cfg.GtGr > 0.0, "GtGr must be > 0");
  require(cfg.phi_3dB > 0.0 && cfg.phi_3dB <= pi / 2.0,
          "phi_3dB out of (0, pi/2]");
  require(cfg.d_ant > 0.0, "d_ant must be > 0");
  require(cfg.kappa > 0.0, "kappa must be > 0");
  require(cfg.t_noise > 0.0, "t_noise must be > 0");
  require(cfg.sd_rain_dB >= 0.0, "sd_rain_dB must be >= 0");
  require(cfg.varrho >= 0.0, "varrho must be >= 0");
  require(cfg.eta1 >= 0.0, "eta1 must be >= 0");
  require(cfg.eta2 >= 0.0, "eta2 must be >= 0");
  require(cfg.E_prop > 0.0, "E_prop must be > 0");
  require(cfg.node_area > 0.0, "node_area must be > 0");
  require(cfg.prop.P0 > 0.0 && cfg.prop.Pi > 0.0 && cfg.prop.U_tip > 0.0 &&
              cfg.prop.v0 > 0.0 && cfg.prop.d0 > 0.0 && cfg.prop.s > 0.0 &&
              cfg.prop.rho_air > 0.0 && cfg.prop.A > 0.0,
          "propulsion constants must be > 0");

  if (cfg.D.size() == 0) cfg.D = Eigen::VectorXd::Constant(cfg.K, 170.0e6);
  require(cfg.D.size() == cfg.K, "D must have K entries");
  for (int k = 0; k < cfg.K; ++k)
    require(cfg.D[k] >= 0.0, "D must be >= 0");

  if (cfg.eps.size() == 0) cfg.eps = Eigen::VectorXd::Constant(cfg.N, 0.2);
  require(cfg.eps.size() == cfg.N, "eps must have N entries");
  for (int n = 0; n < cfg.N; ++n)
    require(cfg.eps[n] > 0.0 && cfg.eps[n] < 1.0, "eps out of (0,1)");

  if (cfg.node_positions.empty()) {
    RandomStream rs(cfg.node_seed, "node-layout");
    cfg.node_positions.reserve(cfg.K);
    for (int k = 0; k < cfg.K; ++k) {
      const double x = cfg.node_area * rs.next_uniform();
      const double y = cfg.node_area * rs.next_uniform();
      cfg.node_positions.emplace_back(x, y, 0.0);
    }
  }
  require(static_cast<int>(cfg.node_positions.size()) == cfg.K,
          "node_positions must have K entries");

  const double span = (cfg.q_start - cfg.q_finish).norm();
  require(span <= cfg.V_max * cfg.T * (1.0 + 1e-9),
          "mission unreachable: ||q_start - q_finish|| > V_max * T");
}

namespace detail {

inline Eigen::Vector3d parse_point(const nlohmann::json& j, double z_default,
                                   const std::string& key) {
  if (!j.is_array() || (j.size() != 2 && j.size() != 3))
    throw ConfigError(key + " must be [x,y] or [x,y,z]");
  const double z = j.size() == 3 ? j[2].get<double>() : z_default;
  return {j[0].get<double>(), j[1].get<double>(), z};
}

}  // namespace detail

/// Parses a config object. Absent keys keep shipped defaults; unknown keys
/// are rejected so typos fail loudly. Scalar "D_bits"/"eps" broadcast over
/// nodes/slots; arrays give per-entry control.
inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  static const std::set<std::string> known = {
      "T",          "N",        "K",          "M",          "H",
      "q_start",    "q_finish", "V_max",      "node_positions",
      "node_seed",  "node_area", "D_bits",    "B1",         "sigma0_dBm",
      "beta0_dB",   "p_max",    "c0",         "f_max",      "gamma",
      "o",          "B2",       "p_uav_max",  "d_SU",       "f_carr",
      "GtGr_dB",    "phi_3dB_deg", "d_ant",   "phi_SU",     "kappa",
      "t_noise",    "mu_rain_dB", "sd_rain_dB", "varrho_deg", "eps",
      "eta1",       "eta2",     "E_prop",     "P0",         "Pi",
      "U_tip",      "v0",       "d0",         "s",          "rho_air",
      "A"};
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw ConfigError("unknown config key: " + item.key());

  ScenarioConfig cfg;
  auto num = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = j.at(key).get<double>();
  };
  auto integer = [&](const char* key, int& dst) {
    if (j.contains(key)) dst = j.at(key).get<int>();
  };

  num("T", cfg.T);
  integer("N", cfg.N);
  integer("K", cfg.K);
  integer("M", cfg.M);
  num("H", cfg.H);
  num("V_max", cfg.V_max);
  if (j.contains("q_start"))
    cfg.q_start = detail::parse_point(j.at("q_start"), cfg.H, "q_start");
  else
    cfg.q_start.z() = cfg.H;
  if (j.contains("q_finish"))
    cfg.q_finish = detail::parse_point(j.at("q_finish"), cfg.H, "q_finish");
  else
    cfg.q_finish.z() = cfg.H;
  if (j.contains("node_seed")) cfg.node_seed = j.at("node_seed").get<std::uint64_t>();
  num("node_area", cfg.node_area);
  if (j.contains("node_positions")) {
    cfg.node_positions.clear();
    for (const auto& p : j.at("node_positions"))
      cfg.node_positions.push_back(detail::parse_point(p, 0.0, "node_positions"));
  }

  if (j.contains("D_bits")) {
    const auto& d = j.at("D_bits");
    if (d.is_array()) {
      cfg.D.resize(static_cast<Eigen::Index>(d.size()));
      for (std::size_t k = 0; k < d.size(); ++k) cfg.D[static_cast<Eigen::Index>(k)] = d[k].get<double>();
    } else {
      cfg.D = Eigen::VectorXd::Constant(cfg.K, d.get<double>());
    }
  }
  num("B1", cfg.B1);
  if (j.contains("sigma0_dBm"))
    cfg.sigma0_sq = db_to_linear(j.at("sigma0_dBm").get<double>()) * 1e-3;
  if (j.contains("beta0_dB"))
    cfg.beta0 = db_to_linear(j.at("beta0_dB").get<double>());
  num("p_max", cfg.p_max);
  num("c0", cfg.c0);
  num("f_max", cfg.f_max);
  num("gamma", cfg.gamma);
  num("o", cfg.o);
  num("B2", cfg.B2);
  num("p_uav_max", cfg.p_uav_max);
  num("d_SU", cfg.d_SU);
  num("f_carr", cfg.f_carr);
  if (j.contains("GtGr_dB"))
    cfg.GtGr = db_to_linear(j.at("GtGr_dB").get<double>());
  if (j.contains("phi_3dB_deg"))
    cfg.phi_3dB = j.at("phi_3dB_deg").get<double>() * pi / 180.0;
  if (j.contains("d_ant"))
    cfg.d_ant = j.at("d_ant").get<double>();
  else
    cfg.d_ant = 0.5 * cfg.lambda_carrier();
  num("phi_SU", cfg.phi_SU);
  num("kappa", cfg.kappa);
  num("t_noise", cfg.t_noise);
  num("mu_rain_dB", cfg.mu_rain_dB);
  num("sd_rain_dB", cfg.sd_rain_dB);
  if (j.contains("varrho_deg"))
    cfg.varrho = j.at("varrho_deg").get<double>() * pi / 180.0;
  if (j.contains("eps")) {
    const auto& e = j.at("eps");
    if (e.is_array()) {
      cfg.eps.resize(static_cast<Eigen::Index>(e.size()));
      for (std::size_t n = 0; n < e.size(); ++n) cfg.eps[static_cast<Eigen::Index>(n)] = e[n].get<double>();
    } else {
      cfg.eps = Eigen::VectorXd::Constant(cfg.N, e.get<double>());
    }
  }
  num("eta1", cfg.eta1);
  num("eta2", cfg.eta2);
  num("E_prop", cfg.E_prop);
  num("P0", cfg.prop.P0);
  num("Pi", cfg.prop.Pi);
  num("U_tip", cfg.prop.U_tip);
  num("v0", cfg.prop.v0);
  num("d0", cfg.prop.d0);
  num("s", cfg.prop.s);
  num("rho_air", cfg.prop.rho_air);
  num("A", cfg.prop.A);

  finalize_config(cfg);
  return cfg;
}

/// Serializes a finalized config back to the file schema (dB/degree keys at
/// the boundary as in config_from_json).
inline nlohmann::json config_to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["T"] = cfg.T;
  j["N"] = cfg.N;
  j["K"] = cfg.K;
  j["M"] = cfg.M;
  j["H"] = cfg.H;
  j["q_start"] = {cfg.q_start.x(), cfg.q_start.y(), cfg.q_start.z()};
  j["q_finish"] = {cfg.q_finish.x(), cfg.q_finish.y(), cfg.q_finish.z()};
  j["V_max"] = cfg.V_max;
  j["node_seed"] = cfg.node_seed;
  j["node_area"] = cfg.node_area;
  j["node_positions"] = nlohmann::json::array();
  for (const auto& w : cfg.node_positions)
    j["node_positions"].push_back({w.x(), w.y(), w.z()});
  j["D_bits"] = std::vector<double>(cfg.D.data(), cfg.D.data() + cfg.D.size());
  j["B1"] = cfg.B1;
  j["sigma0_dBm"] = linear_to_db(cfg.sigma0_sq * 1e3);
  j["beta0_dB"] = linear_to_db(cfg.beta0);
  j["p_max"] = cfg.p_max;
  j["c0"] = cfg.c0;
  j["f_max"] = cfg.f_max;
  j["gamma"] = cfg.gamma;
  j["o"] = cfg.o;
  j["B2"] = cfg.B2;
  j["p_uav_max"] = cfg.p_uav_max;
  j["d_SU"] = cfg.d_SU;
  j["f_carr"] = cfg.f_carr;
  j["GtGr_dB"] = linear_to_db(cfg.GtGr);
  j["phi_3dB_deg"] = cfg.phi_3dB * 180.0 / pi;
  j["d_ant"] = cfg.d_ant;
  j["phi_SU"] = cfg.phi_SU;
  j["kappa"] = cfg.kappa;
  j["t_noise"] = cfg.t_noise;
  j["mu_rain_dB"] = cfg.mu_rain_dB;
  j["sd_rain_dB"] = cfg.sd_rain_dB;
  j["varrho_deg"] = cfg.varrho * 180.0 / pi;
  j["eps"] = std::vector<double>(cfg.eps.data(), cfg.eps.data() + cfg.eps.size());
  j["eta1"] = cfg.eta1;
  j["eta2"] = cfg.eta2;
  j["E_prop"] = cfg.E_prop;
  j["P0"] = cfg.prop.P0;
  j["Pi"] = cfg.prop.Pi;
  j["U_tip"] = cfg.prop.U_tip;
  j["v0"] = cfg.prop.v0;
  j["d0"] = cfg.prop.d0;
  j["s"] = cfg.prop.s;
  j["rho_air"] = cfg.prop.rho_air;
  j["A"] = cfg.prop.A;
  return j;
}

/// Loads and finalizes a config file (JSON).
inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse failure in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

/// All decision variables of one mission. Sizes are fixed by the config:
/// q has N+1 waypoints (q[0] the start, q[N] the finish), rho/chi/l/p are
/// per-slot (rows) and per-node (cols), W is one Hermitian PSD matrix per
/// slot combining UAV transmit power (trace) and satellite combining
/// direction (principal component).
struct Plan {
  std::vector<Eigen::Vector3d> q;    // N+1 waypoints [m]
  Eigen::VectorXd rho;               // offload time fraction per slot
  Eigen::MatrixXd chi;               // N x K schedule, binary
  Eigen::MatrixXd l;                 // N x K offloaded data [bits]
  Eigen::MatrixXd p;                 // N x K node transmit power [W]
  std::vector<Eigen::MatrixXcd> W;   // N lifted beam matrices, M x M
};

/// Dimension-consistent plan with straight-line flight, even time split,
/// node 0 scheduled everywhere, and all data/power/beams zero. Starting
/// point for tests and solver seeds.
inline Plan blank_plan(const ScenarioConfig& cfg) {
  Plan plan;
  plan.q.resize(cfg.N + 1);
  for (int n = 0; n <= cfg.N; ++n) {
    const double a = static_cast<double>(n) / cfg.N;
    plan.q[n] = (1.0 - a) * cfg.q_start + a * cfg.q_finish;
  }
  plan.rho = Eigen::VectorXd::Constant(cfg.N, 0.5);
  plan.chi = Eigen::MatrixXd::Zero(cfg.N, cfg.K);
  plan.chi.col(0).setOnes();
  plan.l = Eigen::MatrixXd::Zero(cfg.N, cfg.K);
  plan.p = Eigen::MatrixXd::Zero(cfg.N, cfg.K);
  plan.W.assign(cfg.N, Eigen::MatrixXcd::Zero(cfg.M, cfg.M));
  return plan;
}

/// Speed flown in slot n (1-based, matching the per-slot constraints):
/// distance between waypoints n-1 and n over the slot duration.
inline double slot_speed(const ScenarioConfig& cfg, const Plan& plan, int n) {
  if (n < 1 || n > cfg.N)
    throw std::out_of_range("slot_speed: n out of [1, N]");
  return (plan.q[n] - plan.q[n - 1]).norm() / cfg.slot_duration();
}

/// One violated deterministic constraint. slot/node are 1-based where they
/// apply and -1 otherwise; magnitude is the amount by which the constraint
/// is exceeded, in the constraint's own units.
struct Violation {
  std::string constraint;
  int slot = -1;
  int node = -1;
  double magnitude = 0.0;
};

inline std::string to_string(const Violation& v) {
  std::ostringstream os;
  os << v.constraint;
  if (v.slot >= 0) os << " slot " << v.slot;
  if (v.node >= 0) os << " node " << v.node;
  os << " by " << v.magnitude;
  return os.str();
}

/// Checks every deterministic constraint of the mission: endpoints, speed
/// limit, schedule structure, offload rate, power bounds, per-node demand,
/// computation capacity, beam power/positivity, and the propulsion budget.
/// Tolerance is 1e-6 relative with a 1e-9 absolute floor, matching solver
/// accuracy. The forwarding-rate requirement is certified separately (it
/// depends on the sampled satellite link, not on the plan alone).
///
/// Returns the empty vector iff the plan is feasible. Throws on dimension
/// mismatch.
inline std::vector<Violation> validate_plan(const ScenarioConfig& cfg,
                                            const Plan& plan) {
  const int N = cfg.N, K = cfg.K, M = cfg.M;
  if (static_cast<int>(plan.q.size()) != N + 1 || plan.rho.size() != N ||
      plan.chi.rows() != N || plan.chi.cols() != K || plan.l.rows() != N ||
      plan.l.cols() != K || plan.p.rows() != N || plan.p.cols() != K ||
      static_cast<int>(plan.W.size()) != N)
    throw std::invalid_argument("validate_plan: plan dimensions do not match config");
  for (const auto& Wn : plan.W)
    if (Wn.rows() != M || Wn.cols() != M)
      throw std::invalid_argument("validate_plan: beam matrix dimension mismatch");

  const double rel = 1e-6, abs_floor = 1e-9;
  auto tol = [&](double scale) { return rel * std::abs(scale) + abs_floor; };
  std::vector<Violation> out;
  auto flag = [&](const std::string& c, int slot, int node, double mag) {
    out.push_back({c, slot, node, mag});
  };

  const double dt = cfg.slot_duration();
  const double pos_scale = std::max(cfg.q_start.norm(), cfg.q_finish.norm());

  const double d_start = (plan.q.front() - cfg.q_start).norm();
  if (d_start > tol(pos_scale)) flag("endpoint-start", -1, -1, d_start);
  const double d_finish = (plan.q.back() - cfg.q_finish).norm();
  if (d_finish > tol(pos_scale)) flag("endpoint-finish", -1, -1, d_finish);

  for (int n = 1; n <= N; ++n) {
    const double v = slot_speed(cfg, plan, n);
    if (v > cfg.V_max + tol(cfg.V_max)) flag("speed", n, -1, v - cfg.V_max);
  }

  for (int n = 0; n < N; ++n) {
    const double r = plan.rho[n];
    if (r < -tol(1.0) || r > 1.0 + tol(1.0))
      flag("rho-range", n + 1, -1, std::max(-r, r - 1.0));

    double chi_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      const double x = plan.chi(n, k);
      chi_sum += x;
      const double off = std::min(std::abs(x), std::abs(x - 1.0));
      if (off > tol(1.0)) flag("schedule-binary", n + 1, k + 1, off);
    }
    if (std::abs(chi_sum - 1.0) > tol(1.0))
      flag("schedule-sum", n + 1, -1, std::abs(chi_sum - 1.0));
  }

  const double bits_scale = std::max(1.0, cfg.D.size() ? cfg.D.maxCoeff() : 1.0);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const double lk = plan.l(n, k);
      const double pk = plan.p(n, k);
      if (lk < -tol(bits_scale)) flag("data-nonneg", n + 1, k + 1, -lk);
      if (pk < -tol(cfg.p_max) || pk > cfg.p_max + tol(cfg.p_max))
        flag("power-range", n + 1, k + 1, std::max(-pk, pk - cfg.p_max));

      if (plan.chi(n, k) < 0.5) {
        if (lk > tol(bits_scale)) flag("schedule-idle-data", n + 1, k + 1, lk);
        continue;
      }
      const double d2 = (plan.q[n + 1] - cfg.node_positions[k]).squaredNorm();
      const double snr = pk * cfg.beta0 / (d2 * cfg.sigma0_sq);
      const double cap = plan.rho[n] * dt * cfg.B1 * std::log2(1.0 + snr);
      if (lk > cap + tol(bits_scale))
        flag("offload-rate", n + 1, k + 1, lk - cap);
    }

    const double load = cfg.c0 * plan.l.row(n).sum();
    const double budget = plan.rho[n] * dt * cfg.f_max;
    if (load > budget + tol(budget > 0 ? budget : cfg.f_max * dt))
      flag("compute", n + 1, -1, load - budget);

    const Eigen::MatrixXcd& Wn = plan.W[n];
    const double herm = (Wn - Wn.adjoint()).norm();
    if (herm > tol(std::max(1.0, Wn.norm()))) {
      flag("beam-hermitian", n + 1, -1, herm);
    } else {
      const double tr = Wn.real().trace();
      if (tr > cfg.p_uav_max + tol(cfg.p_uav_max))
        flag("beam-power", n + 1, -1, tr - cfg.p_uav_max);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Wn, Eigen::EigenvaluesOnly);
      const double lam_min = es.eigenvalues().minCoeff();
      if (lam_min < -tol(std::max(1.0, tr))) flag("beam-psd", n + 1, -1, -lam_min);
    }
  }

  for (int k = 0; k < K; ++k) {
    const double got = plan.l.col(k).sum();
    if (got < cfg.D[k] - tol(cfg.D[k])) flag("demand", -1, k + 1, cfg.D[k] - got);
  }

  double e_prop = 0.0;
  for (int n = 1; n <= N; ++n)
    e_prop += propulsion_power(slot_speed(cfg, plan, n), cfg.prop) * dt;
  if (e_prop > cfg.E_prop + tol(cfg.E_prop))
    flag("propulsion-budget", -1, -1, e_prop - cfg.E_prop);

  return out;
}

/// Energy accounting for one plan: node transmission E1, edge computation
/// E2, result forwarding E3, propulsion E4, and the weighted total.
struct EnergyBreakdown {
  double E1 = 0.0;
  double E2 = 0.0;
  double E3 = 0.0;
  double E4 = 0.0;
  double E_total = 0.0;
};

/// Plan serialization, arrays per slot; complex beam matrices split into
/// re/im parts.
inline nlohmann::json plan_to_json(const Plan& plan) {
  nlohmann::json j;
  j["q"] = nlohmann::json::array();
  for (const auto& qn : plan.q) j["q"].push_back({qn.x(), qn.y(), qn.z()});
  j["rho"] = std::vector<double>(plan.rho.data(), plan.rho.data() + plan.rho.size());
  auto mat = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
      rows.push_back(row);
    }
    return rows;
  };
  j["chi"] = mat(plan.chi);
  j["l"] = mat(plan.l);
  j["p"] = mat(plan.p);
  j["W"] = nlohmann::json::array();
  for (const auto& Wn : plan.W) {
    nlohmann::json w;
    w["re"] = mat(Wn.real());
    w["im"] = mat(Wn.imag());
    j["W"].push_back(w);
  }
  return j;
}

inline Plan plan_from_json(const nlohmann::json& j) {
  Plan plan;
  for (const auto& qn : j.at("q"))
    plan.q.emplace_back(qn[0].get<double>(), qn[1].get<double>(), qn[2].get<double>());
  const auto rho = j.at("rho").get<std::vector<double>>();
  plan.rho = Eigen::Map<const Eigen::VectorXd>(rho.data(), static_cast<Eigen::Index>(rho.size()));
  auto mat = [](const nlohmann::json& rows) {
    const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index nc = nr ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(nr, nc);
    for (Eigen::Index i = 0; i < nr; ++i)
      for (Eigen::Index k = 0; k < nc; ++k) m(i, k) = rows[i][k].get<double>();
    return m;
  };
  plan.chi = mat(j.at("chi"));
  plan.l = mat(j.at("l"));
  plan.p = mat(j.at("p"));
  for (const auto& w : j.at("W")) {
    const Eigen::MatrixXd re = mat(w.at("re"));
    const Eigen::MatrixXd im = mat(w.at("im"));
    plan.W.push_back(re.cast<std::complex<double>>() +
                     std::complex<double>(0.0, 1.0) * im.cast<std::complex<double>>());
  }
  return plan;
}

inline void save_plan(const Plan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write plan file: " + path);
  out << plan_to_json(plan).dump() << "\n";
}

inline Plan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan file: " + path);
  nlohmann::json j;
  in >> j;
  return plan_from_json(j);
}

}  // namespace ntnopt
