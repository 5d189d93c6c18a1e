#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ntnopt/bcd.hpp"
#include "ntnopt/evaluation.hpp"
#include "ntnopt/linkmodel.hpp"
#include "ntnopt/propulsion.hpp"
#include "ntnopt/scenario.hpp"

namespace ntnopt {

inline constexpr const char* kVersion = "0.1.0";

/// Everything a run needs to be reproduced: the resolved scenario, the master
/// seed, the knobs that were in force, and where the artifacts went. Written
/// as manifest.json next to the outputs; wall_seconds is informational and
/// the only field expected to differ between identical reruns.
struct RunManifest {
  std::string command;
  nlohmann::json config;  // resolved and finalized
  std::string config_path;
  std::string plan_path;  // certify input, empty otherwise
  std::uint64_t seed = 1;
  std::string mode = "robust";
  std::string scheme;           // baseline runs
  std::string parameter;        // sweep runs
  std::vector<double> values;   // sweep runs
  int mc_samples = 10000;
  double eps0 = 1e-2;
  int max_outer = 30;
  std::string out_dir;
  double wall_seconds = 0.0;
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["config_path"] = m.config_path;
  if (!m.plan_path.empty()) j["plan_path"] = m.plan_path;
  j["seed"] = m.seed;
  j["mode"] = m.mode;
  if (!m.scheme.empty()) j["scheme"] = m.scheme;
  if (!m.parameter.empty()) {
    j["parameter"] = m.parameter;
    j["values"] = m.values;
  }
  j["mc_samples"] = m.mc_samples;
  j["eps0"] = m.eps0;
  j["max_outer"] = m.max_outer;
  j["out_dir"] = m.out_dir;
  j["versions"] = {{"ntnopt", kVersion}, {"compiler", __VERSION__}};
  j["wall_seconds"] = m.wall_seconds;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.config_path = j.value("config_path", std::string());
  m.plan_path = j.value("plan_path", std::string());
  m.seed = j.at("seed").get<std::uint64_t>();
  m.mode = j.value("mode", std::string("robust"));
  m.scheme = j.value("scheme", std::string());
  m.parameter = j.value("parameter", std::string());
  if (j.contains("values")) m.values = j.at("values").get<std::vector<double>>();
  m.mc_samples = j.value("mc_samples", 10000);
  m.eps0 = j.value("eps0", 1e-2);
  m.max_outer = j.value("max_outer", 30);
  m.out_dir = j.value("out_dir", std::string());
  m.wall_seconds = j.value("wall_seconds", 0.0);
  return m;
}

namespace clidetail {

inline std::string fmt12(double v) {
  std::ostringstream ss;
  ss << std::setprecision(12) << v;
  return ss.str();
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline void write_trace_csv(std::ostream& os, const BcdTrace& trace) {
  os << std::setprecision(12) << "iteration,accepted_energy_J\n";
  for (std::size_t i = 0; i < trace.accepted_energy.size(); ++i)
    os << i << ',' << trace.accepted_energy[i] << '\n';
}

inline void write_report_artifacts(const std::filesystem::path& dir,
                                   const ExperimentReport& rep) {
  {
    auto f = open_out(dir / "plan.json");
    f << plan_to_json(rep.plan).dump() << "\n";
  }
  {
    auto f = open_out(dir / "trace.csv");
    write_trace_csv(f, rep.trace);
  }
  {
    auto f = open_out(dir / "trajectory.csv");
    write_trajectory_csv(f, rep);
  }
  {
    auto f = open_out(dir / "offload.csv");
    write_offload_csv(f, rep);
  }
  {
    auto f = open_out(dir / "energy.csv");
    write_energy_csv(f, {rep});
  }
}

inline void print_energy(std::ostream& out, const ExperimentReport& rep) {
  const auto& e = rep.energy;
  out << rep.scheme << ": E_total = " << fmt12(e.E_total) << " J (offload "
      << fmt12(e.E1) << ", compute " << fmt12(e.E2) << ", forward "
      << fmt12(e.E3) << ", propulsion " << fmt12(e.E4) << ")\n";
}

}  // namespace clidetail

/// Batch entry point behind the `ntnopt` binary; callable in-process so the
/// test suite can drive it without spawning. Returns the process exit code:
/// 0 on success, 2 when the scenario or plan is infeasible, 1 on any other
/// error (bad flags, unreadable files, solver breakdown).
inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"UAV-satellite offloading mission optimizer"};
  app.require_subcommand(1);

  std::string config_path;
  std::string plan_path;
  std::string out_dir = "run_out";
  std::string mode = "robust";
  std::string scheme = "nonrobust";
  std::string parameter;
  std::vector<double> values;
  std::uint64_t seed = 1;
  double eps0 = 1e-2;
  int max_outer = 30;
  int mc_samples = 10000;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "scenario JSON file")->required();
    cmd->add_option("--seed", seed, "master seed; all streams derive from it");
    cmd->add_option("--out", out_dir, "artifact directory");
  };
  const auto add_solver_knobs = [&](CLI::App* cmd) {
    cmd->add_option("--eps0", eps0, "outer-loop energy tolerance [J]");
    cmd->add_option("--max-outer", max_outer, "outer iteration cap");
  };

  auto* solve = app.add_subcommand("solve", "full optimizer run");
  add_common(solve);
  add_solver_knobs(solve);
  solve->add_option("--mode", mode, "certificate mode")
      ->check(CLI::IsMember({"robust", "nonrobust"}));

  auto* baseline = app.add_subcommand("baseline", "comparison schemes");
  add_common(baseline);
  add_solver_knobs(baseline);
  baseline->add_option("--scheme", scheme, "which baseline")
      ->required()
      ->check(CLI::IsMember({"nonrobust", "fixed", "fixed-nonrobust"}));

  auto* sweep_cmd = app.add_subcommand("sweep", "solve across one parameter");
  add_common(sweep_cmd);
  add_solver_knobs(sweep_cmd);
  sweep_cmd->add_option("--param", parameter, "T, D_k, f_max or eps")
      ->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');

  auto* certify = app.add_subcommand("certify", "Monte Carlo check of a plan");
  add_common(certify);
  certify->add_option("--plan", plan_path, "plan JSON file")->required();
  certify->add_option("--samples,--mc-samples", mc_samples,
                      "phase-error draws per slot");

  auto* oracle = app.add_subcommand("oracle", "closed-form calculators");
  oracle->require_subcommand(1);
  double oracle_v = 0.0, oracle_d = 6.0e5, oracle_f = 20.0e9;
  double oracle_phi_deg = 1.0, oracle_phi3_deg = 1.0, oracle_vmax = 30.0;
  auto* o_prop = oracle->add_subcommand("propulsion", "rotor power at speed v");
  o_prop->add_option("--v", oracle_v, "speed [m/s]");
  auto* o_loss = oracle->add_subcommand("pathloss", "free-space loss in dB");
  o_loss->add_option("--d", oracle_d, "distance [m]");
  o_loss->add_option("--f", oracle_f, "carrier frequency [Hz]");
  auto* o_gain =
      oracle->add_subcommand("gain", "receive gain off boresight, dB");
  o_gain->add_option("--phi-deg", oracle_phi_deg, "off-boresight angle [deg]");
  o_gain->add_option("--phi3db-deg", oracle_phi3_deg, "3 dB beamwidth [deg]");
  auto* o_speed = oracle->add_subcommand("speed", "minimum-power speed");
  o_speed->add_option("--v-max", oracle_vmax, "search upper bound [m/s]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (oracle->parsed()) {
      if (o_prop->parsed()) {
        out << clidetail::fmt12(propulsion_power(oracle_v,
                                                 PropulsionConstants{}))
            << " W\n";
      } else if (o_loss->parsed()) {
        out << clidetail::fmt12(
                   linear_to_db(free_space_loss(oracle_d, oracle_f)))
            << " dB\n";
      } else if (o_gain->parsed()) {
        const double phi = oracle_phi_deg * pi / 180.0;
        const double phi3 = oracle_phi3_deg * pi / 180.0;
        out << clidetail::fmt12(
                   linear_to_db(receive_antenna_gain(phi, phi3, 1.0)))
            << " dB\n";
      } else {
        const double v = min_power_speed(PropulsionConstants{}, oracle_vmax);
        out << clidetail::fmt12(v) << " m/s ("
            << clidetail::fmt12(propulsion_power(v, PropulsionConstants{}))
            << " W)\n";
      }
      return 0;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);

    RunManifest man;
    man.config_path = config_path;
    man.seed = seed;
    man.eps0 = eps0;
    man.max_outer = max_outer;
    man.mc_samples = mc_samples;
    man.out_dir = out_dir;
    const auto finish = [&] {
      man.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
      auto f = clidetail::open_out(dir / "manifest.json");
      f << manifest_to_json(man).dump(2) << "\n";
      out << "artifacts in " << dir.string() << "\n";
    };

    const ScenarioConfig cfg = load_config(config_path);
    man.config = config_to_json(cfg);
    BcdSettings bs;
    bs.eps0 = eps0;
    bs.max_outer = max_outer;

    if (solve->parsed() || baseline->parsed()) {
      man.command = solve->parsed() ? "solve" : "baseline";
      man.mode = solve->parsed() ? mode : std::string("robust");
      if (baseline->parsed()) man.scheme = scheme;
      RandomStream rng(seed, "links");
      const auto links = draw_links(cfg, rng);
      const Plan plan0 = init_plan(cfg, links);
      ExperimentReport rep;
      if (solve->parsed())
        rep = mode == "robust" ? run_robust(cfg, plan0, links, bs)
                               : run_nonrobust(cfg, plan0, links, bs);
      else if (scheme == "nonrobust")
        rep = run_nonrobust(cfg, plan0, links, bs);
      else
        rep = run_fixed_trajectory(cfg, plan0, links, bs,
                                   scheme != "fixed-nonrobust");
      clidetail::write_report_artifacts(dir, rep);
      clidetail::print_energy(out, rep);
      finish();
      return 0;
    }

    if (sweep_cmd->parsed()) {
      man.command = "sweep";
      man.parameter = parameter;
      man.values = values;
      const auto reports = sweep(cfg, parameter, values, seed, bs);
      {
        auto f = clidetail::open_out(dir / "energy.csv");
        write_energy_csv(f, reports);
      }
      for (std::size_t i = 0; i < reports.size(); ++i) {
        auto f = clidetail::open_out(dir / ("plan_" + std::to_string(i) +
                                            ".json"));
        f << plan_to_json(reports[i].plan).dump() << "\n";
        clidetail::print_energy(out, reports[i]);
      }
      if (!reports.empty()) {
        auto f = clidetail::open_out(dir / "plan.json");
        f << plan_to_json(reports.front().plan).dump() << "\n";
      }
      finish();
      return 0;
    }

    // certify
    man.command = "certify";
    man.plan_path = plan_path;
    const Plan plan = load_plan(plan_path);
    const auto violations = validate_plan(cfg, plan);
    if (!violations.empty()) {
      for (const auto& v : violations) err << "violated: " << to_string(v) << "\n";
      throw InfeasibleError("certify: plan violates " +
                            std::to_string(violations.size()) +
                            " deterministic constraint(s)");
    }
    RandomStream lrng(seed, "links");
    const auto links = draw_links(cfg, lrng);
    RandomStream mc(seed, "mc");
    const auto hist = completion_histogram(cfg, plan, links, mc_samples, mc);
    {
      auto f = clidetail::open_out(dir / "histogram.csv");
      write_histogram_csv(f, hist);
    }
    {
      auto f = clidetail::open_out(dir / "plan.json");
      f << plan_to_json(plan).dump() << "\n";
    }
    {
      BcdResult res;
      res.plan = plan;
      res.energy = energy_total(cfg, plan);
      auto f = clidetail::open_out(dir / "energy.csv");
      write_energy_csv(f, {make_report(cfg, "certified plan", std::move(res))});
    }
    out << "samples per slot: " << mc_samples << "\n";
    out << "mean completion ratio: " << clidetail::fmt12(hist.mean) << "\n";
    out << "completion quantiles (5/50/95%): " << clidetail::fmt12(hist.q05)
        << " " << clidetail::fmt12(hist.q50) << " "
        << clidetail::fmt12(hist.q95) << "\n";
    out << "max slot outage: " << clidetail::fmt12(hist.slot_outage.maxCoeff())
        << "\n";
    finish();
    return 0;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ntnopt
