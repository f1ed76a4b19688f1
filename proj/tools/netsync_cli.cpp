// Command-line front end: run scenarios, check gain conditions, analyze
// traces, and replay runs from exported delay sequences.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "netsync/netsync.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;

void print_metrics(const netsync::Metrics& m) {
  std::printf("position spread   peak %.6g, final-window max %.6g\n",
              m.peak_position_spread, m.final_position_spread);
  if (m.has_desired_velocity) {
    std::printf("velocity error    final-window max %.6g\n",
                m.final_velocity_error);
  } else {
    std::printf("velocity hull     final-window max %.6g\n",
                m.final_velocity_error);
    std::cout << "common velocity   [" << m.final_mean_velocity.transpose()
              << "]\n";
  }
  std::printf("tracking error    final-window max %.6g\n",
              m.final_tracking_error);
  std::printf("estimate hull     initial %.6g, final-window max %.6g\n",
              m.initial_estimator_hull, m.final_estimator_hull);
}

int cmd_run(const std::string& scenario_path, const std::string& out_path,
            std::optional<std::uint64_t> seed,
            const std::string& delays_out) {
  netsync::Scenario scenario = netsync::load_scenario(scenario_path);
  if (seed) scenario.seed = *seed;

  auto gains = netsync::check_gain_condition(scenario.graph, scenario.gains,
                                             scenario.comm.design_h_star());
  if (!gains.all_pass)
    std::fprintf(stderr, "warning: gain condition fails for some agents\n");
  if (netsync::roots(scenario.graph.base()).empty())
    std::fprintf(stderr, "warning: interconnection graph has no spanning tree\n");

  auto delays = netsync::draw_scenario_delays(scenario);
  if (!delays_out.empty()) {
    std::ofstream out(delays_out);
    if (!out) throw std::runtime_error("cannot write " + delays_out);
    netsync::write_delay_csv(out, scenario.graph.base(), delays);
  }
  netsync::Trace trace = netsync::run_with_delays(scenario, std::move(delays));
  netsync::emit_trace(trace, out_path);
  std::printf("trace written to %s (%zu samples, %zu messages)\n",
              out_path.c_str(), trace.times.size(), trace.message_log.size());
  print_metrics(netsync::compute_metrics(trace));
  return kExitOk;
}

int cmd_check_gains(const std::string& scenario_path) {
  netsync::Scenario scenario = netsync::load_scenario(scenario_path);
  const double exact = scenario.comm.params.h_star();
  const double design = scenario.comm.design_h_star();
  std::printf("blackout bound: exact %.6g s, used for design %.6g s\n", exact,
              design);
  auto report = netsync::check_gain_condition(scenario.graph, scenario.gains,
                                              design);
  for (const auto& a : report.agents)
    std::printf("agent %2d: decay rate %.9g, margin %.9g, max blackout %.6g %s\n",
                a.agent + 1, a.decay_rate, a.margin, a.max_h_star,
                a.pass ? "[pass]" : "[FAIL]");
  auto matrices =
      netsync::gain_matrices(scenario.graph, scenario.gains, design);
  std::printf("loop gain spectral radius: %.9g (%s)\n",
              matrices.loop_spectral_radius,
              matrices.loop_spectral_radius < 1.0 ? "pass" : "FAIL");
  const bool ok = report.all_pass && matrices.loop_spectral_radius < 1.0;
  std::printf("%s\n", ok ? "all gain conditions satisfied" : "gain check FAILED");
  return ok ? kExitOk : kExitValidation;
}

int cmd_analyze(const std::string& trace_path) {
  netsync::Trace trace = netsync::load_trace(trace_path);
  netsync::Scenario scenario = netsync::scenario_from_json(trace.scenario_echo);
  print_metrics(netsync::compute_metrics(trace));

  auto audit = netsync::iss_audit(trace, scenario);
  std::printf(
      "stability audit   first-order bound: max relative violation %.3g\n",
      audit.max_filter_violation);
  std::printf(
      "                  second-order bound: max relative violation %.3g "
      "(agent %d, t0=%.2f, t=%.2f)\n",
      audit.max_sync_violation, audit.worst_sync_agent + 1,
      audit.worst_sync_t0, audit.worst_sync_t);

  if (scenario.mode != netsync::RunMode::kKnownVelocity) {
    auto graphs = netsync::reconstruct_interaction_graphs(trace, scenario);
    auto windows =
        netsync::check_interaction_windows(graphs, scenario.comm.params);
    std::printf("interaction windows (%d slots each): %d checked, %s\n",
                windows.window, windows.windows_checked,
                windows.all_rooted ? "all jointly rooted"
                                   : "NOT all jointly rooted");
  }
  return kExitOk;
}

int cmd_replay(const std::string& scenario_path, const std::string& delays_path,
               const std::string& out_path) {
  netsync::Scenario scenario = netsync::load_scenario(scenario_path);
  std::ifstream in(delays_path);
  if (!in) throw std::runtime_error("cannot open " + delays_path);
  auto delays = netsync::read_delay_csv(in, scenario.graph.base());
  netsync::Trace trace = netsync::run_with_delays(scenario, std::move(delays));
  netsync::emit_trace(trace, out_path);
  std::printf("trace written to %s (%zu samples, %zu messages)\n",
              out_path.c_str(), trace.times.size(), trace.message_log.size());
  print_metrics(netsync::compute_metrics(trace));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"networked synchronization simulator"};
  app.require_subcommand(1);

  std::string scenario_path, trace_path, out_path = "trace.csv";
  std::string delays_path, delays_out;
  std::optional<std::uint64_t> seed;

  auto* run_cmd = app.add_subcommand("run", "simulate a scenario");
  run_cmd->add_option("scenario", scenario_path, "scenario file")->required();
  run_cmd->add_option("--out", out_path, "trace output file");
  run_cmd->add_option("--seed", seed, "override the scenario seed");
  run_cmd->add_option("--delays-out", delays_out,
                      "export the drawn delay sequences");

  auto* gains_cmd =
      app.add_subcommand("check-gains", "verify the gain design conditions");
  gains_cmd->add_option("scenario", scenario_path, "scenario file")->required();

  auto* analyze_cmd =
      app.add_subcommand("analyze", "metrics and audits of a recorded trace");
  analyze_cmd->add_option("trace", trace_path, "trace file")->required();

  auto* replay_cmd =
      app.add_subcommand("replay", "re-run a scenario from exported delays");
  replay_cmd->add_option("scenario", scenario_path, "scenario file")->required();
  replay_cmd->add_option("--delays", delays_path, "delay csv")->required();
  replay_cmd->add_option("--out", out_path, "trace output file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(scenario_path, out_path, seed, delays_out);
    if (gains_cmd->parsed()) return cmd_check_gains(scenario_path);
    if (analyze_cmd->parsed()) return cmd_analyze(trace_path);
    if (replay_cmd->parsed()) return cmd_replay(scenario_path, delays_path, out_path);
  } catch (const netsync::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
