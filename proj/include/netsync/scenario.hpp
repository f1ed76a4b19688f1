#ifndef NETSYNC_SCENARIO_HPP_
#define NETSYNC_SCENARIO_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "netsync/channel.hpp"
#include "netsync/graph.hpp"
#include "netsync/plant.hpp"
#include "netsync/syncterm.hpp"

namespace netsync {

enum class DelayModel { kDirect, kLookback };
enum class RunMode { kFull, kEstimatorOnly, kKnownVelocity };
enum class PlantType { kManipulator, kDoubleIntegrator };

/// Per-agent control gains.
struct GainSet {
  SyncGains sync;          // synchronization pair
  double k_p = 2.0;        // smoothing filter stiffness
  double k_d = 2.0;        // smoothing filter damping
  double k_e = 10.0;       // tracking feedback
  double adaptation = 0.3; // adaptation gain (scales the identity)

  void validate() const {
    sync.validate();
    if (!(k_p > 0) || !(k_d > 0) || !(k_e > 0) || !(adaptation > 0))
      throw std::invalid_argument("GainSet: gains must be positive");
  }
};

struct CommConfig {
  CommParams params;
  DelayModel model = DelayModel::kDirect;
  double drop_prob = 0.0;  // direct model only
  double delay_lo = 0.0;
  double delay_hi = 0.0;
  std::optional<double> h_star_estimate;  // coarser bound used in gain design

  /// Blackout bound used for the gain condition: the user-supplied estimate
  /// when present, else the exact k_star*T + h.
  double design_h_star() const {
    return h_star_estimate.value_or(params.h_star());
  }
};

/// A complete, reproducible run description.
struct Scenario {
  std::string name;
  int dimension = 2;  // length of the position/velocity vectors
  WeightedDigraph graph{0};
  std::set<NodeId> leaders;
  std::optional<Eigen::VectorXd> desired_velocity;
  CommConfig comm;
  std::vector<GainSet> gains;  // one per agent
  Extrapolation extrapolation = Extrapolation::kStampedEstimate;
  PlantType plant = PlantType::kManipulator;
  std::vector<ManipulatorParams> arm_params;  // one per agent when manipulator
  RunMode mode = RunMode::kFull;
  std::vector<Eigen::VectorXd> initial_position;
  std::vector<Eigen::VectorXd> initial_velocity;
  std::vector<Eigen::VectorXd> initial_eta;
  std::vector<Eigen::VectorXd> initial_psi;
  std::vector<Eigen::VectorXd> initial_estimate;
  std::vector<Vector5> initial_parameters;
  double duration = 60.0;
  double dt = 1e-3;
  int trace_stride = 1;
  std::uint64_t seed = 1;

  int agent_count() const { return graph.size(); }

  int steps_per_slot() const {
    return static_cast<int>(std::llround(comm.params.T / dt));
  }

  void validate() const {
    const int n = agent_count();
    if (n < 1) throw std::invalid_argument("scenario: empty graph");
    if (dimension < 1) throw std::invalid_argument("scenario: dimension must be >= 1");
    comm.params.validate();
    if (comm.delay_lo < 0 || comm.delay_lo > comm.delay_hi)
      throw std::invalid_argument("scenario: bad delay range");
    if (comm.delay_hi > comm.params.h)
      throw std::invalid_argument("scenario: delay range exceeds the bound h");
    if (comm.drop_prob < 0 || comm.drop_prob >= 1)
      throw std::invalid_argument("scenario: drop_prob must be in [0, 1)");
    if (comm.h_star_estimate && *comm.h_star_estimate < comm.params.h_star())
      throw std::invalid_argument(
          "scenario: h_star_estimate below the exact blackout bound");
    for (NodeId l : leaders)
      if (l < 0 || l >= n) throw std::invalid_argument("scenario: leader out of range");
    const bool needs_vd =
        !leaders.empty() || mode == RunMode::kKnownVelocity;
    if (needs_vd && !desired_velocity)
      throw std::invalid_argument("scenario: desired velocity required");
    if (desired_velocity && desired_velocity->size() != dimension)
      throw std::invalid_argument("scenario: desired velocity has wrong dimension");
    if (static_cast<int>(gains.size()) != n)
      throw std::invalid_argument("scenario: one gain set per agent");
    for (const auto& g : gains) g.validate();
    if (plant == PlantType::kManipulator) {
      if (dimension != 2)
        throw std::invalid_argument("scenario: the two-link arm needs dimension 2");
      if (static_cast<int>(arm_params.size()) != n)
        throw std::invalid_argument("scenario: one arm parameter set per agent");
      for (const auto& p : arm_params) p.validate();
    }
    auto check_states = [&](const std::vector<Eigen::VectorXd>& states,
                            const char* what) {
      if (static_cast<int>(states.size()) != n)
        throw std::invalid_argument(std::string("scenario: ") + what +
                                    " needs one entry per agent");
      for (const auto& v : states)
        if (v.size() != dimension)
          throw std::invalid_argument(std::string("scenario: ") + what +
                                      " has wrong dimension");
    };
    check_states(initial_position, "initial position");
    check_states(initial_velocity, "initial velocity");
    check_states(initial_eta, "initial eta");
    check_states(initial_psi, "initial psi");
    check_states(initial_estimate, "initial velocity estimate");
    if (plant == PlantType::kManipulator &&
        static_cast<int>(initial_parameters.size()) != n)
      throw std::invalid_argument("scenario: one parameter estimate per agent");
    if (!(dt > 0)) throw std::invalid_argument("scenario: dt must be positive");
    const double ratio = comm.params.T / dt;
    if (std::abs(ratio - std::llround(ratio)) > 1e-6 || std::llround(ratio) < 1)
      throw std::invalid_argument("scenario: dt must divide the sampling period");
    if (trace_stride < 1)
      throw std::invalid_argument("scenario: trace_stride must be >= 1");
    if (steps_per_slot() % trace_stride != 0)
      throw std::invalid_argument(
          "scenario: trace_stride must divide the steps per sampling period");
    if (duration < 3 * comm.params.h_star())
      throw std::invalid_argument(
          "scenario: duration shorter than three blackout windows");
  }
};

namespace detail {

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t k = 0; k < j.size(); ++k) v(k) = j.at(k).get<double>();
  return v;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v(k));
  return j;
}

inline std::vector<Eigen::VectorXd> state_list_from_json(
    const nlohmann::json& j, int n, int dim) {
  std::vector<Eigen::VectorXd> out;
  if (j.is_null()) {
    out.assign(n, Eigen::VectorXd::Zero(dim));
  } else {
    for (const auto& row : j) out.push_back(vector_from_json(row));
  }
  return out;
}

inline GainSet gain_set_from_json(const nlohmann::json& j) {
  GainSet g;
  g.sync.k_eta = j.at("k_eta").get<double>();
  g.sync.lambda = j.at("lambda").get<double>();
  g.k_p = j.value("k_p", 2.0);
  g.k_d = j.value("k_d", 2.0);
  g.k_e = j.value("k_e", 10.0);
  g.adaptation = j.value("adaptation", 0.3);
  return g;
}

inline nlohmann::json gain_set_to_json(const GainSet& g) {
  return {{"k_eta", g.sync.k_eta}, {"lambda", g.sync.lambda},
          {"k_p", g.k_p},          {"k_d", g.k_d},
          {"k_e", g.k_e},          {"adaptation", g.adaptation}};
}

inline ManipulatorParams arm_from_json(const nlohmann::json& j) {
  ManipulatorParams p;
  p.m1 = j.value("m1", p.m1);
  p.m2 = j.value("m2", p.m2);
  p.l1 = j.value("l1", p.l1);
  p.l2 = j.value("l2", p.l2);
  p.lc1 = j.value("lc1", p.lc1);
  p.lc2 = j.value("lc2", p.lc2);
  p.I1 = j.value("I1", p.I1);
  p.I2 = j.value("I2", p.I2);
  p.gravity = j.value("gravity", p.gravity);
  return p;
}

inline nlohmann::json arm_to_json(const ManipulatorParams& p) {
  return {{"m1", p.m1},   {"m2", p.m2},   {"l1", p.l1},
          {"l2", p.l2},   {"lc1", p.lc1}, {"lc2", p.lc2},
          {"I1", p.I1},   {"I2", p.I2},   {"gravity", p.gravity}};
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.name = j.value("name", "unnamed");
  s.dimension = j.at("dimension").get<int>();

  const auto& jg = j.at("graph");
  const int n = jg.at("nodes").get<int>();
  WeightedDigraph graph(n);
  for (const auto& e : jg.at("edges")) {
    const int from = e.at(0).get<int>() - 1;  // 1-based in the file
    const int to = e.at(1).get<int>() - 1;
    const double w = e.size() > 2 ? e.at(2).get<double>() : 1.0;
    graph.add_edge(from, to, w);
  }
  s.graph = graph;

  if (j.contains("leaders"))
    for (const auto& l : j.at("leaders")) s.leaders.insert(l.get<int>() - 1);
  if (j.contains("desired_velocity") && !j.at("desired_velocity").is_null())
    s.desired_velocity = detail::vector_from_json(j.at("desired_velocity"));

  const auto& jc = j.at("comm");
  s.comm.params.T = jc.at("period").get<double>();
  s.comm.params.k_star = jc.at("k_star").get<int>();
  s.comm.params.h = jc.at("h").get<double>();
  const std::string model = jc.value("model", "direct");
  if (model == "direct") {
    s.comm.model = DelayModel::kDirect;
  } else if (model == "lookback") {
    s.comm.model = DelayModel::kLookback;
  } else {
    throw std::invalid_argument("scenario: unknown delay model " + model);
  }
  s.comm.drop_prob = jc.value("drop_prob", 0.0);
  if (jc.contains("delay_range")) {
    s.comm.delay_lo = jc.at("delay_range").at(0).get<double>();
    s.comm.delay_hi = jc.at("delay_range").at(1).get<double>();
  }
  if (jc.contains("h_star_estimate") && !jc.at("h_star_estimate").is_null())
    s.comm.h_star_estimate = jc.at("h_star_estimate").get<double>();

  const auto& jgain = j.at("gains");
  if (jgain.contains("per_agent")) {
    for (const auto& g : jgain.at("per_agent"))
      s.gains.push_back(detail::gain_set_from_json(g));
  } else {
    s.gains.assign(n, detail::gain_set_from_json(jgain));
  }

  s.extrapolation =
      parse_extrapolation(j.value("extrapolation", "stamped-estimate"));

  const auto& jp = j.at("plant");
  const std::string plant_type = jp.at("type").get<std::string>();
  if (plant_type == "manipulator") {
    s.plant = PlantType::kManipulator;
    if (jp.contains("per_agent")) {
      for (const auto& p : jp.at("per_agent"))
        s.arm_params.push_back(detail::arm_from_json(p));
    } else {
      s.arm_params.assign(
          n, detail::arm_from_json(jp.value("params", nlohmann::json::object())));
    }
  } else if (plant_type == "double-integrator") {
    s.plant = PlantType::kDoubleIntegrator;
  } else {
    throw std::invalid_argument("scenario: unknown plant type " + plant_type);
  }

  const std::string mode = j.value("mode", "full");
  if (mode == "full") {
    s.mode = RunMode::kFull;
  } else if (mode == "estimator-only") {
    s.mode = RunMode::kEstimatorOnly;
  } else if (mode == "known-velocity") {
    s.mode = RunMode::kKnownVelocity;
  } else {
    throw std::invalid_argument("scenario: unknown mode " + mode);
  }

  const nlohmann::json jinit = j.value("initial", nlohmann::json::object());
  auto item = [&](const char* key) {
    return jinit.contains(key) ? jinit.at(key) : nlohmann::json();
  };
  s.initial_position = detail::state_list_from_json(item("position"), n, s.dimension);
  s.initial_velocity = detail::state_list_from_json(item("velocity"), n, s.dimension);
  s.initial_eta = detail::state_list_from_json(item("eta"), n, s.dimension);
  if (jinit.contains("psi")) {
    s.initial_psi = detail::state_list_from_json(jinit.at("psi"), n, s.dimension);
  } else {
    s.initial_psi = s.initial_position;  // zeroes the initial position mismatch
  }
  s.initial_estimate =
      detail::state_list_from_json(item("velocity_estimate"), n, s.dimension);
  if (s.plant == PlantType::kManipulator) {
    if (jinit.contains("parameter_estimate")) {
      for (const auto& row : jinit.at("parameter_estimate")) {
        Vector5 v;
        for (int k = 0; k < 5; ++k) v(k) = row.at(k).get<double>();
        s.initial_parameters.push_back(v);
      }
    } else {
      s.initial_parameters.assign(n, Vector5::Zero());
    }
  }

  s.duration = j.at("duration").get<double>();
  s.dt = j.at("dt").get<double>();
  s.trace_stride = j.value("trace_stride", 1);
  s.seed = j.value("seed", std::uint64_t{1});
  s.validate();
  return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["dimension"] = s.dimension;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [from, to] : s.graph.base().edges())
    edges.push_back({from + 1, to + 1, s.graph.weight(to, from)});
  j["graph"] = {{"nodes", s.graph.size()}, {"edges", edges}};
  nlohmann::json leaders = nlohmann::json::array();
  for (NodeId l : s.leaders) leaders.push_back(l + 1);
  j["leaders"] = leaders;
  if (s.desired_velocity)
    j["desired_velocity"] = detail::vector_to_json(*s.desired_velocity);
  j["comm"] = {{"period", s.comm.params.T},
               {"k_star", s.comm.params.k_star},
               {"h", s.comm.params.h},
               {"model", s.comm.model == DelayModel::kDirect ? "direct" : "lookback"},
               {"drop_prob", s.comm.drop_prob},
               {"delay_range", {s.comm.delay_lo, s.comm.delay_hi}}};
  if (s.comm.h_star_estimate)
    j["comm"]["h_star_estimate"] = *s.comm.h_star_estimate;
  nlohmann::json per_agent_gains = nlohmann::json::array();
  for (const auto& g : s.gains) per_agent_gains.push_back(detail::gain_set_to_json(g));
  j["gains"] = {{"per_agent", per_agent_gains}};
  j["extrapolation"] = to_string(s.extrapolation);
  if (s.plant == PlantType::kManipulator) {
    nlohmann::json per_agent_arms = nlohmann::json::array();
    for (const auto& p : s.arm_params) per_agent_arms.push_back(detail::arm_to_json(p));
    j["plant"] = {{"type", "manipulator"}, {"per_agent", per_agent_arms}};
  } else {
    j["plant"] = {{"type", "double-integrator"}};
  }
  switch (s.mode) {
    case RunMode::kFull: j["mode"] = "full"; break;
    case RunMode::kEstimatorOnly: j["mode"] = "estimator-only"; break;
    case RunMode::kKnownVelocity: j["mode"] = "known-velocity"; break;
  }
  nlohmann::json init;
  auto states = [&](const std::vector<Eigen::VectorXd>& list) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& v : list) rows.push_back(detail::vector_to_json(v));
    return rows;
  };
  init["position"] = states(s.initial_position);
  init["velocity"] = states(s.initial_velocity);
  init["eta"] = states(s.initial_eta);
  init["psi"] = states(s.initial_psi);
  init["velocity_estimate"] = states(s.initial_estimate);
  if (s.plant == PlantType::kManipulator) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& v : s.initial_parameters) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < 5; ++k) row.push_back(v(k));
      rows.push_back(row);
    }
    init["parameter_estimate"] = rows;
  }
  j["initial"] = init;
  j["duration"] = s.duration;
  j["dt"] = s.dt;
  j["trace_stride"] = s.trace_stride;
  j["seed"] = s.seed;
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("scenario parse error in " + path + ": " + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scenario field error in " + path + ": " + e.what());
  }
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << scenario_to_json(s).dump(2) << '\n';
}

}  // namespace netsync

#endif  // NETSYNC_SCENARIO_HPP_
