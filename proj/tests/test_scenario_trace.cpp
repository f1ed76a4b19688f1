#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "netsync/engine.hpp"
#include "netsync/scenario.hpp"
#include "netsync/trace.hpp"

using netsync::Scenario;

#ifndef NETSYNC_SCENARIO_DIR
#define NETSYNC_SCENARIO_DIR "scenarios"
#endif

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(NETSYNC_SCENARIO_DIR) + "/" + name;
}

nlohmann::json small_scenario_json() {
  return nlohmann::json::parse(R"({
    "name": "small",
    "dimension": 2,
    "graph": {"nodes": 2, "edges": [[1, 2, 1.0]]},
    "leaders": [1],
    "desired_velocity": [0.3, 0.6],
    "comm": {"period": 0.1, "k_star": 2, "h": 0.05, "model": "direct",
             "drop_prob": 0.2, "delay_range": [0.0, 0.05]},
    "gains": {"k_eta": 7.211102550927978, "lambda": 13.0},
    "plant": {"type": "double-integrator"},
    "initial": {"position": [[0.0, 0.0], [1.0, 1.0]]},
    "duration": 2.0,
    "dt": 0.001,
    "trace_stride": 10,
    "seed": 11
  })");
}

}  // namespace

TEST_CASE("bundled scenarios load and validate") {
  for (const char* name :
       {"paper_leader.scn", "paper_leaderless.scn", "paper_corollary2.scn",
        "single_agent.scn", "estimator_only.scn"}) {
    Scenario s = netsync::load_scenario(scenario_path(name));
    REQUIRE(s.agent_count() >= 1);
  }
  Scenario leader = netsync::load_scenario(scenario_path("paper_leader.scn"));
  REQUIRE(leader.agent_count() == 10);
  REQUIRE(leader.leaders == std::set<netsync::NodeId>{0, 3});
  REQUIRE(leader.comm.design_h_star() == 1.3);
  REQUIRE(leader.comm.params.h_star() == Catch::Approx(1.25));
  // the stand-in interconnection is rooted at both leaders
  auto roots = netsync::roots(leader.graph.base());
  REQUIRE(roots.count(0) == 1);
  REQUIRE(roots.count(3) == 1);
  // normalized weights: unit incoming weight everywhere
  for (netsync::NodeId i = 0; i < 10; ++i)
    REQUIRE(leader.graph.in_weight(i) == Catch::Approx(1.0));

  Scenario leaderless =
      netsync::load_scenario(scenario_path("paper_leaderless.scn"));
  REQUIRE(leaderless.leaders.empty());
  REQUIRE(!leaderless.desired_velocity.has_value());
}

TEST_CASE("scenario json round trip is stable") {
  Scenario s = netsync::scenario_from_json(small_scenario_json());
  nlohmann::json first = netsync::scenario_to_json(s);
  Scenario reloaded = netsync::scenario_from_json(first);
  nlohmann::json second = netsync::scenario_to_json(reloaded);
  REQUIRE(first == second);
}

TEST_CASE("scenario validation rejects bad inputs") {
  SECTION("dt must divide the sampling period") {
    auto j = small_scenario_json();
    j["dt"] = 0.0003;
    REQUIRE_THROWS_WITH(netsync::scenario_from_json(j),
                        Catch::Matchers::ContainsSubstring("divide"));
  }
  SECTION("stride must divide the steps per period") {
    auto j = small_scenario_json();
    j["trace_stride"] = 7;
    REQUIRE_THROWS_AS(netsync::scenario_from_json(j), std::invalid_argument);
  }
  SECTION("delay range above the guarantee bound") {
    auto j = small_scenario_json();
    j["comm"]["delay_range"] = {0.0, 0.2};
    REQUIRE_THROWS_AS(netsync::scenario_from_json(j), std::invalid_argument);
  }
  SECTION("leaders require a desired velocity") {
    auto j = small_scenario_json();
    j.erase("desired_velocity");
    REQUIRE_THROWS_AS(netsync::scenario_from_json(j), std::invalid_argument);
  }
  SECTION("short durations are rejected") {
    auto j = small_scenario_json();
    j["duration"] = 0.3;
    REQUIRE_THROWS_AS(netsync::scenario_from_json(j), std::invalid_argument);
  }
  SECTION("the arm needs two joints") {
    auto j = small_scenario_json();
    j["dimension"] = 3;
    j["desired_velocity"] = {0.1, 0.2, 0.3};
    j["initial"]["position"] = {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
    j["plant"] = {{"type", "manipulator"}};
    REQUIRE_THROWS_AS(netsync::scenario_from_json(j), std::invalid_argument);
  }
  SECTION("blackout estimate below the exact bound") {
    auto j = small_scenario_json();
    j["comm"]["h_star_estimate"] = 0.1;
    REQUIRE_THROWS_AS(netsync::scenario_from_json(j), std::invalid_argument);
  }
}

TEST_CASE("trace round trip preserves samples, messages, and the hash") {
  Scenario s = netsync::scenario_from_json(small_scenario_json());
  netsync::Trace trace = netsync::run(s);

  std::stringstream buffer;
  netsync::emit_trace(trace, buffer);
  netsync::Trace loaded = netsync::load_trace(buffer);

  REQUIRE(loaded.n == trace.n);
  REQUIRE(loaded.m == trace.m);
  REQUIRE(loaded.times.size() == trace.times.size());
  REQUIRE(loaded.message_log.size() == trace.message_log.size());
  for (size_t k = 0; k < trace.times.size(); ++k) {
    REQUIRE(loaded.times[k] == trace.times[k]);
    for (int i = 0; i < trace.n; ++i) {
      REQUIRE(loaded.samples[k][i].p == trace.samples[k][i].p);
      REQUIRE(loaded.samples[k][i].v == trace.samples[k][i].v);
      REQUIRE(loaded.samples[k][i].vhat == trace.samples[k][i].vhat);
      REQUIRE(loaded.samples[k][i].e == trace.samples[k][i].e);
    }
  }
  for (size_t k = 0; k < trace.message_log.size(); ++k) {
    REQUIRE(loaded.message_log[k].stamp == trace.message_log[k].stamp);
    REQUIRE(loaded.message_log[k].delivery_time ==
            trace.message_log[k].delivery_time);
    REQUIRE(loaded.message_log[k].position == trace.message_log[k].position);
  }
  REQUIRE(loaded.scenario_echo == trace.scenario_echo);
}

TEST_CASE("tampered trace files are rejected by the content hash") {
  Scenario s = netsync::scenario_from_json(small_scenario_json());
  netsync::Trace trace = netsync::run(s);
  std::stringstream buffer;
  netsync::emit_trace(trace, buffer);
  std::string text = buffer.str();
  const size_t mid = text.size() / 2;
  text[mid] = text[mid] == '1' ? '2' : '1';
  std::stringstream tampered(text);
  REQUIRE_THROWS_WITH(netsync::load_trace(tampered),
                      Catch::Matchers::ContainsSubstring("hash"));
}

TEST_CASE("scenario echo in a trace reproduces the scenario") {
  Scenario s = netsync::scenario_from_json(small_scenario_json());
  netsync::Trace trace = netsync::run(s);
  Scenario from_echo = netsync::scenario_from_json(trace.scenario_echo);
  REQUIRE(netsync::scenario_to_json(from_echo) == trace.scenario_echo);
}
