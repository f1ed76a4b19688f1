#ifndef NETSYNC_ENGINE_HPP_
#define NETSYNC_ENGINE_HPP_

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netsync/channel.hpp"
#include "netsync/consensus.hpp"
#include "netsync/graph.hpp"
#include "netsync/plant.hpp"
#include "netsync/scenario.hpp"
#include "netsync/syncterm.hpp"
#include "netsync/trace.hpp"

namespace netsync {

/// Thrown when a state stops being finite; carries where and when.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double t, NodeId agent)
      : std::runtime_error("state diverged at t=" + std::to_string(t) +
                           " on agent " + std::to_string(agent + 1)),
        time(t),
        agent(agent) {}
  double time;
  NodeId agent;
};

namespace detail {

/// One simulation run: fixed-step integration of the stacked continuous
/// states with the broadcast/delivery/estimator events pinned to the slot
/// grid. Each grid instant processes, in order: slot bookkeeping (commit of
/// the estimator value, history snapshots), broadcasts, deliveries up to and
/// including the instant, the estimator update, then the continuous step.
/// Broadcasting before delivery makes zero-delay messages visible to the
/// update of the same slot.
class Simulation {
 public:
  Simulation(const Scenario& scenario, std::vector<DelaySequence> delays)
      : scn_(scenario),
        n_(scenario.agent_count()),
        m_(scenario.dimension),
        with_theta_(scenario.plant == PlantType::kManipulator),
        block_(6 * m_ + (with_theta_ ? 5 : 0)),
        channel_(scenario.graph.base(), scenario.comm.params, std::move(delays)),
        estimator_(scenario.graph.base(), effective_leaders(scenario),
                   scenario.desired_velocity, scenario.initial_estimate) {
    for (NodeId i = 0; i < n_; ++i) {
      kappa_.push_back(scn_.graph.in_weight(i));
      std::vector<std::pair<NodeId, double>> links;
      for (NodeId j : scn_.graph.in_neighbors(i))
        links.push_back({j, scn_.graph.weight(i, j)});
      in_links_.push_back(std::move(links));
    }
    init_state();
  }

  Trace run() {
    Trace trace;
    trace.scenario_echo = scenario_to_json(scn_);
    trace.n = n_;
    trace.m = m_;
    trace.dt = scn_.dt;
    trace.T = scn_.comm.params.T;
    trace.stride = scn_.trace_stride;

    const int steps_per_slot = scn_.steps_per_slot();
    const int total_steps =
        static_cast<int>(std::llround(scn_.duration / scn_.dt));

    vhat_cumint_.assign(n_, {});
    vbar_cumint_.assign(n_, {});
    vbar_at_slot_.assign(n_, {});
    vbar_running_.assign(n_, Eigen::VectorXd::Zero(m_));

    for (int step = 0; step <= total_steps; ++step) {
      const double t = step * scn_.dt;
      if (step % steps_per_slot == 0) {
        const int slot = step / steps_per_slot;
        snapshot_slot_histories(slot);
        estimator_.begin_slot();
        trace.vhat_by_slot.push_back(estimator_.held_all());
        for (NodeId j = 0; j < n_; ++j)
          channel_.broadcast(j, slot, state(X_, j, kP), estimator_.held(j));
        channel_.advance(t);
        trace.interaction_graphs.push_back(estimator_.update(channel_));
        slot_ = slot;
      } else {
        channel_.advance(t);
      }

      if (step % scn_.trace_stride == 0) record_sample(trace, t);
      if (step == total_steps) break;
      if (scn_.mode != RunMode::kEstimatorOnly) integrate_step(t);
    }

    trace.message_log = channel_.delivered_log();
    return trace;
  }

 private:
  enum Field { kP = 0, kV, kEta, kPsi, kVbar, kDvbar };

  static std::set<NodeId> effective_leaders(const Scenario& s) {
    if (s.mode == RunMode::kKnownVelocity) {
      std::set<NodeId> all;
      for (NodeId i = 0; i < s.agent_count(); ++i) all.insert(i);
      return all;
    }
    return s.leaders;
  }

  bool velocity_pinned(NodeId i) const {
    return scn_.mode == RunMode::kKnownVelocity || scn_.leaders.count(i) > 0;
  }

  Eigen::VectorXd state(const Eigen::VectorXd& x, NodeId i, Field f) const {
    return x.segment(i * block_ + f * m_, m_);
  }

  void set_state(Eigen::VectorXd& x, NodeId i, Field f,
                 const Eigen::VectorXd& value) const {
    x.segment(i * block_ + f * m_, m_) = value;
  }

  Eigen::VectorXd theta(const Eigen::VectorXd& x, NodeId i) const {
    return x.segment(i * block_ + 6 * m_, 5);
  }

  void init_state() {
    X_ = Eigen::VectorXd::Zero(n_ * block_);
    for (NodeId i = 0; i < n_; ++i) {
      set_state(X_, i, kP, scn_.initial_position[i]);
      set_state(X_, i, kV, scn_.initial_velocity[i]);
      set_state(X_, i, kPsi, scn_.initial_psi[i]);
      if (kappa_[i] > 0.0) set_state(X_, i, kEta, scn_.initial_eta[i]);
      if (velocity_pinned(i)) {
        set_state(X_, i, kVbar, *scn_.desired_velocity);
      } else {
        set_state(X_, i, kVbar, scn_.initial_estimate[i]);
      }
      if (with_theta_)
        X_.segment(i * block_ + 6 * m_, 5) = scn_.initial_parameters[i];
    }
  }

  void snapshot_slot_histories(int slot) {
    for (NodeId i = 0; i < n_; ++i) {
      if (slot == 0) {
        vhat_cumint_[i].push_back(Eigen::VectorXd::Zero(m_));
        vbar_cumint_[i].push_back(Eigen::VectorXd::Zero(m_));
      } else {
        // the held value of the previous slot is still in force here
        vhat_cumint_[i].push_back(vhat_cumint_[i].back() +
                                  estimator_.held(i) * scn_.comm.params.T);
        vbar_cumint_[i].push_back(vbar_running_[i]);
      }
      vbar_at_slot_[i].push_back(state(X_, i, kVbar));
    }
  }

  /// Weighted average of the extrapolated neighbor positions for agent i.
  Eigen::VectorXd neighborhood_position(const Eigen::VectorXd& x, NodeId i,
                                        double t) const {
    const Eigen::VectorXd own_p = state(x, i, kP);
    const Eigen::VectorXd own_vbar = state(x, i, kVbar);
    const Eigen::VectorXd held = estimator_.held(i);
    ReceiverEstimateView rx{t,
                            scn_.comm.params.T,
                            slot_,
                            &held,
                            &vhat_cumint_[i],
                            &vbar_at_slot_[i],
                            &vbar_cumint_[i],
                            &own_vbar};
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(m_);
    for (const auto& [j, weight] : in_links_[i]) {
      const Message* latest = channel_.current_message(i, j);
      sum += weight * position_estimate(latest, own_p, scn_.extrapolation, rx);
    }
    return sum / kappa_[i];
  }

  /// Full stacked derivative; optionally reports the per-agent torque and
  /// velocity error evaluated at this state.
  Eigen::VectorXd derivative(double t, const Eigen::VectorXd& x,
                             std::vector<Eigen::VectorXd>* u_out = nullptr,
                             std::vector<Eigen::VectorXd>* e_out = nullptr) const {
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(x.size());
    for (NodeId i = 0; i < n_; ++i) {
      const GainSet& gains = scn_.gains[i];
      const Eigen::VectorXd p = state(x, i, kP);
      const Eigen::VectorXd v = state(x, i, kV);
      const Eigen::VectorXd eta = state(x, i, kEta);
      const Eigen::VectorXd vbar = state(x, i, kVbar);
      const Eigen::VectorXd dvbar = state(x, i, kDvbar);

      if (!velocity_pinned(i)) {
        auto [vbar_rate, dvbar_rate] = smoothing_rates(
            gains.k_p, gains.k_d, vbar, dvbar, estimator_.held(i));
        set_state(dx, i, kVbar, vbar_rate);
        set_state(dx, i, kDvbar, dvbar_rate);
      }

      Eigen::VectorXd eta_rate = Eigen::VectorXd::Zero(m_);
      if (kappa_[i] > 0.0) {
        const Eigen::VectorXd psi = state(x, i, kPsi);
        SyncRates rates = sync_rates(gains.sync, eta, psi, p, vbar,
                                     neighborhood_position(x, i, t));
        eta_rate = rates.eta_rate;
        set_state(dx, i, kEta, rates.eta_rate);
        set_state(dx, i, kPsi, rates.psi_rate);
      }

      auto [v_r, dv_r] = reference_outputs(eta, eta_rate, vbar, dvbar);
      const Eigen::VectorXd e = v - v_r;

      Eigen::VectorXd u(m_);
      if (scn_.plant == PlantType::kManipulator) {
        const Regressor y = regressor(scn_.arm_params[i], p, v, v_r, dv_r);
        u = tracking_control(y, theta(x, i), e, gains.k_e);
        set_state(dx, i, kV, manipulator_accel(scn_.arm_params[i], p, v, u));
        dx.segment(i * block_ + 6 * m_, 5) = adaptation_rate(
            gains.adaptation * Eigen::Matrix<double, 5, 5>::Identity(), y, e);
      } else {
        u = dv_r - gains.k_e * e;
        set_state(dx, i, kV, u);
      }
      set_state(dx, i, kP, v);

      if (u_out) (*u_out)[i] = u;
      if (e_out) (*e_out)[i] = e;
    }
    return dx;
  }

  void integrate_step(double t) {
    const double dt = scn_.dt;
    const std::vector<Eigen::VectorXd> vbar_before = all_vbar(X_);
    const Eigen::VectorXd k1 = derivative(t, X_);
    const Eigen::VectorXd k2 = derivative(t + dt / 2, X_ + (dt / 2) * k1);
    const Eigen::VectorXd k3 = derivative(t + dt / 2, X_ + (dt / 2) * k2);
    const Eigen::VectorXd k4 = derivative(t + dt, X_ + dt * k3);
    X_ += (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);

    if (!X_.allFinite()) {
      for (NodeId i = 0; i < n_; ++i)
        if (!X_.segment(i * block_, block_).allFinite())
          throw DivergenceError(t + dt, i);
      throw DivergenceError(t + dt, 0);
    }
    for (NodeId i = 0; i < n_; ++i)
      vbar_running_[i] += (dt / 2.0) * (vbar_before[i] + state(X_, i, kVbar));
  }

  std::vector<Eigen::VectorXd> all_vbar(const Eigen::VectorXd& x) const {
    std::vector<Eigen::VectorXd> out;
    for (NodeId i = 0; i < n_; ++i) out.push_back(state(x, i, kVbar));
    return out;
  }

  void record_sample(Trace& trace, double t) {
    std::vector<Eigen::VectorXd> u(n_, Eigen::VectorXd::Zero(m_));
    std::vector<Eigen::VectorXd> e(n_, Eigen::VectorXd::Zero(m_));
    if (scn_.mode != RunMode::kEstimatorOnly) derivative(t, X_, &u, &e);

    std::vector<AgentSample> row(n_);
    for (NodeId i = 0; i < n_; ++i) {
      AgentSample& s = row[i];
      s.p = state(X_, i, kP);
      s.v = state(X_, i, kV);
      s.eta = state(X_, i, kEta);
      s.psi = state(X_, i, kPsi);
      s.vbar = state(X_, i, kVbar);
      s.dvbar = state(X_, i, kDvbar);
      s.vhat = estimator_.held(i);
      s.u = u[i];
      s.e = e[i];
      if (with_theta_) s.theta_hat = theta(X_, i);
    }
    trace.times.push_back(t);
    trace.samples.push_back(std::move(row));
  }

  const Scenario& scn_;
  int n_, m_;
  bool with_theta_;
  int block_;
  Channel channel_;
  VelocityEstimator estimator_;
  std::vector<double> kappa_;
  std::vector<std::vector<std::pair<NodeId, double>>> in_links_;
  Eigen::VectorXd X_;
  int slot_ = 0;
  std::vector<std::vector<Eigen::VectorXd>> vhat_cumint_;
  std::vector<std::vector<Eigen::VectorXd>> vbar_cumint_;
  std::vector<std::vector<Eigen::VectorXd>> vbar_at_slot_;
  std::vector<Eigen::VectorXd> vbar_running_;
};

}  // namespace detail

/// Number of broadcast slots in a run (slot 0 through the final instant).
inline int slot_count(const Scenario& s) {
  return static_cast<int>(std::llround(s.duration / s.dt)) / s.steps_per_slot();
}

/// Draws the per-edge delay sequences a run with this scenario will use.
inline std::vector<DelaySequence> draw_scenario_delays(const Scenario& s) {
  const int horizon = slot_count(s);
  std::vector<DelaySequence> delays;
  for (const auto& [from, to] : s.graph.base().edges()) {
    auto rng = detail::substream(s.seed, from, to);
    if (s.comm.model == DelayModel::kDirect) {
      delays.push_back(draw_delays(s.comm.params, horizon, s.comm.drop_prob,
                                   s.comm.delay_lo, s.comm.delay_hi, rng));
    } else {
      delays.push_back(draw_delays_lookback(s.comm.params, horizon,
                                            s.comm.delay_lo, s.comm.delay_hi,
                                            rng));
    }
  }
  return delays;
}

/// Runs a scenario against externally supplied delay sequences (replay).
inline Trace run_with_delays(const Scenario& scenario,
                             std::vector<DelaySequence> delays) {
  scenario.validate();
  const int horizon = slot_count(scenario);
  if (delays.size() != scenario.graph.base().edges().size())
    throw std::invalid_argument("run: one delay sequence per edge required");
  for (const auto& d : delays)
    if (static_cast<int>(d.size()) <= horizon)
      throw std::invalid_argument("run: delay sequences shorter than the run");
  detail::Simulation sim(scenario, std::move(delays));
  return sim.run();
}

/// Runs a scenario with delays drawn from its seed. Deterministic: the same
/// scenario produces the same trace, bit for bit.
inline Trace run(const Scenario& scenario) {
  scenario.validate();
  return run_with_delays(scenario, draw_scenario_delays(scenario));
}

/// Aggregate synchronization metrics of a run.
struct Metrics {
  bool has_desired_velocity = false;
  Eigen::VectorXd desired_velocity;
  Eigen::VectorXd final_mean_velocity;  // the empirical common velocity
  std::vector<double> times;
  std::vector<double> position_spread;   // max pairwise |p_i - p_j|_inf
  std::vector<double> velocity_error;    // to v_d, or pairwise when leaderless
  std::vector<double> tracking_error;    // max_i |v_i - v_r_i|
  std::vector<double> estimator_hull;    // max pairwise |vhat_i - vhat_j|_inf
  double peak_position_spread = 0.0;
  double final_position_spread = 0.0;  // max over the final window
  double final_velocity_error = 0.0;
  double final_tracking_error = 0.0;
  double initial_estimator_hull = 0.0;
  double final_estimator_hull = 0.0;
};

inline Metrics compute_metrics(const Trace& trace,
                               double final_window_seconds = 5.0) {
  if (trace.times.empty()) throw std::invalid_argument("metrics: empty trace");
  Metrics metrics;
  const auto& echo = trace.scenario_echo;
  if (echo.contains("desired_velocity") && !echo["desired_velocity"].is_null()) {
    metrics.has_desired_velocity = true;
    metrics.desired_velocity =
        detail::vector_from_json(echo["desired_velocity"]);
  }

  metrics.times = trace.times;
  for (const auto& row : trace.samples) {
    double spread = 0, verr = 0, track = 0, hull = 0;
    for (size_t a = 0; a < row.size(); ++a) {
      track = std::max(track, row[a].e.norm());
      if (metrics.has_desired_velocity)
        verr = std::max(
            verr,
            (row[a].v - metrics.desired_velocity).lpNorm<Eigen::Infinity>());
      for (size_t b = a + 1; b < row.size(); ++b) {
        spread = std::max(spread,
                          (row[a].p - row[b].p).lpNorm<Eigen::Infinity>());
        hull = std::max(hull,
                        (row[a].vhat - row[b].vhat).lpNorm<Eigen::Infinity>());
        if (!metrics.has_desired_velocity)
          verr = std::max(verr,
                          (row[a].v - row[b].v).lpNorm<Eigen::Infinity>());
      }
    }
    metrics.position_spread.push_back(spread);
    metrics.velocity_error.push_back(verr);
    metrics.tracking_error.push_back(track);
    metrics.estimator_hull.push_back(hull);
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(trace.m);
  for (const auto& s : trace.samples.back()) mean += s.v;
  metrics.final_mean_velocity = mean / static_cast<double>(trace.n);

  const double t_end = trace.times.back();
  metrics.peak_position_spread = 0.0;
  for (double s : metrics.position_spread)
    metrics.peak_position_spread = std::max(metrics.peak_position_spread, s);
  for (size_t k = 0; k < trace.times.size(); ++k) {
    if (trace.times[k] < t_end - final_window_seconds) continue;
    metrics.final_position_spread =
        std::max(metrics.final_position_spread, metrics.position_spread[k]);
    metrics.final_velocity_error =
        std::max(metrics.final_velocity_error, metrics.velocity_error[k]);
    metrics.final_tracking_error =
        std::max(metrics.final_tracking_error, metrics.tracking_error[k]);
    metrics.final_estimator_hull =
        std::max(metrics.final_estimator_hull, metrics.estimator_hull[k]);
  }
  metrics.initial_estimator_hull = metrics.estimator_hull.front();
  return metrics;
}

}  // namespace netsync

#endif  // NETSYNC_ENGINE_HPP_
