#ifndef NETSYNC_CONSENSUS_HPP_
#define NETSYNC_CONSENSUS_HPP_

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netsync/channel.hpp"
#include "netsync/graph.hpp"

namespace netsync {

/// Discrete-time desired-velocity estimator, updated once per broadcast slot.
/// Leaders hold the desired velocity; every follower replaces its value by the
/// arithmetic mean of its own value and the payload estimates of neighbors
/// whose freshest stamp increased during the last slot interval.
///
/// The value "in force" during [sigma*T, (sigma+1)*T) is committed at the
/// start of the slot; the update run at sigma*T produces the value for the
/// next slot. Both are exposed so that broadcasts carry the in-force value.
class VelocityEstimator {
 public:
  VelocityEstimator(const Digraph& graph, std::set<NodeId> leaders,
                    std::optional<Eigen::VectorXd> desired_velocity,
                    std::vector<Eigen::VectorXd> initial)
      : graph_(graph),
        leaders_(std::move(leaders)),
        v_d_(std::move(desired_velocity)) {
    const int n = graph_.size();
    if (static_cast<int>(initial.size()) != n)
      throw std::invalid_argument("VelocityEstimator: one initial value per agent");
    if (!leaders_.empty() && !v_d_)
      throw std::invalid_argument("VelocityEstimator: leaders need a desired velocity");
    for (NodeId l : leaders_)
      if (l < 0 || l >= n)
        throw std::out_of_range("VelocityEstimator: leader out of range");
    held_ = initial;
    for (NodeId l : leaders_) held_[l] = *v_d_;
    next_ = held_;
    for (const auto& edge : graph_.edges())
      previous_stamp_[edge] = std::nullopt;
  }

  bool is_leader(NodeId i) const { return leaders_.count(i) > 0; }

  /// Commits the value computed at the previous slot; call at each slot start
  /// before broadcasting.
  void begin_slot() { held_ = next_; }

  /// Estimate in force during the current slot interval.
  const Eigen::VectorXd& held(NodeId i) const { return held_[i]; }
  const std::vector<Eigen::VectorXd>& held_all() const { return held_; }

  /// Runs the consensus update against the channel's delivery state at the
  /// current slot instant and returns the interaction graph of this slot:
  /// an edge (j, i) for every j whose data entered i's update (leaders listen
  /// to the whole leader set; every node listens to itself).
  Digraph update(const Channel& channel) {
    const int n = graph_.size();
    Digraph interaction(n);
    for (NodeId i = 0; i < n; ++i) {
      if (is_leader(i)) {
        for (NodeId l : leaders_) interaction.add_edge(l, i);
        next_[i] = *v_d_;
        continue;
      }
      interaction.add_edge(i, i);
      Eigen::VectorXd sum = held_[i];
      int count = 1;
      for (NodeId j : graph_.in_neighbors(i)) {
        std::optional<int> stamp = channel.current_stamp(i, j);
        std::optional<int>& previous = previous_stamp_[{j, i}];
        if (stamp && (!previous || *stamp > *previous)) {
          sum += channel.current_message(i, j)->velocity_estimate;
          ++count;
          interaction.add_edge(j, i);
        }
        previous = stamp;
      }
      next_[i] = sum / count;
    }
    return interaction;
  }

 private:
  Digraph graph_;
  std::set<NodeId> leaders_;
  std::optional<Eigen::VectorXd> v_d_;
  std::vector<Eigen::VectorXd> held_;  // value at the current slot
  std::vector<Eigen::VectorXd> next_;  // value at the next slot
  std::map<Digraph::Edge, std::optional<int>> previous_stamp_;
};

/// Rates of the second-order smoothing filter that turns the staircase
/// discrete estimate into a C^1 signal: returns (dvbar, ddvbar).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> smoothing_rates(
    double k_p, double k_d, const Eigen::VectorXd& vbar,
    const Eigen::VectorXd& dvbar, const Eigen::VectorXd& vhat_held) {
  if (!(k_p > 0.0) || !(k_d > 0.0))
    throw std::invalid_argument("smoothing_rates: gains must be positive");
  return {dvbar, -k_d * dvbar - k_p * (vbar - vhat_held)};
}

/// Convergence summary of an estimator history.
struct EstimatorConvergence {
  Eigen::VectorXd reference;         // desired velocity, or the empirical limit
  std::vector<double> disagreement;  // max_i |vhat_i(sigma) - reference|_inf
  std::vector<double> hull_width;    // max_{i,j} |vhat_i - vhat_j|_inf
  double per_step_ratio = 0.0;       // fitted geometric ratio per slot
  double per_window_ratio = 0.0;     // ratio per ceil(h_star/T) slots
  double initial_hull_width = 0.0;
  double final_hull_width = 0.0;
  double final_disagreement = 0.0;
};

namespace detail {

/// Least-squares slope of log(values) against the step index, fitted over the
/// trailing half of the decaying segment. Values below 1e-12 of the peak are
/// treated as converged-to-roundoff and excluded, so a long plateau at the
/// noise floor does not flatten the fit. Returns the per-step geometric
/// ratio, or 0 when the series is identically zero.
inline double fitted_geometric_ratio(const std::vector<double>& values) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  if (peak == 0.0) return 0.0;

  std::vector<size_t> usable;
  for (size_t k = 0; k < values.size(); ++k)
    if (values[k] > 1e-12 * peak) usable.push_back(k);
  if (usable.size() < 2) return 0.0;

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (size_t idx = usable.size() / 2; idx < usable.size(); ++idx) {
    const double x = static_cast<double>(usable[idx]);
    const double y = std::log(values[usable[idx]]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) return 0.0;
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  return std::exp(slope);
}

}  // namespace detail

/// Summarizes how the discrete estimates converged over a run.
/// `vhat_by_slot[sigma][i]` is agent i's in-force estimate at slot sigma.
inline EstimatorConvergence estimator_convergence(
    const std::vector<std::vector<Eigen::VectorXd>>& vhat_by_slot,
    const std::set<NodeId>& leaders,
    const std::optional<Eigen::VectorXd>& desired_velocity,
    const CommParams& comm) {
  const int window = static_cast<int>(std::ceil(comm.h_star() / comm.T));
  if (static_cast<int>(vhat_by_slot.size()) < 3 * window)
    throw std::invalid_argument(
        "estimator_convergence: history shorter than three blackout windows");

  EstimatorConvergence result;
  const auto& final_row = vhat_by_slot.back();
  if (!leaders.empty()) {
    result.reference = *desired_velocity;
  } else {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(final_row.front().size());
    for (const auto& v : final_row) mean += v;
    result.reference = mean / static_cast<double>(final_row.size());
  }

  for (const auto& row : vhat_by_slot) {
    double dis = 0.0, hull = 0.0;
    for (const auto& v : row)
      dis = std::max(dis, (v - result.reference).lpNorm<Eigen::Infinity>());
    for (size_t a = 0; a < row.size(); ++a)
      for (size_t b = a + 1; b < row.size(); ++b)
        hull = std::max(hull, (row[a] - row[b]).lpNorm<Eigen::Infinity>());
    result.disagreement.push_back(dis);
    result.hull_width.push_back(hull);
  }

  result.per_step_ratio = detail::fitted_geometric_ratio(result.disagreement);
  result.per_window_ratio = std::pow(result.per_step_ratio, window);
  result.initial_hull_width = result.hull_width.front();
  result.final_hull_width = result.hull_width.back();
  result.final_disagreement = result.disagreement.back();
  return result;
}

}  // namespace netsync

#endif  // NETSYNC_CONSENSUS_HPP_
