#ifndef NETSYNC_CHANNEL_HPP_
#define NETSYNC_CHANNEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netsync/detail/rng.hpp"
#include "netsync/graph.hpp"

namespace netsync {

/// A delay of +infinity marks a broadcast that is never delivered (either not
/// sent or lost in transit).
inline constexpr double kDropped = std::numeric_limits<double>::infinity();

/// Parameters of the intermittent communication process. Broadcasts happen on
/// the grid t_k = k*T; on every edge, within any k_star consecutive broadcast
/// slots at least one message arrives with delay at most h. The resulting
/// worst-case information age is h_star.
struct CommParams {
  double T = 0.1;   // sampling period [s], > 0
  int k_star = 1;   // max slots between guaranteed deliveries, >= 1
  double h = 0.0;   // delay bound on guaranteed deliveries [s], >= 0

  double h_star() const { return k_star * T + h; }

  void validate() const {
    if (!(T > 0.0)) throw std::invalid_argument("CommParams: T must be > 0");
    if (k_star < 1) throw std::invalid_argument("CommParams: k_star must be >= 1");
    if (h < 0.0) throw std::invalid_argument("CommParams: h must be >= 0");
  }
};

/// One broadcast sample in flight or delivered: the sender's position and
/// discrete velocity estimate at the stamped slot.
struct Message {
  NodeId sender = -1;
  NodeId receiver = -1;
  int stamp = 0;
  Eigen::VectorXd position;
  Eigen::VectorXd velocity_estimate;
  double send_time = 0.0;
  double delivery_time = 0.0;
};

/// Per-slot delays for one edge: entry k is the transit time of the broadcast
/// sent at kT, or kDropped.
using DelaySequence = std::vector<double>;

/// Direct delay model: each slot is dropped with probability drop_prob,
/// otherwise delayed uniformly in [lo, hi]. A draw is forced back to a finite
/// delay whenever a window of k_star consecutive slots would otherwise contain
/// no delivery, so the guaranteed-delivery condition holds by construction.
inline DelaySequence draw_delays(const CommParams& params, int horizon_k,
                                 double drop_prob, double lo, double hi,
                                 std::mt19937_64& rng) {
  params.validate();
  if (lo < 0.0 || lo > hi) throw std::invalid_argument("draw_delays: bad range");
  if (hi > params.h)
    throw std::invalid_argument(
        "draw_delays: delay range exceeds the guaranteed bound h");
  if (drop_prob < 0.0 || drop_prob >= 1.0)
    throw std::invalid_argument("draw_delays: drop_prob must be in [0, 1)");

  DelaySequence delays(horizon_k + 1, kDropped);
  int last_ok = -1;
  for (int k = 0; k <= horizon_k; ++k) {
    bool drop = detail::uniform_unit(rng) < drop_prob;
    if (!drop) delays[k] = detail::uniform(rng, lo, hi);
    if (std::isinf(delays[k]) && k - last_ok == params.k_star)
      delays[k] = detail::uniform(rng, lo, hi);  // forced delivery
    if (delays[k] <= params.h) last_ok = k;
  }
  return delays;
}

/// Lookback delay model: at every slot k the sender picks a sample slot kbar
/// uniformly from the last k_star slots. If that sample was already sent at an
/// earlier slot, nothing is transmitted at k (the slot's own sample may then
/// be lost for good); otherwise the transmission takes uniform [lo, hi]
/// seconds. In delay-sequence terms, slot kbar gets delay (k - kbar)*T +
/// transit, and slots that are never picked are dropped. A fresh pick
/// (kbar = k) is forced whenever the guaranteed-delivery condition would
/// otherwise be violated.
inline DelaySequence draw_delays_lookback(const CommParams& params,
                                          int horizon_k, double lo, double hi,
                                          std::mt19937_64& rng) {
  params.validate();
  if (lo < 0.0 || lo > hi) throw std::invalid_argument("lookback: bad range");
  if (hi > params.h)
    throw std::invalid_argument(
        "lookback: delay range exceeds the guaranteed bound h");

  DelaySequence delays(horizon_k + 1, kDropped);
  std::vector<bool> used(horizon_k + 1, false);
  int last_qualifying = 0;  // slot 0 counts as the reference for the first gap
  for (int k = 0; k <= horizon_k; ++k) {
    int kbar;
    if (k - last_qualifying >= params.k_star) {
      kbar = k;  // forced fresh sample, always unused
    } else {
      const int lo_slot = std::max(0, k - params.k_star);
      kbar = lo_slot + static_cast<int>(detail::uniform_unit(rng) *
                                        (k - lo_slot + 1));
      if (used[kbar]) continue;  // already sent: this slot stays silent
    }
    used[kbar] = true;
    double transit = detail::uniform(rng, lo, hi);
    delays[kbar] = (k - kbar) * params.T + transit;
    if (delays[kbar] <= params.h)
      last_qualifying = std::max(last_qualifying, kbar);
  }
  return delays;
}

struct Assumption1Violation {
  int edge_index = -1;   // index into the edge list, -1 for single sequences
  int window_begin = 0;  // slot range that contains no qualifying delivery
  int window_end = 0;
};

struct Assumption1Report {
  bool ok = true;
  std::optional<Assumption1Violation> first_violation;
  double h_star = 0.0;  // k_star*T + h for the checked parameters
};

/// Checks one delay sequence for the guaranteed-delivery condition: there is
/// a qualifying slot (finite delay <= h) no later than k_star, and successive
/// qualifying slots are at most k_star apart. Windows that extend past the
/// horizon are indeterminate and never counted as violations.
inline std::optional<Assumption1Violation> check_delivery_guarantee(
    const DelaySequence& delays, const CommParams& params) {
  const int length = static_cast<int>(delays.size());
  int start = 0;
  int bound = params.k_star;  // first qualifying slot may be as late as k_star
  while (start < length) {
    int found = -1;
    for (int k = start; k <= bound && k < length; ++k) {
      if (delays[k] <= params.h) {
        found = k;
        break;
      }
    }
    if (found < 0) {
      if (bound < length) return Assumption1Violation{-1, start, bound};
      return std::nullopt;  // window runs past the horizon
    }
    start = found + 1;
    bound = found + params.k_star;
  }
  return std::nullopt;
}

inline Assumption1Report validate_assumption1(
    const std::vector<DelaySequence>& per_edge_delays,
    const CommParams& params) {
  Assumption1Report report;
  report.h_star = params.h_star();
  for (size_t e = 0; e < per_edge_delays.size(); ++e) {
    auto violation = check_delivery_guarantee(per_edge_delays[e], params);
    if (violation) {
      violation->edge_index = static_cast<int>(e);
      report.ok = false;
      report.first_violation = violation;
      return report;
    }
  }
  return report;
}

/// Simulates the per-edge message transport: broadcasts enqueued at slot
/// instants, delivered after their drawn delays, with the latest-stamp cursor
/// per edge. Owned by a single simulation run.
class Channel {
 public:
  Channel(const Digraph& graph, const CommParams& params,
          std::vector<DelaySequence> per_edge_delays)
      : graph_(graph), params_(params), delays_(std::move(per_edge_delays)) {
    params_.validate();
    if (delays_.size() != graph_.edges().size())
      throw std::invalid_argument("Channel: one delay sequence per edge required");
    int e = 0;
    for (const auto& edge : graph_.edges()) {
      edge_index_[edge] = e;
      out_edges_[edge.first].push_back(e);
      edge_of_index_.push_back(edge);
      ++e;
    }
    edges_.resize(delays_.size());
  }

  const CommParams& params() const { return params_; }
  const Digraph& graph() const { return graph_; }
  const std::vector<DelaySequence>& delay_sequences() const { return delays_; }

  int edge_index(NodeId from, NodeId to) const {
    auto it = edge_index_.find({from, to});
    if (it == edge_index_.end())
      throw std::out_of_range("Channel: no such edge");
    return it->second;
  }

  /// Enqueues the broadcast of `sender` at slot `stamp` toward all of its
  /// out-neighbors, applying each edge's drawn delay.
  void broadcast(NodeId sender, int stamp, const Eigen::VectorXd& position,
                 const Eigen::VectorXd& velocity_estimate) {
    auto it = out_edges_.find(sender);
    if (it == out_edges_.end()) return;
    const double send_time = stamp * params_.T;
    for (int e : it->second) {
      if (stamp >= static_cast<int>(delays_[e].size()))
        throw std::logic_error("Channel: broadcast beyond the delay horizon");
      const double tau = delays_[e][stamp];
      if (std::isinf(tau)) continue;  // dropped
      if (tau < 0.0)
        throw std::invalid_argument("Channel: negative transit delay");
      Message m;
      m.sender = sender;
      m.receiver = edge_of_index_[e].second;
      m.stamp = stamp;
      m.position = position;
      m.velocity_estimate = velocity_estimate;
      m.send_time = send_time;
      m.delivery_time = send_time + tau;
      pending_.push(std::move(m));
    }
  }

  /// Delivers every pending message with delivery_time <= t_now (the interval
  /// is closed on the right) in (delivery_time, sender, receiver) order, and
  /// advances the per-edge cursors. Out-of-order arrivals are logged but never
  /// regress a cursor.
  std::vector<Message> advance(double t_now) {
    std::vector<Message> batch;
    while (!pending_.empty() && pending_.top().delivery_time <= t_now) {
      Message m = pending_.top();
      pending_.pop();
      const int e = edge_index(m.sender, m.receiver);
      EdgeLog& log = edges_[e];
      log.deliveries.push_back(m);
      log.max_stamp_prefix.push_back(
          log.max_stamp_prefix.empty()
              ? m.stamp
              : std::max(log.max_stamp_prefix.back(), m.stamp));
      if (log.cursor < 0 ||
          m.stamp > log.deliveries[log.cursor].stamp)
        log.cursor = static_cast<int>(log.deliveries.size()) - 1;
      delivered_log_.push_back(m);
      batch.push_back(std::move(m));
    }
    time_ = std::max(time_, t_now);
    return batch;
  }

  double time() const { return time_; }

  /// Stamp of the freshest delivered message on (j -> i) as of the last
  /// advance; absent before the first delivery.
  std::optional<int> current_stamp(NodeId i, NodeId j) const {
    const EdgeLog& log = edges_[edge_index(j, i)];
    if (log.cursor < 0) return std::nullopt;
    return log.deliveries[log.cursor].stamp;
  }

  /// The freshest delivered message on (j -> i), or nullptr before the first
  /// delivery.
  const Message* current_message(NodeId i, NodeId j) const {
    const EdgeLog& log = edges_[edge_index(j, i)];
    if (log.cursor < 0) return nullptr;
    return &log.deliveries[log.cursor];
  }

  /// Largest stamp delivered on (j -> i) up to time t. Requires t <= time(),
  /// i.e. the deliveries up to t must already have been advanced past.
  std::optional<int> stamp_at(NodeId i, NodeId j, double t) const {
    if (t > time_)
      throw std::invalid_argument("Channel: stamp_at beyond processed time");
    const EdgeLog& log = edges_[edge_index(j, i)];
    auto it = std::upper_bound(
        log.deliveries.begin(), log.deliveries.end(), t,
        [](double value, const Message& m) { return value < m.delivery_time; });
    if (it == log.deliveries.begin()) return std::nullopt;
    size_t count = static_cast<size_t>(it - log.deliveries.begin());
    return log.max_stamp_prefix[count - 1];
  }

  const std::vector<Message>& delivered_log() const { return delivered_log_; }

 private:
  struct EdgeLog {
    std::vector<Message> deliveries;     // in delivery order
    std::vector<int> max_stamp_prefix;   // running max of stamps
    int cursor = -1;                     // index of the freshest stamp
  };

  struct LaterDelivery {
    bool operator()(const Message& a, const Message& b) const {
      if (a.delivery_time != b.delivery_time)
        return a.delivery_time > b.delivery_time;
      if (a.sender != b.sender) return a.sender > b.sender;
      return a.receiver > b.receiver;
    }
  };

  Digraph graph_;
  CommParams params_;
  std::vector<DelaySequence> delays_;
  std::map<Digraph::Edge, int> edge_index_;
  std::map<NodeId, std::vector<int>> out_edges_;
  std::vector<Digraph::Edge> edge_of_index_;
  std::vector<EdgeLog> edges_;
  std::priority_queue<Message, std::vector<Message>, LaterDelivery> pending_;
  std::vector<Message> delivered_log_;
  double time_ = 0.0;
};

/// Writes per-edge delay sequences as CSV (sender,receiver,slot,delay with
/// "inf" for drops; node labels are 1-based in the file).
inline void write_delay_csv(std::ostream& out, const Digraph& graph,
                            const std::vector<DelaySequence>& delays) {
  out << "sender,receiver,slot,delay\n";
  int e = 0;
  for (const auto& [j, i] : graph.edges()) {
    const DelaySequence& seq = delays[e++];
    for (size_t k = 0; k < seq.size(); ++k) {
      out << (j + 1) << ',' << (i + 1) << ',' << k << ',';
      if (std::isinf(seq[k])) {
        out << "inf";
      } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", seq[k]);
        out << buf;
      }
      out << '\n';
    }
  }
}

/// Reads delay sequences written by write_delay_csv. Every edge of the graph
/// must be covered contiguously from slot 0.
inline std::vector<DelaySequence> read_delay_csv(std::istream& in,
                                                 const Digraph& graph) {
  std::map<Digraph::Edge, int> edge_index;
  int e = 0;
  for (const auto& edge : graph.edges()) edge_index[edge] = e++;
  std::vector<DelaySequence> delays(graph.edges().size());

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("delay csv: empty file");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    auto next = [&](const char* what) {
      if (!std::getline(row, field, ','))
        throw std::runtime_error("delay csv: missing " + std::string(what) +
                                 " on line " + std::to_string(line_no));
      return field;
    };
    int j = std::stoi(next("sender")) - 1;
    int i = std::stoi(next("receiver")) - 1;
    int k = std::stoi(next("slot"));
    std::string value = next("delay");
    auto it = edge_index.find({j, i});
    if (it == edge_index.end())
      throw std::runtime_error("delay csv: unknown edge on line " +
                               std::to_string(line_no));
    DelaySequence& seq = delays[it->second];
    if (k != static_cast<int>(seq.size()))
      throw std::runtime_error("delay csv: slots out of order on line " +
                               std::to_string(line_no));
    seq.push_back(value == "inf" ? kDropped : std::stod(value));
  }
  return delays;
}

}  // namespace netsync

#endif  // NETSYNC_CHANNEL_HPP_
