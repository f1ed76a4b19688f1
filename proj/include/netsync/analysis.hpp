#ifndef NETSYNC_ANALYSIS_HPP_
#define NETSYNC_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "netsync/graph.hpp"
#include "netsync/scenario.hpp"
#include "netsync/syncterm.hpp"
#include "netsync/trace.hpp"

namespace netsync {

/// Exponential decay rate of the synchronization pair: minus the largest real
/// part of the roots of x^2 + k_eta x + lambda. Positive for positive gains,
/// and continuous across the critically damped locus k_eta = 2 sqrt(lambda).
inline double sync_decay_rate(double k_eta, double lambda) {
  if (!(k_eta > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("sync_decay_rate: gains must be positive");
  const double disc = k_eta * k_eta - 4.0 * lambda;
  if (disc >= 0.0) return (k_eta - std::sqrt(disc)) / 2.0;  // slowest real root
  return k_eta / 2.0;  // complex pair
}

struct AgentGainMargin {
  NodeId agent = -1;
  double decay_rate = 0.0;  // mu
  double margin = 0.0;      // mu - (1 + 2 h_star)
  bool pass = false;        // strict inequality
  double max_h_star = 0.0;  // largest admissible blackout: (mu - 1) / 2
};

struct GainConditionReport {
  double h_star = 0.0;
  std::vector<AgentGainMargin> agents;  // agents with incoming links only
  bool all_pass = true;
};

/// Per-agent check of the small-gain design inequality mu_i > 1 + 2 h_star,
/// required for every agent with incoming links.
inline GainConditionReport check_gain_condition(
    const WeightedDigraph& graph, const std::vector<GainSet>& gains,
    double h_star) {
  if (static_cast<int>(gains.size()) != graph.size())
    throw std::invalid_argument("check_gain_condition: one gain set per agent");
  GainConditionReport report;
  report.h_star = h_star;
  for (NodeId i : graph.nodes_with_input()) {
    AgentGainMargin entry;
    entry.agent = i;
    entry.decay_rate =
        sync_decay_rate(gains[i].sync.k_eta, gains[i].sync.lambda);
    entry.margin = entry.decay_rate - (1.0 + 2.0 * h_star);
    entry.pass = entry.margin > 0.0;
    entry.max_h_star = (entry.decay_rate - 1.0) / 2.0;
    report.all_pass = report.all_pass && entry.pass;
    report.agents.push_back(entry);
  }
  return report;
}

/// Spectral radius of a square entrywise-nonnegative matrix: power iteration
/// on the shifted matrix (the shift separates the dominant eigenvalue of any
/// nonnegative matrix), falling back to a dense eigensolve when the iteration
/// stalls, e.g. for nilpotent inputs.
inline double spectral_radius(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("spectral_radius: matrix must be square");
  if (a.size() == 0) return 0.0;
  if ((a.array() < 0.0).any())
    throw std::invalid_argument("spectral_radius: matrix must be nonnegative");
  const int n = static_cast<int>(a.rows());
  if (a.isZero(0.0)) return 0.0;

  const double shift = std::max(1.0, a.maxCoeff());
  const Eigen::MatrixXd b = a + shift * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
  double previous = 0.0;
  int settled = 0;
  for (int iter = 0; iter < 20000; ++iter) {
    const Eigen::VectorXd y = b * x;
    const double estimate = x.dot(y);
    if (std::abs(estimate - previous) <= 1e-12 * std::max(1.0, std::abs(estimate))) {
      if (++settled >= 4) return std::max(0.0, estimate - shift);
    } else {
      settled = 0;
    }
    previous = estimate;
    x = y / y.norm();
  }
  return std::sqrt(
      Eigen::EigenSolver<Eigen::MatrixXd>(a, /*computeEigenvectors=*/false)
          .eigenvalues()
          .cwiseAbs2()
          .maxCoeff());
}

/// The loop-gain construction of the interconnected synchronization pairs:
/// the per-pair IOS gain matrix, the interconnection matrix bounding each
/// input by the neighbors' outputs, and their product whose spectral radius
/// decides stability. Inputs are ordered (phi_1, eps_1, phi_2, eps_2, ...).
struct GainMatrices {
  std::vector<NodeId> agents;       // agents with incoming links, ascending
  Eigen::MatrixXd ios_gains;        // n# x 2n#
  Eigen::MatrixXd interconnection;  // 2n# x n#
  Eigen::MatrixXd loop;             // their product, n# x n#
  double loop_spectral_radius = 0.0;
};

inline GainMatrices gain_matrices(const WeightedDigraph& graph,
                                  const std::vector<GainSet>& gains,
                                  double h_star) {
  if (static_cast<int>(gains.size()) != graph.size())
    throw std::invalid_argument("gain_matrices: one gain set per agent");
  GainMatrices result;
  result.agents = graph.nodes_with_input();
  const int ns = static_cast<int>(result.agents.size());
  if (ns == 0) throw std::invalid_argument("gain_matrices: no agent has inputs");
  std::map<NodeId, int> row_of;
  for (int r = 0; r < ns; ++r) row_of[result.agents[r]] = r;

  result.ios_gains = Eigen::MatrixXd::Zero(ns, 2 * ns);
  result.interconnection = Eigen::MatrixXd::Zero(2 * ns, ns);
  for (int r = 0; r < ns; ++r) {
    const NodeId i = result.agents[r];
    const double mu = sync_decay_rate(gains[i].sync.k_eta, gains[i].sync.lambda);
    result.ios_gains(r, 2 * r) = 1.0 / mu;      // from phi_i
    result.ios_gains(r, 2 * r + 1) = 2.0 / mu;  // from eps_i
    const double kappa = graph.in_weight(i);
    for (NodeId j : graph.in_neighbors(i)) {
      auto it = row_of.find(j);
      if (it == row_of.end()) continue;  // neighbor has no inputs of its own
      result.interconnection(2 * r, it->second) = graph.weight(i, j) / kappa;
      result.interconnection(2 * r + 1, it->second) =
          graph.weight(i, j) * h_star / kappa;
    }
  }
  result.loop = result.ios_gains * result.interconnection;

  // Cross-check the product against its closed form entry by entry.
  for (int r = 0; r < ns; ++r) {
    const NodeId i = result.agents[r];
    const double mu = sync_decay_rate(gains[i].sync.k_eta, gains[i].sync.lambda);
    const double kappa = graph.in_weight(i);
    for (int c = 0; c < ns; ++c) {
      const NodeId j = result.agents[c];
      const double expected =
          graph.weight(i, j) * (1.0 + 2.0 * h_star) / (kappa * mu);
      if (std::abs(result.loop(r, c) - expected) > 1e-12 * std::max(1.0, expected))
        throw std::logic_error("gain_matrices: closed-form mismatch");
    }
  }
  result.loop_spectral_radius = spectral_radius(result.loop);
  return result;
}

/// Signals of the stability decomposition, recomputed from a trace:
/// the position mismatch p - psi, the filtered-neighborhood mismatch, and the
/// two interconnection inputs of every agent with incoming links.
struct DiagnosticSeries {
  std::vector<NodeId> agents;  // agents with incoming links, ascending
  std::vector<double> times;
  // Indexed [agent_index][sample].
  std::vector<std::vector<Eigen::VectorXd>> p_mismatch;     // p - psi
  std::vector<std::vector<Eigen::VectorXd>> psi_mismatch;   // psi - avg p_j
  std::vector<std::vector<Eigen::VectorXd>> phi;
  std::vector<std::vector<Eigen::VectorXd>> eps;
};

namespace detail {

/// Per-edge reconstruction of the freshest delivered message at each sample
/// time, mirroring the max-stamp rule over the message log.
class MessageCursor {
 public:
  MessageCursor(const std::vector<Message>& log, NodeId receiver, NodeId sender) {
    for (const Message& m : log)
      if (m.receiver == receiver && m.sender == sender) messages_.push_back(&m);
  }

  /// Freshest message delivered by time t; nullptr before the first one.
  const Message* at(double t) {
    while (next_ < messages_.size() && messages_[next_]->delivery_time <= t) {
      if (best_ == nullptr || messages_[next_]->stamp > best_->stamp)
        best_ = messages_[next_];
      ++next_;
    }
    return best_;
  }

 private:
  std::vector<const Message*> messages_;  // in delivery order
  size_t next_ = 0;
  const Message* best_ = nullptr;
};

}  // namespace detail

inline DiagnosticSeries compute_diagnostics(const Trace& trace,
                                            const Scenario& scenario) {
  if (trace.samples.empty())
    throw std::invalid_argument("diagnostics: empty trace");
  DiagnosticSeries series;
  series.agents = scenario.graph.nodes_with_input();
  series.times = trace.times;

  const double T = scenario.comm.params.T;
  const int steps_per_slot = scenario.steps_per_slot();
  const int samples_per_slot = steps_per_slot / trace.stride;

  // Receiver-side slot histories from the recorded samples.
  const int n = trace.n;
  std::vector<std::vector<Eigen::VectorXd>> vhat_at_slot(n), vbar_at_slot(n);
  std::vector<std::vector<Eigen::VectorXd>> vhat_cumint(n), vbar_cumint(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd vh_acc = Eigen::VectorXd::Zero(trace.m);
    Eigen::VectorXd vb_acc = Eigen::VectorXd::Zero(trace.m);
    for (size_t k = 0; k < trace.times.size(); k += samples_per_slot) {
      vhat_at_slot[i].push_back(trace.samples[k][i].vhat);
      vbar_at_slot[i].push_back(trace.samples[k][i].vbar);
      vhat_cumint[i].push_back(vh_acc);
      vbar_cumint[i].push_back(vb_acc);
      vh_acc += trace.samples[k][i].vhat * T;
      // trapezoid over the samples of this slot
      for (size_t s = k; s + 1 < trace.times.size() && s < k + samples_per_slot;
           ++s)
        vb_acc += 0.5 * (trace.times[s + 1] - trace.times[s]) *
                  (trace.samples[s][i].vbar + trace.samples[s + 1][i].vbar);
    }
  }

  std::map<Digraph::Edge, detail::MessageCursor> cursors;
  for (const auto& [j, i] : scenario.graph.base().edges())
    cursors.emplace(std::pair{j, i},
                    detail::MessageCursor(trace.message_log, i, j));

  for (NodeId i : series.agents) {
    const double kappa = scenario.graph.in_weight(i);
    std::vector<Eigen::VectorXd> p_mis, psi_mis, phi_row, eps_row;
    for (size_t k = 0; k < trace.times.size(); ++k) {
      const double t = trace.times[k];
      const int slot = static_cast<int>(k) / samples_per_slot;
      const auto& row = trace.samples[k];
      const AgentSample& self = row[i];

      Eigen::VectorXd avg_p = Eigen::VectorXd::Zero(trace.m);
      Eigen::VectorXd avg_v_rel = Eigen::VectorXd::Zero(trace.m);
      Eigen::VectorXd avg_estimate_gap = Eigen::VectorXd::Zero(trace.m);
      for (NodeId j : scenario.graph.in_neighbors(i)) {
        const double a = scenario.graph.weight(i, j);
        avg_p += a * row[j].p;
        avg_v_rel += a * (row[j].v - self.vbar);
        ReceiverEstimateView rx{t,
                                T,
                                slot,
                                &self.vhat,
                                &vhat_cumint[i],
                                &vbar_at_slot[i],
                                &vbar_cumint[i],
                                &self.vbar};
        const Message* latest = cursors.at({j, i}).at(t);
        avg_estimate_gap +=
            a * (row[j].p -
                 position_estimate(latest, self.p, scenario.extrapolation, rx));
      }
      p_mis.push_back(self.p - self.psi);
      psi_mis.push_back(self.psi - avg_p / kappa);
      phi_row.push_back(self.e - avg_v_rel / kappa);
      eps_row.push_back(self.e + avg_estimate_gap / kappa);
    }
    series.p_mismatch.push_back(std::move(p_mis));
    series.psi_mismatch.push_back(std::move(psi_mis));
    series.phi.push_back(std::move(phi_row));
    series.eps.push_back(std::move(eps_row));
  }
  return series;
}

/// Result of auditing the two exponential input-to-state estimates of the
/// stability decomposition over a grid of (t0, t) pairs. Violations are
/// relative to the audited signal's peak over the run.
struct IssAuditReport {
  double max_filter_violation = 0.0;  // first-order mismatch estimate
  double max_sync_violation = 0.0;    // second-order pair estimate
  NodeId worst_filter_agent = -1, worst_sync_agent = -1;
  double worst_filter_t0 = 0, worst_filter_t = 0;
  double worst_sync_t0 = 0, worst_sync_t = 0;
  long pairs_checked = 0;
};

/// Checks, for every agent with incoming links and a grid of (t0, t) pairs,
///   |psi_mis(t)|  <= e^{-(t-t0)} |psi_mis(t0)| + sup|eps| + sup|phi|
///   |(eta, p_mis)(t)| <= e^{-mu (t-t0)} |(eta, p_mis)(t0)|
///                        + (sup|psi_mis| + sup|eps|) / mu
/// with suprema over [t0, t] sampled on the trace grid.
inline IssAuditReport iss_audit(const Trace& trace, const Scenario& scenario,
                                int t0_count = 160) {
  const DiagnosticSeries series = compute_diagnostics(trace, scenario);
  IssAuditReport report;
  const size_t samples = series.times.size();
  const size_t t0_stride = std::max<size_t>(1, samples / t0_count);

  for (size_t a = 0; a < series.agents.size(); ++a) {
    const NodeId agent = series.agents[a];
    const double mu = sync_decay_rate(scenario.gains[agent].sync.k_eta,
                                      scenario.gains[agent].sync.lambda);
    std::vector<double> sync_norm(samples), filter_norm(samples),
        phi_norm(samples), eps_norm(samples);
    double sync_peak = 0.0, filter_peak = 0.0;
    for (size_t k = 0; k < samples; ++k) {
      Eigen::VectorXd pair(2 * trace.m);
      pair << trace.samples[k][agent].eta, series.p_mismatch[a][k];
      sync_norm[k] = pair.norm();
      filter_norm[k] = series.psi_mismatch[a][k].norm();
      phi_norm[k] = series.phi[a][k].norm();
      eps_norm[k] = series.eps[a][k].norm();
      sync_peak = std::max(sync_peak, sync_norm[k]);
      filter_peak = std::max(filter_peak, filter_norm[k]);
    }
    const double sync_scale = std::max(sync_peak, 1e-30);
    const double filter_scale = std::max(filter_peak, 1e-30);

    for (size_t k0 = 0; k0 < samples; k0 += t0_stride) {
      const double t0 = series.times[k0];
      double sup_phi = 0.0, sup_eps = 0.0, sup_filter = 0.0;
      for (size_t k = k0; k < samples; ++k) {
        sup_phi = std::max(sup_phi, phi_norm[k]);
        sup_eps = std::max(sup_eps, eps_norm[k]);
        sup_filter = std::max(sup_filter, filter_norm[k]);
        const double dt_pair = series.times[k] - t0;

        const double filter_rhs =
            std::exp(-dt_pair) * filter_norm[k0] + sup_eps + sup_phi;
        const double filter_violation =
            (filter_norm[k] - filter_rhs) / filter_scale;
        if (filter_violation > report.max_filter_violation) {
          report.max_filter_violation = filter_violation;
          report.worst_filter_agent = agent;
          report.worst_filter_t0 = t0;
          report.worst_filter_t = series.times[k];
        }

        const double sync_rhs = std::exp(-mu * dt_pair) * sync_norm[k0] +
                                (sup_filter + sup_eps) / mu;
        const double sync_violation = (sync_norm[k] - sync_rhs) / sync_scale;
        if (sync_violation > report.max_sync_violation) {
          report.max_sync_violation = sync_violation;
          report.worst_sync_agent = agent;
          report.worst_sync_t0 = t0;
          report.worst_sync_t = series.times[k];
        }
        ++report.pairs_checked;
      }
    }
  }
  return report;
}

/// Rebuilds the per-slot interaction graphs of the discrete estimator from
/// the delivered-message log: an edge (j, i) when the freshest stamp of the
/// edge increased during the slot interval, a self-loop at every node, and
/// the full leader clique.
inline std::vector<Digraph> reconstruct_interaction_graphs(
    const Trace& trace, const Scenario& scenario) {
  const int n = trace.n;
  const double T = scenario.comm.params.T;
  const int slots =
      static_cast<int>(std::floor(trace.times.back() / T + 1e-9));

  std::map<Digraph::Edge, detail::MessageCursor> cursors;
  std::map<Digraph::Edge, std::optional<int>> previous;
  for (const auto& edge : scenario.graph.base().edges()) {
    cursors.emplace(edge, detail::MessageCursor(trace.message_log,
                                                edge.second, edge.first));
    previous[edge] = std::nullopt;
  }

  std::vector<Digraph> graphs;
  for (int slot = 0; slot <= slots; ++slot) {
    Digraph g(n);
    for (NodeId i = 0; i < n; ++i) {
      if (scenario.leaders.count(i)) {
        for (NodeId l : scenario.leaders) g.add_edge(l, i);
        continue;
      }
      g.add_edge(i, i);
      for (NodeId j : scenario.graph.in_neighbors(i)) {
        const Message* latest = cursors.at({j, i}).at(slot * T);
        std::optional<int> stamp =
            latest ? std::optional<int>(latest->stamp) : std::nullopt;
        std::optional<int>& prev = previous.at({j, i});
        if (stamp && (!prev || *stamp > *prev)) g.add_edge(j, i);
        prev = stamp;
      }
    }
    graphs.push_back(std::move(g));
  }
  return graphs;
}

struct WindowCheck {
  bool all_rooted = true;
  int window = 0;            // slots per window: ceil(h_star / T) + 1
  int first_failed_slot = -1;
  int windows_checked = 0;
};

/// Slides a blackout-length window over the interaction graphs and verifies
/// that every window is jointly rooted.
inline WindowCheck check_interaction_windows(const std::vector<Digraph>& graphs,
                                             const CommParams& comm) {
  WindowCheck check;
  check.window =
      static_cast<int>(std::ceil(comm.h_star() / comm.T - 1e-9)) + 1;
  if (static_cast<int>(graphs.size()) < check.window) return check;
  for (size_t s = 0; s + check.window <= graphs.size(); ++s) {
    std::vector<Digraph> slice(graphs.begin() + s,
                               graphs.begin() + s + check.window);
    ++check.windows_checked;
    if (!is_jointly_rooted(slice)) {
      check.all_rooted = false;
      check.first_failed_slot = static_cast<int>(s);
      return check;
    }
  }
  return check;
}

}  // namespace netsync

#endif  // NETSYNC_ANALYSIS_HPP_
