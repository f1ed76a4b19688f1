#ifndef NETSYNC_SYNCTERM_HPP_
#define NETSYNC_SYNCTERM_HPP_

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netsync/channel.hpp"

namespace netsync {

/// How a receiver extrapolates a neighbor's stale position sample to the
/// current time. All variants coincide when the respective velocity estimate
/// is constant over the age window.
enum class Extrapolation {
  kStampedEstimate,    // sender's discrete estimate carried by the message
  kIntegratedDiscrete, // integral of the receiver's own discrete estimate
  kIntegratedSmooth,   // integral of the receiver's smoothed estimate
  kHeldSmooth,         // receiver's smoothed estimate frozen at the stamp time
};

inline std::string to_string(Extrapolation e) {
  switch (e) {
    case Extrapolation::kStampedEstimate: return "stamped-estimate";
    case Extrapolation::kIntegratedDiscrete: return "integrated-discrete";
    case Extrapolation::kIntegratedSmooth: return "integrated-smooth";
    case Extrapolation::kHeldSmooth: return "held-smooth";
  }
  throw std::logic_error("unreachable");
}

inline Extrapolation parse_extrapolation(const std::string& name) {
  if (name == "stamped-estimate") return Extrapolation::kStampedEstimate;
  if (name == "integrated-discrete") return Extrapolation::kIntegratedDiscrete;
  if (name == "integrated-smooth") return Extrapolation::kIntegratedSmooth;
  if (name == "held-smooth") return Extrapolation::kHeldSmooth;
  throw std::invalid_argument("unknown extrapolation variant: " + name);
}

/// What the receiving agent knows at evaluation time t, for the variants that
/// use its own estimates. Slot histories are indexed by slot and must cover
/// the current slot; `slot` is the slot the integration step started in, so a
/// stage evaluation landing exactly on the next slot boundary still uses the
/// held values (zero-order hold across the step).
struct ReceiverEstimateView {
  double t = 0.0;
  double T = 0.1;
  int slot = 0;
  const Eigen::VectorXd* vhat_held = nullptr;
  const std::vector<Eigen::VectorXd>* vhat_cumint = nullptr;  // per slot
  const std::vector<Eigen::VectorXd>* vbar_at_slot = nullptr; // per slot
  const std::vector<Eigen::VectorXd>* vbar_cumint = nullptr;  // per slot
  const Eigen::VectorXd* vbar_now = nullptr;
};

/// Extrapolated estimate of a neighbor's current position from its freshest
/// delivered sample. Before anything has been delivered on the edge the
/// receiver's own position is returned, which zeroes the corresponding
/// relative term until real data arrives.
inline Eigen::VectorXd position_estimate(const Message* latest,
                                         const Eigen::VectorXd& own_position,
                                         Extrapolation variant,
                                         const ReceiverEstimateView& rx) {
  if (latest == nullptr) return own_position;
  const double age = rx.t - latest->send_time;
  switch (variant) {
    case Extrapolation::kStampedEstimate:
      return latest->position + latest->velocity_estimate * age;
    case Extrapolation::kIntegratedDiscrete: {
      // exact integral of the piecewise-constant discrete estimate
      const Eigen::VectorXd full =
          (*rx.vhat_cumint)[rx.slot] + *rx.vhat_held * (rx.t - rx.slot * rx.T);
      return latest->position + full - (*rx.vhat_cumint)[latest->stamp];
    }
    case Extrapolation::kIntegratedSmooth: {
      // slot-resolution trapezoid plus the partial segment of this step
      const Eigen::VectorXd partial = (rx.t - rx.slot * rx.T) * 0.5 *
                                      ((*rx.vbar_at_slot)[rx.slot] + *rx.vbar_now);
      return latest->position + (*rx.vbar_cumint)[rx.slot] + partial -
             (*rx.vbar_cumint)[latest->stamp];
    }
    case Extrapolation::kHeldSmooth:
      return latest->position + (*rx.vbar_at_slot)[latest->stamp] * age;
  }
  throw std::logic_error("unreachable");
}

struct SyncGains {
  double k_eta = 0.0;  // damping of the synchronization state
  double lambda = 0.0; // stiffness toward the filtered neighborhood position

  void validate() const {
    if (!(k_eta > 0.0) || !(lambda > 0.0))
      throw std::invalid_argument("SyncGains: gains must be positive");
  }
};

struct SyncRates {
  Eigen::VectorXd eta_rate;
  Eigen::VectorXd psi_rate;
};

/// Rates of the synchronization pair (eta, psi) for an agent with incoming
/// links. `neighborhood_position` is the weighted average of the extrapolated
/// neighbor positions, (1/kappa_i) * sum_j a_ij * p_j_estimate. Agents with
/// no incoming links keep eta identically zero and never call this.
inline SyncRates sync_rates(const SyncGains& gains, const Eigen::VectorXd& eta,
                            const Eigen::VectorXd& psi,
                            const Eigen::VectorXd& position,
                            const Eigen::VectorXd& vbar,
                            const Eigen::VectorXd& neighborhood_position) {
  gains.validate();
  return {-gains.k_eta * eta - gains.lambda * (position - psi),
          -psi + vbar + neighborhood_position};
}

/// Reference velocity and its rate from the dynamic states alone; nothing is
/// differentiated numerically.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> reference_outputs(
    const Eigen::VectorXd& eta, const Eigen::VectorXd& eta_rate,
    const Eigen::VectorXd& vbar, const Eigen::VectorXd& dvbar) {
  return {eta + vbar, eta_rate + dvbar};
}

}  // namespace netsync

#endif  // NETSYNC_SYNCTERM_HPP_
