#include "netsync/syncterm.hpp"

#include <catch2/catch_amalgamated.hpp>

using netsync::Extrapolation;
using netsync::Message;
using netsync::ReceiverEstimateView;
using netsync::SyncGains;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Message sample_message(int stamp, double T, Eigen::VectorXd p,
                       Eigen::VectorXd vhat) {
  Message m;
  m.sender = 0;
  m.receiver = 1;
  m.stamp = stamp;
  m.position = std::move(p);
  m.velocity_estimate = std::move(vhat);
  m.send_time = stamp * T;
  m.delivery_time = m.send_time;
  return m;
}

/// Receiver histories for a constant own estimate c: the discrete cumulative
/// integral is sigma*T*c and the smoothed trapezoid matches it exactly.
struct ConstantHistories {
  explicit ConstantHistories(const Eigen::VectorXd& c, double T, int slots)
      : held(c), now(c) {
    for (int s = 0; s <= slots; ++s) {
      cumint.push_back(s * T * c);
      at_slot.push_back(c);
    }
  }
  ReceiverEstimateView view(double t, double T, int slot) const {
    return {t, T, slot, &held, &cumint, &at_slot, &cumint, &now};
  }
  Eigen::VectorXd held, now;
  std::vector<Eigen::VectorXd> cumint, at_slot;
};

}  // namespace

TEST_CASE("stamped-estimate extrapolation") {
  const double T = 0.1;
  Message m = sample_message(2, T, vec2(1.0, 0.0), vec2(0.3, 0.6));
  ConstantHistories hist(vec2(9.9, 9.9), T, 10);  // must be ignored
  Eigen::VectorXd p = netsync::position_estimate(
      &m, vec2(0, 0), Extrapolation::kStampedEstimate, hist.view(0.5, T, 5));
  REQUIRE(p(0) == Catch::Approx(1.09).margin(1e-15));
  REQUIRE(p(1) == Catch::Approx(0.18).margin(1e-15));
}

TEST_CASE("zero age reproduces the sample exactly for every variant") {
  const double T = 0.1;
  Message m = sample_message(4, T, vec2(0.7, -0.2), vec2(1.0, 2.0));
  ConstantHistories hist(vec2(0.4, 0.8), T, 10);
  for (auto variant :
       {Extrapolation::kStampedEstimate, Extrapolation::kIntegratedDiscrete,
        Extrapolation::kIntegratedSmooth, Extrapolation::kHeldSmooth}) {
    Eigen::VectorXd p = netsync::position_estimate(&m, vec2(0, 0), variant,
                                                   hist.view(0.4, T, 4));
    REQUIRE((p - m.position).norm() < 1e-15);
  }
}

TEST_CASE("receiver-side variants with constant estimates match the stamped rule") {
  const double T = 0.1;
  const Eigen::VectorXd c = vec2(0.25, -0.5);
  Message m = sample_message(3, T, vec2(1.0, 1.0), c);
  ConstantHistories hist(c, T, 12);
  const double t = 0.87;
  const int slot = 8;
  Eigen::VectorXd reference = netsync::position_estimate(
      &m, vec2(0, 0), Extrapolation::kStampedEstimate, hist.view(t, T, slot));
  for (auto variant :
       {Extrapolation::kIntegratedDiscrete, Extrapolation::kIntegratedSmooth,
        Extrapolation::kHeldSmooth}) {
    Eigen::VectorXd p =
        netsync::position_estimate(&m, vec2(0, 0), variant, hist.view(t, T, slot));
    REQUIRE((p - reference).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("bootstrap before any delivery returns the receiver's own position") {
  ConstantHistories hist(vec2(1, 1), 0.1, 4);
  Eigen::VectorXd own = vec2(3.0, -4.0);
  for (auto variant :
       {Extrapolation::kStampedEstimate, Extrapolation::kIntegratedDiscrete,
        Extrapolation::kIntegratedSmooth, Extrapolation::kHeldSmooth}) {
    REQUIRE(netsync::position_estimate(nullptr, own, variant,
                                       hist.view(0.25, 0.1, 2)) == own);
  }
}

TEST_CASE("extrapolation variant names round-trip") {
  for (auto variant :
       {Extrapolation::kStampedEstimate, Extrapolation::kIntegratedDiscrete,
        Extrapolation::kIntegratedSmooth, Extrapolation::kHeldSmooth})
    REQUIRE(netsync::parse_extrapolation(netsync::to_string(variant)) == variant);
  REQUIRE_THROWS_AS(netsync::parse_extrapolation("nearest"),
                    std::invalid_argument);
}

TEST_CASE("synchronization rates") {
  SECTION("equilibrium") {
    Eigen::VectorXd p = vec2(0.4, 0.6);
    Eigen::VectorXd vbar = vec2(0.1, -0.1);
    Eigen::VectorXd neighborhood = p - vbar;  // makes psi_rate vanish at psi=p
    auto rates = netsync::sync_rates({2.0, 13.0}, Eigen::VectorXd::Zero(2), p,
                                     p, vbar, neighborhood);
    REQUIRE(rates.eta_rate.norm() == 0.0);
    REQUIRE(rates.psi_rate.norm() < 1e-15);
  }
  SECTION("scalar check") {
    Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    auto rates = netsync::sync_rates({2.0, 1.0}, one, Eigen::VectorXd::Zero(1),
                                     one, Eigen::VectorXd::Zero(1),
                                     Eigen::VectorXd::Zero(1));
    REQUIRE(rates.eta_rate(0) == -3.0);  // -k_eta*1 - lambda*(1 - 0)
  }
  SECTION("gains are validated") {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
    REQUIRE_THROWS_AS(netsync::sync_rates({0.0, 1.0}, z, z, z, z, z),
                      std::invalid_argument);
  }
}

TEST_CASE("reference outputs are assembled from states only") {
  Eigen::VectorXd eta = vec2(0.1, 0.2), eta_rate = vec2(-0.3, 0.4);
  Eigen::VectorXd vbar = vec2(0.3, 0.6), dvbar = vec2(0.0, -0.1);
  auto [v_r, dv_r] = netsync::reference_outputs(eta, eta_rate, vbar, dvbar);
  REQUIRE(v_r == eta + vbar);
  REQUIRE(dv_r == eta_rate + dvbar);
}
