// Domain types for the prosumer network: per-agent parameters, network
// parameters, the 8-component per-slot decision vector, prices and bids.
#ifndef PROSIM_TYPES_HPP
#define PROSIM_TYPES_HPP

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace prosim {

/// A per-slot profile (length T).
using Profile = std::vector<double>;

/// Market price per slot, identified with the dual multiplier of the
/// per-slot balance constraint.
using PriceProfile = Profile;

struct TimeGrid {
  int slot_count = 1;

  explicit TimeGrid(int slots) : slot_count(slots) {
    if (slots < 1) throw std::invalid_argument("TimeGrid: slot_count must be >= 1");
  }
};

/// Thrown when a constrained sub-problem has an empty feasible set.
/// `slot` identifies the first binding time slot; `agent` is filled in by
/// the mechanism drivers when known.
struct InfeasibleError : std::runtime_error {
  int slot = -1;
  int agent = -1;
  InfeasibleError(const std::string& what, int slot_, int agent_ = -1)
      : std::runtime_error(what), slot(slot_), agent(agent_) {}
};

struct AgentParams {
  double l_plus_min = 0.0;  // minimum consumption per slot
  Profile l_minus_max;      // per-slot generation (PV) cap, defines T
  double b_plus_max = 0.0;  // battery charge cap per slot
  double b_minus_max = 0.0; // battery discharge cap per slot
  double m_plus_max = 0.0;  // market sale cap per slot
  double m_minus_max = 0.0; // market purchase cap per slot
  double g_minus_max = 0.0; // grid purchase cap per slot
  double s_max = 0.0;       // battery capacity
  double s_init = 0.0;      // initial state of charge
  double eta = 1.0;         // storage efficiency in [0,1]
  Profile utility_omega;    // demand utility coefficient per slot
  Profile utility_theta;    // demand utility curvature per slot (> 0)
  double gen_cost_a = 0.0;  // generation cost a*l + (b/2)*l^2
  double gen_cost_b = 0.0;

  int slots() const { return static_cast<int>(l_minus_max.size()); }
  void validate() const;
};

struct NetworkParams {
  double gamma = 1.0;   // transmission efficiency in [0,1]
  Profile p_grid_sell;  // price paid to agents selling to the outside grid
  Profile p_grid_buy;   // price charged for buying from the outside grid
  int agent_count = 1;

  int slots() const { return static_cast<int>(p_grid_buy.size()); }
  void validate() const;
};

/// One agent's behavior over the day: eight nonnegative flows per slot.
/// The +/- suffix is the flow direction seen from the agent's meter
/// (outflow/inflow).
struct AgentState {
  Profile l_plus;   // consumption
  Profile l_minus;  // generation
  Profile b_plus;   // battery charge
  Profile b_minus;  // battery discharge
  Profile m_plus;   // sold to the regional market
  Profile m_minus;  // bought from the regional market
  Profile g_plus;   // sold to the outside grid
  Profile g_minus;  // bought from the outside grid

  static AgentState zeros(int T);
  int slots() const { return static_cast<int>(l_plus.size()); }
  bool consistent() const;  // all eight profiles have equal length
};

/// Linear bid (alpha, beta): supply mu+(p) = max(beta*p - alpha, 0),
/// demand mu-(p) = max(-beta*p + alpha, 0). beta is a fixed positive slope.
struct Bid {
  double alpha = 0.0;
  double beta = 1.0;

  double supply_at(double p) const { return std::max(beta * p - alpha, 0.0); }
  double demand_at(double p) const { return std::max(-beta * p + alpha, 0.0); }
  double breakpoint() const { return alpha / beta; }
};

}  // namespace prosim

#endif
