// Utility, cost and welfare functionals for agents and the network.
#ifndef PROSIM_WELFARE_HPP
#define PROSIM_WELFARE_HPP

#include <vector>

#include "prosim/types.hpp"

namespace prosim {

struct WelfareBreakdown {
  double demand_utility = 0.0;
  double generation_cost = 0.0;
  double grid_revenue = 0.0;    // p_grid_sell * g+
  double grid_expense = 0.0;    // p_grid_buy * g-
  double market_revenue = 0.0;  // gamma * p * m+
  double market_expense = 0.0;  // p * m-

  double total() const {
    return demand_utility - generation_cost + grid_revenue - grid_expense +
           market_revenue - market_expense;
  }
};

/// Saturating quadratic demand utility:
///   omega*l - (theta/2)*l^2  for l <= omega/theta, omega^2/(2 theta) beyond.
/// Throws std::domain_error for l < 0 or theta <= 0.
double demand_utility(double l, double omega, double theta);

/// Marginal demand utility: omega - theta*l below saturation, 0 above.
double demand_utility_derivative(double l, double omega, double theta);

/// Generation cost a*l + (b/2)*l^2 at slot `slot`; zero for the pure-PV
/// configuration (a = b = 0). Throws std::domain_error when l is outside
/// [0, l_minus_max].
double generation_cost(double l, const AgentParams& params, int slot);

WelfareBreakdown agent_welfare(const AgentState& state, const PriceProfile& prices,
                               const AgentParams& params, const NetworkParams& net);

/// Sum of per-slot utilities phi_i (demand utility - generation cost + grid
/// revenue - grid expense); the price-independent part of an agent's welfare.
double agent_phi(const AgentState& state, const AgentParams& params,
                 const NetworkParams& net);

double social_welfare(const std::vector<AgentState>& states, const PriceProfile& prices,
                      const std::vector<AgentParams>& params, const NetworkParams& net);

}  // namespace prosim

#endif
