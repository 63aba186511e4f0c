#include "prosim/welfare.hpp"

#include <cmath>
#include <stdexcept>

namespace prosim {

double demand_utility(double l, double omega, double theta) {
  if (l < 0.0) throw std::domain_error("demand_utility: l must be >= 0");
  if (theta <= 0.0) throw std::domain_error("demand_utility: theta must be > 0");
  const double sat = omega / theta;
  if (l <= sat) return omega * l - 0.5 * theta * l * l;
  return omega * omega / (2.0 * theta);
}

double demand_utility_derivative(double l, double omega, double theta) {
  if (l < 0.0) throw std::domain_error("demand_utility_derivative: l must be >= 0");
  if (theta <= 0.0) throw std::domain_error("demand_utility_derivative: theta must be > 0");
  const double sat = omega / theta;
  return l < sat ? omega - theta * l : 0.0;
}

double generation_cost(double l, const AgentParams& params, int slot) {
  if (l < 0.0 || l > params.l_minus_max[slot] + 1e-12)
    throw std::domain_error("generation_cost: l outside [0, l_minus_max]");
  return params.gen_cost_a * l + 0.5 * params.gen_cost_b * l * l;
}

WelfareBreakdown agent_welfare(const AgentState& state, const PriceProfile& prices,
                               const AgentParams& params, const NetworkParams& net) {
  const int T = params.slots();
  if (state.slots() != T || static_cast<int>(prices.size()) != T || net.slots() != T)
    throw std::invalid_argument("agent_welfare: dimension mismatch");
  WelfareBreakdown w;
  for (int t = 0; t < T; ++t) {
    w.demand_utility += demand_utility(state.l_plus[t], params.utility_omega[t], params.utility_theta[t]);
    w.generation_cost += generation_cost(state.l_minus[t], params, t);
    w.grid_revenue += net.p_grid_sell[t] * state.g_plus[t];
    w.grid_expense += net.p_grid_buy[t] * state.g_minus[t];
    w.market_revenue += prices[t] * net.gamma * state.m_plus[t];
    w.market_expense += prices[t] * state.m_minus[t];
  }
  return w;
}

double agent_phi(const AgentState& state, const AgentParams& params, const NetworkParams& net) {
  const int T = params.slots();
  double phi = 0.0;
  for (int t = 0; t < T; ++t) {
    phi += demand_utility(state.l_plus[t], params.utility_omega[t], params.utility_theta[t]) -
           generation_cost(state.l_minus[t], params, t) +
           net.p_grid_sell[t] * state.g_plus[t] - net.p_grid_buy[t] * state.g_minus[t];
  }
  return phi;
}

double social_welfare(const std::vector<AgentState>& states, const PriceProfile& prices,
                      const std::vector<AgentParams>& params, const NetworkParams& net) {
  if (states.size() != params.size())
    throw std::invalid_argument("social_welfare: states/params size mismatch");
  double total = 0.0;
  for (size_t i = 0; i < states.size(); ++i)
    total += agent_welfare(states[i], prices, params[i], net).total();
  return total;
}

}  // namespace prosim
