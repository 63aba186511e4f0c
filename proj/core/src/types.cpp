#include "prosim/types.hpp"

#include <cmath>

namespace prosim {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool all_finite_nonneg(const Profile& p) {
  for (double v : p)
    if (!std::isfinite(v) || v < 0.0) return false;
  return true;
}

}  // namespace

void AgentParams::validate() const {
  require(slots() >= 1, "AgentParams: at least one slot required");
  require(all_finite_nonneg(l_minus_max), "AgentParams: l_minus_max entries must be >= 0");
  require(l_plus_min >= 0.0, "AgentParams: l_plus_min must be >= 0");
  require(b_plus_max >= 0.0 && b_minus_max >= 0.0, "AgentParams: battery caps must be >= 0");
  require(m_plus_max >= 0.0 && m_minus_max >= 0.0, "AgentParams: market caps must be >= 0");
  require(g_minus_max >= 0.0, "AgentParams: g_minus_max must be >= 0");
  require(s_max >= 0.0, "AgentParams: s_max must be >= 0");
  require(s_init >= 0.0 && s_init <= s_max, "AgentParams: s_init must lie in [0, s_max]");
  require(eta >= 0.0 && eta <= 1.0, "AgentParams: eta must lie in [0,1]");
  require(static_cast<int>(utility_omega.size()) == slots() &&
              static_cast<int>(utility_theta.size()) == slots(),
          "AgentParams: utility profiles must have T entries");
  for (double th : utility_theta) require(th > 0.0, "AgentParams: utility_theta entries must be > 0");
  require(gen_cost_a >= 0.0 && gen_cost_b >= 0.0, "AgentParams: generation cost coefficients must be >= 0");
}

void NetworkParams::validate() const {
  require(slots() >= 1, "NetworkParams: at least one slot required");
  require(p_grid_sell.size() == p_grid_buy.size(), "NetworkParams: grid price profiles must match");
  require(gamma >= 0.0 && gamma <= 1.0, "NetworkParams: gamma must lie in [0,1]");
  require(agent_count >= 1, "NetworkParams: agent_count must be >= 1");
  for (int t = 0; t < slots(); ++t) {
    // resale suppression: 0 <= pG+ <= pG-
    require(p_grid_sell[t] >= 0.0 && p_grid_sell[t] <= p_grid_buy[t],
            "NetworkParams: need 0 <= p_grid_sell <= p_grid_buy per slot");
  }
}

AgentState AgentState::zeros(int T) {
  AgentState s;
  s.l_plus.assign(T, 0.0);
  s.l_minus.assign(T, 0.0);
  s.b_plus.assign(T, 0.0);
  s.b_minus.assign(T, 0.0);
  s.m_plus.assign(T, 0.0);
  s.m_minus.assign(T, 0.0);
  s.g_plus.assign(T, 0.0);
  s.g_minus.assign(T, 0.0);
  return s;
}

bool AgentState::consistent() const {
  const size_t T = l_plus.size();
  return l_minus.size() == T && b_plus.size() == T && b_minus.size() == T &&
         m_plus.size() == T && m_minus.size() == T && g_plus.size() == T &&
         g_minus.size() == T;
}

}  // namespace prosim
