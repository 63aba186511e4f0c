#include "prosim/feasibility.hpp"

#include <cmath>

namespace prosim {

Profile soc_trajectory(const AgentState& state, const AgentParams& params) {
  const int T = state.slots();
  Profile soc(T, 0.0);
  double s = params.s_init;
  for (int t = 0; t < T; ++t) {
    s += params.eta * state.b_plus[t] - state.b_minus[t];
    soc[t] = s;
  }
  return soc;
}

FeasibilityReport check_feasible(const AgentState& state, const AgentParams& params,
                                 double tol) {
  if (!state.consistent())
    throw std::invalid_argument("check_feasible: state profiles have mismatched lengths");
  if (state.slots() != params.slots())
    throw std::invalid_argument("check_feasible: state/params slot count mismatch");

  FeasibilityReport report;
  auto add = [&report](int t, const char* name, double magnitude) {
    report.violations.push_back({t, name, magnitude});
  };
  const int T = state.slots();
  double soc = params.s_init;
  for (int t = 0; t < T; ++t) {
    // h1..h8: lower bounds
    if (params.l_plus_min - state.l_plus[t] > tol) add(t, "h1", params.l_plus_min - state.l_plus[t]);
    if (-state.l_minus[t] > tol) add(t, "h2", -state.l_minus[t]);
    if (-state.b_plus[t] > tol) add(t, "h3", -state.b_plus[t]);
    if (-state.b_minus[t] > tol) add(t, "h4", -state.b_minus[t]);
    if (-state.m_plus[t] > tol) add(t, "h5", -state.m_plus[t]);
    if (-state.m_minus[t] > tol) add(t, "h6", -state.m_minus[t]);
    if (-state.g_plus[t] > tol) add(t, "h7", -state.g_plus[t]);
    if (-state.g_minus[t] > tol) add(t, "h8", -state.g_minus[t]);
    // h9..h14: upper bounds (g+ has no stated upper bound)
    if (state.l_minus[t] - params.l_minus_max[t] > tol)
      add(t, "h9", state.l_minus[t] - params.l_minus_max[t]);
    if (state.b_plus[t] - params.b_plus_max > tol) add(t, "h10", state.b_plus[t] - params.b_plus_max);
    if (state.b_minus[t] - params.b_minus_max > tol) add(t, "h11", state.b_minus[t] - params.b_minus_max);
    if (state.m_plus[t] - params.m_plus_max > tol) add(t, "h12", state.m_plus[t] - params.m_plus_max);
    if (state.m_minus[t] - params.m_minus_max > tol) add(t, "h13", state.m_minus[t] - params.m_minus_max);
    if (state.g_minus[t] - params.g_minus_max > tol) add(t, "h14", state.g_minus[t] - params.g_minus_max);
    // h15/h16: SOC band
    soc += params.eta * state.b_plus[t] - state.b_minus[t];
    if (-soc > tol) add(t, "h15", -soc);
    if (soc - params.s_max > tol) add(t, "h16", soc - params.s_max);
    // h17: flow conservation
    const double h17 = state.l_plus[t] - state.l_minus[t] + state.b_plus[t] - state.b_minus[t] +
                       state.m_plus[t] - state.m_minus[t] + state.g_plus[t] - state.g_minus[t];
    if (std::abs(h17) > tol) add(t, "h17", std::abs(h17));
  }
  return report;
}

}  // namespace prosim
