// Per-agent welfare maximization at fixed prices, and the reconfiguration
// projection with market quantities pinned.
//
// The objective maximized over the agent's feasible set is
//   sum_t D(l+) - C(l-) + pG+ g+ - pG- g- + p_t*gamma*m+ - p_t*m-
// i.e. the Lagrangian of the social-welfare problem with the market balance
// constraint relaxed at multiplier p.
#ifndef PROSIM_SOLVER_HPP
#define PROSIM_SOLVER_HPP

#include "prosim/types.hpp"

namespace prosim {

struct SolverConfig {
  int max_iters = 200;          // interior-point iteration budget
  double kkt_tol = 1e-7;        // stationarity/complementarity target
  double g_plus_cap = 1e6;      // box cap standing in for the unbounded g+
  double feas_tol = 1e-9;       // SOC violation target
};

struct SubproblemSolution {
  AgentState state;
  double objective = 0.0;      // value of the priced objective above
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool g_plus_cap_binding = false;  // diagnostic: the sentinel cap was active
  // Multipliers of the two state-of-charge bounds at the returned point,
  // reported for verification and reused by warm starts.
  Profile soc_mu_lo, soc_mu_hi;
};

/// Maximizes the priced objective over the agent's feasible set. Deterministic
/// for fixed inputs and config. On iteration exhaustion returns the best
/// iterate with converged = false. `warm_start` may carry the state and SOC
/// multipliers of a previous solve.
SubproblemSolution solve_subproblem(const PriceProfile& prices, const AgentParams& params,
                                    const NetworkParams& net, const SolverConfig& cfg,
                                    const SubproblemSolution* warm_start = nullptr);

/// Same maximization with (m+, m-) pinned per slot to the cleared market
/// quantities. Throws InfeasibleError (with the binding slot) when the pinned
/// quantities make the feasible set empty.
SubproblemSolution reconfigure(const SubproblemSolution& solution, const Profile& fixed_m_plus,
                               const Profile& fixed_m_minus, const PriceProfile& prices,
                               const AgentParams& params, const NetworkParams& net,
                               const SolverConfig& cfg);

/// Gradient of the priced objective with respect to the eight flow
/// coordinates of slot t, written to grad8. Exposed for verification.
void objective_gradient_slot(const AgentState& state, const PriceProfile& prices,
                             const AgentParams& params, const NetworkParams& net, int t,
                             double grad8[8]);

/// Value of the priced objective at `state`.
double priced_objective(const AgentState& state, const PriceProfile& prices,
                        const AgentParams& params, const NetworkParams& net);

}  // namespace prosim

#endif
