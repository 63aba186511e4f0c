// The iterative procedures compared in the experiment: the auction mechanism
// (per-slot clearing + reconfiguration), the subgradient real-time-pricing
// baseline with its grid-compensation heuristic, the no-trading baseline and
// the centralized reference solve.
#ifndef PROSIM_MECHANISMS_HPP
#define PROSIM_MECHANISMS_HPP

#include <vector>

#include "prosim/solver.hpp"
#include "prosim/types.hpp"

namespace prosim {

struct MechanismConfig {
  int max_iterations = 200;
  double theta_k = 0.1;         // RTP subgradient learning rate (constant)
  double beta = 0.5;            // bid slope, identical for all agents/slots
  double initial_price = 10.0;  // p^(0) for every slot
  double price_tol = 1e-6;      // stop when max_t |p^(k+1)-p^(k)| falls below
  SolverConfig solver;
  bool parallel = false;        // fan out the per-agent solves
};

struct IterationRecord {
  int iteration = 0;
  PriceProfile prices;       // price at which `states` were settled
  std::vector<AgentState> states;
  double social_welfare = 0.0;
  double welfare_after_compensation = 0.0;  // == social_welfare outside RTP
  Profile imbalance;             // sum_i(gamma m+ - m-) of `states`, per slot
  Profile subproblem_imbalance;  // same sum for the pre-clearing solutions
  Profile delta_m;               // quantities compensated via the grid (RTP)
  Profile theta_bar;             // effective clearing step per slot (auction)
  double dual_value = 0.0;       // sum_i L_i(x*_i) at the solve price
  double max_kkt_residual = 0.0;  // worst residual over this iteration's solves
};

/// Subgradient real-time pricing: each iteration all agents best-respond to
/// p^(k), the price moves against the aggregate imbalance, and the utility
/// settles the residual with the outside grid, spreading the cost equally.
std::vector<IterationRecord> run_rtp(const std::vector<AgentParams>& params,
                                     const NetworkParams& net, const MechanismConfig& cfg);

/// Linear-bid double auction: best responses are converted to bids, each slot
/// is cleared exactly, and every agent reprojects onto its feasible set with
/// the cleared quantities pinned.
std::vector<IterationRecord> run_lfsda(const std::vector<AgentParams>& params,
                                       const NetworkParams& net, const MechanismConfig& cfg);

/// Baseline with the regional market closed (m+ = m- = 0); one record.
std::vector<IterationRecord> run_without_trading(const std::vector<AgentParams>& params,
                                                 const NetworkParams& net,
                                                 const MechanismConfig& cfg);

struct CentralizedResult {
  std::vector<AgentState> states;  // balanced, feasible allocation
  double welfare = 0.0;            // achieved sum of phi_i
  double dual_bound = 0.0;         // best dual value g(lambda) seen
  double duality_gap = 0.0;        // dual_bound - welfare (>= 0 up to tolerance)
  PriceProfile prices;             // multiplier profile at the best dual value
  int iterations = 0;
};

/// Joint social-welfare maximization via dual ascent on the balance
/// multipliers, with final feasibility restoration through one clearing +
/// reconfiguration pass. Reports the achieved welfare and a certified gap.
CentralizedResult solve_centralized_optimal(const std::vector<AgentParams>& params,
                                            const NetworkParams& net,
                                            const MechanismConfig& cfg);

}  // namespace prosim

#endif
