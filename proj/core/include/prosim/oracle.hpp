// Independent verification oracles: exhaustive lattice search for the agent
// sub-problem and bisection root finding for the clearing price. Both avoid
// the code paths of the solvers they check.
#ifndef PROSIM_ORACLE_HPP
#define PROSIM_ORACLE_HPP

#include <vector>

#include "prosim/solver.hpp"
#include "prosim/types.hpp"

namespace prosim {

/// Exhaustively searches a discretized lattice over the netted per-slot
/// variables (consumption, generation, battery net, market net; grid takes
/// the conservation slack) and returns the best feasible lattice point.
/// Intended for T <= 3 and coarse resolution; throws std::invalid_argument
/// with a size estimate when the lattice exceeds `max_points`.
SubproblemSolution brute_force_oracle(const PriceProfile& prices, const AgentParams& params,
                                      const NetworkParams& net, int grid_resolution,
                                      long long max_points = 40'000'000LL);

/// A conservative bound on the objective gap between the true optimum and the
/// best lattice point of brute_force_oracle at the given resolution.
double oracle_lattice_gap(const PriceProfile& prices, const AgentParams& params,
                          const NetworkParams& net, int grid_resolution);

/// Clearing price by bisection on the aggregate excess function, refined to
/// interval width `tol`. Returns the left end of the final bracket.
double clearing_price_bisection(const std::vector<Bid>& bids, double gamma,
                                double tol = 1e-12);

}  // namespace prosim

#endif
