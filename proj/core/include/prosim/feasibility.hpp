// Feasibility predicates for an agent's decision vector: box bounds,
// battery state-of-charge limits, and per-slot flow conservation.
#ifndef PROSIM_FEASIBILITY_HPP
#define PROSIM_FEASIBILITY_HPP

#include <string>
#include <vector>

#include "prosim/types.hpp"

namespace prosim {

struct ConstraintViolation {
  int slot = 0;            // 0-based slot index
  std::string constraint;  // "h1".."h17"
  double magnitude = 0.0;  // amount by which the constraint is exceeded
};

struct FeasibilityReport {
  std::vector<ConstraintViolation> violations;
  bool feasible() const { return violations.empty(); }
};

/// State of charge after each slot: s_t = s_init + sum_{k<=t}(eta*b+_k - b-_k).
Profile soc_trajectory(const AgentState& state, const AgentParams& params);

/// Evaluates every constraint h^{t1}..h^{t17} and reports violations beyond
/// `tol`. Empty report iff the state lies in the agent's feasible set.
/// Throws std::invalid_argument on mismatched profile lengths.
FeasibilityReport check_feasible(const AgentState& state, const AgentParams& params,
                                 double tol = 1e-9);

}  // namespace prosim

#endif
