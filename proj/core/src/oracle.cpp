#include "prosim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "prosim/market.hpp"
#include "prosim/welfare.hpp"

namespace prosim {

namespace {

struct Axis {
  double lo = 0.0, hi = 0.0;
  int points = 1;
  double value(int k) const {
    if (points == 1) return lo;
    return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
};

Axis make_axis(double lo, double hi, int resolution) {
  Axis a;
  a.lo = lo;
  a.hi = hi;
  a.points = hi > lo ? resolution : 1;
  return a;
}

}  // namespace

SubproblemSolution brute_force_oracle(const PriceProfile& prices, const AgentParams& params,
                                      const NetworkParams& net, int grid_resolution,
                                      long long max_points) {
  params.validate();
  net.validate();
  const int T = params.slots();
  if (T > 3) throw std::invalid_argument("brute_force_oracle: T must be <= 3");
  if (grid_resolution < 2) throw std::invalid_argument("brute_force_oracle: resolution must be >= 2");

  // Four netted axes per slot; the grid flow absorbs the conservation slack.
  std::vector<Axis> axes;
  for (int t = 0; t < T; ++t) {
    const double lcap = std::max(params.l_plus_min,
                                 std::max(0.0, params.utility_omega[t] / params.utility_theta[t]));
    axes.push_back(make_axis(params.l_plus_min, lcap, grid_resolution));
    axes.push_back(make_axis(0.0, params.l_minus_max[t], grid_resolution));
    axes.push_back(make_axis(-params.b_minus_max, params.b_plus_max, grid_resolution));
    axes.push_back(make_axis(-params.m_minus_max, params.m_plus_max, grid_resolution));
  }

  long long total = 1;
  for (const Axis& a : axes) {
    total *= a.points;
    if (total > max_points)
      throw std::invalid_argument("brute_force_oracle: lattice too large (>" +
                                  std::to_string(max_points) + " points)");
  }

  std::vector<int> idx(axes.size(), 0);
  SubproblemSolution best;
  best.objective = -std::numeric_limits<double>::infinity();
  constexpr double kTol = 1e-12;

  for (long long n = 0; n < total; ++n) {
    // Decode odometer, evaluate feasibility and objective directly.
    double objective = 0.0;
    double soc = params.s_init;
    bool feasible = true;
    AgentState state = AgentState::zeros(T);
    for (int t = 0; t < T && feasible; ++t) {
      const double lp = axes[4 * t + 0].value(idx[4 * t + 0]);
      const double lm = axes[4 * t + 1].value(idx[4 * t + 1]);
      const double bn = axes[4 * t + 2].value(idx[4 * t + 2]);
      const double mn = axes[4 * t + 3].value(idx[4 * t + 3]);
      const double bp = std::max(bn, 0.0), bm = std::max(-bn, 0.0);
      const double mp = std::max(mn, 0.0), mm = std::max(-mn, 0.0);
      soc += params.eta * bp - bm;
      if (soc < -kTol || soc > params.s_max + kTol) {
        feasible = false;
        break;
      }
      const double residual = lp - lm + bn + mn;  // outflow minus inflow before grid
      const double gp = std::max(-residual, 0.0);
      const double gm = std::max(residual, 0.0);
      if (gm > params.g_minus_max + kTol) {
        feasible = false;
        break;
      }
      state.l_plus[t] = lp;
      state.l_minus[t] = lm;
      state.b_plus[t] = bp;
      state.b_minus[t] = bm;
      state.m_plus[t] = mp;
      state.m_minus[t] = mm;
      state.g_plus[t] = gp;
      state.g_minus[t] = gm;
      objective += demand_utility(lp, params.utility_omega[t], params.utility_theta[t]) -
                   (params.gen_cost_a * lm + 0.5 * params.gen_cost_b * lm * lm) +
                   net.p_grid_sell[t] * gp - net.p_grid_buy[t] * gm +
                   prices[t] * (net.gamma * mp - mm);
    }
    if (feasible && objective > best.objective) {
      best.objective = objective;
      best.state = state;
      best.converged = true;
    }
    // Advance odometer.
    for (size_t d = 0; d < idx.size(); ++d) {
      if (++idx[d] < axes[d].points) break;
      idx[d] = 0;
    }
  }
  if (!best.converged)
    throw std::runtime_error("brute_force_oracle: no feasible lattice point found");
  return best;
}

double oracle_lattice_gap(const PriceProfile& prices, const AgentParams& params,
                          const NetworkParams& net, int grid_resolution) {
  const int T = params.slots();
  double gap = 0.0;
  double p_abs = 0.0, pg_buy = 0.0;
  for (int t = 0; t < T; ++t) {
    p_abs = std::max(p_abs, std::abs(prices[t]));
    pg_buy = std::max(pg_buy, net.p_grid_buy[t]);
  }
  for (int t = 0; t < T; ++t) {
    const double lcap = std::max(params.l_plus_min,
                                 std::max(0.0, params.utility_omega[t] / params.utility_theta[t]));
    const double spacing = 1.0 / static_cast<double>(grid_resolution - 1);
    const double lip_l = std::abs(params.utility_omega[t]) + pg_buy;
    const double lip_gen = params.gen_cost_a + params.gen_cost_b * params.l_minus_max[t] + pg_buy;
    const double lip_flow = pg_buy + p_abs * (1.0 + net.gamma);
    gap += spacing * ((lcap - params.l_plus_min) * lip_l + params.l_minus_max[t] * lip_gen +
                      (params.b_plus_max + params.b_minus_max) * lip_flow +
                      (params.m_plus_max + params.m_minus_max) * lip_flow);
  }
  return gap;
}

double clearing_price_bisection(const std::vector<Bid>& bids, double gamma, double tol) {
  double lo = 0.0, hi = 0.0;
  for (const Bid& b : bids) {
    lo = std::min(lo, b.breakpoint());
    hi = std::max(hi, b.breakpoint());
  }
  lo -= 1.0;
  hi += 1.0;
  while (excess_function(bids, gamma, lo) > 0.0) lo -= std::max(1.0, std::abs(lo));
  while (excess_function(bids, gamma, hi) < 0.0) hi += std::max(1.0, std::abs(hi));
  // Bisect toward the infimum of the zero set: keep the invariant F(lo) < 0
  // or F strictly negative just left of the answer.
  for (int iter = 0; iter < 200 && hi - lo > tol; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (excess_function(bids, gamma, mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

}  // namespace prosim
