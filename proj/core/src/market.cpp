#include "prosim/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace prosim {

Bid bid_from_allocation(double m_plus, double m_minus, double beta, double price) {
  if (beta <= 0.0) throw std::invalid_argument("bid_from_allocation: beta must be > 0");
  if (m_plus < 0.0 || m_minus < 0.0)
    throw std::invalid_argument("bid_from_allocation: market quantities must be >= 0");
  if (m_plus > 0.0 && m_minus > 0.0)
    throw std::invalid_argument("bid_from_allocation: quantities must be netted (at most one positive)");
  return Bid{beta * price + (m_minus - m_plus), beta};
}

double excess_function(const std::vector<Bid>& bids, double gamma, double p) {
  double supply = 0.0, demand = 0.0;
  for (const Bid& b : bids) {
    supply += b.supply_at(p);
    demand += b.demand_at(p);
  }
  return gamma * supply - demand;
}

ClearingResult market_clearing(const std::vector<Bid>& bids, double gamma,
                               double grid_buy_price) {
  const int n = static_cast<int>(bids.size());
  if (n < 1) throw std::invalid_argument("market_clearing: need at least one bid");
  for (const Bid& b : bids)
    if (b.beta <= 0.0) throw std::invalid_argument("market_clearing: all beta must be > 0");

  // Sort agents by breakpoint alpha/beta; with j agents on the seller side
  // the excess is linear: F_j(p) = p*(gamma*SB_j + TB - SB_j) - (gamma*SA_j + TA - SA_j).
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return bids[a].breakpoint() < bids[b].breakpoint();
  });

  double TA = 0.0, TB = 0.0;
  for (const Bid& b : bids) {
    TA += b.alpha;
    TB += b.beta;
  }

  // Prefix sums over the sorted order; prefixA[j]/prefixB[j] cover the j
  // smallest breakpoints.
  std::vector<double> prefixA(n + 1, 0.0), prefixB(n + 1, 0.0);
  for (int j = 0; j < n; ++j) {
    prefixA[j + 1] = prefixA[j] + bids[order[j]].alpha;
    prefixB[j + 1] = prefixB[j] + bids[order[j]].beta;
  }

  auto slope_at = [&](int j) { return gamma * prefixB[j] + (TB - prefixB[j]); };
  auto intercept_at = [&](int j) { return gamma * prefixA[j] + (TA - prefixA[j]); };
  auto value_at_breakpoint = [&](int j, double r) {
    return r * slope_at(j) - intercept_at(j);  // valid for segments touching r
  };

  // First sorted breakpoint where F >= 0; the crossing lies in the segment
  // ending there. F is continuous and nondecreasing, so scanning left to
  // right finds the infimum of the zero set.
  int segment = n;  // segment index j = number of agents on the seller side
  for (int j = 0; j < n; ++j) {
    const double r = bids[order[j]].breakpoint();
    if (value_at_breakpoint(j, r) >= 0.0) {
      segment = j;
      break;
    }
  }

  const double lo = segment == 0 ? -std::numeric_limits<double>::infinity()
                                 : bids[order[segment - 1]].breakpoint();
  const double hi = segment == n ? std::numeric_limits<double>::infinity()
                                 : bids[order[segment]].breakpoint();
  const double slope = slope_at(segment);
  double price;
  if (slope > 0.0) {
    price = intercept_at(segment) / slope;
    price = std::clamp(price, lo, hi);
  } else {
    // Flat segment (possible only with gamma == 0 and every agent a seller);
    // the zero set extends right from its left endpoint.
    price = lo;
  }

  ClearingResult result;
  // Realized partition: boundary agents (alpha/beta == price) sell zero.
  double beta_sellers = 0.0, beta_buyers = 0.0;
  double alpha_sellers = 0.0, alpha_buyers = 0.0;
  result.alloc_plus.assign(n, 0.0);
  result.alloc_minus.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (bids[i].breakpoint() <= price) {
      result.sellers.push_back(i);
      beta_sellers += bids[i].beta;
      alpha_sellers += bids[i].alpha;
    } else {
      result.buyers.push_back(i);
      beta_buyers += bids[i].beta;
      alpha_buyers += bids[i].alpha;
    }
  }
  const double denom = gamma * beta_sellers + beta_buyers;
  if (denom > 0.0) {
    // Re-solve on the realized partition; idempotent refinement of `price`.
    price = (gamma * alpha_sellers + alpha_buyers) / denom;
    result.theta_bar = 1.0 / denom;
  } else {
    result.theta_bar = std::numeric_limits<double>::infinity();
  }
  result.price = price;
  for (int i = 0; i < n; ++i) {
    result.alloc_plus[i] = bids[i].supply_at(price);
    result.alloc_minus[i] = bids[i].demand_at(price);
  }
  result.excess_at_price = excess_function(bids, gamma, price);
  result.price_negative = price < 0.0;
  result.price_above_grid = grid_buy_price >= 0.0 && price > grid_buy_price;
  return result;
}

}  // namespace prosim
