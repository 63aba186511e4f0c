// Double-auction machinery: bid construction from netted market quantities,
// the aggregate excess function, and exact closed-form market clearing.
#ifndef PROSIM_MARKET_HPP
#define PROSIM_MARKET_HPP

#include <vector>

#include "prosim/types.hpp"

namespace prosim {

struct ClearingResult {
  double price = 0.0;               // cleared p_t
  std::vector<int> sellers;         // agents with alpha/beta <= price
  std::vector<int> buyers;          // agents with alpha/beta >  price
  std::vector<double> alloc_plus;   // per-agent sold quantity mu+(price)
  std::vector<double> alloc_minus;  // per-agent bought quantity mu-(price)
  double theta_bar = 0.0;           // (gamma*sum beta_sellers + sum beta_buyers)^-1
  double excess_at_price = 0.0;     // residual of the balance constraint at price
  bool price_negative = false;      // diagnostics, no clamping applied
  bool price_above_grid = false;    // cleared above the grid purchase price
};

/// Recovers the bid anchored at `price` that reproduces the netted market
/// quantities: alpha = beta*price + (m- - m+). Requires beta > 0 and at most
/// one of m+/m- positive (throws std::invalid_argument otherwise).
Bid bid_from_allocation(double m_plus, double m_minus, double beta, double price);

/// Aggregate excess F(p) = gamma * sum mu+_i(p) - sum mu-_i(p); piecewise
/// linear and nondecreasing in p.
double excess_function(const std::vector<Bid>& bids, double gamma, double p);

/// Exact clearing: sorts the N breakpoints alpha/beta, scans the segments of
/// F for the sign change and solves the linear segment equation in closed
/// form. On a flat-zero interval returns its infimum. `grid_buy_price`, when
/// nonnegative, only feeds the price_above_grid diagnostic.
ClearingResult market_clearing(const std::vector<Bid>& bids, double gamma,
                               double grid_buy_price = -1.0);

}  // namespace prosim

#endif
