#include "prosim/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <vector>

#include "prosim/market.hpp"
#include "prosim/welfare.hpp"

namespace prosim {

namespace {

std::vector<SubproblemSolution> solve_all(const std::vector<AgentParams>& params,
                                          const NetworkParams& net, const SolverConfig& solver_cfg,
                                          const PriceProfile& prices,
                                          const std::vector<SubproblemSolution>* warm,
                                          bool parallel) {
  const int n = static_cast<int>(params.size());
  std::vector<SubproblemSolution> out(n);
  auto solve_one = [&](int i) {
    const SubproblemSolution* ws = warm && static_cast<int>(warm->size()) == n ? &(*warm)[i] : nullptr;
    return solve_subproblem(prices, params[i], net, solver_cfg, ws);
  };
  if (parallel && n > 1) {
    std::vector<std::future<SubproblemSolution>> futs;
    futs.reserve(n);
    for (int i = 0; i < n; ++i)
      futs.push_back(std::async(std::launch::async, solve_one, i));
    for (int i = 0; i < n; ++i) out[i] = futs[i].get();  // fixed agent order
  } else {
    for (int i = 0; i < n; ++i) out[i] = solve_one(i);
  }
  return out;
}

Profile aggregate_imbalance(const std::vector<AgentState>& states, const NetworkParams& net) {
  const int T = net.slots();
  Profile xi(T, 0.0);
  for (const AgentState& s : states)
    for (int t = 0; t < T; ++t) xi[t] += net.gamma * s.m_plus[t] - s.m_minus[t];
  return xi;
}

double max_abs(const Profile& p) {
  double m = 0.0;
  for (double v : p) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

std::vector<IterationRecord> run_rtp(const std::vector<AgentParams>& params,
                                     const NetworkParams& net, const MechanismConfig& cfg) {
  const int T = net.slots();
  PriceProfile p(T, cfg.initial_price);
  std::vector<SubproblemSolution> warm;
  std::vector<IterationRecord> records;
  records.reserve(cfg.max_iterations);

  for (int k = 0; k < cfg.max_iterations; ++k) {
    auto sols = solve_all(params, net, cfg.solver, p, warm.empty() ? nullptr : &warm, cfg.parallel);
    IterationRecord rec;
    rec.iteration = k;
    rec.prices = p;
    rec.states.reserve(sols.size());
    rec.dual_value = 0.0;
    for (const auto& s : sols) {
      rec.dual_value += s.objective;
      rec.max_kkt_residual = std::max(rec.max_kkt_residual, s.kkt_residual);
      rec.states.push_back(s.state);
    }
    rec.imbalance = aggregate_imbalance(rec.states, net);
    rec.subproblem_imbalance = rec.imbalance;
    rec.delta_m = rec.imbalance;
    rec.social_welfare = social_welfare(rec.states, p, params, net);
    // The utility is the counterparty of every internal trade; when the net
    // position delta_m is nonzero it settles with the outside grid (surplus
    // sold at p_grid_sell, deficit bought at p_grid_buy). Its total cost —
    // internal payout minus grid recovery — is redistributed equally among
    // the agents and only affects recorded welfare, so compensated welfare is
    // sum(phi) plus the grid-side value of the residual.
    double compensation_cost = 0.0;
    for (int t = 0; t < T; ++t)
      compensation_cost += p[t] * rec.imbalance[t] +
                           net.p_grid_buy[t] * std::max(-rec.imbalance[t], 0.0) -
                           net.p_grid_sell[t] * std::max(rec.imbalance[t], 0.0);
    rec.welfare_after_compensation = rec.social_welfare - compensation_cost;

    PriceProfile p_next(T);
    for (int t = 0; t < T; ++t) p_next[t] = p[t] - cfg.theta_k * rec.imbalance[t];
    warm = std::move(sols);
    records.push_back(std::move(rec));

    double dp = 0.0;
    for (int t = 0; t < T; ++t) dp = std::max(dp, std::abs(p_next[t] - p[t]));
    p = std::move(p_next);
    if (dp < cfg.price_tol) break;
  }
  return records;
}

std::vector<IterationRecord> run_lfsda(const std::vector<AgentParams>& params,
                                       const NetworkParams& net, const MechanismConfig& cfg) {
  const int T = net.slots();
  const int n = static_cast<int>(params.size());
  PriceProfile p(T, cfg.initial_price);
  std::vector<SubproblemSolution> warm;
  std::vector<IterationRecord> records;
  records.reserve(cfg.max_iterations);

  for (int k = 0; k < cfg.max_iterations; ++k) {
    auto sols = solve_all(params, net, cfg.solver, p, warm.empty() ? nullptr : &warm, cfg.parallel);

    IterationRecord rec;
    rec.iteration = k;
    rec.dual_value = 0.0;
    for (const auto& s : sols) {
      rec.dual_value += s.objective;
      rec.max_kkt_residual = std::max(rec.max_kkt_residual, s.kkt_residual);
    }
    {
      std::vector<AgentState> pre;
      pre.reserve(n);
      for (const auto& s : sols) pre.push_back(s.state);
      rec.subproblem_imbalance = aggregate_imbalance(pre, net);
    }

    // Bids from the netted best responses, then exact per-slot clearing.
    PriceProfile p_next(T);
    rec.theta_bar.assign(T, 0.0);
    std::vector<Profile> pinned_plus(n, Profile(T, 0.0));
    std::vector<Profile> pinned_minus(n, Profile(T, 0.0));
    for (int t = 0; t < T; ++t) {
      std::vector<Bid> bids;
      bids.reserve(n);
      for (int i = 0; i < n; ++i) {
        const double net_flow = sols[i].state.m_plus[t] - sols[i].state.m_minus[t];
        bids.push_back(bid_from_allocation(std::max(net_flow, 0.0), std::max(-net_flow, 0.0),
                                           cfg.beta, p[t]));
      }
      const ClearingResult cr = market_clearing(bids, net.gamma, net.p_grid_buy[t]);
      p_next[t] = cr.price;
      rec.theta_bar[t] = cr.theta_bar;
      for (int i = 0; i < n; ++i) {
        pinned_plus[i][t] = cr.alloc_plus[i];
        pinned_minus[i][t] = cr.alloc_minus[i];
      }
    }

    // Reconfiguration: each agent reprojects with its cleared quantities pinned.
    std::vector<SubproblemSolution> recon(n);
    auto reconfigure_one = [&](int i) {
      try {
        return reconfigure(sols[i], pinned_plus[i], pinned_minus[i], p_next, params[i], net,
                           cfg.solver);
      } catch (InfeasibleError& e) {
        throw InfeasibleError(std::string(e.what()) + " (agent " + std::to_string(i + 1) + ")",
                              e.slot, i);
      }
    };
    if (cfg.parallel && n > 1) {
      std::vector<std::future<SubproblemSolution>> futs;
      futs.reserve(n);
      for (int i = 0; i < n; ++i)
        futs.push_back(std::async(std::launch::async, reconfigure_one, i));
      for (int i = 0; i < n; ++i) recon[i] = futs[i].get();
    } else {
      for (int i = 0; i < n; ++i) recon[i] = reconfigure_one(i);
    }
    rec.states.resize(n);
    for (int i = 0; i < n; ++i) {
      rec.states[i] = recon[i].state;
      rec.max_kkt_residual = std::max(rec.max_kkt_residual, recon[i].kkt_residual);
    }

    rec.prices = p_next;
    rec.imbalance = aggregate_imbalance(rec.states, net);
    rec.social_welfare = social_welfare(rec.states, p_next, params, net);
    rec.welfare_after_compensation = rec.social_welfare;
    warm = std::move(recon);
    records.push_back(std::move(rec));

    double dp = 0.0;
    for (int t = 0; t < T; ++t) dp = std::max(dp, std::abs(p_next[t] - p[t]));
    p = std::move(p_next);
    if (dp < cfg.price_tol) break;
  }
  return records;
}

std::vector<IterationRecord> run_without_trading(const std::vector<AgentParams>& params,
                                                 const NetworkParams& net,
                                                 const MechanismConfig& cfg) {
  std::vector<AgentParams> closed = params;
  for (auto& a : closed) {
    a.m_plus_max = 0.0;
    a.m_minus_max = 0.0;
  }
  PriceProfile p(net.slots(), cfg.initial_price);
  auto sols = solve_all(closed, net, cfg.solver, p, nullptr, cfg.parallel);
  IterationRecord rec;
  rec.iteration = 0;
  rec.prices = p;
  for (auto& s : sols) {
    rec.dual_value += s.objective;
    rec.max_kkt_residual = std::max(rec.max_kkt_residual, s.kkt_residual);
    rec.states.push_back(std::move(s.state));
  }
  rec.imbalance = aggregate_imbalance(rec.states, net);
  rec.subproblem_imbalance = rec.imbalance;
  rec.social_welfare = social_welfare(rec.states, p, params, net);
  rec.welfare_after_compensation = rec.social_welfare;
  return {std::move(rec)};
}

CentralizedResult solve_centralized_optimal(const std::vector<AgentParams>& params,
                                            const NetworkParams& net,
                                            const MechanismConfig& cfg) {
  const int T = net.slots();
  const int n = static_cast<int>(params.size());
  PriceProfile lam(T, cfg.initial_price);
  std::vector<SubproblemSolution> warm;

  CentralizedResult result;
  result.dual_bound = std::numeric_limits<double>::infinity();
  std::vector<AgentState> states_at_best;
  PriceProfile lam_at_best = lam;

  const int budget = std::max(cfg.max_iterations, 400);
  int k = 0;
  for (; k < budget; ++k) {
    auto sols = solve_all(params, net, cfg.solver, lam, warm.empty() ? nullptr : &warm, cfg.parallel);
    double dual = 0.0;
    std::vector<AgentState> states;
    states.reserve(n);
    for (const auto& s : sols) {
      dual += s.objective;
      states.push_back(s.state);
    }
    const Profile xi = aggregate_imbalance(states, net);
    if (dual < result.dual_bound) {
      result.dual_bound = dual;
      states_at_best = states;
      lam_at_best = lam;
    }
    warm = std::move(sols);
    if (max_abs(xi) < 1e-6) break;
    // Diminishing-step subgradient descent on the dual.
    const double step = cfg.theta_k / std::sqrt(1.0 + static_cast<double>(k));
    for (int t = 0; t < T; ++t) lam[t] -= step * xi[t];
  }
  result.iterations = k;
  result.prices = lam_at_best;

  // Feasibility restoration: one clearing + reconfiguration pass turns the
  // best dual responses into an exactly balanced primal allocation.
  std::vector<Profile> pinned_plus(n, Profile(T, 0.0)), pinned_minus(n, Profile(T, 0.0));
  PriceProfile cleared(T);
  for (int t = 0; t < T; ++t) {
    std::vector<Bid> bids;
    bids.reserve(n);
    for (int i = 0; i < n; ++i) {
      const double net_flow = states_at_best[i].m_plus[t] - states_at_best[i].m_minus[t];
      bids.push_back(bid_from_allocation(std::max(net_flow, 0.0), std::max(-net_flow, 0.0),
                                         cfg.beta, lam_at_best[t]));
    }
    const ClearingResult cr = market_clearing(bids, net.gamma, net.p_grid_buy[t]);
    cleared[t] = cr.price;
    for (int i = 0; i < n; ++i) {
      pinned_plus[i][t] = cr.alloc_plus[i];
      pinned_minus[i][t] = cr.alloc_minus[i];
    }
  }
  result.states.resize(n);
  for (int i = 0; i < n; ++i) {
    SubproblemSolution seed;
    seed.state = states_at_best[i];
    result.states[i] = reconfigure(seed, pinned_plus[i], pinned_minus[i], cleared, params[i], net,
                                   cfg.solver)
                           .state;
  }
  result.welfare = 0.0;
  for (int i = 0; i < n; ++i) result.welfare += agent_phi(result.states[i], params[i], net);
  result.duality_gap = result.dual_bound - result.welfare;
  return result;
}

}  // namespace prosim
