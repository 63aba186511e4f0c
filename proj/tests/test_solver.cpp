// Agent sub-problem solver: closed-form corner cases, the reconfiguration
// projection, gradient and oracle cross-checks, determinism.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "prosim/feasibility.hpp"
#include "prosim/oracle.hpp"
#include "prosim/solver.hpp"
#include "prosim/welfare.hpp"

using namespace prosim;

namespace {

AgentParams plain_consumer(int T) {
  AgentParams a;
  a.l_minus_max.assign(T, 0.0);  // no PV
  a.b_plus_max = 0.0;            // no battery
  a.b_minus_max = 0.0;
  a.m_plus_max = 5.0;
  a.m_minus_max = 5.0;
  a.g_minus_max = 1000.0;
  a.s_max = 0.0;
  a.eta = 0.7;
  a.utility_omega.assign(T, 10.0);
  a.utility_theta.assign(T, 30.0);
  return a;
}

NetworkParams default_net(int T) {
  NetworkParams net;
  net.gamma = 0.8;
  net.p_grid_sell.assign(T, 0.0);
  net.p_grid_buy.assign(T, 20.0);
  net.agent_count = 2;
  return net;
}

double uni(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

TEST_CASE("cheap market price: consume to the marginal-utility crossing") {
  const int T = 3;
  const AgentParams a = plain_consumer(T);
  const NetworkParams net = default_net(T);
  const auto sol = solve_subproblem(PriceProfile(T, 5.0), a, net, SolverConfig{});
  REQUIRE(sol.converged);
  for (int t = 0; t < T; ++t) {
    // stationarity: omega - theta*l = p  ->  l = 1/6, funded by the market
    CHECK(sol.state.l_plus[t] == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
    CHECK(sol.state.m_minus[t] == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
    CHECK(sol.state.g_minus[t] == doctest::Approx(0.0).epsilon(1e-6));
  }
  CHECK(check_feasible(sol.state, a, 1e-8).feasible());
}

TEST_CASE("price at the utility intercept: doing nothing is optimal") {
  const int T = 2;
  const AgentParams a = plain_consumer(T);
  const NetworkParams net = default_net(T);
  const auto sol = solve_subproblem(PriceProfile(T, 12.0), a, net, SolverConfig{});
  REQUIRE(sol.converged);
  CHECK(std::abs(sol.objective) <= 1e-7);
  for (int t = 0; t < T; ++t) {
    CHECK(sol.state.l_plus[t] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(sol.state.m_minus[t] == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("PV owner saturates own demand and sells the rest") {
  const int T = 1;
  AgentParams a = plain_consumer(T);
  a.l_minus_max = {1.0};
  const NetworkParams net = default_net(T);
  const auto sol = solve_subproblem(PriceProfile(T, 9.0), a, net, SolverConfig{});
  REQUIRE(sol.converged);
  // Selling nets gamma*9 = 7.2 per unit, so own consumption stops where the
  // marginal utility meets the seller price: l = (10 - 7.2)/30. The rest of
  // the panel output goes to the market (far better than the feed-in tariff 0).
  const double l_star = (10.0 - 7.2) / 30.0;
  CHECK(sol.state.l_minus[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.state.l_plus[0] == doctest::Approx(l_star).epsilon(1e-5));
  CHECK(sol.state.m_plus[0] == doctest::Approx(1.0 - l_star).epsilon(1e-5));
  const double expect = 10.0 * l_star - 15.0 * l_star * l_star + 7.2 * (1.0 - l_star);
  CHECK(sol.objective == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("demand is nonincreasing in the price") {
  const int T = 1;
  const AgentParams a = plain_consumer(T);
  const NetworkParams net = default_net(T);
  double last = 1e9;
  for (double p = 1.0; p <= 11.0; p += 0.5) {
    const auto sol = solve_subproblem(PriceProfile(T, p), a, net, SolverConfig{});
    REQUIRE(sol.converged);
    CHECK(sol.state.m_minus[0] <= last + 1e-7);
    last = sol.state.m_minus[0];
  }
}

TEST_CASE("objective gradient matches central finite differences") {
  const int T = 2;
  AgentParams a = plain_consumer(T);
  a.l_minus_max.assign(T, 1.5);
  a.b_plus_max = 1.0;
  a.b_minus_max = 1.0;
  a.s_max = 5.0;
  const NetworkParams net = default_net(T);
  const PriceProfile p = {6.0, 9.0};

  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    AgentState x = AgentState::zeros(T);
    for (int t = 0; t < T; ++t) {
      x.l_plus[t] = uni(rng, 0.01, 0.3);
      x.l_minus[t] = uni(rng, 0.01, 1.4);
      x.b_plus[t] = uni(rng, 0.01, 0.9);
      x.b_minus[t] = uni(rng, 0.01, 0.9);
      x.m_plus[t] = uni(rng, 0.01, 2.0);
      x.m_minus[t] = uni(rng, 0.01, 2.0);
      x.g_plus[t] = uni(rng, 0.01, 2.0);
      x.g_minus[t] = uni(rng, 0.01, 2.0);
    }
    const int t = static_cast<int>(rng() % T);
    double grad8[8];
    objective_gradient_slot(x, p, a, net, t, grad8);

    const double h = 1e-6;
    Profile* slots[8] = {&x.l_plus, &x.l_minus, &x.b_plus, &x.b_minus,
                         &x.m_plus, &x.m_minus, &x.g_plus, &x.g_minus};
    for (int c = 0; c < 8; ++c) {
      const double saved = (*slots[c])[t];
      (*slots[c])[t] = saved + h;
      const double up = priced_objective(x, p, a, net);
      (*slots[c])[t] = saved - h;
      const double dn = priced_objective(x, p, a, net);
      (*slots[c])[t] = saved;
      const double fd = (up - dn) / (2 * h);
      CHECK(grad8[c] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("reconfiguration") {
  const int T = 2;
  AgentParams a = plain_consumer(T);
  const NetworkParams net = default_net(T);
  const PriceProfile p(T, 5.0);
  const auto sol = solve_subproblem(p, a, net, SolverConfig{});
  REQUIRE(sol.converged);

  SUBCASE("pinning the optimum to itself changes nothing") {
    const auto re = reconfigure(sol, sol.state.m_plus, sol.state.m_minus, p, a, net, SolverConfig{});
    CHECK(re.objective == doctest::Approx(sol.objective).epsilon(1e-7));
  }
  SUBCASE("a forced sale is sourced from the grid") {
    Profile mp(T, 0.0), mm(T, 0.0);
    mp[0] = 1.0;
    const auto re = reconfigure(sol, mp, mm, p, a, net, SolverConfig{});
    CHECK(re.state.m_plus[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(re.state.g_minus[0] >= 1.0 - 1e-5);  // only remaining inflow
  }
  SUBCASE("a forced sale with no source is infeasible") {
    AgentParams cutoff = a;
    cutoff.g_minus_max = 0.0;
    const auto base = solve_subproblem(p, cutoff, net, SolverConfig{});
    Profile mp(T, 0.0), mm(T, 0.0);
    mp[1] = 1.0;
    CHECK_THROWS_AS(reconfigure(base, mp, mm, p, cutoff, net, SolverConfig{}), InfeasibleError);
  }
  SUBCASE("closing the market collapses consumption") {
    // omega = 10 < p_grid_buy = 20, so without the market nothing is worth buying
    const auto re = reconfigure(sol, Profile(T, 0.0), Profile(T, 0.0), p, a, net, SolverConfig{});
    for (int t = 0; t < T; ++t) CHECK(re.state.l_plus[t] == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("solver output is deterministic") {
  const int T = 4;
  AgentParams a = plain_consumer(T);
  a.l_minus_max = {0.0, 0.5, 1.2, 0.1};
  a.b_plus_max = 1.0;
  a.b_minus_max = 1.0;
  a.s_max = 5.0;
  const NetworkParams net = default_net(T);
  const PriceProfile p = {4.0, 7.0, 9.5, 6.0};
  const auto s1 = solve_subproblem(p, a, net, SolverConfig{});
  const auto s2 = solve_subproblem(p, a, net, SolverConfig{});
  CHECK(s1.objective == s2.objective);
  for (int t = 0; t < T; ++t) {
    CHECK(s1.state.l_plus[t] == s2.state.l_plus[t]);
    CHECK(s1.state.m_plus[t] == s2.state.m_plus[t]);
    CHECK(s1.state.m_minus[t] == s2.state.m_minus[t]);
    CHECK(s1.state.b_plus[t] == s2.state.b_plus[t]);
  }
}

TEST_CASE("brute-force lattice oracle") {
  const NetworkParams net = default_net(1);
  SUBCASE("brackets the closed-form consumer optimum") {
    const AgentParams a = plain_consumer(1);
    const auto oracle = brute_force_oracle(PriceProfile(1, 5.0), a, net, 60);
    // true optimum: l = m- = 1/6, value D(1/6) - 5/6
    const double best = 10.0 / 6.0 - 15.0 / 36.0 - 5.0 / 6.0;
    CHECK(oracle.objective <= best + 1e-9);  // lattice points are feasible
    CHECK(oracle.objective >= best - oracle_lattice_gap(PriceProfile(1, 5.0), a, net, 60));
  }
  SUBCASE("all caps zero leaves the zero state") {
    AgentParams a = plain_consumer(1);
    a.m_plus_max = a.m_minus_max = a.g_minus_max = 0.0;
    const auto oracle = brute_force_oracle(PriceProfile(1, 5.0), a, net, 30);
    CHECK(oracle.objective == doctest::Approx(0.0));
  }
  SUBCASE("battery arbitrage never hurts") {
    NetworkParams net2 = default_net(2);
    AgentParams with_batt = plain_consumer(2);
    with_batt.b_plus_max = with_batt.b_minus_max = 1.0;
    with_batt.s_max = 5.0;
    AgentParams without = plain_consumer(2);
    const PriceProfile p = {2.0, 9.0};
    // eight axes at T=2, so the resolution has to stay coarse
    const auto rich = brute_force_oracle(p, with_batt, net2, 7);
    const auto poor = brute_force_oracle(p, without, net2, 7);
    CHECK(rich.objective >= poor.objective - 1e-9);
  }
  SUBCASE("refuses oversized lattices") {
    AgentParams a = plain_consumer(3);
    CHECK_THROWS_AS(brute_force_oracle(PriceProfile(3, 5.0), a, net, 500, 1000), std::invalid_argument);
  }
}

TEST_CASE("solver beats the lattice oracle on random instances") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 12; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 2);
    const int grid = T == 1 ? 31 : 7;
    AgentParams a = plain_consumer(T);
    for (int t = 0; t < T; ++t) a.l_minus_max[t] = uni(rng, 0.0, 1.5);
    a.b_plus_max = a.b_minus_max = uni(rng, 0.0, 1.0);
    a.s_max = uni(rng, 0.0, 3.0);
    a.s_init = uni(rng, 0.0, a.s_max);
    NetworkParams net = default_net(T);
    net.gamma = uni(rng, 0.5, 1.0);
    PriceProfile p(T);
    for (int t = 0; t < T; ++t) p[t] = uni(rng, 0.5, 15.0);

    const auto sol = solve_subproblem(p, a, net, SolverConfig{});
    const auto oracle = brute_force_oracle(p, a, net, grid);
    const double slack = oracle_lattice_gap(p, a, net, grid);
    CHECK(sol.objective >= oracle.objective - slack);
    CHECK(check_feasible(sol.state, a, 1e-8).feasible());
  }
}
