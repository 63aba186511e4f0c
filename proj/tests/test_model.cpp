// Domain types, feasibility predicates and the welfare functionals.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "prosim/feasibility.hpp"
#include "prosim/types.hpp"
#include "prosim/welfare.hpp"

using namespace prosim;

namespace {

AgentParams default_agent(int T) {
  AgentParams a;
  a.l_minus_max.assign(T, 0.0);
  a.b_plus_max = 1.0;
  a.b_minus_max = 1.0;
  a.m_plus_max = 5.0;
  a.m_minus_max = 5.0;
  a.g_minus_max = 1000.0;
  a.s_max = 5.0;
  a.s_init = 0.0;
  a.eta = 0.7;
  a.utility_omega.assign(T, 10.0);
  a.utility_theta.assign(T, 30.0);
  return a;
}

NetworkParams default_net(int T, int n = 2) {
  NetworkParams net;
  net.gamma = 0.8;
  net.p_grid_sell.assign(T, 0.0);
  net.p_grid_buy.assign(T, 20.0);
  net.agent_count = n;
  return net;
}

}  // namespace

TEST_CASE("TimeGrid rejects nonpositive slot counts") {
  CHECK_THROWS_AS(TimeGrid(0), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid(-3), std::invalid_argument);
  CHECK(TimeGrid(24).slot_count == 24);
}

TEST_CASE("parameter validation") {
  AgentParams a = default_agent(4);
  CHECK_NOTHROW(a.validate());
  SUBCASE("negative cap") {
    a.m_plus_max = -1.0;
    CHECK_THROWS(a.validate());
  }
  SUBCASE("theta must be positive") {
    a.utility_theta[2] = 0.0;
    CHECK_THROWS(a.validate());
  }
  SUBCASE("s_init above capacity") {
    a.s_init = 6.0;
    CHECK_THROWS(a.validate());
  }

  NetworkParams net = default_net(4);
  CHECK_NOTHROW(net.validate());
  net.p_grid_sell.assign(4, 21.0);  // resale arbitrage would open up
  CHECK_THROWS(net.validate());
}

TEST_CASE("zero state is feasible when the minimums are zero") {
  const int T = 6;
  AgentParams a = default_agent(T);
  AgentState x = AgentState::zeros(T);
  CHECK(check_feasible(x, a).feasible());
}

TEST_CASE("unchecked charging overruns the battery capacity at slot 8") {
  const int T = 12;
  AgentParams a = default_agent(T);
  AgentState x = AgentState::zeros(T);
  for (int t = 0; t < T; ++t) {
    x.b_plus[t] = 1.0;            // eta=0.7 -> SOC grows by 0.7 per slot
    x.g_minus[t] = 1.0;           // fed from the grid, conservation holds
  }
  const auto report = check_feasible(x, a);
  REQUIRE_FALSE(report.feasible());
  // 0.7 * 8 = 5.6 > s_max = 5, first overrun at 0-based slot 7
  bool found = false;
  for (const auto& v : report.violations)
    if (v.constraint == "h16" && v.slot == 7) {
      found = true;
      CHECK(v.magnitude == doctest::Approx(0.6));
    }
  CHECK(found);
}

TEST_CASE("an unfunded market sale violates conservation") {
  AgentParams a = default_agent(1);
  AgentState x = AgentState::zeros(1);
  x.m_plus[0] = 1.0;
  const auto report = check_feasible(x, a);
  REQUIRE_FALSE(report.feasible());
  CHECK(report.violations[0].constraint == "h17");
  CHECK(report.violations[0].magnitude == doctest::Approx(1.0));
}

TEST_CASE("mismatched profile lengths are a structural error") {
  AgentParams a = default_agent(3);
  AgentState x = AgentState::zeros(3);
  x.b_minus.resize(2);
  CHECK_THROWS_AS(check_feasible(x, a), std::invalid_argument);
}

TEST_CASE("soc trajectory") {
  SUBCASE("idle battery keeps the initial charge") {
    AgentParams a = default_agent(5);
    a.s_init = 2.5;
    const Profile s = soc_trajectory(AgentState::zeros(5), a);
    for (double v : s) CHECK(v == doctest::Approx(2.5));
  }
  SUBCASE("one charge then a discharge") {
    AgentParams a = default_agent(2);
    AgentState x = AgentState::zeros(2);
    x.b_plus = {1.0, 0.0};
    x.b_minus = {0.0, 0.5};
    const Profile s = soc_trajectory(x, a);
    CHECK(s[0] == doctest::Approx(0.7));
    CHECK(s[1] == doctest::Approx(0.2));
  }
  SUBCASE("lossless discharge from full") {
    AgentParams a = default_agent(5);
    a.eta = 1.0;
    a.s_init = 5.0;
    AgentState x = AgentState::zeros(5);
    x.b_minus.assign(5, 1.0);
    x.g_plus.assign(5, 1.0);  // discharge is exported, conservation holds
    const Profile s = soc_trajectory(x, a);
    for (int t = 0; t < 5; ++t) CHECK(s[t] == doctest::Approx(4.0 - t));
  }
}

TEST_CASE("demand utility values and saturation") {
  CHECK(demand_utility(0.0, 10.0, 30.0) == 0.0);
  CHECK(demand_utility(1.0 / 3.0, 10.0, 30.0) == doctest::Approx(5.0 / 3.0));
  CHECK(demand_utility(0.2, 10.0, 30.0) == doctest::Approx(1.4));
  CHECK(demand_utility(2.0, 10.0, 30.0) == doctest::Approx(5.0 / 3.0));  // saturated
  CHECK_THROWS_AS(demand_utility(-0.1, 10.0, 30.0), std::domain_error);
  CHECK_THROWS_AS(demand_utility(0.1, 10.0, 0.0), std::domain_error);
}

TEST_CASE("demand utility derivative matches finite differences") {
  const double h = 1e-5;
  for (double l : {0.05, 0.15, 0.3, 0.4, 1.0}) {
    const double fd = (demand_utility(l + h, 10.0, 30.0) - demand_utility(l - h, 10.0, 30.0)) / (2 * h);
    CHECK(demand_utility_derivative(l, 10.0, 30.0) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("generation cost") {
  AgentParams a = default_agent(1);
  a.l_minus_max = {3.0};
  SUBCASE("free PV") {
    CHECK(generation_cost(0.5, a, 0) == 0.0);
    CHECK(generation_cost(0.0, a, 0) == 0.0);
  }
  SUBCASE("quadratic plant") {
    a.gen_cost_a = 1.0;
    a.gen_cost_b = 2.0;
    CHECK(generation_cost(2.0, a, 0) == doctest::Approx(6.0));
  }
  SUBCASE("out of range") {
    CHECK_THROWS_AS(generation_cost(3.5, a, 0), std::domain_error);
    CHECK_THROWS_AS(generation_cost(-0.1, a, 0), std::domain_error);
  }
}

TEST_CASE("agent welfare breakdown") {
  const int T = 3;
  AgentParams a = default_agent(T);
  NetworkParams net = default_net(T);
  PriceProfile p(T, 9.0);

  SUBCASE("doing nothing is worth nothing") {
    CHECK(agent_welfare(AgentState::zeros(T), p, a, net).total() == 0.0);
  }
  SUBCASE("grid-funded consumption at slot 0") {
    AgentState x = AgentState::zeros(T);
    x.g_minus[0] = 1.0;
    x.l_plus[0] = 1.0;
    // D(1) = 10^2/60 saturated; grid power costs 20
    CHECK(agent_welfare(x, p, a, net).total() == doctest::Approx(5.0 / 3.0 - 20.0));
  }
  SUBCASE("seller earns the discounted price") {
    AgentParams b = a;
    b.l_minus_max = {1.0, 0.0, 0.0};
    AgentState x = AgentState::zeros(T);
    x.l_minus[0] = 1.0;
    x.m_plus[0] = 1.0;
    const auto w = agent_welfare(x, p, b, net);
    CHECK(w.market_revenue == doctest::Approx(0.8 * 9.0));
    CHECK(w.total() == doctest::Approx(7.2));
  }
}

TEST_CASE("social welfare of a balanced allocation ignores the price profile") {
  const int T = 2;
  AgentParams a = default_agent(T);
  a.l_minus_max.assign(T, 2.0);
  std::vector<AgentParams> params = {a, a};
  NetworkParams net = default_net(T);

  // Agent 0 sells 1, agent 1 buys gamma*1 = 0.8: balance holds exactly.
  AgentState s0 = AgentState::zeros(T), s1 = AgentState::zeros(T);
  for (int t = 0; t < T; ++t) {
    s0.l_minus[t] = 1.0;
    s0.m_plus[t] = 1.0;
    s1.m_minus[t] = 0.8;
    s1.l_plus[t] = 0.8;
  }
  const std::vector<AgentState> states = {s0, s1};
  const double w1 = social_welfare(states, PriceProfile(T, 3.0), params, net);
  const double w2 = social_welfare(states, PriceProfile(T, 17.5), params, net);
  CHECK(std::abs(w1 - w2) <= 1e-9);
  // and it equals the sum of the price-free utilities
  const double phi = agent_phi(s0, params[0], net) + agent_phi(s1, params[1], net);
  CHECK(w1 == doctest::Approx(phi));
}

TEST_CASE("welfare is linear in the trade fields") {
  const int T = 1;
  AgentParams a = default_agent(T);
  a.l_minus_max = {4.0};
  NetworkParams net = default_net(T);
  PriceProfile p(T, 6.0);
  AgentState x = AgentState::zeros(T);
  x.l_minus[0] = 2.0;
  x.l_plus[0] = 0.3;

  auto value_at = [&](double m_plus) {
    AgentState y = x;
    y.m_plus[0] = m_plus;
    return agent_welfare(y, p, a, net).total();
  };
  const double base = value_at(0.0), one = value_at(1.0), two = value_at(2.0);
  CHECK(two - one == doctest::Approx(one - base));
  CHECK(one - base == doctest::Approx(0.8 * 6.0));
}
