// Microbenchmarks for the two hot paths: per-slot market clearing and the
// per-agent sub-problem solve.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "prosim/config.hpp"
#include "prosim/market.hpp"
#include "prosim/solver.hpp"

using namespace prosim;

namespace {

std::vector<Bid> random_bids(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) {
    return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  std::vector<Bid> bids(n);
  for (auto& b : bids) {
    b.beta = uni(0.1, 2.0);
    b.alpha = b.beta * uni(-5.0, 25.0);
  }
  return bids;
}

void BM_market_clearing(benchmark::State& state) {
  const auto bids = random_bids(static_cast<int>(state.range(0)), 99);
  for (auto _ : state) benchmark::DoNotOptimize(market_clearing(bids, 0.8));
}
BENCHMARK(BM_market_clearing)->Arg(20)->Arg(100)->Arg(1000);

void BM_solve_subproblem(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.slots = static_cast<int>(state.range(0));
  const auto pv = cfg.resolve_pv();
  const auto params = cfg.agent_params(pv);
  const auto net = cfg.network_params();
  const PriceProfile p(cfg.slots, 9.2);
  const SolverConfig sc;
  for (auto _ : state) benchmark::DoNotOptimize(solve_subproblem(p, params[0], net, sc));
}
BENCHMARK(BM_solve_subproblem)->Arg(6)->Arg(12)->Arg(24);

void BM_reconfigure(benchmark::State& state) {
  ExperimentConfig cfg;
  const auto pv = cfg.resolve_pv();
  const auto params = cfg.agent_params(pv);
  const auto net = cfg.network_params();
  const PriceProfile p(cfg.slots, 9.2);
  const SolverConfig sc;
  const auto sol = solve_subproblem(p, params[0], net, sc);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        reconfigure(sol, sol.state.m_plus, sol.state.m_minus, p, params[0], net, sc));
}
BENCHMARK(BM_reconfigure);

}  // namespace

BENCHMARK_MAIN();
