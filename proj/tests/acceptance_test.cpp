// End-to-end acceptance gate. Runs the default experiment plus the seed
// sweeps and prints one PASS/FAIL line per criterion; exits nonzero when any
// criterion fails. Expensive by design (several full runs); the unit suites
// cover the fast per-module checks.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prosim/config.hpp"
#include "prosim/experiment.hpp"
#include "prosim/feasibility.hpp"
#include "prosim/market.hpp"
#include "prosim/mechanisms.hpp"
#include "prosim/oracle.hpp"
#include "prosim/welfare.hpp"

using namespace prosim;
namespace fs = std::filesystem;

namespace {

// Pinned acceptance tolerances.
constexpr double kIdentityTol = 1e-9;       // price-update identity, exact balance
constexpr double kPriceAgreement = 0.02;    // relative price gap between mechanisms
constexpr double kRuntimeBudget = 120.0;    // seconds for the two iterative runs
constexpr double kWelfareBand = 0.03;       // relative band around the reference
constexpr double kBenefitSlack = 1e-9;      // per-agent benefit slack
constexpr double kKktTol = 1e-7;            // solver residual bound
constexpr double kFeasTol = 1e-8;           // state feasibility
constexpr int kBalanceSeeds = 10;           // criterion 3 sweep
constexpr int kBenefitSeeds = 5;            // criterion 5 sweep

int failures = 0;

void report(int criterion, const char* what, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion, what,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double max_abs(const Profile& p) {
  double m = 0.0;
  for (double v : p) m = std::max(m, std::abs(v));
  return m;
}

double uni(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Max deviation of the recorded price trajectory from the subgradient-step
// form with the realized clearing step.
double price_update_deviation(const std::vector<IterationRecord>& records, double initial_price) {
  double dev = 0.0;
  for (size_t k = 0; k < records.size(); ++k)
    for (size_t t = 0; t < records[k].prices.size(); ++t) {
      const double prev = k == 0 ? initial_price : records[k - 1].prices[t];
      const double predicted =
          prev - records[k].theta_bar[t] * records[k].subproblem_imbalance[t];
      dev = std::max(dev, std::abs(records[k].prices[t] - predicted));
    }
  return dev;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const ExperimentConfig cfg;  // defaults are the reference setup
  const auto pv = cfg.resolve_pv();
  const auto params = cfg.agent_params(pv);
  const auto net = cfg.network_params();
  const auto mech = cfg.mechanism_config();

  const auto t0 = std::chrono::steady_clock::now();
  const auto lfsda = run_lfsda(params, net, mech);
  const auto rtp = run_rtp(params, net, mech);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto wt = run_without_trading(params, net, mech);
  const auto opt = solve_centralized_optimal(params, net, mech);

  // 1 — the cleared price trajectory follows the subgradient-step identity at
  // every iteration and slot of the default run.
  {
    const double dev = price_update_deviation(lfsda, cfg.initial_price);
    report(1, "auction price update identity within 1e-9", dev <= kIdentityTol,
           "max dev " + fmt(dev) + " over " + std::to_string(lfsda.size()) + " iterations");
  }

  // 2 — both mechanisms converge to the same price profile, inside the
  // runtime budget.
  {
    double gap = 0.0, mean = 0.0;
    for (int t = 0; t < cfg.slots; ++t) {
      gap = std::max(gap, std::abs(lfsda.back().prices[t] - rtp.back().prices[t]));
      mean += lfsda.back().prices[t] / cfg.slots;
    }
    const bool ok = gap <= kPriceAgreement * mean && elapsed < kRuntimeBudget;
    report(2, "converged price profiles agree within 2%", ok,
           "max gap " + fmt(gap) + " vs bound " + fmt(kPriceAgreement * mean) + ", " +
               fmt(elapsed) + " s");
  }

  // 3 — the auction balances exactly at every iteration while the plain
  // subgradient runs start imbalanced, across a seed sweep.
  {
    double auction_dev = 0.0;
    for (const auto& rec : lfsda) auction_dev = std::max(auction_dev, max_abs(rec.imbalance));
    double min_rtp_start = max_abs(rtp.front().imbalance);
    bool ok = auction_dev <= kIdentityTol && min_rtp_start > 0.0;
    for (int seed = 1; seed <= kBalanceSeeds && ok; ++seed) {
      ExperimentConfig c = cfg;
      c.rng_seed = seed;
      c.iterations = 25;
      const auto p2 = c.agent_params(c.resolve_pv());
      auto m2 = c.mechanism_config();
      for (const auto& rec : run_lfsda(p2, net, m2))
        auction_dev = std::max(auction_dev, max_abs(rec.imbalance));
      m2.max_iterations = 1;
      const double start = max_abs(run_rtp(p2, net, m2).front().imbalance);
      min_rtp_start = std::min(min_rtp_start, start);
      ok = auction_dev <= kIdentityTol && start > 0.0;
    }
    report(3, "exact auction balance, positive initial imbalance elsewhere", ok,
           "auction dev " + fmt(auction_dev) + ", smallest initial imbalance " +
               fmt(min_rtp_start) + " over " + std::to_string(kBalanceSeeds + 1) + " seeds");
  }

  // 4 — welfare ordering: auction dominates compensated subgradient pricing
  // early on, both land near the centralized reference, and trading beats
  // not trading.
  {
    bool early_ok = true;
    double worst = 0.0;
    for (size_t k = 0; k < 10 && k < lfsda.size() && k < rtp.size(); ++k) {
      const double margin = lfsda[k].social_welfare - rtp[k].welfare_after_compensation;
      worst = std::min(margin, k == 0 ? margin : worst);
      if (margin < -kBenefitSlack) early_ok = false;
    }
    report(4, "auction >= compensated pricing in the first 10 iterations", early_ok,
           "smallest margin " + fmt(worst));

    const double band = kWelfareBand * std::abs(opt.welfare) + std::max(opt.duality_gap, 0.0);
    const double d_lf = std::abs(lfsda.back().social_welfare - opt.welfare);
    const double d_rtp = std::abs(rtp.back().social_welfare - opt.welfare);
    report(4, "final welfares within 3% of the centralized reference",
           d_lf <= band && d_rtp <= band,
           "gaps " + fmt(d_lf) + " / " + fmt(d_rtp) + " vs band " + fmt(band));

    const double trade_gain = lfsda.back().social_welfare - wt.back().social_welfare;
    report(4, "trading does not lower social welfare", trade_gain >= -kBenefitSlack,
           "gain " + fmt(trade_gain));
  }

  // 5 — every single agent ends at least as well off as without the market,
  // on the default seed and a sweep of random seeds.
  {
    bool ok = true;
    double worst = 1e300;
    std::string where;
    auto sweep = [&](std::uint64_t seed, const std::vector<IterationRecord>& lf_records,
                     const std::vector<IterationRecord>& wt_records,
                     const std::vector<AgentParams>& ps) {
      const auto& lf_last = lf_records.back();
      const auto& wt_last = wt_records.back();
      for (size_t i = 0; i < ps.size(); ++i) {
        const double gain = agent_welfare(lf_last.states[i], lf_last.prices, ps[i], net).total() -
                            agent_welfare(wt_last.states[i], wt_last.prices, ps[i], net).total();
        if (gain < worst) {
          worst = gain;
          where = "seed " + std::to_string(seed) + ", agent " + std::to_string(i + 1);
        }
        if (gain < -kBenefitSlack) ok = false;
      }
    };
    sweep(cfg.rng_seed, lfsda, wt, params);
    for (int seed = 1; seed <= kBenefitSeeds; ++seed) {
      ExperimentConfig c = cfg;
      c.rng_seed = seed;
      const auto p2 = c.agent_params(c.resolve_pv());
      const auto m2 = c.mechanism_config();
      sweep(seed, run_lfsda(p2, net, m2), run_without_trading(p2, net, m2), p2);
    }
    report(5, "every agent benefits from the market", ok, "worst gain " + fmt(worst) + " at " + where);
  }

  // 6 — the sub-problem solver against the exhaustive lattice oracle, and the
  // recorded residuals of every solve in the default experiment.
  {
    std::mt19937_64 rng(987);
    bool ok = true;
    double worst_slack = 1e300;
    for (int trial = 0; trial < 50; ++trial) {
      const int T = 1 + static_cast<int>(rng() % 2);
      const int grid = T == 1 ? 31 : 7;  // four lattice axes per slot
      AgentParams a;
      a.l_minus_max.assign(T, 0.0);
      for (int t = 0; t < T; ++t) a.l_minus_max[t] = uni(rng, 0.0, 1.5);
      a.b_plus_max = a.b_minus_max = uni(rng, 0.0, 1.0);
      a.m_plus_max = a.m_minus_max = 5.0;
      a.g_minus_max = 1000.0;
      a.s_max = uni(rng, 0.0, 3.0);
      a.s_init = uni(rng, 0.0, a.s_max);
      a.eta = uni(rng, 0.5, 1.0);
      a.utility_omega.assign(T, 10.0);
      a.utility_theta.assign(T, 30.0);
      NetworkParams n2 = net;
      n2.gamma = uni(rng, 0.5, 1.0);
      n2.p_grid_sell.assign(T, 0.0);
      n2.p_grid_buy.assign(T, 20.0);
      PriceProfile p(T);
      for (int t = 0; t < T; ++t) p[t] = uni(rng, 0.5, 15.0);

      const auto sol = solve_subproblem(p, a, n2, mech.solver);
      const auto oracle = brute_force_oracle(p, a, n2, grid);
      const double slack = sol.objective - (oracle.objective - oracle_lattice_gap(p, a, n2, grid));
      worst_slack = std::min(worst_slack, slack);
      if (slack < 0.0) ok = false;
    }
    report(6, "solver matches the lattice oracle on 50 random instances", ok,
           "worst slack " + fmt(worst_slack));

    double worst_kkt = 0.0;
    for (const auto* runs : {&lfsda, &rtp, &wt})
      for (const auto& rec : *runs) worst_kkt = std::max(worst_kkt, rec.max_kkt_residual);
    report(6, "residuals of all default-experiment solves within 1e-7", worst_kkt <= kKktTol,
           "worst residual " + fmt(worst_kkt));
  }

  // 7 — closed-form clearing against a 1e-12 bisection oracle.
  {
    std::mt19937_64 rng(31337);
    const double gammas[] = {0.5, 0.8, 1.0};
    double worst_price = 0.0, worst_excess = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 50);
      const double gamma = gammas[rng() % 3];
      std::vector<Bid> bids(n);
      for (auto& b : bids) {
        b.beta = uni(rng, 0.05, 2.0);
        b.alpha = b.beta * uni(rng, -5.0, 25.0);
      }
      const auto r = market_clearing(bids, gamma);
      worst_price = std::max(worst_price,
                             std::abs(r.price - clearing_price_bisection(bids, gamma, 1e-12)));
      worst_excess = std::max(worst_excess, std::abs(r.excess_at_price));
    }
    report(7, "closed-form clearing matches bisection on 1000 bid sets",
           worst_price <= kIdentityTol && worst_excess <= kIdentityTol,
           "max price dev " + fmt(worst_price) + ", max excess " + fmt(worst_excess));
  }

  // 8 — every state any mechanism recorded passes the feasibility predicate.
  {
    bool ok = true;
    std::string where = "none";
    auto audit = [&](const char* cond, const std::vector<IterationRecord>& records) {
      for (const auto& rec : records)
        for (size_t i = 0; i < rec.states.size(); ++i) {
          const auto rep = check_feasible(rec.states[i], params[i], kFeasTol);
          if (!rep.feasible() && ok) {
            ok = false;
            where = std::string(cond) + " iteration " + std::to_string(rec.iteration) +
                    ", agent " + std::to_string(i + 1) + ", " + rep.violations[0].constraint;
          }
        }
    };
    audit("lfsda", lfsda);
    audit("rtp", rtp);
    audit("without_trading", wt);
    for (size_t i = 0; i < opt.states.size() && ok; ++i)
      if (!check_feasible(opt.states[i], params[i], kFeasTol).feasible()) {
        ok = false;
        where = "optimal, agent " + std::to_string(i + 1);
      }
    report(8, "conservation and storage bounds hold in every record", ok, where);
  }

  // 9 — the full report is byte-reproducible.
  {
    const fs::path base = fs::temp_directory_path() / "prosim_acceptance";
    fs::remove_all(base);
    ExperimentConfig c1 = cfg, c2 = cfg;
    c1.output_dir = (base / "a").string();
    c2.output_dir = (base / "b").string();
    run_experiment(c1);
    run_experiment(c2);
    const std::string a = slurp(base / "a" / "iterations.csv");
    const std::string b = slurp(base / "b" / "iterations.csv");
    report(9, "identical seeds give byte-identical iteration traces", !a.empty() && a == b,
           std::to_string(a.size()) + " bytes compared");
    fs::remove_all(base);
  }

  if (failures) std::printf("%d criterion check(s) failed\n", failures);
  else std::printf("all acceptance criteria satisfied\n");
  return failures ? 1 : 0;
}
