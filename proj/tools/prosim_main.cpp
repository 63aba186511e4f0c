// Command-line driver for the prosumer market simulator.
//
// Subcommands:
//   run       all four conditions, full report files
//   lfsda     auction mechanism only
//   rtp       subgradient pricing only
//   baseline  without-trading benchmark only
//   optimal   centralized reference solve only
//   gen-pv    write the synthetic PV profile set to CSV
//   verify    self-checks (clearing oracle, identities, feasibility)
//
// Exit codes: 0 success, 1 verification failure, 2 configuration or I/O
// error, 3 mechanism run failure.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prosim/config.hpp"
#include "prosim/experiment.hpp"
#include "prosim/feasibility.hpp"
#include "prosim/market.hpp"
#include "prosim/oracle.hpp"
#include "prosim/pv.hpp"
#include "prosim/welfare.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRunFailed = 3;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<std::string> out;
  bool parallel = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "configuration file (key = value lines)");
  cmd->add_option("--seed", o.seed, "override rng_seed");
  cmd->add_option("--iterations", o.iterations, "override the iteration budget");
  cmd->add_option("--out", o.out, "override the output directory (or file for gen-pv)");
  cmd->add_flag("--parallel", o.parallel, "fan out per-agent solves across threads");
}

prosim::ExperimentConfig make_config(const CommonOpts& o) {
  prosim::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = prosim::load_config(o.config_path);
  if (o.seed) cfg.rng_seed = *o.seed;
  if (o.iterations) cfg.iterations = *o.iterations;
  if (o.out) cfg.output_dir = *o.out;
  if (o.parallel) cfg.parallel = true;
  cfg.validate();
  return cfg;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double max_abs(const prosim::Profile& p) {
  double m = 0.0;
  for (double v : p) m = std::max(m, std::abs(v));
  return m;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

// Trace + summary for the single-mechanism subcommands; the schema matches
// the corresponding rows of the full report's iterations.csv.
void write_single_condition(const prosim::ExperimentConfig& cfg, const std::string& condition,
                            const std::vector<prosim::IterationRecord>& records) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "iterations.csv");
    out << "iteration,condition,social_welfare,welfare_after_compensation,max_imbalance,dual_value";
    for (int t = 1; t <= cfg.slots; ++t) out << ",price_" << t;
    out << '\n';
    for (const auto& rec : records) {
      out << rec.iteration << ',' << condition << ',' << fmt(rec.social_welfare) << ','
          << fmt(rec.welfare_after_compensation) << ',' << fmt(max_abs(rec.imbalance)) << ','
          << fmt(rec.dual_value);
      for (double p : rec.prices) out << ',' << fmt(p);
      out << '\n';
    }
  }
  {
    const prosim::IterationRecord& last = records.back();
    auto out = open_out(dir / "summary.json");
    out << "{\n";
    out << "  \"condition\": \"" << condition << "\",\n";
    out << "  \"agents\": " << cfg.agents << ",\n";
    out << "  \"slots\": " << cfg.slots << ",\n";
    out << "  \"seed\": " << cfg.rng_seed << ",\n";
    out << "  \"iterations_run\": " << records.size() << ",\n";
    out << "  \"social_welfare\": " << fmt(last.social_welfare) << ",\n";
    out << "  \"welfare_after_compensation\": " << fmt(last.welfare_after_compensation) << ",\n";
    out << "  \"max_imbalance\": " << fmt(max_abs(last.imbalance)) << "\n";
    out << "}\n";
  }
}

int run_mechanism(const CommonOpts& opts, const std::string& condition) {
  const prosim::ExperimentConfig cfg = make_config(opts);
  const auto pv = cfg.resolve_pv();
  const auto params = cfg.agent_params(pv);
  const auto net = cfg.network_params();
  const auto mech = cfg.mechanism_config();

  std::vector<prosim::IterationRecord> records;
  try {
    if (condition == "lfsda") records = prosim::run_lfsda(params, net, mech);
    else if (condition == "rtp") records = prosim::run_rtp(params, net, mech);
    else records = prosim::run_without_trading(params, net, mech);
  } catch (const std::exception& e) {
    std::cerr << condition << ": " << e.what() << "\n";
    return kExitRunFailed;
  }
  write_single_condition(cfg, condition, records);
  std::cout << condition << ": " << records.size() << " iterations, welfare "
            << fmt(records.back().social_welfare) << ", max imbalance "
            << fmt(max_abs(records.back().imbalance)) << "\n";
  return kExitOk;
}

int run_optimal(const CommonOpts& opts) {
  const prosim::ExperimentConfig cfg = make_config(opts);
  const auto pv = cfg.resolve_pv();
  const auto params = cfg.agent_params(pv);
  const auto net = cfg.network_params();
  const auto mech = cfg.mechanism_config();

  prosim::CentralizedResult res;
  try {
    res = prosim::solve_centralized_optimal(params, net, mech);
  } catch (const std::exception& e) {
    std::cerr << "optimal: " << e.what() << "\n";
    return kExitRunFailed;
  }
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  auto out = open_out(dir / "summary.json");
  out << "{\n";
  out << "  \"condition\": \"optimal\",\n";
  out << "  \"agents\": " << cfg.agents << ",\n";
  out << "  \"slots\": " << cfg.slots << ",\n";
  out << "  \"seed\": " << cfg.rng_seed << ",\n";
  out << "  \"iterations_run\": " << res.iterations << ",\n";
  out << "  \"welfare\": " << fmt(res.welfare) << ",\n";
  out << "  \"dual_bound\": " << fmt(res.dual_bound) << ",\n";
  out << "  \"duality_gap\": " << fmt(res.duality_gap) << "\n";
  out << "}\n";
  std::cout << "optimal: welfare " << fmt(res.welfare) << ", duality gap "
            << fmt(res.duality_gap) << "\n";
  return kExitOk;
}

int run_full(const CommonOpts& opts) {
  const prosim::ExperimentConfig cfg = make_config(opts);
  const prosim::ExperimentResult res = prosim::run_experiment(cfg);
  if (!res.failures.empty()) {
    for (const std::string& f : res.failures) std::cerr << "failed: " << f << "\n";
    std::cerr << "partial outputs and failure_manifest.txt written to " << cfg.output_dir << "\n";
    return kExitRunFailed;
  }
  std::cout << "report written to " << cfg.output_dir << "\n";
  if (!res.lfsda.empty())
    std::cout << "  lfsda:    welfare " << fmt(res.lfsda.back().social_welfare) << " after "
              << res.lfsda.size() << " iterations\n";
  if (!res.rtp.empty())
    std::cout << "  rtp:      welfare " << fmt(res.rtp.back().social_welfare) << " ("
              << fmt(res.rtp.back().welfare_after_compensation) << " after compensation)\n";
  if (!res.without_trading.empty())
    std::cout << "  baseline: welfare " << fmt(res.without_trading.back().social_welfare) << "\n";
  std::cout << "  optimal:  welfare " << fmt(res.optimal.welfare) << " (gap "
            << fmt(res.optimal.duality_gap) << ")\n";
  return kExitOk;
}

int run_gen_pv(const CommonOpts& opts) {
  prosim::ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = prosim::load_config(opts.config_path);
  if (opts.seed) cfg.rng_seed = *opts.seed;
  cfg.validate();
  const auto pv = prosim::generate_pv_synthetic(cfg.rng_seed, cfg.agents, cfg.slots,
                                                cfg.pv_peak_mean, cfg.pv_peak_spread, 6, 17, 11.5,
                                                cfg.pv_sigma, cfg.pv_ownership);
  const std::string path = opts.out.value_or("pv.csv");
  prosim::write_pv_csv(pv, path);
  std::cout << "wrote " << pv.slots << "x" << pv.agents << " PV profile set to " << path << "\n";
  return kExitOk;
}

// ---- verify: quick self-checks runnable on an installed binary ------------

int run_verify(const CommonOpts& opts) {
  int failures = 0;
  auto check = [&](const char* name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "ok   " : "FAIL ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  };

  // Closed-form clearing against a bisection root of the excess function.
  {
    std::mt19937_64 rng(opts.seed.value_or(12345));
    auto uni = [&](double a, double b) {
      return a + (b - a) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    };
    double worst = 0.0;
    const double gammas[] = {0.5, 0.8, 1.0};
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 50);
      const double gamma = gammas[rng() % 3];
      std::vector<prosim::Bid> bids(n);
      for (auto& b : bids) {
        b.beta = uni(0.1, 2.0);
        b.alpha = b.beta * uni(-5.0, 25.0);
      }
      const auto res = prosim::market_clearing(bids, gamma);
      worst = std::max(worst,
                       std::abs(res.price - prosim::clearing_price_bisection(bids, gamma)));
      worst = std::max(worst, std::abs(res.excess_at_price));
    }
    check("market clearing matches bisection oracle", worst <= 1e-9, "max dev " + fmt(worst));
  }

  // A short default-configuration run: price-update identity, exact balance,
  // feasibility of every recorded state.
  try {
    prosim::ExperimentConfig cfg;
    if (!opts.config_path.empty()) cfg = prosim::load_config(opts.config_path);
    if (opts.seed) cfg.rng_seed = *opts.seed;
    cfg.iterations = opts.iterations.value_or(25);
    if (opts.parallel) cfg.parallel = true;
    cfg.validate();
    const auto pv = cfg.resolve_pv();
    const auto params = cfg.agent_params(pv);
    const auto net = cfg.network_params();
    const auto mech = cfg.mechanism_config();
    const auto records = prosim::run_lfsda(params, net, mech);

    // Each record carries the cleared price plus the step and pre-clearing
    // imbalance of the clearing that produced it; the price it was cleared
    // from sits in the previous record.
    double lemma_dev = 0.0, balance_dev = 0.0;
    for (size_t k = 0; k < records.size(); ++k)
      for (int t = 0; t < cfg.slots; ++t) {
        const double prev = k == 0 ? cfg.initial_price : records[k - 1].prices[t];
        const double predicted =
            prev - records[k].theta_bar[t] * records[k].subproblem_imbalance[t];
        lemma_dev = std::max(lemma_dev, std::abs(records[k].prices[t] - predicted));
      }
    for (const auto& rec : records) balance_dev = std::max(balance_dev, max_abs(rec.imbalance));
    check("auction price update equals subgradient step", lemma_dev <= 1e-9,
          "max dev " + fmt(lemma_dev));
    check("auction balance is exact", balance_dev <= 1e-9, "max dev " + fmt(balance_dev));

    bool feasible = true;
    std::string where;
    for (const auto& rec : records)
      for (int i = 0; i < cfg.agents && feasible; ++i) {
        const auto report = prosim::check_feasible(rec.states[i], params[i], 1e-8);
        if (!report.feasible()) {
          feasible = false;
          where = "iteration " + std::to_string(rec.iteration) + ", agent " + std::to_string(i) +
                  ", " + report.violations[0].constraint;
        }
      }
    check("all recorded states feasible at 1e-8", feasible, where);
  } catch (const std::exception& e) {
    check("auction run completes", false, e.what());
  }

  // Config serialization round-trip.
  try {
    prosim::ExperimentConfig cfg;
    cfg.rng_seed = 7;
    cfg.pv_peak_mean = 0.11;
    const auto back = prosim::parse_config(prosim::serialize_config(cfg));
    check("config round-trip", prosim::serialize_config(back) == prosim::serialize_config(cfg));
  } catch (const std::exception& e) {
    check("config round-trip", false, e.what());
  }

  if (failures) {
    std::cout << failures << " check(s) failed\n";
    return kExitVerifyFailed;
  }
  std::cout << "all checks passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regional prosumer market simulator"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* cmd_run = app.add_subcommand("run", "run all four conditions and write the full report");
  auto* cmd_lfsda = app.add_subcommand("lfsda", "run the double-auction mechanism");
  auto* cmd_rtp = app.add_subcommand("rtp", "run the subgradient pricing baseline");
  auto* cmd_baseline = app.add_subcommand("baseline", "run the without-trading benchmark");
  auto* cmd_optimal = app.add_subcommand("optimal", "run the centralized reference solve");
  auto* cmd_gen_pv = app.add_subcommand("gen-pv", "write the synthetic PV profiles to CSV");
  auto* cmd_verify = app.add_subcommand("verify", "run the built-in self-checks");
  for (auto* cmd : {cmd_run, cmd_lfsda, cmd_rtp, cmd_baseline, cmd_optimal, cmd_gen_pv, cmd_verify})
    add_common(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitConfig : kExitOk;
  }

  try {
    if (cmd_run->parsed()) return run_full(opts);
    if (cmd_lfsda->parsed()) return run_mechanism(opts, "lfsda");
    if (cmd_rtp->parsed()) return run_mechanism(opts, "rtp");
    if (cmd_baseline->parsed()) return run_mechanism(opts, "without_trading");
    if (cmd_optimal->parsed()) return run_optimal(opts);
    if (cmd_gen_pv->parsed()) return run_gen_pv(opts);
    if (cmd_verify->parsed()) return run_verify(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
