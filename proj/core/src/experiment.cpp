#include "prosim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "prosim/feasibility.hpp"
#include "prosim/welfare.hpp"

namespace prosim {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double max_abs(const Profile& p) {
  double m = 0.0;
  for (double v : p) m = std::max(m, std::abs(v));
  return m;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw std::runtime_error("experiment: cannot open '" + path.string() + "' for writing");
  return out;
}

void write_iteration_rows(std::ofstream& out, const std::string& condition,
                          const std::vector<IterationRecord>& records) {
  for (const IterationRecord& rec : records) {
    out << rec.iteration << ',' << condition << ',' << fmt(rec.social_welfare) << ','
        << fmt(rec.welfare_after_compensation) << ',' << fmt(max_abs(rec.imbalance)) << ','
        << fmt(rec.dual_value);
    for (double p : rec.prices) out << ',' << fmt(p);
    out << '\n';
  }
}

}  // namespace

ExperimentResult run_all_conditions(const ExperimentConfig& cfg) {
  cfg.validate();
  const PvProfileSet pv = cfg.resolve_pv();
  const auto params = cfg.agent_params(pv);
  const NetworkParams net = cfg.network_params();
  const MechanismConfig mech = cfg.mechanism_config();

  ExperimentResult result;
  auto attempt = [&](const char* name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      result.failures.push_back(std::string(name) + ": " + e.what());
    }
  };
  attempt("lfsda", [&] { result.lfsda = run_lfsda(params, net, mech); });
  attempt("rtp", [&] { result.rtp = run_rtp(params, net, mech); });
  attempt("without_trading", [&] { result.without_trading = run_without_trading(params, net, mech); });
  attempt("optimal", [&] { result.optimal = solve_centralized_optimal(params, net, mech); });
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result = run_all_conditions(cfg);

  const PvProfileSet pv = cfg.resolve_pv();
  const auto params = cfg.agent_params(pv);
  const NetworkParams net = cfg.network_params();
  const int T = cfg.slots;
  const int n = cfg.agents;

  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  // Per-iteration trace of every condition.
  {
    auto out = open_out(dir / "iterations.csv");
    out << "iteration,condition,social_welfare,welfare_after_compensation,max_imbalance,dual_value";
    for (int t = 1; t <= T; ++t) out << ",price_" << t;
    out << '\n';
    write_iteration_rows(out, "lfsda", result.lfsda);
    write_iteration_rows(out, "rtp", result.rtp);
    write_iteration_rows(out, "without_trading", result.without_trading);
  }

  const IterationRecord* lf = result.lfsda.empty() ? nullptr : &result.lfsda.back();
  const IterationRecord* wt = result.without_trading.empty() ? nullptr : &result.without_trading.back();
  const IterationRecord* rt = result.rtp.empty() ? nullptr : &result.rtp.back();

  // Individual benefit of market participation: final auction welfare per
  // agent against the no-trading benchmark. The ratio cell is left empty when
  // the benchmark is (numerically) zero.
  {
    auto out = open_out(dir / "welfare_ratio.csv");
    out << "agent,welfare_lfsda,welfare_without_trading,ratio,difference\n";
    for (int i = 0; i < n; ++i) {
      double w_lf = 0.0, w_wt = 0.0;
      if (lf) w_lf = agent_welfare(lf->states[i], lf->prices, params[i], net).total();
      if (wt) w_wt = agent_welfare(wt->states[i], wt->prices, params[i], net).total();
      out << i + 1 << ',' << fmt(w_lf) << ',' << fmt(w_wt) << ',';
      if (std::abs(w_wt) >= 1e-12) out << fmt(w_lf / w_wt);
      out << ',' << fmt(w_lf - w_wt) << '\n';
    }
  }

  // Final consumption per agent and slot under each condition.
  {
    auto out = open_out(dir / "consumption.csv");
    out << "condition,agent";
    for (int t = 1; t <= T; ++t) out << ",l_plus_" << t;
    out << '\n';
    auto dump = [&](const char* name, const std::vector<AgentState>& states) {
      for (int i = 0; i < static_cast<int>(states.size()); ++i) {
        out << name << ',' << i + 1;
        for (int t = 0; t < T; ++t) out << ',' << fmt(states[i].l_plus[t]);
        out << '\n';
      }
    };
    if (lf) dump("lfsda", lf->states);
    if (rt) dump("rtp", rt->states);
    if (wt) dump("without_trading", wt->states);
    if (!result.optimal.states.empty()) dump("optimal", result.optimal.states);
  }

  // Plot-ready series: welfare trajectories and final price profiles.
  {
    auto out = open_out(dir / "welfare_series.csv");
    out << "iteration,lfsda,rtp,rtp_after_compensation\n";
    const size_t rows = std::max(result.lfsda.size(), result.rtp.size());
    for (size_t k = 0; k < rows; ++k) {
      out << k << ',';
      if (k < result.lfsda.size()) out << fmt(result.lfsda[k].social_welfare);
      out << ',';
      if (k < result.rtp.size()) out << fmt(result.rtp[k].social_welfare);
      out << ',';
      if (k < result.rtp.size()) out << fmt(result.rtp[k].welfare_after_compensation);
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "price_series.csv");
    out << "slot,lfsda,rtp,optimal\n";
    for (int t = 0; t < T; ++t) {
      out << t + 1 << ',';
      if (lf) out << fmt(lf->prices[t]);
      out << ',';
      if (rt) out << fmt(rt->prices[t]);
      out << ',';
      if (!result.optimal.prices.empty()) out << fmt(result.optimal.prices[t]);
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "imbalance_series.csv");
    out << "iteration,lfsda_max_imbalance,rtp_max_imbalance\n";
    const size_t rows = std::max(result.lfsda.size(), result.rtp.size());
    for (size_t k = 0; k < rows; ++k) {
      out << k << ',';
      if (k < result.lfsda.size()) out << fmt(max_abs(result.lfsda[k].imbalance));
      out << ',';
      if (k < result.rtp.size()) out << fmt(max_abs(result.rtp[k].imbalance));
      out << '\n';
    }
  }

  // Flat summary.
  {
    auto out = open_out(dir / "summary.json");
    out << "{\n";
    auto num = [&](const char* key, double v, bool comma = true) {
      out << "  \"" << key << "\": " << fmt(v) << (comma ? ",\n" : "\n");
    };
    out << "  \"agents\": " << n << ",\n";
    out << "  \"slots\": " << T << ",\n";
    out << "  \"seed\": " << cfg.rng_seed << ",\n";
    num("gamma", cfg.gamma);
    num("eta", cfg.eta);
    num("beta", cfg.beta);
    num("theta_k", cfg.theta_k);
    num("initial_price", cfg.initial_price);
    out << "  \"iterations\": " << cfg.iterations << ",\n";
    out << "  \"lfsda_iterations\": " << result.lfsda.size() << ",\n";
    out << "  \"rtp_iterations\": " << result.rtp.size() << ",\n";
    out << "  \"optimal_iterations\": " << result.optimal.iterations << ",\n";
    num("welfare_lfsda", lf ? lf->social_welfare : 0.0);
    num("welfare_rtp", rt ? rt->social_welfare : 0.0);
    num("welfare_rtp_after_compensation", rt ? rt->welfare_after_compensation : 0.0);
    num("welfare_without_trading", wt ? wt->social_welfare : 0.0);
    num("welfare_optimal", result.optimal.welfare);
    num("dual_bound", result.optimal.dual_bound);
    num("duality_gap", result.optimal.duality_gap);
    num("lfsda_max_imbalance", lf ? max_abs(lf->imbalance) : 0.0);
    num("rtp_max_imbalance", rt ? max_abs(rt->imbalance) : 0.0);
    out << "  \"failures\": " << result.failures.size() << "\n";
    out << "}\n";
  }

  if (!result.failures.empty()) {
    auto out = open_out(dir / "failure_manifest.txt");
    for (const std::string& f : result.failures) out << f << '\n';
  }
  return result;
}

}  // namespace prosim
