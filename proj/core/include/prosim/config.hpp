// Experiment configuration: defaults reproducing the reference setup, a flat
// TOML-style key = value file format, and expansion into solver inputs.
#ifndef PROSIM_CONFIG_HPP
#define PROSIM_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "prosim/mechanisms.hpp"
#include "prosim/pv.hpp"
#include "prosim/types.hpp"

namespace prosim {

struct ExperimentConfig {
  int agents = 20;
  int slots = 24;
  double gamma = 0.8;
  double eta = 0.7;
  double b_plus_max = 1.0;
  double b_minus_max = 1.0;
  double s_init = 0.0;
  double s_max = 5.0;
  double m_plus_max = 5.0;
  double m_minus_max = 5.0;
  double g_minus_max = 1000.0;  // grid purchases effectively uncapped
  double l_plus_min = 0.0;
  double p_grid_buy = 20.0;
  double p_grid_sell = 0.0;
  double utility_omega = 10.0;
  double utility_theta = 30.0;
  double gen_cost_a = 0.0;
  double gen_cost_b = 0.0;
  double beta = 0.5;           // (N * beta)^-1 = 0.1 at N = 20
  double theta_k = 0.1;
  double initial_price = 10.0;
  int iterations = 200;
  double price_tol = 1e-6;
  double kkt_tol = 1e-7;
  double feas_tol = 1e-9;
  std::uint64_t rng_seed = 0;
  std::string pv_source = "synthetic";  // "synthetic" or a CSV path
  // Rooftop-scale installations: about half the households own panels, and
  // owner amplitudes sit in a narrow band over an almost flat daylight plateau
  // (the bell is nearly constant at this sigma). Midday surplus is then
  // absorbed by the non-owners' direct consumption, owners stay net sellers
  // for the whole price descent, and the trader partition never churns.
  double pv_peak_mean = 0.12;
  double pv_peak_spread = 0.02;
  double pv_sigma = 50.0;
  double pv_ownership = 0.5;
  std::string output_dir = "out";
  bool parallel = false;

  void validate() const;

  std::vector<AgentParams> agent_params(const PvProfileSet& pv) const;
  NetworkParams network_params() const;
  MechanismConfig mechanism_config() const;
  PvProfileSet resolve_pv() const;  // loads the CSV or generates synthetic
};

/// Flat `key = value` file, one key per line, `#` comments, quoted strings.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace prosim

#endif
