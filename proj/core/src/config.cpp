#include "prosim/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace prosim {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': cannot parse number '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': cannot parse integer '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': cannot parse unsigned '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::runtime_error("config: key '" + key + "': expected true/false, got '" + v + "'");
}

std::string to_string_value(const std::string& key, const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (!v.empty() && (v.front() == '"' || v.back() == '"'))
    throw std::runtime_error("config: key '" + key + "': unbalanced quotes in '" + v + "'");
  return v;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
  if (agents < 1) fail("agents must be >= 1");
  if (slots < 1) fail("slots must be >= 1");
  if (gamma < 0.0 || gamma > 1.0) fail("gamma must be in [0,1]");
  if (eta < 0.0 || eta > 1.0) fail("eta must be in [0,1]");
  if (b_plus_max < 0.0 || b_minus_max < 0.0) fail("battery caps must be >= 0");
  if (m_plus_max < 0.0 || m_minus_max < 0.0) fail("market caps must be >= 0");
  if (g_minus_max < 0.0) fail("g_minus_max must be >= 0");
  if (l_plus_min < 0.0) fail("l_plus_min must be >= 0");
  if (s_max < 0.0) fail("s_max must be >= 0");
  if (s_init < 0.0 || s_init > s_max) fail("s_init must be in [0, s_max]");
  if (p_grid_sell < 0.0 || p_grid_buy < p_grid_sell)
    fail("need 0 <= p_grid_sell <= p_grid_buy (rules out grid resale arbitrage)");
  if (utility_theta <= 0.0) fail("utility_theta must be > 0");
  if (gen_cost_b < 0.0) fail("gen_cost_b must be >= 0");
  if (beta <= 0.0) fail("beta must be > 0");
  if (theta_k <= 0.0) fail("theta_k must be > 0");
  if (iterations < 1) fail("iterations must be >= 1");
  if (price_tol < 0.0) fail("price_tol must be >= 0");
  if (kkt_tol <= 0.0) fail("kkt_tol must be > 0");
  if (feas_tol <= 0.0) fail("feas_tol must be > 0");
  if (pv_peak_mean < 0.0 || pv_peak_spread < 0.0 || pv_peak_spread > pv_peak_mean)
    fail("need 0 <= pv_peak_spread <= pv_peak_mean");
  if (pv_sigma <= 0.0) fail("pv_sigma must be > 0");
  if (pv_ownership < 0.0 || pv_ownership > 1.0) fail("pv_ownership must be in [0,1]");
  if (pv_source.empty()) fail("pv_source must be 'synthetic' or a CSV path");
  if (output_dir.empty()) fail("output_dir must be nonempty");
}

std::vector<AgentParams> ExperimentConfig::agent_params(const PvProfileSet& pv) const {
  if (pv.slots != slots || pv.agents != agents)
    throw std::runtime_error("config: PV profile set is " + std::to_string(pv.slots) + "x" +
                             std::to_string(pv.agents) + ", experiment needs " +
                             std::to_string(slots) + "x" + std::to_string(agents));
  std::vector<AgentParams> out(agents);
  for (int i = 0; i < agents; ++i) {
    AgentParams& a = out[i];
    a.l_plus_min = l_plus_min;
    a.l_minus_max = pv.agent_profile(i);
    a.b_plus_max = b_plus_max;
    a.b_minus_max = b_minus_max;
    a.m_plus_max = m_plus_max;
    a.m_minus_max = m_minus_max;
    a.g_minus_max = g_minus_max;
    a.s_max = s_max;
    a.s_init = s_init;
    a.eta = eta;
    a.utility_omega.assign(slots, utility_omega);
    a.utility_theta.assign(slots, utility_theta);
    a.gen_cost_a = gen_cost_a;
    a.gen_cost_b = gen_cost_b;
    a.validate();
  }
  return out;
}

NetworkParams ExperimentConfig::network_params() const {
  NetworkParams net;
  net.gamma = gamma;
  net.p_grid_sell.assign(slots, p_grid_sell);
  net.p_grid_buy.assign(slots, p_grid_buy);
  net.agent_count = agents;
  net.validate();
  return net;
}

MechanismConfig ExperimentConfig::mechanism_config() const {
  MechanismConfig m;
  m.max_iterations = iterations;
  m.theta_k = theta_k;
  m.beta = beta;
  m.initial_price = initial_price;
  m.price_tol = price_tol;
  m.solver.kkt_tol = kkt_tol;
  m.solver.feas_tol = feas_tol;
  m.parallel = parallel;
  return m;
}

PvProfileSet ExperimentConfig::resolve_pv() const {
  if (pv_source == "synthetic")
    return generate_pv_synthetic(rng_seed, agents, slots, pv_peak_mean, pv_peak_spread, 6, 17,
                                 11.5, pv_sigma, pv_ownership);
  return load_pv_csv(pv_source, slots, agents);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::runtime_error("config: line " + std::to_string(lineno) + ": empty key or value");

    if (key == "agents") cfg.agents = to_int(key, val);
    else if (key == "slots") cfg.slots = to_int(key, val);
    else if (key == "gamma") cfg.gamma = to_double(key, val);
    else if (key == "eta") cfg.eta = to_double(key, val);
    else if (key == "b_plus_max") cfg.b_plus_max = to_double(key, val);
    else if (key == "b_minus_max") cfg.b_minus_max = to_double(key, val);
    else if (key == "s_init") cfg.s_init = to_double(key, val);
    else if (key == "s_max") cfg.s_max = to_double(key, val);
    else if (key == "m_plus_max") cfg.m_plus_max = to_double(key, val);
    else if (key == "m_minus_max") cfg.m_minus_max = to_double(key, val);
    else if (key == "g_minus_max") cfg.g_minus_max = to_double(key, val);
    else if (key == "l_plus_min") cfg.l_plus_min = to_double(key, val);
    else if (key == "p_grid_buy") cfg.p_grid_buy = to_double(key, val);
    else if (key == "p_grid_sell") cfg.p_grid_sell = to_double(key, val);
    else if (key == "utility_omega") cfg.utility_omega = to_double(key, val);
    else if (key == "utility_theta") cfg.utility_theta = to_double(key, val);
    else if (key == "gen_cost_a") cfg.gen_cost_a = to_double(key, val);
    else if (key == "gen_cost_b") cfg.gen_cost_b = to_double(key, val);
    else if (key == "beta") cfg.beta = to_double(key, val);
    else if (key == "theta_k") cfg.theta_k = to_double(key, val);
    else if (key == "initial_price") cfg.initial_price = to_double(key, val);
    else if (key == "iterations") cfg.iterations = to_int(key, val);
    else if (key == "price_tol") cfg.price_tol = to_double(key, val);
    else if (key == "kkt_tol") cfg.kkt_tol = to_double(key, val);
    else if (key == "feas_tol") cfg.feas_tol = to_double(key, val);
    else if (key == "rng_seed") cfg.rng_seed = to_u64(key, val);
    else if (key == "pv_source") cfg.pv_source = to_string_value(key, val);
    else if (key == "pv_peak_mean") cfg.pv_peak_mean = to_double(key, val);
    else if (key == "pv_peak_spread") cfg.pv_peak_spread = to_double(key, val);
    else if (key == "pv_sigma") cfg.pv_sigma = to_double(key, val);
    else if (key == "pv_ownership") cfg.pv_ownership = to_double(key, val);
    else if (key == "output_dir") cfg.output_dir = to_string_value(key, val);
    else if (key == "parallel") cfg.parallel = to_bool(key, val);
    else
      throw std::runtime_error("config: line " + std::to_string(lineno) + ": unknown key '" +
                               key + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "agents = " << cfg.agents << "\n"
      << "slots = " << cfg.slots << "\n"
      << "gamma = " << fmt(cfg.gamma) << "\n"
      << "eta = " << fmt(cfg.eta) << "\n"
      << "b_plus_max = " << fmt(cfg.b_plus_max) << "\n"
      << "b_minus_max = " << fmt(cfg.b_minus_max) << "\n"
      << "s_init = " << fmt(cfg.s_init) << "\n"
      << "s_max = " << fmt(cfg.s_max) << "\n"
      << "m_plus_max = " << fmt(cfg.m_plus_max) << "\n"
      << "m_minus_max = " << fmt(cfg.m_minus_max) << "\n"
      << "g_minus_max = " << fmt(cfg.g_minus_max) << "\n"
      << "l_plus_min = " << fmt(cfg.l_plus_min) << "\n"
      << "p_grid_buy = " << fmt(cfg.p_grid_buy) << "\n"
      << "p_grid_sell = " << fmt(cfg.p_grid_sell) << "\n"
      << "utility_omega = " << fmt(cfg.utility_omega) << "\n"
      << "utility_theta = " << fmt(cfg.utility_theta) << "\n"
      << "gen_cost_a = " << fmt(cfg.gen_cost_a) << "\n"
      << "gen_cost_b = " << fmt(cfg.gen_cost_b) << "\n"
      << "beta = " << fmt(cfg.beta) << "\n"
      << "theta_k = " << fmt(cfg.theta_k) << "\n"
      << "initial_price = " << fmt(cfg.initial_price) << "\n"
      << "iterations = " << cfg.iterations << "\n"
      << "price_tol = " << fmt(cfg.price_tol) << "\n"
      << "kkt_tol = " << fmt(cfg.kkt_tol) << "\n"
      << "feas_tol = " << fmt(cfg.feas_tol) << "\n"
      << "rng_seed = " << cfg.rng_seed << "\n"
      << "pv_source = \"" << cfg.pv_source << "\"\n"
      << "pv_peak_mean = " << fmt(cfg.pv_peak_mean) << "\n"
      << "pv_peak_spread = " << fmt(cfg.pv_peak_spread) << "\n"
      << "pv_sigma = " << fmt(cfg.pv_sigma) << "\n"
      << "pv_ownership = " << fmt(cfg.pv_ownership) << "\n"
      << "output_dir = \"" << cfg.output_dir << "\"\n"
      << "parallel = " << (cfg.parallel ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace prosim
