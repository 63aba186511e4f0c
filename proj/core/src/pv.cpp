#include "prosim/pv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace prosim {

namespace {

// Uniform double in [0,1) from the raw 64-bit stream; avoids the
// implementation-defined std::uniform_real_distribution so the generated
// profiles are identical across standard libraries.
double next_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

std::vector<double> PvProfileSet::agent_profile(int i) const {
  std::vector<double> out(slots);
  for (int t = 0; t < slots; ++t) out[t] = at(t, i);
  return out;
}

PvProfileSet load_pv_csv(const std::string& path, int expected_slots, int expected_agents) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pv_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_pv_csv: '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "slot")
    throw std::runtime_error("load_pv_csv: header must be 'slot,agent_1,...' in '" + path + "'");
  const int agents = static_cast<int>(header.size()) - 1;
  if (expected_agents > 0 && agents != expected_agents)
    throw std::runtime_error("load_pv_csv: expected " + std::to_string(expected_agents) +
                             " agent columns, found " + std::to_string(agents));

  PvProfileSet pv;
  pv.agents = agents;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != agents + 1)
      throw std::runtime_error("load_pv_csv: row " + std::to_string(row) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(agents + 1));
    for (int i = 1; i <= agents; ++i) {
      double v;
      try {
        size_t pos = 0;
        v = std::stod(fields[i], &pos);
        if (pos != fields[i].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::runtime_error("load_pv_csv: row " + std::to_string(row) + ", column '" +
                                 header[i] + "': cannot parse '" + fields[i] + "'");
      }
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::runtime_error("load_pv_csv: row " + std::to_string(row) + ", column '" +
                                 header[i] + "': value must be finite and >= 0, got '" +
                                 fields[i] + "'");
      pv.values.push_back(v);
    }
  }
  pv.slots = row;
  if (pv.slots < 1) throw std::runtime_error("load_pv_csv: no data rows in '" + path + "'");
  if (expected_slots > 0 && pv.slots != expected_slots)
    throw std::runtime_error("load_pv_csv: expected " + std::to_string(expected_slots) +
                             " data rows, found " + std::to_string(pv.slots));
  return pv;
}

PvProfileSet generate_pv_synthetic(std::uint64_t seed, int agents, int slots, double peak_mean,
                                   double peak_spread, int daylight_first, int daylight_last,
                                   double t_peak, double sigma, double ownership) {
  if (agents < 1 || slots < 1)
    throw std::invalid_argument("generate_pv_synthetic: agents and slots must be >= 1");
  if (peak_mean < 0.0 || peak_spread < 0.0 || peak_spread > peak_mean)
    throw std::invalid_argument(
        "generate_pv_synthetic: need 0 <= peak_spread <= peak_mean (caps must stay >= 0)");
  if (ownership < 0.0 || ownership > 1.0)
    throw std::invalid_argument("generate_pv_synthetic: ownership must be in [0,1]");
  std::mt19937_64 rng(seed);
  std::vector<double> amplitude(agents);
  for (int i = 0; i < agents; ++i) {
    // Two draws per agent regardless of the outcome, so the profiles of
    // panel-owning agents do not depend on the ownership fraction.
    const double owns = next_uniform(rng);
    const double amp = peak_mean + peak_spread * (2.0 * next_uniform(rng) - 1.0);
    amplitude[i] = owns < ownership ? amp : 0.0;
  }

  PvProfileSet pv;
  pv.slots = slots;
  pv.agents = agents;
  pv.values.assign(static_cast<size_t>(slots) * agents, 0.0);
  for (int t = 0; t < slots; ++t) {
    if (t < daylight_first || t > daylight_last) continue;
    const double z = (static_cast<double>(t) - t_peak) / sigma;
    const double bell = std::exp(-0.5 * z * z);
    for (int i = 0; i < agents; ++i) pv.at(t, i) = amplitude[i] * bell;
  }
  return pv;
}

void write_pv_csv(const PvProfileSet& pv, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw std::runtime_error("write_pv_csv: cannot open '" + path + "' for writing");
  out << "slot";
  for (int i = 1; i <= pv.agents; ++i) out << ",agent_" << i;
  out << "\n";
  char buf[32];
  for (int t = 0; t < pv.slots; ++t) {
    out << t + 1;
    for (int i = 0; i < pv.agents; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", pv.at(t, i));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_pv_csv: write failed for '" + path + "'");
}

}  // namespace prosim
