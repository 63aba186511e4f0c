// PV generation profiles: CSV ingestion and a seeded synthetic generator.
#ifndef PROSIM_PV_HPP
#define PROSIM_PV_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace prosim {

/// T x N matrix of per-slot generation caps l_i^{t-,max}.
struct PvProfileSet {
  int slots = 0;
  int agents = 0;
  std::vector<double> values;  // row-major [slot][agent]

  double at(int t, int i) const { return values[static_cast<size_t>(t) * agents + i]; }
  double& at(int t, int i) { return values[static_cast<size_t>(t) * agents + i]; }
  std::vector<double> agent_profile(int i) const;
};

/// Parses `slot,agent_1,...,agent_N` CSV with T data rows. Validation errors
/// (negative entries, ragged rows, dimension mismatches) name the offending
/// row/column in the exception message.
PvProfileSet load_pv_csv(const std::string& path, int expected_slots = -1,
                         int expected_agents = -1);

/// Deterministic synthetic profiles. Each agent owns panels with probability
/// `ownership`; owners get a per-agent amplitude a_i drawn uniformly from
/// [peak_mean - peak_spread, peak_mean + peak_spread] scaling a midday bell
/// a_i * exp(-(t - t_peak)^2 / (2 sigma^2)); non-owners get an all-zero
/// profile. Exactly zero outside the daylight window
/// [daylight_first, daylight_last] (0-based slots).
PvProfileSet generate_pv_synthetic(std::uint64_t seed, int agents, int slots,
                                   double peak_mean, double peak_spread,
                                   int daylight_first = 6, int daylight_last = 17,
                                   double t_peak = 11.5, double sigma = 2.5,
                                   double ownership = 1.0);

void write_pv_csv(const PvProfileSet& pv, const std::string& path);

}  // namespace prosim

#endif
