// Experiment orchestration: runs the four compared conditions and writes the
// CSV/JSON report files.
#ifndef PROSIM_EXPERIMENT_HPP
#define PROSIM_EXPERIMENT_HPP

#include <string>
#include <vector>

#include "prosim/config.hpp"
#include "prosim/mechanisms.hpp"

namespace prosim {

struct ExperimentResult {
  std::vector<IterationRecord> lfsda;
  std::vector<IterationRecord> rtp;
  std::vector<IterationRecord> without_trading;
  CentralizedResult optimal;
  std::vector<std::string> failures;  // nonempty when a sub-run aborted
};

/// Runs all four conditions. Failures of individual conditions are recorded
/// and the remaining conditions still run.
ExperimentResult run_all_conditions(const ExperimentConfig& cfg);

/// Runs the experiment and writes iterations.csv, welfare_ratio.csv,
/// consumption.csv, summary.json and per-figure series files under
/// cfg.output_dir. Returns the result; writes failure_manifest.txt when a
/// sub-run failed.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace prosim

#endif
