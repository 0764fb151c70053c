#pragma once

#include <string>
#include <vector>

#include "fclg/federated.hpp"

namespace fclg {

enum class PartitionMode { iid, noniid };

/// Everything a reproducible experiment needs. Validated before any compute.
struct ExperimentSpec {
  std::string dataset;
  std::string data_dir = "data";
  FLConfig config;
  PartitionMode partition_mode = PartitionMode::noniid;
  double dominant_fraction = -1.0;  // explicit fraction, or
  double target_emd = -1.0;         // calibrate to this EMD (tolerance 0.02)
  int runs = 1;
  std::string out_path;
  std::string export_path;  // when set: final-run embeddings, one row per graph
  bool force = false;       // overwrite an existing output file

  void validate() const;
};

struct ExperimentSummary {
  double accuracy_mean = 0.0;
  double accuracy_half_range = 0.0;
  double f1_mean = 0.0;
  double f1_half_range = 0.0;
  double emd = 0.0;
  double dominant_fraction = 0.0;
  std::vector<std::vector<RoundMetrics>> trajectories;  // per run
};

std::string config_hash(const ExperimentSpec& spec);

/// Runs the configured variant `runs` times with seeds seed, seed+1, ...
/// Emits one JSON record per (run, round) plus a final summary record to
/// `out_path` (line-delimited). Converged value = final-round metric.
ExperimentSummary run_experiment(const ExperimentSpec& spec);

enum class SweepAxis { target_emd, clients, local_epochs };
SweepAxis parse_sweep_axis(const std::string& name);

/// One run_experiment per value (shared base seed); writes per-value files
/// next to `spec.out_path` and an aggregate table.
std::vector<ExperimentSummary> sweep(const ExperimentSpec& spec, SweepAxis axis,
                                     const std::vector<double>& values);

}  // namespace fclg
