#pragma once

// End-to-end runs on top of a RunConfig: training with a per-epoch metrics log,
// and the ablation harness comparing model variants under one budget.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpnn/checkpoint.hpp"
#include "gpnn/config.hpp"

namespace gpnn {

struct ExperimentResult {
  std::vector<EpochStats> epochs;
  EvalReport test;
  double initial_loss = 0.0;  ///< mean training loss before this run's first epoch
  NamedTensors checkpoint;    ///< final parameters and optimizer state
};

/// Trains `model` up to cfg.optimizer.epochs and evaluates on `test`. When `log`
/// is given, writes one CSV row per epoch; a fresh run also logs epoch 0, the
/// untrained model. `resume` continues from a checkpoint's training state.
ExperimentResult run_experiment(GpnnModel& model, const RunConfig& cfg, const Dataset& train,
                                const Dataset& test, std::size_t workers = 1, std::ostream* log = nullptr,
                                const NamedTensors* resume = nullptr);

/// Variant names: full, no_graph, constant_graph, no_graph_loss, no_joint_parsing, s1, s2, s3, s4.
const std::vector<std::string>& ablation_variants();
/// `base` with one variant applied; throws std::invalid_argument on an unknown name.
RunConfig apply_variant(RunConfig base, const std::string& variant);

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  double metric = 0.0;         ///< primary metric on the test split
  double adjacency_auc = 0.0;  ///< NaN when undefined
  double final_loss = 0.0;
};

struct AblationSummary {
  std::string variant;
  std::string aspect;
  std::string method;
  double mean = 0.0;
  double stddev = 0.0;  ///< population standard deviation over seeds
  double auc_mean = 0.0;
};

struct AblationTable {
  std::vector<AblationRun> runs;
  std::vector<AblationSummary> rows;  ///< one per variant, in suite order

  const AblationSummary& row(const std::string& variant) const;
};

/// Trains every variant on every seed. Per seed, the run seed is set and, for
/// generated data, the synthetic seed is derived from it so that all variants
/// of one seed see identical data.
AblationTable run_ablation(const std::vector<std::string>& suite, const RunConfig& base,
                           const std::vector<std::uint64_t>& seeds, std::size_t workers = 1);

/// aspect,method,variant,seeds,metric_mean,metric_std,adjacency_auc_mean
void write_ablation_csv(std::ostream& out, const AblationTable& table);
/// variant,seed,metric,adjacency_auc,final_loss
void write_ablation_runs_csv(std::ostream& out, const AblationTable& table);

}  // namespace gpnn
