#pragma once

// Minibatch training (SGD / Adam with step decay), dataset-level evaluation,
// and checkpointing of the full training state.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gpnn/eval.hpp"
#include "gpnn/losses.hpp"
#include "gpnn/synth.hpp"

namespace gpnn {

enum class TaskKind {
  spatial_detection,      ///< labels of the frame that is parsed
  temporal_recognition,   ///< same, frame by frame over a sequence
  temporal_anticipation,  ///< frame t−1 is parsed, frame t supplies the labels
};

std::string to_string(TaskKind t);
TaskKind parse_task_kind(const std::string& s);

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 1e-3;
  double decay = 0.8;
  std::size_t decay_every = 5;  ///< epochs
  std::size_t batch_size = 32;  ///< sequences per step
  std::size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// lr · decay^⌊epoch / decay_every⌋ for a zero-based epoch.
double scheduled_learning_rate(const OptimizerConfig& cfg, std::size_t epoch);

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const ParameterStore& params);

  void step(ParameterStore& params, const std::vector<Tensor>& grads, double lr);
  std::size_t steps() const noexcept { return steps_; }

  NamedTensors state(const ParameterStore& params) const;
  void load_state(const NamedTensors& tensors, const ParameterStore& params);

 private:
  OptimizerConfig cfg_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainConfig {
  TaskKind task = TaskKind::spatial_detection;
  OptimizerConfig optimizer;
  LossConfig loss;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  ///< threads computing per-sequence gradients
};

/// Inverse-frequency class weights for every sigmoid head without explicit weights.
void fill_class_weights(LossConfig& loss, const Dataset& train);

/// Which frame is parsed and which supplies labels.
std::vector<AnticipationPair> frame_pairs(const Sequence& seq, TaskKind task);

struct LabelTally {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct SequenceResult {
  double loss = 0.0;
  std::vector<Tensor> gradients;  ///< empty unless requested
  LabelTally tally;
};

/// Mean per-frame total loss of one sequence, with optional parameter gradients.
SequenceResult run_sequence(const GpnnModel& model, const Sequence& seq, TaskKind task,
                            const LossConfig& loss, bool with_gradients);

struct EpochStats {
  std::size_t epoch = 0;  ///< one-based after completion
  double learning_rate = 0.0;
  double loss = 0.0;      ///< mean over sequences, as seen during the epoch
  double accuracy = 0.0;  ///< training label accuracy during the epoch
};

class Trainer {
 public:
  Trainer(GpnnModel& model, TrainConfig cfg);

  EpochStats train_epoch(const Dataset& train);
  std::size_t epoch() const noexcept { return epoch_; }
  const TrainConfig& config() const noexcept { return cfg_; }

  /// Parameters, optimizer moments and progress counters.
  NamedTensors checkpoint() const;
  void restore(const NamedTensors& tensors);

 private:
  GpnnModel& model_;
  TrainConfig cfg_;
  Optimizer optimizer_;
  std::size_t epoch_ = 0;
};

struct HeadReport {
  HeadSpec head;
  F1Report f1;              ///< softmax heads
  ConfusionMatrix confusion;
  MapReport map;            ///< sigmoid heads with boxes and interactions
  bool has_map = false;
};

struct EvalReport {
  double loss = 0.0;
  double accuracy = 0.0;
  double adjacency_auc = 0.0;  ///< NaN when undefined (no graph, or single-class targets)
  std::vector<HeadReport> heads;
  std::size_t frames = 0;

  /// Macro-F1 of the first softmax head, else full mAP of the first sigmoid head.
  double primary_metric() const;
};

/// `training_counts` feeds the Rare / Non-rare split of sigmoid-head mAP; when
/// empty, counts from `data` itself are used.
EvalReport evaluate(const GpnnModel& model, const Dataset& data, TaskKind task, const LossConfig& loss,
                    const std::map<std::string, std::vector<std::size_t>>& training_counts = {});

/// Pair-score detections and ground-truth records of one sigmoid head.
void collect_detections(const ParseResult& result, const SceneGraph& frame, std::size_t head_index,
                        const std::string& image, std::vector<Detection>& detections,
                        std::vector<Detection>& ground_truth);

/// Number of workers requested through GPNN_WORKERS (default 1).
std::size_t workers_from_environment();

}  // namespace gpnn
