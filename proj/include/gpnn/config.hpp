#pragma once

// Run configuration: sectioned key-value files, defaults, validation, and the
// JSON sidecar recording a synthetic spec next to a generated graph file.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "gpnn/model.hpp"
#include "gpnn/synth.hpp"
#include "gpnn/train.hpp"

namespace gpnn {

/// Bad key, bad value or failed validation; the message names the key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::filesystem::path train;    ///< graph file; empty = generate from [synth]
  std::filesystem::path test;     ///< graph file; empty = split off the training data
  std::size_t train_scenes = 0;   ///< split point when `test` is empty; 0 = 80 %
};

struct RunConfig {
  TaskKind task = TaskKind::spatial_detection;
  std::uint64_t seed = 0;  ///< model init and shuffling
  SynthSpec synth;
  DataConfig data;
  // dims and heads come from the data; the rest of the model is configured here
  std::size_t iterations = 3;
  LinkKind link = LinkKind::edge_mlp;
  std::vector<std::size_t> link_sizes{128, 128, 1};
  StructureMode mode = StructureMode::joint_iterative;
  OptimizerConfig optimizer;
  LossConfig loss;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
/// Every key with its current value, in the format parse_config reads.
void write_config(std::ostream& out, const RunConfig& cfg);

/// Ranges, S ≥ 1, and existence of referenced files.
void validate_config(const RunConfig& cfg);

ModelConfig model_config(const RunConfig& cfg, const Dataset& data);
TrainConfig train_config(const RunConfig& cfg, std::size_t workers = 1);

/// Training and test data as the config describes them (generated or loaded).
std::pair<Dataset, Dataset> load_data(const RunConfig& cfg);

std::string synth_spec_json(const SynthSpec& spec);
SynthSpec parse_synth_spec_json(const std::string& text);

}  // namespace gpnn
