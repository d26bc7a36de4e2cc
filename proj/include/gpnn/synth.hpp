#pragma once

// Synthetic scene generators with planted ground-truth parse graphs, and the
// on-disk graph file format (layout in docs/graph_format.md).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpnn/binary_io.hpp"
#include "gpnn/scene.hpp"

namespace gpnn {

enum class SynthTask : std::uint8_t {
  /// Random human-object interactions with class prototypes in node and edge features.
  planted = 0,
  /// One human, one held tool, several targets; the human's label is the state of the
  /// target whose category matches the tool. Needs two hops of structured message passing.
  relay = 1,
  /// One human tracking a fixed target object over time; the interaction marker is only
  /// visible in some frames.
  sequence = 2,
};

std::string to_string(SynthTask t);
SynthTask parse_synth_task(const std::string& s);

struct SynthSpec {
  SynthTask task = SynthTask::planted;
  std::size_t scenes = 100;
  std::size_t min_nodes = 3;
  std::size_t max_nodes = 6;
  double human_ratio = 0.34;   ///< planted: expected share of human nodes
  std::size_t node_dim = 16;   ///< d_V; relay/sequence pad beyond their layout with noise
  std::size_t edge_dim = 8;    ///< d_E
  std::size_t classes = 6;     ///< Y (planted actions) or K (relay/sequence states)
  std::size_t categories = 4;  ///< relay: object categories
  double density = 0.3;        ///< planted: ρ, per human-object pair
  double noise = 0.1;          ///< σ_n
  std::size_t frames = 1;      ///< T
  double persistence = 0.9;    ///< p_stay
  double visibility = 0.3;     ///< sequence: chance the interaction marker shows in a frame
  double cue = 1.0;            ///< relay: contact-channel mean on the true human-target edge
  double cue_noise = 0.7;      ///< relay: contact-channel noise on every human-target edge
  std::uint64_t seed = 0;

  void validate() const;
  /// Minimum d_V / d_E the task layout needs.
  std::size_t required_node_dim() const;
  std::size_t required_edge_dim() const;
  std::vector<HeadSpec> heads() const;
};

struct Dataset {
  std::size_t node_dim = 0;
  std::size_t edge_dim = 0;
  std::vector<HeadSpec> heads;
  std::vector<Sequence> sequences;  ///< static scenes are one-frame sequences

  std::size_t frame_count() const;
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

Dataset generate(const SynthSpec& spec);

/// First `count` sequences and the remainder.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t count);

/// Per-class count of labelled positives of a head over a dataset's nodes.
std::vector<std::size_t> class_counts(const Dataset& data, const std::string& head);

inline constexpr std::uint32_t kGraphFileVersion = 1;

void write_graph_file(const std::filesystem::path& path, const Dataset& data);
Dataset read_graph_file(const std::filesystem::path& path);
void write_graph_stream(std::ostream& out, const Dataset& data);
Dataset read_graph_stream(std::istream& in);

}  // namespace gpnn
