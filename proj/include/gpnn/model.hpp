#pragma once

// Graph parsing network forward pass: pairwise feature grid, soft adjacency
// inference, adjacency-weighted message aggregation, GRU node updates over S
// iterations, and per-node readout heads.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gpnn/layers.hpp"
#include "gpnn/scene.hpp"

namespace gpnn {

enum class StructureMode {
  joint_iterative,     ///< re-infer A at every iteration from updated states
  static_structure,    ///< infer A once from raw features, reuse for all s
  constant_structure,  ///< A ≡ 1
  no_graph,            ///< readouts applied directly to node features
};

enum class LinkKind { edge_mlp, conv_lstm };

std::string to_string(StructureMode m);
std::string to_string(LinkKind k);
StructureMode parse_structure_mode(const std::string& s);
LinkKind parse_link_kind(const std::string& s);

struct ModelConfig {
  std::size_t node_dim = 0;  ///< d_V; also the hidden-state size
  std::size_t edge_dim = 0;  ///< d_E
  std::size_t iterations = 3;
  LinkKind link = LinkKind::edge_mlp;
  std::vector<std::size_t> link_sizes{128, 128, 1};
  StructureMode mode = StructureMode::joint_iterative;
  std::vector<HeadSpec> heads;
  std::uint64_t seed = 0;

  /// d_M: two node transforms and one edge transform, concatenated.
  std::size_t message_dim() const { return 2 * node_dim + edge_dim; }
  /// Link input width; the first iteration's d_E-wide pair channel is zero-padded to d_M.
  std::size_t link_channels() const { return 2 * node_dim + message_dim(); }
  const HeadSpec& head(const std::string& name) const;
  void validate() const;
};

class GpnnModel {
 public:
  explicit GpnnModel(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& parameters() noexcept { return params_; }
  const ParameterStore& parameters() const noexcept { return params_; }

  const EdgeMlp& link_mlp() const noexcept { return link_mlp_; }
  const ConvLstmCell& link_lstm() const noexcept { return link_lstm_; }
  const Linear& message_node() const noexcept { return message_node_; }
  const Linear& message_edge() const noexcept { return message_edge_; }
  const GruCell& update() const noexcept { return update_; }
  const std::vector<Linear>& readouts() const noexcept { return readouts_; }

 private:
  ModelConfig config_;
  ParameterStore params_;
  EdgeMlp link_mlp_;
  ConvLstmCell link_lstm_;
  Linear message_node_;
  Linear message_edge_;
  GruCell update_;
  std::vector<Linear> readouts_;
};

/// Per-iteration convLSTM link state, indexed by iteration s−1.
struct TemporalLinkState {
  std::vector<ConvLstmState> per_iteration;
};

struct ParseGraphState {
  std::size_t iteration = 0;  ///< s of the most recent completed update
  Var hidden;                 ///< h^s, [n, d_V]
  Var messages;               ///< raw per-edge messages M^s, [n, n, d_M]; unset before s = 1
  Var adjacency;              ///< A^s, [n, n]
  Var first_adjacency;        ///< A^1, reused by the static-structure mode
};

struct ParseResult {
  Var adjacency;                     ///< A^S; unset in no_graph mode
  std::vector<Var> adjacency_trace;  ///< A^1 .. A^S
  std::vector<Var> hidden_trace;     ///< h^0 .. h^S
  std::vector<Var> outputs;          ///< one [n, classes] per head, config order

  /// Output of a head by index, as a plain tensor.
  const Tensor& output(std::size_t head) const { return outputs.at(head).value(); }
};

/// cell(v, w) = concat(h_v, h_w, pair_vw), zero-padded to `width` (0 = no padding).
Var build_feature_grid(Var hidden, Var pair_channel, std::size_t width = 0);

/// Computes A^{s} for s = state.iteration + 1. `edge_features` feeds the pair
/// channel at s = 1. The convLSTM link needs `temporal`.
Var infer_adjacency(const GpnnModel& model, const BoundParameters& p, ParseGraphState& state,
                    Var edge_features, TemporalLinkState* temporal);

/// Raw messages M_vw = [W_V h_v, W_V h_w, W_E Γ_vw] are stored in the state;
/// returns m_v = Σ_{w≠v} A_vw M_vw using state.adjacency.
Var aggregate_messages(const GpnnModel& model, const BoundParameters& p, ParseGraphState& state,
                       Var edge_features);

/// Full S-iteration parse. `temporal` carries convLSTM link state between
/// frames; when null, a convLSTM link starts from a fresh zero state.
ParseResult parse(const GpnnModel& model, const BoundParameters& p, const SceneGraph& scene,
                  TemporalLinkState* temporal = nullptr);

/// Frame-by-frame parse carrying the convLSTM link state across frames.
std::vector<ParseResult> parse_sequence(const GpnnModel& model, const BoundParameters& p,
                                        const Sequence& frames);

/// y_human[k] · y_object[k] for one head.
double pair_score(const ParseResult& result, const SceneGraph& scene, std::size_t human,
                  std::size_t object, std::size_t head, std::size_t cls);

}  // namespace gpnn
