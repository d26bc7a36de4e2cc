#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpnn/tensor.hpp"

namespace gpnn {

enum class NodeKind : std::uint8_t { human = 0, object = 1 };

/// Axis-aligned rectangle, (x1, y1) top-left and (x2, y2) bottom-right.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 > x1 && y2 > y1) ? (x2 - x1) * (y2 - y1) : 0.0; }
  bool operator==(const Box&) const = default;
};

enum class Activation : std::uint8_t { sigmoid = 0, softmax = 1 };
/// Which nodes a readout head is trained and evaluated on.
enum class NodeScope : std::uint8_t { all = 0, human = 1, object = 2 };

struct HeadSpec {
  std::string name;
  std::size_t classes = 0;
  Activation activation = Activation::sigmoid;
  NodeScope scope = NodeScope::all;

  bool operator==(const HeadSpec&) const = default;
};

bool in_scope(NodeScope scope, NodeKind kind);
std::string to_string(Activation a);
std::string to_string(NodeScope s);
std::string to_string(NodeKind k);

/// A labelled human-object interaction.
struct Interaction {
  std::size_t human = 0;
  std::size_t object = 0;
  std::size_t cls = 0;

  bool operator==(const Interaction&) const = default;
};

/// One complete HOI graph: every ordered node pair (including (v, v)) carries
/// an edge feature vector.
struct SceneGraph {
  Tensor node_features;  ///< [n, d_V]
  Tensor edge_features;  ///< [n, n, d_E]
  std::vector<NodeKind> kinds;
  std::optional<Tensor> gt_adjacency;   ///< [n, n], symmetric, {0,1}, zero diagonal
  std::map<std::string, Tensor> gt_labels;  ///< head name -> [n, classes] multi/one-hot
  std::vector<Interaction> interactions;
  std::vector<Box> boxes;  ///< empty, or one per node

  std::size_t node_count() const { return kinds.size(); }
  std::size_t node_dim() const { return node_features.dim(1); }
  std::size_t edge_dim() const { return edge_features.dim(2); }
  std::vector<std::size_t> nodes_in(NodeScope scope) const;

  /// Throws DimensionError / std::invalid_argument on malformed content.
  void validate() const;

  bool operator==(const SceneGraph&) const = default;
};

/// Time-ordered frames sharing node identities. Static scenes have one frame.
using Sequence = std::vector<SceneGraph>;

void validate_sequence(const Sequence& frames);

}  // namespace gpnn
