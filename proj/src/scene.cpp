#include "gpnn/scene.hpp"

#include <stdexcept>

namespace gpnn {

bool in_scope(NodeScope scope, NodeKind kind) {
  switch (scope) {
    case NodeScope::all: return true;
    case NodeScope::human: return kind == NodeKind::human;
    case NodeScope::object: return kind == NodeKind::object;
  }
  return false;
}

std::string to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "softmax"; }

std::string to_string(NodeScope s) {
  switch (s) {
    case NodeScope::all: return "all";
    case NodeScope::human: return "human";
    case NodeScope::object: return "object";
  }
  return "?";
}

std::string to_string(NodeKind k) { return k == NodeKind::human ? "human" : "object"; }

std::vector<std::size_t> SceneGraph::nodes_in(NodeScope scope) const {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < kinds.size(); ++v)
    if (in_scope(scope, kinds[v])) out.push_back(v);
  return out;
}

void SceneGraph::validate() const {
  const std::size_t n = kinds.size();
  if (n == 0) throw std::invalid_argument("scene has no nodes");
  if (node_features.rank() != 2 || node_features.dim(0) != n)
    throw DimensionError("node features " + to_string(node_features.shape()) + " for " +
                         std::to_string(n) + " nodes");
  if (edge_features.rank() != 3 || edge_features.dim(0) != n || edge_features.dim(1) != n)
    throw DimensionError("edge features " + to_string(edge_features.shape()) + " for " +
                         std::to_string(n) + " nodes");
  if (gt_adjacency) {
    const Tensor& a = *gt_adjacency;
    if (a.shape() != Shape{n, n})
      throw DimensionError("gt adjacency " + to_string(a.shape()) + " for " + std::to_string(n) +
                           " nodes");
    for (std::size_t v = 0; v < n; ++v) {
      if (a.at(v, v) != 0.0) throw std::invalid_argument("gt adjacency has a nonzero diagonal");
      for (std::size_t w = 0; w < n; ++w) {
        const double x = a.at(v, w);
        if (x != 0.0 && x != 1.0) throw std::invalid_argument("gt adjacency entries must be 0/1");
        if (x != a.at(w, v)) throw std::invalid_argument("gt adjacency is not symmetric");
      }
    }
  }
  for (const auto& [name, labels] : gt_labels)
    if (labels.rank() != 2 || labels.dim(0) != n)
      throw DimensionError("labels for head '" + name + "' have shape " +
                           to_string(labels.shape()));
  for (const auto& it : interactions)
    if (it.human >= n || it.object >= n || kinds[it.human] != NodeKind::human ||
        kinds[it.object] != NodeKind::object)
      throw std::invalid_argument("interaction references an invalid human/object pair");
  if (!boxes.empty() && boxes.size() != n)
    throw DimensionError("scene has " + std::to_string(boxes.size()) + " boxes for " +
                         std::to_string(n) + " nodes");
}

void validate_sequence(const Sequence& frames) {
  if (frames.empty()) throw std::invalid_argument("empty sequence");
  for (const auto& f : frames) {
    f.validate();
    if (f.kinds != frames.front().kinds)
      throw std::invalid_argument("inconsistent node counts or kinds across frames");
  }
}

}  // namespace gpnn
