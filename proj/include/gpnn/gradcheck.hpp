#pragma once

// End-to-end gradient check of a model: tape gradients of a random smooth probe
// of every head output and every adjacency iterate against central differences.

#include <cstdint>
#include <string>
#include <vector>

#include "gpnn/model.hpp"

namespace gpnn {

struct GradCheckEntry {
  std::string block;
  std::size_t size = 0;
  double max_rel_error = 0.0;  ///< max |a − n| / max(|a|, |n|, 1e-6)
  /// Coordinates whose stencil straddles a kink; these are compared with the
  /// one-sided difference on the side that does not cross it.
  std::size_t kinks = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> blocks;
  double worst() const;
  bool passed(double tolerance = 1e-3) const { return worst() < tolerance; }
};

/// Heads covering every activation and scope: a sigmoid head over all nodes and
/// softmax heads over humans and over objects.
std::vector<HeadSpec> gradcheck_heads();

/// Checks `cfg` on a random scene of `nodes` nodes (two frames for a convLSTM link).
GradCheckReport gradient_check(const ModelConfig& cfg, std::uint64_t seed, std::size_t nodes = 4,
                               double step = 1e-5);

}  // namespace gpnn
