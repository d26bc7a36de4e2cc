#pragma once

#include <map>
#include <string>
#include <vector>

#include "gpnn/model.hpp"

namespace gpnn {

struct LossConfig {
  double adjacency_weight = 1.0;  ///< λ_A; 0 disables structure supervision
  double hinge_margin = 1.0;      ///< in (0, 1]; scores are post-sigmoid
  std::map<std::string, std::vector<double>> class_weights;  ///< per head; missing = all ones
  std::map<std::string, double> head_weights;                ///< per head; missing = 1

  void validate() const;
};

/// Mean |A − target| over off-diagonal entries. Target must be 0/1.
Var adjacency_l1(Var adjacency, const Tensor& target);

/// Two-sided hinge on probabilities, weighted per class, averaged over rows:
///   positive: w_k · max(0, margin − s),   negative: w_k · max(0, margin + s − 1).
Var hinge_multilabel(Var scores, const Tensor& labels, const std::vector<double>& class_weights,
                     double margin);

/// Mean of −log(max(p_true, 1e-12)) over rows of a one-hot label matrix.
Var cross_entropy(Var probs, const Tensor& labels);

/// Inverse-frequency weights N / (Y · N_k), capped at `cap`; unseen classes get `cap`.
std::vector<double> inverse_frequency_weights(const std::vector<std::size_t>& counts,
                                              double cap = 100.0);

/// Σ_heads w_h · loss_h + λ_A · Σ_s l1(A^s, gt). Structure targets come from
/// `structure_scene` and labels from `label_scene` (they differ for anticipation).
Var total_loss(const ParseResult& result, const SceneGraph& structure_scene,
               const SceneGraph& label_scene, const ModelConfig& model, const LossConfig& cfg);
Var total_loss(const ParseResult& result, const SceneGraph& scene, const ModelConfig& model,
               const LossConfig& cfg);

}  // namespace gpnn
