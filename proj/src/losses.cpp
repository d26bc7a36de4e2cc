#include "gpnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gpnn {

void LossConfig::validate() const {
  if (adjacency_weight < 0.0) throw std::invalid_argument("adjacency weight must be >= 0");
  if (!(hinge_margin > 0.0 && hinge_margin <= 1.0))
    throw std::invalid_argument("hinge margin must lie in (0, 1]");
  for (const auto& [name, ws] : class_weights)
    for (double w : ws)
      if (w < 0.0) throw std::invalid_argument("class weights of head '" + name + "' must be >= 0");
  for (const auto& [name, w] : head_weights)
    if (w < 0.0) throw std::invalid_argument("weight of head '" + name + "' must be >= 0");
}

namespace {

void require_binary(const Tensor& t, const char* what) {
  for (double x : t.data())
    if (x != 0.0 && x != 1.0) throw std::invalid_argument(std::string(what) + " must be 0/1");
}

}  // namespace

Var adjacency_l1(Var adjacency, const Tensor& target) {
  require_same_shape(adjacency.value(), target, "adjacency_l1");
  if (target.rank() != 2 || target.dim(0) != target.dim(1))
    throw DimensionError("adjacency_l1 expects square matrices, got " + to_string(target.shape()));
  require_binary(target, "adjacency target");
  Tape& tape = adjacency.tape();
  const std::size_t n = target.dim(0);
  if (n < 2) return tape.constant(Tensor::scalar(0.0));
  std::vector<std::size_t> cells;
  std::vector<double> goal;
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < n; ++w)
      if (v != w) {
        cells.push_back(v * n + w);
        goal.push_back(target.at(v, w));
      }
  Var flat = take_rows(reshape(adjacency, {n * n}), cells);
  const std::size_t count = goal.size();
  return l1(flat, tape.constant(Tensor({count}, std::move(goal))));
}

Var hinge_multilabel(Var scores, const Tensor& labels, const std::vector<double>& class_weights,
                     double margin) {
  require_same_shape(scores.value(), labels, "hinge_multilabel");
  if (labels.rank() != 2) throw DimensionError("hinge_multilabel expects [rows, classes]");
  require_binary(labels, "hinge labels");
  const std::size_t rows = labels.dim(0), classes = labels.dim(1);
  if (!class_weights.empty() && class_weights.size() != classes)
    throw DimensionError("hinge_multilabel: " + std::to_string(class_weights.size()) +
                         " class weights for " + std::to_string(classes) + " classes");
  Tensor slope(labels.shape()), offset(labels.shape()), weight(labels.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < classes; ++k) {
      const bool positive = labels.at(r, k) == 1.0;
      slope.at(r, k) = positive ? -1.0 : 1.0;
      offset.at(r, k) = positive ? margin : margin - 1.0;
      weight.at(r, k) = class_weights.empty() ? 1.0 : class_weights[k];
    }
  Tape& tape = scores.tape();
  Var margins = relu(add(mul(scores, tape.constant(std::move(slope))), tape.constant(std::move(offset))));
  return scale(sum(mul(margins, tape.constant(std::move(weight)))), 1.0 / static_cast<double>(rows));
}

Var cross_entropy(Var probs, const Tensor& labels) {
  require_same_shape(probs.value(), labels, "cross_entropy");
  if (labels.rank() != 2) throw DimensionError("cross_entropy expects [rows, classes]");
  const std::size_t rows = labels.dim(0), classes = labels.dim(1);
  const Tensor& p = probs.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0, ones = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      total += p.at(r, k);
      const double y = labels.at(r, k);
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("cross_entropy labels must be one-hot");
      ones += y;
    }
    if (std::abs(total - 1.0) > 1e-6)
      throw std::invalid_argument("cross_entropy: row " + std::to_string(r) +
                                  " of probabilities is not normalised");
    if (ones != 1.0) throw std::invalid_argument("cross_entropy labels must be one-hot");
  }
  Tape& tape = probs.tape();
  Var picked = sum(mul(log_clamped(probs, 1e-12), tape.constant(labels)));
  return scale(picked, -1.0 / static_cast<double>(rows));
}

std::vector<double> inverse_frequency_weights(const std::vector<std::size_t>& counts, double cap) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::vector<double> out(counts.size(), cap);
  const double classes = static_cast<double>(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] > 0)
      out[k] = std::min(cap, static_cast<double>(total) / (classes * static_cast<double>(counts[k])));
  return out;
}

namespace {

Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t width = t.dim(1);
  Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t k = 0; k < width; ++k) out.at(r, k) = t.at(rows[r], k);
  return out;
}

}  // namespace

Var total_loss(const ParseResult& result, const SceneGraph& structure_scene,
               const SceneGraph& label_scene, const ModelConfig& model, const LossConfig& cfg) {
  if (result.outputs.empty()) throw std::invalid_argument("parse result has no outputs");
  Tape& tape = result.outputs.front().tape();
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    const HeadSpec& head = model.heads[h];
    auto labels = label_scene.gt_labels.find(head.name);
    if (labels == label_scene.gt_labels.end())
      throw std::invalid_argument("missing ground-truth labels for head '" + head.name + "'");
    const auto hw = cfg.head_weights.find(head.name);
    const double head_weight = hw == cfg.head_weights.end() ? 1.0 : hw->second;
    if (head_weight == 0.0) continue;
    const std::vector<std::size_t> rows = label_scene.nodes_in(head.scope);
    if (rows.empty()) continue;
    Var scores = take_rows(result.outputs[h], rows);
    Tensor target = select_rows(labels->second, rows);
    Var loss;
    if (head.activation == Activation::sigmoid) {
      const auto cw = cfg.class_weights.find(head.name);
      static const std::vector<double> uniform;
      loss = hinge_multilabel(scores, target, cw == cfg.class_weights.end() ? uniform : cw->second,
                              cfg.hinge_margin);
    } else {
      loss = cross_entropy(scores, target);
    }
    total = add(total, scale(loss, head_weight));
  }
  if (cfg.adjacency_weight > 0.0 && !result.adjacency_trace.empty()) {
    if (!structure_scene.gt_adjacency)
      throw std::invalid_argument("missing ground-truth adjacency");
    for (const Var& a : result.adjacency_trace)
      total = add(total, scale(adjacency_l1(a, *structure_scene.gt_adjacency), cfg.adjacency_weight));
  }
  return total;
}

Var total_loss(const ParseResult& result, const SceneGraph& scene, const ModelConfig& model,
               const LossConfig& cfg) {
  return total_loss(result, scene, scene, model, cfg);
}

}  // namespace gpnn
