#include "gpnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gpnn {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.max_rel_error);
  return w;
}

std::vector<HeadSpec> gradcheck_heads() {
  return {{"action", 3, Activation::sigmoid, NodeScope::all},
          {"subactivity", 4, Activation::softmax, NodeScope::human},
          {"affordance", 3, Activation::softmax, NodeScope::object}};
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

GradCheckReport gradient_check(const ModelConfig& cfg, std::uint64_t seed, std::size_t nodes, double step) {
  if (nodes < 2) throw std::invalid_argument("gradient check needs at least 2 nodes");
  GpnnModel model(cfg);
  Rng rng(derive_seed(seed, 7));
  const std::size_t frames = cfg.link == LinkKind::conv_lstm ? 2 : 1;
  Sequence scenes;
  for (std::size_t t = 0; t < frames; ++t) {
    SceneGraph g;
    g.kinds.assign(nodes, NodeKind::object);
    for (std::size_t v = 0; v < nodes / 2; ++v) g.kinds[v] = NodeKind::human;
    g.node_features = random_tensor({nodes, cfg.node_dim}, rng);
    g.edge_features = random_tensor({nodes, nodes, cfg.edge_dim}, rng);
    scenes.push_back(std::move(g));
  }
  // one random weighting per frame, head and adjacency iterate
  std::vector<Tensor> weights;
  for (std::size_t t = 0; t < frames; ++t) {
    for (const auto& h : cfg.heads) weights.push_back(random_tensor({nodes, h.classes}, rng));
    for (std::size_t s = 0; s < cfg.iterations; ++s) weights.push_back(random_tensor({nodes, nodes}, rng));
  }

  auto probe = [&](const BoundParameters& p) {
    Tape& tape = p.tape();
    const std::vector<ParseResult> results = parse_sequence(model, p, scenes);
    Var total = tape.constant(Tensor::scalar(0.0));
    std::size_t k = 0;
    for (const auto& r : results) {
      for (const Var& y : r.outputs) total = add(total, sum(mul(y, tape.constant(weights[k++]))));
      for (std::size_t s = 0; s < cfg.iterations; ++s, ++k)
        if (s < r.adjacency_trace.size()) total = add(total, sum(mul(r.adjacency_trace[s], tape.constant(weights[k]))));
    }
    return total;
  };

  ParameterStore& store = model.parameters();
  Tape tape;
  BoundParameters bound(tape, store);
  tape.backward(probe(bound));
  const std::vector<Tensor> analytic = bound.gradients();
  auto evaluate = [&]() {
    Tape t(Tape::Mode::no_grad);
    BoundParameters b(t, store);
    return probe(b).value().item();
  };

  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };
  const double base = evaluate();
  GradCheckReport report;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor& value = store.values()[i];
    GradCheckEntry entry{store.name(ParamId{i}), value.size(), 0.0, 0};
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double orig = value[j];
      value[j] = orig + step;
      const double up = evaluate();
      value[j] = orig - step;
      const double down = evaluate();
      value[j] = orig;
      const double a = analytic[i][j];
      double err = rel(a, (up - down) / (2.0 * step));
      const double forward = (up - base) / step, backward = (base - down) / step;
      if (err > 1e-4 && rel(forward, backward) > 1e-3) {
        // a ReLU kink inside the stencil: compare against the smooth side
        err = std::min(rel(a, forward), rel(a, backward));
        ++entry.kinks;
      }
      entry.max_rel_error = std::max(entry.max_rel_error, err);
    }
    report.blocks.push_back(std::move(entry));
  }
  return report;
}

}  // namespace gpnn
