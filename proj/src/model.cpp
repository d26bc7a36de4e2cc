#include "gpnn/model.hpp"

#include <stdexcept>

namespace gpnn {

std::string to_string(StructureMode m) {
  switch (m) {
    case StructureMode::joint_iterative: return "joint";
    case StructureMode::static_structure: return "static";
    case StructureMode::constant_structure: return "constant";
    case StructureMode::no_graph: return "none";
  }
  return "?";
}

std::string to_string(LinkKind k) { return k == LinkKind::edge_mlp ? "mlp" : "convlstm"; }

StructureMode parse_structure_mode(const std::string& s) {
  if (s == "joint") return StructureMode::joint_iterative;
  if (s == "static") return StructureMode::static_structure;
  if (s == "constant") return StructureMode::constant_structure;
  if (s == "none") return StructureMode::no_graph;
  throw std::invalid_argument("unknown structure mode '" + s + "'");
}

LinkKind parse_link_kind(const std::string& s) {
  if (s == "mlp") return LinkKind::edge_mlp;
  if (s == "convlstm") return LinkKind::conv_lstm;
  throw std::invalid_argument("unknown link kind '" + s + "'");
}

const HeadSpec& ModelConfig::head(const std::string& name) const {
  for (const auto& h : heads)
    if (h.name == name) return h;
  throw std::invalid_argument("unknown readout head '" + name + "'");
}

void ModelConfig::validate() const {
  if (node_dim == 0 || edge_dim == 0) throw std::invalid_argument("d_V and d_E must be positive");
  if (iterations < 1) throw std::invalid_argument("iteration count S must be >= 1");
  if (link_sizes.empty() || link_sizes.back() != 1)
    throw std::invalid_argument("link network must end in one output channel");
  if (heads.empty()) throw std::invalid_argument("at least one readout head is required");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i].classes == 0)
      throw std::invalid_argument("head '" + heads[i].name + "' has no classes");
    for (std::size_t j = 0; j < i; ++j)
      if (heads[j].name == heads[i].name)
        throw std::invalid_argument("duplicate head name '" + heads[i].name + "'");
  }
}

GpnnModel::GpnnModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t dv = config_.node_dim, de = config_.edge_dim;
  if (config_.link == LinkKind::edge_mlp)
    link_mlp_ = EdgeMlp::create(params_, "link", config_.link_channels(), config_.link_sizes, rng);
  else
    link_lstm_ =
        ConvLstmCell::create(params_, "link", config_.link_channels(), config_.link_sizes, rng);
  message_node_ = Linear::create(params_, "message.node", dv, dv, rng);
  message_edge_ = Linear::create(params_, "message.edge", de, de, rng);
  update_ = GruCell::create(params_, "gru", config_.message_dim(), dv, rng);
  for (const auto& h : config_.heads)
    readouts_.push_back(Linear::create(params_, "readout." + h.name, dv, h.classes, rng));
}

Var build_feature_grid(Var hidden, Var pair_channel, std::size_t width) {
  return pair_grid(hidden, hidden, pair_channel, width);
}

namespace {

Tensor off_diagonal_mask(std::size_t n) {
  Tensor m = Tensor::ones({n, n});
  for (std::size_t v = 0; v < n; ++v) m.at(v, v) = 0.0;
  return m;
}

Var readout(const BoundParameters& p, const Linear& layer, const HeadSpec& head, Var hidden) {
  Var logits = linear_forward(p, layer, hidden);
  return head.activation == Activation::sigmoid ? sigmoid(logits) : softmax(logits, 1);
}

}  // namespace

Var infer_adjacency(const GpnnModel& model, const BoundParameters& p, ParseGraphState& state,
                    Var edge_features, TemporalLinkState* temporal) {
  const ModelConfig& cfg = model.config();
  Tape& tape = p.tape();
  const std::size_t s = state.iteration + 1;
  const std::size_t n = state.hidden.shape()[0];

  switch (cfg.mode) {
    case StructureMode::no_graph:
      throw std::logic_error("no adjacency is inferred without a graph");
    case StructureMode::constant_structure:
      return tape.constant(Tensor::ones({n, n}));
    case StructureMode::static_structure:
      if (s > 1) return state.first_adjacency;
      break;
    case StructureMode::joint_iterative:
      break;
  }

  Var pair = (s == 1) ? edge_features : state.messages;
  if (!pair.valid()) throw std::logic_error("no raw messages available for iteration " + std::to_string(s));
  Var grid = build_feature_grid(state.hidden, pair, cfg.link_channels());

  Var logits;
  if (cfg.link == LinkKind::edge_mlp) {
    logits = edge_mlp_logits(p, model.link_mlp(), grid);
  } else {
    if (!temporal) throw std::invalid_argument("convLSTM link requires a temporal link state");
    if (temporal->per_iteration.size() < s) temporal->per_iteration.resize(cfg.iterations);
    ConvLstmOutput out = convlstm_step(p, model.link_lstm(), grid, temporal->per_iteration[s - 1]);
    temporal->per_iteration[s - 1] = out.state;
    logits = reshape(out.hidden, {n, n});
  }
  Var adjacency = mul(sigmoid(logits), tape.constant(off_diagonal_mask(n)));
  if (s == 1) state.first_adjacency = adjacency;
  return adjacency;
}

Var aggregate_messages(const GpnnModel& model, const BoundParameters& p, ParseGraphState& state,
                       Var edge_features) {
  if (!state.adjacency.valid()) throw std::logic_error("aggregate_messages before infer_adjacency");
  Var node_part = linear_forward(p, model.message_node(), state.hidden);
  Var edge_part = linear_forward(p, model.message_edge(), edge_features);
  state.messages = pair_grid(node_part, node_part, edge_part);
  return edge_weighted_sum(state.adjacency, state.messages);
}

ParseResult parse(const GpnnModel& model, const BoundParameters& p, const SceneGraph& scene,
                  TemporalLinkState* temporal) {
  const ModelConfig& cfg = model.config();
  scene.validate();
  if (scene.node_dim() != cfg.node_dim || scene.edge_dim() != cfg.edge_dim)
    throw DimensionError("scene has d_V=" + std::to_string(scene.node_dim()) +
                         ", d_E=" + std::to_string(scene.edge_dim()) + " but model expects d_V=" +
                         std::to_string(cfg.node_dim) + ", d_E=" + std::to_string(cfg.edge_dim));
  Tape& tape = p.tape();
  ParseResult result;
  ParseGraphState state;
  state.hidden = tape.constant(scene.node_features);
  result.hidden_trace.push_back(state.hidden);

  if (cfg.mode != StructureMode::no_graph) {
    TemporalLinkState local;
    if (cfg.link == LinkKind::conv_lstm && !temporal) temporal = &local;
    Var edges = tape.constant(scene.edge_features);
    for (std::size_t s = 1; s <= cfg.iterations; ++s) {
      state.adjacency = infer_adjacency(model, p, state, edges, temporal);
      Var m = aggregate_messages(model, p, state, edges);
      state.hidden = gru_step(p, model.update(), state.hidden, m);
      state.iteration = s;
      result.adjacency_trace.push_back(state.adjacency);
      result.hidden_trace.push_back(state.hidden);
    }
    result.adjacency = state.adjacency;
  }
  for (std::size_t i = 0; i < cfg.heads.size(); ++i)
    result.outputs.push_back(readout(p, model.readouts()[i], cfg.heads[i], state.hidden));
  return result;
}

std::vector<ParseResult> parse_sequence(const GpnnModel& model, const BoundParameters& p,
                                        const Sequence& frames) {
  validate_sequence(frames);
  TemporalLinkState temporal;
  std::vector<ParseResult> out;
  out.reserve(frames.size());
  for (const auto& frame : frames) out.push_back(parse(model, p, frame, &temporal));
  return out;
}

double pair_score(const ParseResult& result, const SceneGraph& scene, std::size_t human,
                  std::size_t object, std::size_t head, std::size_t cls) {
  if (human >= scene.node_count() || object >= scene.node_count())
    throw std::out_of_range("pair_score: node index out of range");
  if (scene.kinds[human] != NodeKind::human)
    throw std::invalid_argument("pair_score: node " + std::to_string(human) + " is not a human");
  if (scene.kinds[object] != NodeKind::object)
    throw std::invalid_argument("pair_score: node " + std::to_string(object) + " is not an object");
  const Tensor& y = result.output(head);
  if (cls >= y.dim(1)) throw std::out_of_range("pair_score: class out of range");
  return y.at(human, cls) * y.at(object, cls);
}

}  // namespace gpnn
