#include "gpnn/synth.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "gpnn/random.hpp"

namespace gpnn {

std::string to_string(SynthTask t) {
  switch (t) {
    case SynthTask::planted: return "planted";
    case SynthTask::relay: return "relay";
    case SynthTask::sequence: return "sequence";
  }
  return "?";
}

SynthTask parse_synth_task(const std::string& s) {
  if (s == "planted") return SynthTask::planted;
  if (s == "relay") return SynthTask::relay;
  if (s == "sequence") return SynthTask::sequence;
  throw std::invalid_argument("unknown synthetic task '" + s + "'");
}

std::size_t SynthSpec::required_node_dim() const {
  switch (task) {
    case SynthTask::planted: return 1;
    case SynthTask::relay: return 2 + 2 * categories + classes;
    case SynthTask::sequence: return 2 + classes;
  }
  return 1;
}

std::size_t SynthSpec::required_edge_dim() const {
  switch (task) {
    case SynthTask::planted: return 1;
    case SynthTask::relay: return 4;
    case SynthTask::sequence: return 2;
  }
  return 1;
}

std::vector<HeadSpec> SynthSpec::heads() const {
  switch (task) {
    case SynthTask::planted:
      return {{"action", classes, Activation::sigmoid, NodeScope::all}};
    case SynthTask::relay:
      return {{"state", classes, Activation::softmax, NodeScope::human}};
    case SynthTask::sequence:
      return {{"subactivity", classes, Activation::softmax, NodeScope::human},
              {"affordance", classes, Activation::softmax, NodeScope::object}};
  }
  return {};
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("synth spec: " + what); };
  if (scenes == 0) fail("scenes must be positive");
  if (min_nodes > max_nodes) fail("min_nodes exceeds max_nodes");
  if (classes < 2) fail("classes must be at least 2");
  if (frames == 0) fail("frames must be positive");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (!(persistence > 0.0 && persistence <= 1.0)) fail("persistence must lie in (0, 1]");
  if (node_dim < required_node_dim())
    fail("node_dim " + std::to_string(node_dim) + " below the " + to_string(task) +
         " layout width " + std::to_string(required_node_dim()));
  if (edge_dim < required_edge_dim())
    fail("edge_dim " + std::to_string(edge_dim) + " below the " + to_string(task) +
         " layout width " + std::to_string(required_edge_dim()));
  switch (task) {
    case SynthTask::planted:
      if (min_nodes < 2) fail("planted scenes need at least 2 nodes");
      if (!(density > 0.0 && density <= 1.0)) fail("density must lie in (0, 1]");
      if (!(human_ratio >= 0.0 && human_ratio <= 1.0)) fail("human_ratio must lie in [0, 1]");
      break;
    case SynthTask::relay:
      if (min_nodes < 4) fail("relay scenes need at least 4 nodes");
      if (categories < 2) fail("relay needs at least 2 categories");
      if (frames != 1) fail("relay scenes are static (frames = 1)");
      if (!(cue_noise >= 0.0)) fail("cue_noise must be >= 0");
      break;
    case SynthTask::sequence:
      if (min_nodes < 3) fail("sequence scenes need at least 3 nodes");
      if (!(visibility >= 0.0 && visibility <= 1.0)) fail("visibility must lie in [0, 1]");
      break;
  }
}

std::size_t Dataset::frame_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

void Dataset::validate() const {
  for (const auto& seq : sequences) {
    validate_sequence(seq);
    for (const auto& f : seq) {
      if (f.node_dim() != node_dim || f.edge_dim() != edge_dim)
        throw DimensionError("frame feature widths differ from the dataset header");
      for (const auto& [name, labels] : f.gt_labels) {
        auto h = std::find_if(heads.begin(), heads.end(), [&](const HeadSpec& x) { return x.name == name; });
        if (h == heads.end()) throw std::invalid_argument("labels for unknown head '" + name + "'");
        if (labels.dim(1) != h->classes)
          throw DimensionError("labels for head '" + name + "' have " + std::to_string(labels.dim(1)) +
                               " classes, header says " + std::to_string(h->classes));
      }
    }
  }
}

namespace {

Tensor normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void add_noise(Tensor& t, double sigma, Rng& rng) {
  if (sigma == 0.0) return;
  for (double& v : t.data()) v += sigma * rng.normal();
}

void link(Tensor& adjacency, std::size_t a, std::size_t b) { adjacency.at(a, b) = adjacency.at(b, a) = 1.0; }

std::size_t evolve(std::size_t state, std::size_t classes, double persistence, Rng& rng) {
  return rng.bernoulli(persistence) ? state : rng.below(classes);
}

Box random_box(Rng& rng) {
  const double w = rng.uniform(0.1, 0.3), h = rng.uniform(0.1, 0.3);
  const double x = rng.uniform(0.0, 1.0 - w), y = rng.uniform(0.0, 1.0 - h);
  return {x, y, x + w, y + h};
}

struct Prototypes {
  Tensor kind;  // [2, d_V]
  Tensor node;  // [Y, d_V]
  Tensor edge;  // [Y, d_E]
};

Sequence generate_planted(const SynthSpec& spec, const Prototypes& proto, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(rng.between(spec.min_nodes, spec.max_nodes));
  std::size_t humans = 1;
  for (std::size_t i = 2; i < n; ++i) humans += rng.bernoulli(spec.human_ratio) ? 1 : 0;
  std::vector<NodeKind> kinds(n, NodeKind::object);
  std::fill(kinds.begin(), kinds.begin() + static_cast<std::ptrdiff_t>(humans), NodeKind::human);

  Tensor adjacency = Tensor::zeros({n, n});
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  while (pairs.empty()) {
    for (std::size_t h = 0; h < humans; ++h)
      for (std::size_t o = humans; o < n; ++o)
        if (rng.bernoulli(spec.density)) pairs.emplace_back(h, o);
  }
  for (auto [h, o] : pairs) link(adjacency, h, o);

  std::vector<Box> boxes(n);
  for (auto& b : boxes) b = random_box(rng);

  std::vector<std::size_t> cls(pairs.size());
  for (auto& c : cls) c = rng.below(spec.classes);

  const std::size_t y = spec.classes;
  Sequence frames;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    if (t > 0)
      for (auto& c : cls) c = evolve(c, y, spec.persistence, rng);
    SceneGraph g;
    g.kinds = kinds;
    g.boxes = boxes;
    g.gt_adjacency = adjacency;
    Tensor labels = Tensor::zeros({n, y});
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      labels.at(pairs[p].first, cls[p]) = 1.0;
      labels.at(pairs[p].second, cls[p]) = 1.0;
      g.interactions.push_back({pairs[p].first, pairs[p].second, cls[p]});
    }
    g.node_features = Tensor({n, spec.node_dim});
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < spec.node_dim; ++k) {
        double x = proto.kind.at(kinds[v] == NodeKind::human ? 0 : 1, k);
        for (std::size_t c = 0; c < y; ++c)
          if (labels.at(v, c) == 1.0) x += proto.node.at(c, k);
        g.node_features.at(v, k) = x;
      }
    g.edge_features = Tensor::zeros({n, n, spec.edge_dim});
    for (std::size_t p = 0; p < pairs.size(); ++p)
      for (std::size_t k = 0; k < spec.edge_dim; ++k) {
        g.edge_features.at(pairs[p].first, pairs[p].second, k) = proto.edge.at(cls[p], k);
        g.edge_features.at(pairs[p].second, pairs[p].first, k) = proto.edge.at(cls[p], k);
      }
    add_noise(g.node_features, spec.noise, rng);
    add_noise(g.edge_features, spec.noise, rng);
    g.gt_labels["action"] = std::move(labels);
    frames.push_back(std::move(g));
  }
  return frames;
}

// Node layout: [human, object, tool category (C), target category (C), state (K), padding].
// Edge layout: [holding, near, contact, other, padding]. Distractor targets may share the
// tool's category; the contact channel on human-target edges is a noisy hint of the true one.
Sequence generate_relay(const SynthSpec& spec, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(rng.between(spec.min_nodes, spec.max_nodes));
  const std::size_t targets = n - 2, c = spec.categories, k = spec.classes;
  const std::size_t tool_cat = rng.below(c);
  const std::size_t chosen = 2 + rng.below(targets);

  SceneGraph g;
  g.kinds.assign(n, NodeKind::object);
  g.kinds[0] = NodeKind::human;
  g.node_features = Tensor::zeros({n, spec.node_dim});
  g.edge_features = Tensor::zeros({n, n, spec.edge_dim});
  g.node_features.at(0, 0) = 1.0;
  g.node_features.at(1, 1) = 1.0;
  g.node_features.at(1, 2 + tool_cat) = 1.0;
  std::size_t label = 0;
  for (std::size_t v = 2; v < n; ++v) {
    const std::size_t cat = v == chosen ? tool_cat : rng.below(c);
    const std::size_t state = rng.below(k);
    if (v == chosen) label = state;
    g.node_features.at(v, 1) = 1.0;
    g.node_features.at(v, 2 + c + cat) = 1.0;
    g.node_features.at(v, 2 + 2 * c + state) = 1.0;
  }
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t w = 0; w < n; ++w) {
      if (v == w) continue;
      std::size_t channel = 3;
      if ((v == 0 && w == 1) || (v == 1 && w == 0)) channel = 0;
      else if (v == 0 || w == 0) channel = 1;
      g.edge_features.at(v, w, channel) = 1.0;
    }
  for (std::size_t t = 2; t < n; ++t) {
    const double contact = (t == chosen ? spec.cue : 0.0) + spec.cue_noise * rng.normal();
    g.edge_features.at(0, t, 2) = g.edge_features.at(t, 0, 2) = contact;
  }
  Tensor adjacency = Tensor::zeros({n, n});
  link(adjacency, 0, 1);
  link(adjacency, 0, chosen);
  g.gt_adjacency = std::move(adjacency);
  Tensor labels = Tensor::zeros({n, k});
  labels.at(0, label) = 1.0;
  g.gt_labels["state"] = std::move(labels);
  g.boxes.resize(n);
  for (auto& b : g.boxes) b = random_box(rng);
  add_noise(g.node_features, spec.noise, rng);
  return {std::move(g)};
}

// Node layout: [human, object, state (K), padding]. Edge layout: [marker, bias, padding].
Sequence generate_sequence(const SynthSpec& spec, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(rng.between(spec.min_nodes, spec.max_nodes));
  const std::size_t k = spec.classes;
  const std::size_t target = 1 + rng.below(n - 1);
  std::vector<NodeKind> kinds(n, NodeKind::object);
  kinds[0] = NodeKind::human;
  std::vector<std::size_t> state(n);
  for (auto& s : state) s = rng.below(k);
  std::vector<Box> boxes(n);
  for (auto& b : boxes) b = random_box(rng);
  Tensor adjacency = Tensor::zeros({n, n});
  link(adjacency, 0, target);

  Sequence frames;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    if (t > 0)
      for (std::size_t v = 1; v < n; ++v) state[v] = evolve(state[v], k, spec.persistence, rng);
    SceneGraph g;
    g.kinds = kinds;
    g.boxes = boxes;
    g.gt_adjacency = adjacency;
    g.node_features = Tensor::zeros({n, spec.node_dim});
    g.node_features.at(0, 0) = 1.0;
    Tensor sub = Tensor::zeros({n, k}), aff = Tensor::zeros({n, k});
    sub.at(0, state[target]) = 1.0;
    for (std::size_t v = 1; v < n; ++v) {
      g.node_features.at(v, 1) = 1.0;
      g.node_features.at(v, 2 + state[v]) = 1.0;
      aff.at(v, state[v]) = 1.0;
    }
    g.edge_features = Tensor::zeros({n, n, spec.edge_dim});
    const bool visible = rng.bernoulli(spec.visibility);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t w = 0; w < n; ++w) g.edge_features.at(v, w, 1) = 1.0;
    if (visible) g.edge_features.at(0, target, 0) = g.edge_features.at(target, 0, 0) = 1.0;
    add_noise(g.node_features, spec.noise, rng);
    add_noise(g.edge_features, spec.noise, rng);
    g.gt_labels["subactivity"] = std::move(sub);
    g.gt_labels["affordance"] = std::move(aff);
    frames.push_back(std::move(g));
  }
  return frames;
}

}  // namespace

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  Dataset data;
  data.node_dim = spec.node_dim;
  data.edge_dim = spec.edge_dim;
  data.heads = spec.heads();
  Prototypes proto;
  if (spec.task == SynthTask::planted) {
    Rng prng(derive_seed(spec.seed, 0));
    proto.kind = normal_matrix(2, spec.node_dim, prng);
    proto.node = normal_matrix(spec.classes, spec.node_dim, prng);
    proto.edge = normal_matrix(spec.classes, spec.edge_dim, prng);
    // shared interaction component on top of the per-class edge prototypes
    const Tensor shared = normal_matrix(1, spec.edge_dim, prng);
    for (std::size_t c = 0; c < spec.classes; ++c)
      for (std::size_t k = 0; k < spec.edge_dim; ++k) proto.edge.at(c, k) += shared.at(0, k);
  }
  for (std::size_t i = 0; i < spec.scenes; ++i) {
    Rng rng(derive_seed(spec.seed, 1, i));
    switch (spec.task) {
      case SynthTask::planted: data.sequences.push_back(generate_planted(spec, proto, rng)); break;
      case SynthTask::relay: data.sequences.push_back(generate_relay(spec, rng)); break;
      case SynthTask::sequence: data.sequences.push_back(generate_sequence(spec, rng)); break;
    }
  }
  return data;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t count) {
  if (count > data.sequences.size())
    throw std::invalid_argument("cannot split " + std::to_string(count) + " sequences from " +
                                std::to_string(data.sequences.size()));
  Dataset a = data, b = data;
  a.sequences.assign(data.sequences.begin(), data.sequences.begin() + static_cast<std::ptrdiff_t>(count));
  b.sequences.assign(data.sequences.begin() + static_cast<std::ptrdiff_t>(count), data.sequences.end());
  return {std::move(a), std::move(b)};
}

std::vector<std::size_t> class_counts(const Dataset& data, const std::string& head) {
  auto h = std::find_if(data.heads.begin(), data.heads.end(), [&](const HeadSpec& x) { return x.name == head; });
  if (h == data.heads.end()) throw std::invalid_argument("unknown head '" + head + "'");
  std::vector<std::size_t> counts(h->classes, 0);
  for (const auto& seq : data.sequences)
    for (const auto& f : seq) {
      if (h->activation == Activation::sigmoid && !f.interactions.empty()) {
        for (const auto& it : f.interactions) ++counts.at(it.cls);
        continue;
      }
      auto labels = f.gt_labels.find(head);
      if (labels == f.gt_labels.end()) continue;
      for (std::size_t v : f.nodes_in(h->scope))
        for (std::size_t c = 0; c < h->classes; ++c)
          if (labels->second.at(v, c) == 1.0) ++counts[c];
    }
  return counts;
}

namespace {

constexpr char kGraphMagic[8] = {'G', 'P', 'N', 'N', 'G', 'R', 'P', 'H'};
constexpr std::uint64_t kMaxNodes = 1 << 16;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

void write_values(BinaryWriter& w, const Tensor& t) {
  for (double v : t.data()) w.f64(v);
}

Tensor read_values(BinaryReader& r, Shape shape) {
  if (shape_size(shape) > kMaxElements) throw FormatError("tensor too large: " + to_string(shape));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = r.f64();
  return t;
}

std::uint64_t checked(std::uint64_t v, std::uint64_t max, const char* what) {
  if (v == 0 || v > max)
    throw FormatError(std::string("invalid ") + what + " " + std::to_string(v));
  return v;
}

}  // namespace

void write_graph_stream(std::ostream& out, const Dataset& data) {
  data.validate();
  BinaryWriter w(out);
  w.bytes(kGraphMagic, sizeof kGraphMagic);
  w.u32(kGraphFileVersion);
  w.string(std::string(Rng::algorithm));
  w.u64(data.node_dim);
  w.u64(data.edge_dim);
  w.u32(static_cast<std::uint32_t>(data.heads.size()));
  for (const auto& h : data.heads) {
    w.string(h.name);
    w.u64(h.classes);
    w.u8(static_cast<std::uint8_t>(h.activation));
    w.u8(static_cast<std::uint8_t>(h.scope));
  }
  w.u64(data.sequences.size());
  for (const auto& seq : data.sequences) {
    const std::size_t n = seq.front().node_count();
    w.u64(n);
    w.u64(seq.size());
    for (NodeKind k : seq.front().kinds) w.u8(static_cast<std::uint8_t>(k));
    for (const auto& f : seq) {
      w.u8(f.boxes.empty() ? 0 : 1);
      for (const auto& b : f.boxes) {
        w.f64(b.x1);
        w.f64(b.y1);
        w.f64(b.x2);
        w.f64(b.y2);
      }
      write_values(w, f.node_features);
      write_values(w, f.edge_features);
      w.u8(f.gt_adjacency ? 1 : 0);
      if (f.gt_adjacency) write_values(w, *f.gt_adjacency);
      for (const auto& h : data.heads) {
        auto it = f.gt_labels.find(h.name);
        w.u8(it == f.gt_labels.end() ? 0 : 1);
        if (it != f.gt_labels.end()) write_values(w, it->second);
      }
      w.u64(f.interactions.size());
      for (const auto& it : f.interactions) {
        w.u64(it.human);
        w.u64(it.object);
        w.u64(it.cls);
      }
    }
  }
  if (!out) throw std::runtime_error("failed to write graph data");
}

Dataset read_graph_stream(std::istream& in) {
  BinaryReader r(in);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kGraphMagic)) throw BadMagicError("not a graph file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kGraphFileVersion) throw VersionError(version, kGraphFileVersion);
  const std::string algorithm = r.string(256);
  if (algorithm != Rng::algorithm)
    throw FormatError("graph file generated with unsupported PRNG '" + algorithm + "'");
  Dataset data;
  data.node_dim = checked(r.u64(), kMaxNodes, "d_V");
  data.edge_dim = checked(r.u64(), kMaxNodes, "d_E");
  const std::uint32_t heads = r.u32();
  if (heads > 1024) throw FormatError("too many heads");
  for (std::uint32_t i = 0; i < heads; ++i) {
    HeadSpec h;
    h.name = r.string(1024);
    h.classes = checked(r.u64(), kMaxNodes, "class count");
    const std::uint8_t act = r.u8(), scope = r.u8();
    if (act > 1 || scope > 2) throw FormatError("invalid head schema for '" + h.name + "'");
    h.activation = static_cast<Activation>(act);
    h.scope = static_cast<NodeScope>(scope);
    data.heads.push_back(h);
  }
  const std::uint64_t count = r.u64();
  if (count > kMaxElements) throw FormatError("invalid sequence count");
  for (std::uint64_t s = 0; s < count; ++s) {
    const std::size_t n = checked(r.u64(), kMaxNodes, "node count");
    const std::size_t frames = checked(r.u64(), kMaxNodes, "frame count");
    std::vector<NodeKind> kinds(n);
    for (auto& k : kinds) {
      const std::uint8_t v = r.u8();
      if (v > 1) throw FormatError("invalid node kind");
      k = static_cast<NodeKind>(v);
    }
    Sequence seq;
    for (std::size_t t = 0; t < frames; ++t) {
      SceneGraph g;
      g.kinds = kinds;
      if (r.u8()) {
        g.boxes.resize(n);
        for (auto& b : g.boxes) {
          b.x1 = r.f64();
          b.y1 = r.f64();
          b.x2 = r.f64();
          b.y2 = r.f64();
        }
      }
      g.node_features = read_values(r, {n, data.node_dim});
      g.edge_features = read_values(r, {n, n, data.edge_dim});
      if (r.u8()) g.gt_adjacency = read_values(r, {n, n});
      for (const auto& h : data.heads)
        if (r.u8()) g.gt_labels[h.name] = read_values(r, {n, h.classes});
      const std::uint64_t inter = r.u64();
      if (inter > n * n) throw FormatError("invalid interaction count");
      for (std::uint64_t i = 0; i < inter; ++i) {
        Interaction it;
        it.human = r.u64();
        it.object = r.u64();
        it.cls = r.u64();
        g.interactions.push_back(it);
      }
      seq.push_back(std::move(g));
    }
    data.sequences.push_back(std::move(seq));
  }
  try {
    data.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("inconsistent graph file: ") + e.what());
  }
  return data;
}

void write_graph_file(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_graph_stream(out, data);
}

Dataset read_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_graph_stream(in);
}

}  // namespace gpnn
