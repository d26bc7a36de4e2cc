#include "gpnn/layers.hpp"

namespace gpnn {

Linear Linear::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                      std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = with_bias;
  l.weight = store.add_uniform(prefix + ".weight", {out, in}, in, rng);
  if (with_bias) l.bias = store.add(prefix + ".bias", Tensor::zeros({out}));
  return l;
}

Var linear_forward(const BoundParameters& p, const Linear& layer, Var x) {
  if (x.shape().back() != layer.in)
    throw DimensionError("linear layer expects last dimension " + std::to_string(layer.in) +
                         ", got input " + to_string(x.shape()));
  return linear(x, p[layer.weight], layer.has_bias ? p[layer.bias] : Var{});
}

EdgeMlp EdgeMlp::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                        const std::vector<std::size_t>& sizes, Rng& rng) {
  if (sizes.empty() || sizes.back() != 1)
    throw std::invalid_argument("edge MLP must end in a single output channel");
  EdgeMlp net;
  std::size_t width = in;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    net.layers.push_back(Linear::create(store, prefix + "." + std::to_string(i), width, sizes[i], rng));
    width = sizes[i];
  }
  return net;
}

Var edge_mlp_logits(const BoundParameters& p, const EdgeMlp& net, Var grid) {
  const Shape& s = grid.shape();
  if (s.size() != 3 || s[0] != s[1])
    throw DimensionError("edge MLP expects an [n, n, c] grid, got " + to_string(s));
  if (s[2] != net.in_channels())
    throw DimensionError("edge MLP expects " + std::to_string(net.in_channels()) +
                         " channels, got grid " + to_string(s));
  Var x = grid;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    x = linear_forward(p, net.layers[i], x);
    if (i + 1 < net.layers.size()) x = relu(x);
  }
  return reshape(x, {s[0], s[1]});
}

Var edge_mlp_forward(const BoundParameters& p, const EdgeMlp& net, Var grid) {
  return sigmoid(edge_mlp_logits(p, net, grid));
}

GruCell GruCell::create(ParameterStore& store, const std::string& prefix, std::size_t input_size,
                        std::size_t hidden_size, Rng& rng) {
  GruCell c;
  c.input_size = input_size;
  c.hidden_size = hidden_size;
  c.wz = store.add_uniform(prefix + ".Wz", {hidden_size, input_size}, input_size, rng);
  c.wr = store.add_uniform(prefix + ".Wr", {hidden_size, input_size}, input_size, rng);
  c.wn = store.add_uniform(prefix + ".Wn", {hidden_size, input_size}, input_size, rng);
  c.uz = store.add_uniform(prefix + ".Uz", {hidden_size, hidden_size}, hidden_size, rng);
  c.ur = store.add_uniform(prefix + ".Ur", {hidden_size, hidden_size}, hidden_size, rng);
  c.un = store.add_uniform(prefix + ".Un", {hidden_size, hidden_size}, hidden_size, rng);
  c.bz = store.add(prefix + ".bz", Tensor::zeros({hidden_size}));
  c.br = store.add(prefix + ".br", Tensor::zeros({hidden_size}));
  c.bn = store.add(prefix + ".bn", Tensor::zeros({hidden_size}));
  return c;
}

Var gru_step(const BoundParameters& p, const GruCell& cell, Var h_prev, Var m) {
  if (h_prev.shape().back() != cell.hidden_size || m.shape().back() != cell.input_size)
    throw DimensionError("GRU(" + std::to_string(cell.input_size) + "->" +
                         std::to_string(cell.hidden_size) + ") got hidden " +
                         to_string(h_prev.shape()) + " and input " + to_string(m.shape()));
  Var z = sigmoid(add(linear(m, p[cell.wz], p[cell.bz]), linear(h_prev, p[cell.uz])));
  Var r = sigmoid(add(linear(m, p[cell.wr], p[cell.br]), linear(h_prev, p[cell.ur])));
  Var n = tanh(add(linear(m, p[cell.wn], p[cell.bn]), mul(r, linear(h_prev, p[cell.un]))));
  // (1 − z) ⊙ n + z ⊙ h  ==  n + z ⊙ (h − n)
  return add(n, mul(z, sub(h_prev, n)));
}

ConvLstmCell ConvLstmCell::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                                  const std::vector<std::size_t>& sizes, Rng& rng) {
  if (sizes.empty()) throw std::invalid_argument("convLSTM needs at least one layer");
  ConvLstmCell cell;
  std::size_t width = in;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::string pre = prefix + "." + std::to_string(i);
    const std::size_t k = sizes[i];
    Layer l;
    l.in = width;
    l.channels = k;
    l.wi = store.add_uniform(pre + ".Wi", {k, width}, width, rng);
    l.wf = store.add_uniform(pre + ".Wf", {k, width}, width, rng);
    l.wo = store.add_uniform(pre + ".Wo", {k, width}, width, rng);
    l.wg = store.add_uniform(pre + ".Wg", {k, width}, width, rng);
    l.ui = store.add_uniform(pre + ".Ui", {k, k}, k, rng);
    l.uf = store.add_uniform(pre + ".Uf", {k, k}, k, rng);
    l.uo = store.add_uniform(pre + ".Uo", {k, k}, k, rng);
    l.ug = store.add_uniform(pre + ".Ug", {k, k}, k, rng);
    l.bi = store.add(pre + ".bi", Tensor::zeros({k}));
    l.bf = store.add(pre + ".bf", Tensor::ones({k}));
    l.bo = store.add(pre + ".bo", Tensor::zeros({k}));
    l.bg = store.add(pre + ".bg", Tensor::zeros({k}));
    cell.layers.push_back(l);
    width = k;
  }
  return cell;
}

ConvLstmOutput convlstm_step(const BoundParameters& p, const ConvLstmCell& cell, Var grid,
                             const ConvLstmState& state) {
  const Shape& s = grid.shape();
  if (s.size() != 3 || s[0] != s[1])
    throw DimensionError("convLSTM expects an [n, n, c] grid, got " + to_string(s));
  if (s[2] != cell.in_channels())
    throw DimensionError("convLSTM expects " + std::to_string(cell.in_channels()) +
                         " channels, got grid " + to_string(s));
  const std::size_t n = s[0];
  if (!state.fresh()) {
    if (state.hidden.size() != cell.layers.size() || state.cell.size() != cell.layers.size())
      throw DimensionError("convLSTM state has " + std::to_string(state.hidden.size()) +
                           " layers, cell has " + std::to_string(cell.layers.size()));
    for (std::size_t i = 0; i < cell.layers.size(); ++i) {
      const Shape expect{n, n, cell.layers[i].channels};
      if (state.hidden[i].shape() != expect || state.cell[i].shape() != expect)
        throw DimensionError("convLSTM state shape " + to_string(state.hidden[i].shape()) +
                             " does not match expected " + to_string(expect));
    }
  }
  Tape& tape = grid.tape();
  ConvLstmOutput out;
  Var x = grid;
  for (std::size_t i = 0; i < cell.layers.size(); ++i) {
    const ConvLstmCell::Layer& l = cell.layers[i];
    Var h = state.fresh() ? tape.constant(Tensor::zeros({n, n, l.channels})) : state.hidden[i];
    Var c = state.fresh() ? tape.constant(Tensor::zeros({n, n, l.channels})) : state.cell[i];
    auto gate = [&](ParamId w, ParamId u, ParamId b) {
      return add(linear(x, p[w], p[b]), linear(h, p[u]));
    };
    Var in_gate = sigmoid(gate(l.wi, l.ui, l.bi));
    Var forget = sigmoid(gate(l.wf, l.uf, l.bf));
    Var out_gate = sigmoid(gate(l.wo, l.uo, l.bo));
    Var cand = tanh(gate(l.wg, l.ug, l.bg));
    Var c_next = add(mul(forget, c), mul(in_gate, cand));
    Var h_next = mul(out_gate, tanh(c_next));
    out.state.hidden.push_back(h_next);
    out.state.cell.push_back(c_next);
    x = h_next;
  }
  out.hidden = x;
  return out;
}

}  // namespace gpnn
