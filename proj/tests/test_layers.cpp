#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "gpnn/layers.hpp"

using namespace gpnn;
using namespace gpnn::testing;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void zero_all(ParameterStore& store) {
  for (auto& t : store.values()) std::fill(t.data().begin(), t.data().end(), 0.0);
}

void randomize(ParameterStore& store, Rng& rng, double scale = 0.5) {
  for (auto& t : store.values())
    for (double& v : t.data()) v = rng.uniform(-scale, scale);
}

// Plain loop MLP over a single feature vector.
double mlp_cell(const ParameterStore& store, const EdgeMlp& net, std::vector<double> x) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Tensor& w = store.value(net.layers[l].weight);
    const Tensor& b = store.value(net.layers[l].bias);
    std::vector<double> y(w.dim(0));
    for (std::size_t o = 0; o < w.dim(0); ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < w.dim(1); ++i) s += w.at(o, i) * x[i];
      y[o] = (l + 1 < net.layers.size()) ? std::max(0.0, s) : s;
    }
    x = std::move(y);
  }
  return sig(x[0]);
}

Tensor permute_grid(const Tensor& g, const std::vector<std::size_t>& perm) {
  // out[i][j] = g[perm[i]][perm[j]]
  Tensor out(g.shape());
  const std::size_t n = g.dim(0);
  const std::size_t c = g.rank() == 3 ? g.dim(2) : 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < c; ++k)
        out[(i * n + j) * c + k] = g[(perm[i] * n + perm[j]) * c + k];
  return out;
}

}  // namespace

TEST_CASE("linear_forward examples") {
  ParameterStore store;
  Rng rng(0);
  Linear id = Linear::create(store, "id", 2, 2, rng);
  store.value(id.weight) = Tensor::matrix({{1, 0}, {0, 1}});
  Linear sum2 = Linear::create(store, "sum", 2, 1, rng);
  store.value(sum2.weight) = Tensor::matrix({{1, 1}});
  store.value(sum2.bias) = Tensor::vector({1});
  Tape tape;
  BoundParameters p(tape, store);
  CHECK(linear_forward(p, id, tape.constant(Tensor::vector({1, 2}))).value() == Tensor::vector({1, 2}));
  CHECK(linear_forward(p, sum2, tape.constant(Tensor::vector({2, 3}))).value() == Tensor::vector({6}));
  CHECK_THROWS_AS(linear_forward(p, sum2, tape.constant(Tensor::vector({2, 3, 4}))), DimensionError);
}

TEST_CASE("linear gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterStore store;
    Rng rng(seed);
    Linear l = Linear::create(store, "fc", 4, 3, rng);
    randomize(store, rng);
    Tensor x = random_tensor({5, 4}, rng);
    auto errs = parameter_gradient_errors(store, [&](const BoundParameters& p) {
      return sum(tanh(linear_forward(p, l, p.tape().constant(x))));
    });
    CHECK(worst(errs) < 1e-4);
  }
}

TEST_CASE("edge MLP examples") {
  ParameterStore store;
  Rng rng(1);
  EdgeMlp net = EdgeMlp::create(store, "link", 5, {4, 3, 1}, rng);
  Tensor grid = random_tensor({3, 3, 5}, rng);

  SUBCASE("zero parameters give one half everywhere") {
    zero_all(store);
    Tape tape;
    BoundParameters p(tape, store);
    for (double v : edge_mlp_forward(p, net, tape.constant(grid)).value().data()) CHECK(v == 0.5);
  }
  SUBCASE("identical edge features give identical outputs") {
    randomize(store, rng);
    for (std::size_t k = 0; k < 5; ++k) grid.at(2, 0, k) = grid.at(0, 1, k);
    Tape tape;
    BoundParameters p(tape, store);
    Tensor a = edge_mlp_forward(p, net, tape.constant(grid)).value();
    CHECK(a.at(2, 0) == a.at(0, 1));
  }
  SUBCASE("matches a per-cell loop oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r(seed + 100);
      randomize(store, r);
      Tensor g = random_tensor({3, 3, 5}, r);
      Tape tape;
      BoundParameters p(tape, store);
      Tensor a = edge_mlp_forward(p, net, tape.constant(g)).value();
      for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t w = 0; w < 3; ++w) {
          std::vector<double> cell(5);
          for (std::size_t k = 0; k < 5; ++k) cell[k] = g.at(v, w, k);
          CHECK(std::abs(a.at(v, w) - mlp_cell(store, net, cell)) < 1e-12);
        }
    }
  }
  SUBCASE("channel mismatch") {
    Tape tape;
    BoundParameters p(tape, store);
    CHECK_THROWS_AS(edge_mlp_forward(p, net, tape.constant(Tensor::zeros({3, 3, 4}))), DimensionError);
  }
}

TEST_CASE("edge MLP is permutation equivariant and bounded") {
  ParameterStore store;
  Rng rng(2);
  EdgeMlp net = EdgeMlp::create(store, "link", 4, {6, 1}, rng);
  randomize(store, rng, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor grid = random_tensor({4, 4, 4}, rng, -3, 3);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    for (std::size_t i = 3; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Tape tape;
    BoundParameters p(tape, store);
    Tensor a = edge_mlp_forward(p, net, tape.constant(grid)).value();
    Tensor b = edge_mlp_forward(p, net, tape.constant(permute_grid(grid, perm))).value();
    CHECK(max_abs_diff(b, permute_grid(a, perm)) == 0.0);
    for (double v : a.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("edge MLP gradient matches finite differences") {
  ParameterStore store;
  Rng rng(3);
  EdgeMlp net = EdgeMlp::create(store, "link", 5, {4, 4, 1}, rng);
  randomize(store, rng);
  Tensor grid = random_tensor({3, 3, 5}, rng);
  Tensor w = random_tensor({3, 3}, rng);
  auto errs = parameter_gradient_errors(store, [&](const BoundParameters& p) {
    Tape& t = p.tape();
    return sum(mul(edge_mlp_forward(p, net, t.constant(grid)), t.constant(w)));
  });
  CHECK(worst(errs) < 1e-4);
}

TEST_CASE("GRU examples") {
  ParameterStore store;
  Rng rng(4);
  GruCell cell = GruCell::create(store, "gru", 3, 2, rng);
  const Tensor h = Tensor::matrix({{0.4, -1.2}, {2.0, 0.3}});
  const Tensor m = Tensor::matrix({{1.0, -2.0, 0.5}, {0.1, 0.2, 0.3}});

  SUBCASE("all zero parameters halve the state") {
    zero_all(store);
    Tape tape;
    BoundParameters p(tape, store);
    Tensor out = gru_step(p, cell, tape.constant(h), tape.constant(m)).value();
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(out[i] == 0.5 * h[i]);
  }
  SUBCASE("saturated update gate carries the state") {
    randomize(store, rng);
    store.value(cell.bz) = Tensor({2}, 50.0);
    Tape tape;
    BoundParameters p(tape, store);
    Tensor out = gru_step(p, cell, tape.constant(h), tape.constant(m)).value();
    CHECK(max_abs_diff(out, h) < 1e-6);
  }
  SUBCASE("dimension mismatch") {
    Tape tape;
    BoundParameters p(tape, store);
    CHECK_THROWS_AS(gru_step(p, cell, tape.constant(h), tape.constant(Tensor::zeros({2, 2}))),
                    DimensionError);
  }
}

TEST_CASE("GRU gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterStore store;
    Rng rng(seed + 50);
    GruCell cell = GruCell::create(store, "gru", 4, 3, rng);
    randomize(store, rng);
    Tensor h = random_tensor({2, 3}, rng), m = random_tensor({2, 4}, rng);
    Tensor w = random_tensor({2, 3}, rng);
    auto errs = parameter_gradient_errors(store, [&](const BoundParameters& p) {
      Tape& t = p.tape();
      Var h1 = gru_step(p, cell, t.constant(h), t.constant(m));
      Var h2 = gru_step(p, cell, h1, t.constant(m));
      return sum(mul(h2, t.constant(w)));
    });
    CHECK(worst(errs) < 1e-4);
  }
}

namespace {

// One step of a plain LSTM on scalar-per-channel vectors, written out by hand.
struct LstmRef {
  std::vector<double> h, c;
};

LstmRef lstm_reference(const ParameterStore& store, const ConvLstmCell& cell,
                       std::vector<double> x, const std::vector<LstmRef>& prev,
                       std::vector<LstmRef>& next) {
  next.clear();
  for (std::size_t l = 0; l < cell.layers.size(); ++l) {
    const auto& L = cell.layers[l];
    const std::size_t k = L.channels;
    auto affine = [&](ParamId w, ParamId u, ParamId b, std::size_t o) {
      double s = store.value(b)[o];
      for (std::size_t i = 0; i < L.in; ++i) s += store.value(w).at(o, i) * x[i];
      for (std::size_t i = 0; i < k; ++i) s += store.value(u).at(o, i) * prev[l].h[i];
      return s;
    };
    LstmRef out{std::vector<double>(k), std::vector<double>(k)};
    for (std::size_t o = 0; o < k; ++o) {
      const double i = sig(affine(L.wi, L.ui, L.bi, o));
      const double f = sig(affine(L.wf, L.uf, L.bf, o));
      const double og = sig(affine(L.wo, L.uo, L.bo, o));
      const double g = std::tanh(affine(L.wg, L.ug, L.bg, o));
      out.c[o] = f * prev[l].c[o] + i * g;
      out.h[o] = og * std::tanh(out.c[o]);
    }
    x = out.h;
    next.push_back(out);
  }
  return next.back();
}

}  // namespace

TEST_CASE("convLSTM examples") {
  ParameterStore store;
  Rng rng(5);
  ConvLstmCell cell = ConvLstmCell::create(store, "link", 4, {3, 1}, rng);

  SUBCASE("zero parameters and fresh state give zero hidden") {
    zero_all(store);
    Tape tape;
    BoundParameters p(tape, store);
    auto out = convlstm_step(p, cell, tape.constant(random_tensor({3, 3, 4}, rng)), {});
    for (double v : out.hidden.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("identical per-edge inputs give identical outputs") {
    randomize(store, rng);
    Tensor grid = random_tensor({3, 3, 4}, rng);
    for (std::size_t k = 0; k < 4; ++k) grid.at(1, 2, k) = grid.at(2, 0, k);
    Tape tape;
    BoundParameters p(tape, store);
    auto s1 = convlstm_step(p, cell, tape.constant(grid), {});
    auto s2 = convlstm_step(p, cell, tape.constant(grid), s1.state);
    CHECK(s2.hidden.value().at(1, 2, 0) == s2.hidden.value().at(2, 0, 0));
  }
  SUBCASE("single cell matches a plain LSTM over three steps") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r(seed + 7);
      randomize(store, r, 1.0);
      Tape tape;
      BoundParameters p(tape, store);
      ConvLstmState state;
      std::vector<LstmRef> ref{{{0, 0, 0}, {0, 0, 0}}, {{0}, {0}}}, next;
      for (int t = 0; t < 3; ++t) {
        Tensor x = random_tensor({1, 1, 4}, r);
        auto out = convlstm_step(p, cell, tape.constant(x), state);
        state = out.state;
        LstmRef last = lstm_reference(store, cell, {x[0], x[1], x[2], x[3]}, ref, next);
        ref = next;
        CHECK(std::abs(out.hidden.value()[0] - last.h[0]) < 1e-12);
      }
    }
  }
  SUBCASE("state and channel mismatches") {
    Tape tape;
    BoundParameters p(tape, store);
    CHECK_THROWS_AS(convlstm_step(p, cell, tape.constant(Tensor::zeros({2, 2, 5})), {}), DimensionError);
    auto s = convlstm_step(p, cell, tape.constant(Tensor::zeros({2, 2, 4})), {});
    CHECK_THROWS_AS(convlstm_step(p, cell, tape.constant(Tensor::zeros({3, 3, 4})), s.state),
                    DimensionError);
  }
}

TEST_CASE("convLSTM is permutation equivariant across time") {
  ParameterStore store;
  Rng rng(6);
  ConvLstmCell cell = ConvLstmCell::create(store, "link", 3, {2, 1}, rng);
  randomize(store, rng, 1.5);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tape tape;
  BoundParameters p(tape, store);
  ConvLstmState a, b;
  for (int t = 0; t < 3; ++t) {
    Tensor grid = random_tensor({4, 4, 3}, rng);
    auto oa = convlstm_step(p, cell, tape.constant(grid), a);
    auto ob = convlstm_step(p, cell, tape.constant(permute_grid(grid, perm)), b);
    a = oa.state;
    b = ob.state;
    CHECK(max_abs_diff(ob.hidden.value(), permute_grid(oa.hidden.value(), perm)) == 0.0);
  }
}

TEST_CASE("convLSTM gradient matches finite differences through time") {
  ParameterStore store;
  Rng rng(8);
  ConvLstmCell cell = ConvLstmCell::create(store, "link", 3, {2, 1}, rng);
  randomize(store, rng);
  std::vector<Tensor> grids;
  for (int t = 0; t < 3; ++t) grids.push_back(random_tensor({2, 2, 3}, rng));
  Tensor w = random_tensor({2, 2, 1}, rng);
  auto errs = parameter_gradient_errors(store, [&](const BoundParameters& p) {
    Tape& t = p.tape();
    ConvLstmState state;
    Var total = t.constant(Tensor::scalar(0));
    for (const auto& g : grids) {
      auto out = convlstm_step(p, cell, t.constant(g), state);
      state = out.state;
      total = add(total, sum(mul(sigmoid(out.hidden), t.constant(w))));
    }
    return total;
  });
  CHECK(worst(errs) < 1e-4);
}
