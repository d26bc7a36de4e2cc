#include <cmath>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "gpnn/losses.hpp"
#include "loop_oracle.hpp"
#include "metric_oracle.hpp"

using namespace gpnn;
using namespace gpnn::testing;


TEST_CASE("adjacency_l1 examples") {
  Tape tape;
  Tensor target = Tensor::matrix({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}});
  CHECK(adjacency_l1(tape.constant(target), target).value().item() == 0.0);
  CHECK(adjacency_l1(tape.constant(Tensor({3, 3}, 0.5)), target).value().item() == 0.5);
  Tensor noisy_diag = target;
  noisy_diag.at(1, 1) = 0.9;
  CHECK(adjacency_l1(tape.constant(noisy_diag), target).value().item() == 0.0);
  CHECK_THROWS_AS(adjacency_l1(tape.constant(Tensor({2, 2}, 0.5)), target), DimensionError);
  Tensor bad = target;
  bad.at(0, 1) = 0.5;
  CHECK_THROWS_AS(adjacency_l1(tape.constant(target), bad), std::invalid_argument);
}

TEST_CASE("adjacency_l1 matches a scalar loop") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    Tensor a = random_tensor({n, n}, rng, 0.0, 1.0), t = random_binary({n, n}, rng);
    double total = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t w = 0; w < n; ++w)
        if (v != w) total += std::abs(a.at(v, w) - t.at(v, w));
    Tape tape;
    CHECK(std::abs(adjacency_l1(tape.constant(a), t).value().item() - total / double(n * (n - 1))) < 1e-14);
  }
}

TEST_CASE("hinge examples and oracle") {
  Tape tape;
  Tensor y = Tensor::matrix({{1, 0, 1}, {0, 0, 1}});
  CHECK(hinge_multilabel(tape.constant(y), y, {}, 1.0).value().item() == 0.0);
  CHECK(hinge_multilabel(tape.constant(y), y, {2, 3, 4}, 0.7).value().item() == 0.0);

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor s = random_tensor({4, 5}, rng, 0.0, 1.0), labels = random_binary({4, 5}, rng);
    std::vector<double> w(5);
    for (double& x : w) x = rng.uniform(0.1, 3.0);
    const double margin = rng.uniform(0.2, 1.0);
    const double got = hinge_multilabel(tape.constant(s), labels, w, margin).value().item();
    CHECK(std::abs(got - hinge_oracle(s, labels, w, margin)) < 1e-13);
    CHECK(got >= 0.0);

    std::vector<double> w2 = w;
    for (double& x : w2) x *= 2.0;
    CHECK(hinge_multilabel(tape.constant(s), labels, w2, margin).value().item() == 2.0 * got);
  }
  CHECK_THROWS_AS(hinge_multilabel(tape.constant(y), Tensor::matrix({{1, 0, 2}, {0, 0, 1}}), {}, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(hinge_multilabel(tape.constant(y), y, {1, 1}, 1.0), DimensionError);
}

TEST_CASE("cross entropy examples and oracle") {
  Tape tape;
  Tensor y = Tensor::matrix({{0, 1, 0}, {1, 0, 0}});
  CHECK(cross_entropy(tape.constant(y), y).value().item() == 0.0);

  Tensor uniform({3, 10}, 0.1);
  Tensor labels = Tensor::zeros({3, 10});
  labels.at(0, 2) = labels.at(1, 9) = labels.at(2, 0) = 1;
  CHECK(cross_entropy(tape.constant(uniform), labels).value().item() ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(std::abs(std::log(10.0) - 2.302585) < 1e-6);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = random_rows(5, 4, rng), t = one_hot(5, 4, rng);
    double expect = 0.0;
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t k = 0; k < 4; ++k)
        if (t.at(r, k) == 1.0) expect -= std::log(p.at(r, k));
    CHECK(std::abs(cross_entropy(tape.constant(p), t).value().item() - expect / 5.0) < 1e-13);
  }

  Tensor zero_true = Tensor::matrix({{1, 0}});
  CHECK(cross_entropy(tape.constant(zero_true), Tensor::matrix({{0, 1}})).value().item() ==
        doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(cross_entropy(tape.constant(Tensor::matrix({{0.5, 0.4}})), Tensor::matrix({{1, 0}})),
                  std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(tape.constant(Tensor::matrix({{0.5, 0.5}})), Tensor::matrix({{1, 1}})),
                  std::invalid_argument);
}

TEST_CASE("inverse frequency weights") {
  auto w = inverse_frequency_weights({10, 30, 0, 60});
  CHECK(w[0] == doctest::Approx(100.0 / 40.0));
  CHECK(w[1] == doctest::Approx(100.0 / 120.0));
  CHECK(w[2] == 100.0);
  CHECK(w[3] == doctest::Approx(100.0 / 240.0));
  auto capped = inverse_frequency_weights({1, 100000});
  CHECK(capped[0] == 100.0);
}

TEST_CASE("loss config validation") {
  LossConfig c;
  CHECK_NOTHROW(c.validate());
  c.adjacency_weight = -1;
  CHECK_THROWS(c.validate());
  c = {};
  c.hinge_margin = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.class_weights["action"] = {1, -2};
  CHECK_THROWS(c.validate());
}

namespace {

ModelConfig loss_model_config() {
  ModelConfig c;
  c.node_dim = 3;
  c.edge_dim = 2;
  c.link_sizes = {4, 1};
  c.heads = {{"action", 4, Activation::sigmoid, NodeScope::all},
             {"sub", 3, Activation::softmax, NodeScope::human}};
  c.seed = 5;
  return c;
}

SceneGraph labelled_scene(Rng& rng) {
  SceneGraph g = random_scene(4, 3, 2, rng, 2);
  g.gt_adjacency = random_symmetric_adjacency(4, rng);
  g.gt_labels["action"] = random_binary({4, 4}, rng);
  g.gt_labels["sub"] = one_hot(4, 3, rng);
  return g;
}

}  // namespace

TEST_CASE("total loss is the sum of independently computed parts") {
  Rng rng(9);
  GpnnModel model(loss_model_config());
  for (auto& t : model.parameters().values())
    for (double& v : t.data()) v = rng.uniform(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    SceneGraph scene = labelled_scene(rng);
    LossConfig cfg;
    cfg.adjacency_weight = rng.uniform(0.0, 2.0);
    cfg.hinge_margin = 0.8;
    cfg.class_weights["action"] = {1, 2, 0.5, 3};
    cfg.head_weights["sub"] = 0.7;
    Tape tape;
    BoundParameters p(tape, model.parameters());
    ParseResult r = parse(model, p, scene);
    const double got = total_loss(r, scene, model.config(), cfg).value().item();

    RefTrace ref = reference_parse(model, scene);
    Tensor act({4, 4});
    for (std::size_t v = 0; v < 4; ++v)
      for (std::size_t k = 0; k < 4; ++k) act.at(v, k) = ref.outputs[0][v][k];
    double expect = hinge_oracle(act, scene.gt_labels["action"], cfg.class_weights["action"], 0.8);
    double ce = 0.0;
    for (std::size_t v = 0; v < 2; ++v)
      for (std::size_t k = 0; k < 3; ++k)
        if (scene.gt_labels["sub"].at(v, k) == 1.0) ce -= std::log(ref.outputs[1][v][k]);
    expect += 0.7 * ce / 2.0;
    for (const Mat& a : ref.adjacency) {
      double l = 0.0;
      for (std::size_t v = 0; v < 4; ++v)
        for (std::size_t w = 0; w < 4; ++w)
          if (v != w) l += std::abs(a[v][w] - scene.gt_adjacency->at(v, w));
      expect += cfg.adjacency_weight * l / 12.0;
    }
    CHECK(std::abs(got - expect) < 1e-12);
  }
}

TEST_CASE("total loss special cases") {
  Rng rng(10);
  GpnnModel model(loss_model_config());
  SceneGraph scene = labelled_scene(rng);
  Tape tape;
  BoundParameters p(tape, model.parameters());
  ParseResult r = parse(model, p, scene);

  SUBCASE("zero weights give zero") {
    LossConfig cfg;
    cfg.adjacency_weight = 0;
    cfg.head_weights = {{"action", 0}, {"sub", 0}};
    CHECK(total_loss(r, scene, model.config(), cfg).value().item() == 0.0);
  }
  SUBCASE("no adjacency weight leaves the head terms only") {
    LossConfig with, without;
    without.adjacency_weight = 0;
    double adj = 0.0;
    for (const Var& a : r.adjacency_trace) adj += adjacency_l1(a, *scene.gt_adjacency).value().item();
    CHECK(total_loss(r, scene, model.config(), with).value().item() ==
          doctest::Approx(total_loss(r, scene, model.config(), without).value().item() + adj).epsilon(1e-12));
  }
  SUBCASE("missing ground truth") {
    SceneGraph bare = scene;
    bare.gt_adjacency.reset();
    CHECK_THROWS_AS(total_loss(r, bare, model.config(), LossConfig{}), std::invalid_argument);
    bare = scene;
    bare.gt_labels.erase("sub");
    CHECK_THROWS_AS(total_loss(r, bare, model.config(), LossConfig{}), std::invalid_argument);
  }
}

TEST_CASE("total loss gradient matches finite differences") {
  Rng rng(11);
  for (LinkKind link : {LinkKind::edge_mlp, LinkKind::conv_lstm}) {
    ModelConfig mc = loss_model_config();
    mc.link = link;
    GpnnModel model(mc);
    for (auto& t : model.parameters().values())
      for (double& v : t.data()) v = rng.uniform(-0.8, 0.8);
    SceneGraph scene = labelled_scene(rng);
    LossConfig cfg;
    cfg.hinge_margin = 0.9;
    cfg.class_weights["action"] = {1, 2, 0.5, 3};
    auto errs = parameter_gradient_errors(model.parameters(), [&](const BoundParameters& p) {
      return total_loss(parse(model, p, scene), scene, model.config(), cfg);
    });
    for (const auto& [name, e] : errs) {
      CAPTURE(name);
      CHECK(e < 1e-3);
    }
  }
}
