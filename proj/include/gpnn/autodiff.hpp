#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every primitive evaluated on it and replays them in
// reverse during backward(). There is no global tape: each forward/backward
// episode owns one Tape, and Vars are lightweight handles into it.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "gpnn/tensor.hpp"

namespace gpnn {

class Tape;

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Handle to a tensor recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  enum class Mode { record, no_grad };
  using BackwardFn =
      std::function<void(Tape&, const Tensor& out, const Tensor& out_grad)>;

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::record; }

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that accumulates d(loss)/d(value) during backward().
  Var variable(Tensor value);

  /// Populates gradients of every variable reachable from `loss`.
  /// A tape can be differentiated once; clear() and re-record to repeat.
  void backward(Var loss);

  /// Gradient of a recorded tensor after backward(); zeros if unreached.
  Tensor grad(Var v) const;

  /// Drops all nodes and gradient state.
  void clear();

  std::size_t size() const noexcept { return nodes_.size(); }

  // -- primitive authoring interface --------------------------------------
  bool requires_grad(Var v) const;
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  /// Records `value` as the output of a primitive over `inputs`. `fn` is only
  /// retained when recording and at least one input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);
  /// Gradient accumulator for `v`, zero-initialised on first access.
  /// Returns nullptr when `v` does not require a gradient.
  Tensor* grad_sink(Var v);

 private:
  friend class Var;
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owner(Var v) const;

  Mode mode_;
  std::deque<Node> nodes_;
  bool differentiated_ = false;
};

// -- primitives ---------------------------------------------------------------

Var matmul(Var a, Var b);
/// x·Wᵀ + b over the last axis of x; `bias` may be default-constructed.
Var linear(Var x, Var weight, Var bias = {});

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// alpha·a + beta, elementwise.
Var affine(Var a, double alpha, double beta);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// log(max(a, floor)); the clamp has zero gradient below the floor.
Var log_clamped(Var a, double floor);

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var softmax(Var a, std::size_t axis);
/// Sums out `axis`. Rank-1 input yields shape {1}.
Var reduce_sum(Var a, std::size_t axis);
Var sum(Var a);
Var mean(Var a);
/// Mean absolute difference; the subgradient at 0 is 0.
Var l1(Var a, Var b);
Var reshape(Var a, Shape shape);
/// Gathers slices along the first axis.
Var take_rows(Var a, const std::vector<std::size_t>& rows);

/// Builds an [n, n, width] grid whose cell (v, w) is
/// concat(left_v, right_w, edges_vw) followed by zeros up to `width`.
/// `edges` is [n, n, c]; pass width = 0 for the unpadded width.
Var pair_grid(Var left, Var right, Var edges, std::size_t width = 0);

/// out_v = Σ_{w != v} weights_vw · values_vw for weights [n, n] and values
/// [n, n, d]; summation runs over w in increasing order.
Var edge_weighted_sum(Var weights, Var values);

}  // namespace gpnn
