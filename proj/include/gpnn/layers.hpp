#pragma once

// Parameterised building blocks of the parsing network. Each layer is a light
// handle onto parameters held in a ParameterStore; forward passes take the
// store's tape binding for the current episode.

#include <cstddef>
#include <string>
#include <vector>

#include "gpnn/parameters.hpp"

namespace gpnn {

/// y = x·Wᵀ + b over the last axis.
struct Linear {
  ParamId weight;
  ParamId bias;
  bool has_bias = true;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear create(ParameterStore& store, const std::string& prefix, std::size_t in,
                       std::size_t out, Rng& rng, bool with_bias = true);
};

Var linear_forward(const BoundParameters& p, const Linear& layer, Var x);

/// Shared per-edge MLP: a stack of 1×1 convolutions over an [n, n, c] grid.
/// Hidden layers use ReLU; the final single-channel layer uses a sigmoid.
struct EdgeMlp {
  std::vector<Linear> layers;

  std::size_t in_channels() const { return layers.front().in; }
  /// `sizes` lists output widths, the last of which must be 1 (e.g. 128-128-1).
  static EdgeMlp create(ParameterStore& store, const std::string& prefix, std::size_t in,
                        const std::vector<std::size_t>& sizes, Rng& rng);
};

/// Pre-sigmoid logits, shape [n, n].
Var edge_mlp_logits(const BoundParameters& p, const EdgeMlp& net, Var grid);
/// σ(MLP(f_vw)) for every cell, shape [n, n].
Var edge_mlp_forward(const BoundParameters& p, const EdgeMlp& net, Var grid);

/// GRU with the reset gate applied after the recurrent product:
///   z = σ(Wz m + Uz h + bz)
///   r = σ(Wr m + Ur h + br)
///   n = tanh(Wn m + r ⊙ (Un h) + bn)
///   h' = (1 − z) ⊙ n + z ⊙ h
struct GruCell {
  ParamId wz, wr, wn, uz, ur, un, bz, br, bn;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;

  static GruCell create(ParameterStore& store, const std::string& prefix, std::size_t input_size,
                        std::size_t hidden_size, Rng& rng);
};

/// Rows of `h_prev` ([..., hidden]) are updated independently by rows of `m`.
Var gru_step(const BoundParameters& p, const GruCell& cell, Var h_prev, Var m);

/// Stacked LSTM with 1×1 kernels applied independently to every grid cell.
struct ConvLstmCell {
  struct Layer {
    ParamId wi, wf, wo, wg, ui, uf, uo, ug, bi, bf, bo, bg;
    std::size_t in = 0;
    std::size_t channels = 0;
  };
  std::vector<Layer> layers;

  std::size_t in_channels() const { return layers.front().in; }
  std::size_t out_channels() const { return layers.back().channels; }
  /// Forget-gate biases start at 1, other biases at 0.
  static ConvLstmCell create(ParameterStore& store, const std::string& prefix, std::size_t in,
                             const std::vector<std::size_t>& sizes, Rng& rng);
};

/// Per-layer hidden and cell grids, each [n, n, channels]. Empty = fresh.
struct ConvLstmState {
  std::vector<Var> hidden;
  std::vector<Var> cell;

  bool fresh() const noexcept { return hidden.empty(); }
};

struct ConvLstmOutput {
  Var hidden;  ///< final layer hidden grid, [n, n, out_channels]
  ConvLstmState state;
};

ConvLstmOutput convlstm_step(const BoundParameters& p, const ConvLstmCell& cell, Var grid,
                             const ConvLstmState& state);

}  // namespace gpnn
