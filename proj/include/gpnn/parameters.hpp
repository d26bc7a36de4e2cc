#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpnn/autodiff.hpp"
#include "gpnn/checkpoint.hpp"
#include "gpnn/random.hpp"

namespace gpnn {

struct ParamId {
  std::size_t index = 0;
};

/// Owns every learnable tensor of a model under a hierarchical name.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor init);
  /// Adds a tensor drawn uniformly from ±1/sqrt(fan_in).
  ParamId add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng);

  Tensor& value(ParamId id) { return values_.at(id.index); }
  const Tensor& value(ParamId id) const { return values_.at(id.index); }
  const std::string& name(ParamId id) const { return names_.at(id.index); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const;
  std::optional<ParamId> find(std::string_view name) const;

  const std::vector<Tensor>& values() const noexcept { return values_; }
  std::vector<Tensor>& values() noexcept { return values_; }

  NamedTensors export_tensors() const;
  /// Overwrites every parameter from `tensors`; names and shapes must match.
  void import_tensors(const NamedTensors& tensors);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// The parameters of a store registered on one tape for one episode.
class BoundParameters {
 public:
  BoundParameters(Tape& tape, const ParameterStore& store);

  Var operator[](ParamId id) const { return vars_.at(id.index); }
  Tape& tape() const noexcept { return *tape_; }
  /// d(loss)/d(param) for every parameter, aligned with the store.
  std::vector<Tensor> gradients() const;

 private:
  Tape* tape_;
  std::vector<Var> vars_;
};

}  // namespace gpnn
