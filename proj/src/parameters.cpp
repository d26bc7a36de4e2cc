#include "gpnn/parameters.hpp"

#include <cmath>

namespace gpnn {

ParamId ParameterStore::add(std::string name, Tensor init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return ParamId{values_.size() - 1};
}

ParamId ParameterStore::add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(t));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : values_) n += t.size();
  return n;
}

std::optional<ParamId> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return ParamId{i};
  return std::nullopt;
}

NamedTensors ParameterStore::export_tensors() const {
  NamedTensors out;
  out.reserve(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) out.emplace_back(names_[i], values_[i]);
  return out;
}

void ParameterStore::import_tensors(const NamedTensors& tensors) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Tensor* t = find_tensor(tensors, names_[i]);
    if (!t) throw DimensionError("checkpoint is missing parameter '" + names_[i] + "'");
    if (t->shape() != values_[i].shape())
      throw DimensionError("parameter '" + names_[i] + "' has shape " + to_string(t->shape()) +
                           " in checkpoint but " + to_string(values_[i].shape()) + " in model");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = *find_tensor(tensors, names_[i]);
}

BoundParameters::BoundParameters(Tape& tape, const ParameterStore& store) : tape_(&tape) {
  vars_.reserve(store.size());
  for (const Tensor& t : store.values()) vars_.push_back(tape.variable(t));
}

std::vector<Tensor> BoundParameters::gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (const Var& v : vars_) out.push_back(tape_->grad(v));
  return out;
}

}  // namespace gpnn
