#include "diffret/optim.hpp"

#include <cmath>

#include "diffret/error.hpp"

namespace diffret {

Tensor& ParamSet::add(std::string name, Tensor init) {
  if (has(name)) throw ContractError("parameter already registered: " + name);
  items_.emplace_back(std::move(name), std::move(init));
  return items_.back().second;
}

Tensor& ParamSet::get(const std::string& name) {
  for (auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw ContractError("unknown parameter: " + name);
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw ContractError("unknown parameter: " + name);
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return true;
  }
  return false;
}

ParamLookup ParamSet::lookup() const {
  return [this](const std::string& name) -> const Tensor& { return get(name); };
}

void adam_step(std::vector<Tensor*> params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: parameter/gradient count mismatch");
  }
  if (state.slots_.empty()) {
    state.slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.slots_[i].m.assign(params[i]->size(), 0.0);
      state.slots_[i].v.assign(params[i]->size(), 0.0);
    }
  }
  if (state.slots_.size() != params.size()) {
    throw DimensionError("adam_step: parameter count differs from optimizer slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->size() || state.slots_[i].m.size() != params[i]->size()) {
      throw DimensionError("adam_step: gradient shape differs from parameter shape");
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    }
  }
  const AdamConfig& c = state.cfg_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& slot = state.slots_[i];
    auto& value = params[i]->mutable_values();
    const auto& g = grads[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      slot.m[j] = c.beta1 * slot.m[j] + (1.0 - c.beta1) * g[j];
      slot.v[j] = c.beta2 * slot.v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = slot.m[j] / bc1;
      const double v_hat = slot.v[j] / bc2;
      value[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

BoundParams::BoundParams(Tape& tape, ParamSet& source) : source_(&source) {
  leaves_.reserve(source.size());
  for (auto& [name, tensor] : source.items()) {
    leaves_.emplace_back(name, tape.leaf(tensor));
  }
}

const Tensor& BoundParams::operator[](const std::string& name) const {
  for (const auto& [n, t] : leaves_) {
    if (n == name) return t;
  }
  throw ContractError("unknown bound parameter: " + name);
}

ParamLookup BoundParams::lookup() const {
  return [this](const std::string& name) -> const Tensor& { return (*this)[name]; };
}

void BoundParams::apply_adam(const GradientMap& grads, AdamState& state) {
  std::vector<Tensor*> params;
  std::vector<std::vector<double>> gs;
  params.reserve(leaves_.size());
  gs.reserve(leaves_.size());
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    params.push_back(&source_->items()[i].second);
    gs.push_back(grads.grad(leaves_[i].second));
  }
  adam_step(std::move(params), gs, state);
}

}  // namespace diffret
