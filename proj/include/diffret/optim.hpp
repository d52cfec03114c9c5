#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "diffret/tensor.hpp"

namespace diffret {

// Named tensor lookup used by every forward function, so the same code runs
// over raw parameters (inference) or tape leaves (training).
using ParamLookup = std::function<const Tensor&(const std::string&)>;

// Ordered, named collection of trainable tensors. Insertion order is the
// canonical order for optimizer slots and checkpoint serialization.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  ParamLookup lookup() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Positional moment slots: the caller must pass the same aligned parameter
// list on every step (ParamSet insertion order guarantees this).
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}
  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }

  friend void adam_step(std::vector<Tensor*> params,
                        const std::vector<std::vector<double>>& grads, AdamState& state);

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Slot> slots_;
};

// Standard Adam with bias correction; one call advances the shared step
// counter once and updates every parameter in place.
void adam_step(std::vector<Tensor*> params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

// On-tape view of a ParamSet for one computation record: every parameter is
// re-recorded as a leaf, and gradients flow back to the source set via
// apply_adam after backward().
class BoundParams {
 public:
  BoundParams(Tape& tape, ParamSet& source);
  const Tensor& operator[](const std::string& name) const;
  ParamLookup lookup() const;
  void apply_adam(const GradientMap& grads, AdamState& state);

 private:
  ParamSet* source_;
  std::vector<std::pair<std::string, Tensor>> leaves_;
};

}  // namespace diffret
