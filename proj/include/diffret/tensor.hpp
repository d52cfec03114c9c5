#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "diffret/rng.hpp"

namespace diffret {

class Tape;
class GradientMap;

using Shape = std::vector<std::size_t>;

// Dense row-major tensor of 64-bit reals. A Tensor is either a plain value
// (constant or parameter, tape() == nullptr) or the output of an op recorded
// on a Tape, in which case node() indexes its record entry.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor scalar(double v);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;
  const std::vector<double>& values() const { return values_; }
  // In-place access for parameters and constants; rejected for tape outputs,
  // whose recorded partials would go stale.
  std::vector<double>& mutable_values();

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  friend class Tape;
  Shape shape_;
  std::vector<double> values_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Result of Tape::backward: gradients keyed by node id.
class GradientMap {
 public:
  // Gradient of the loss w.r.t. a tape tensor; zeros if the tensor is
  // disconnected from the loss.
  std::vector<double> grad(const Tensor& t) const;
  bool reached(const Tensor& t) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::vector<double>> grads_;
};

// Append-only record of executed ops. Single-threaded by contract; distinct
// tapes are fully independent.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<double>& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers source's values as a differentiable leaf on this tape.
  Tensor leaf(const Tensor& source);

  // Reverse pass from a scalar loss recorded on this tape.
  GradientMap backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  std::span<const int> node_inputs(int node) const;

  // --- op implementation interface ---
  int add_node(std::size_t out_size, std::vector<int> inputs, BackwardFn back);
  // Marks t as the output of the given record entry.
  static void attach(Tensor& t, Tape* tape, int node) {
    t.tape_ = tape;
    t.node_ = node;
  }
  // Accumulation buffer for a node's gradient, zero-initialized on first use.
  std::vector<double>& grad_buffer(int node);

 private:
  struct Node {
    std::size_t size;
    std::vector<int> inputs;
    BackwardFn back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// ---- differentiable ops ----
// Shapes: 2-D matrices are row-major; 1-D tensors act as row vectors on the
// left of matmul and column vectors on the right.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_rowwise(const Tensor& a, const Tensor& v);  // a: N x D, v: D
Tensor div_rowwise(const Tensor& a, const Tensor& s);  // a: N x D, s: N
Tensor tile_rows(const Tensor& v, std::size_t n);      // v: D -> N x D

Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sqrt_elem(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);

// axis: -1 = last axis. For 2-D, axis 1 normalizes each row, axis 0 each
// column. 1-D accepts axis 0 / -1.
Tensor softmax(const Tensor& a, int axis = -1);
Tensor log_softmax(const Tensor& a, int axis = -1);

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor row_sum(const Tensor& a);  // N x D -> N
Tensor row_max(const Tensor& a);  // N x D -> N
Tensor col_max(const Tensor& a);  // N x D -> D
Tensor dot(const Tensor& a, const Tensor& b);  // 1-D . 1-D -> scalar

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor stack_rows(std::span<const Tensor> parts);
Tensor diag(const Tensor& a);  // N x N -> N
Tensor reshape(const Tensor& a, Shape shape);

// i.i.d. standard normal draws; constant (never on a tape).
Tensor gaussian(SeededRng& rng, const Shape& shape);

}  // namespace diffret
