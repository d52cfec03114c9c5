#include "diffret/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffret/error.hpp"
#include "diffret/kernels.hpp"

namespace diffret {

namespace {

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite value in result");
    }
  }
}

Tape* common_tape(std::initializer_list<const Tensor*> ins) {
  Tape* tape = nullptr;
  for (const Tensor* t : ins) {
    if (!t->on_tape()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw ContractError("op inputs recorded on different tapes");
    }
  }
  return tape;
}

}  // namespace

// ---- Tensor ----

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one dim");
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor dims must be positive");
  }
  if (shape_product(shape_) != values_.size()) {
    throw DimensionError("tensor shape does not match value count");
  }
}

Tensor Tensor::zeros(const Shape& shape) {
  return Tensor(shape, std::vector<double>(shape_product(shape), 0.0));
}

Tensor Tensor::full(const Shape& shape, double v) {
  return Tensor(shape, std::vector<double>(shape_product(shape), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape_.size()) throw DimensionError("dim index out of range");
  return shape_[i];
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw DimensionError("rows(): tensor is not 2-D");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw DimensionError("cols(): tensor is not 2-D");
  return shape_[1];
}

double Tensor::at(std::size_t i) const {
  if (i >= values_.size()) throw DimensionError("flat index out of range");
  return values_[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (ndim() != 2 || r >= shape_[0] || c >= shape_[1]) {
    throw DimensionError("2-D index out of range");
  }
  return values_[r * shape_[1] + c];
}

std::vector<double>& Tensor::mutable_values() {
  if (on_tape()) {
    throw ContractError("cannot mutate a tensor recorded on a tape");
  }
  return values_;
}

// ---- Tape ----

Tensor Tape::leaf(const Tensor& source) {
  Tensor t(source.shape(), source.values());
  t.tape_ = this;
  t.node_ = add_node(t.size(), {}, nullptr);
  return t;
}

int Tape::add_node(std::size_t out_size, std::vector<int> inputs, BackwardFn back) {
  const int id = static_cast<int>(nodes_.size());
  for (int in : inputs) {
    if (in >= id) throw ContractError("record is not topologically ordered");
  }
  nodes_.push_back(Node{out_size, std::move(inputs), std::move(back)});
  return id;
}

std::span<const int> Tape::node_inputs(int node) const {
  return nodes_.at(static_cast<std::size_t>(node)).inputs;
}

std::vector<double>& Tape::grad_buffer(int node) {
  auto& g = grads_.at(static_cast<std::size_t>(node));
  if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].size, 0.0);
  return g;
}

GradientMap Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss not recorded on this tape");
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss.node())] = {1.0};
  for (int i = loss.node(); i >= 0; --i) {
    auto& g = grads_[static_cast<std::size_t>(i)];
    if (g.empty()) continue;  // not reached from the loss
    if (nodes_[static_cast<std::size_t>(i)].back) {
      nodes_[static_cast<std::size_t>(i)].back(*this, g);
    }
  }
  GradientMap out;
  out.tape_ = this;
  out.grads_ = std::move(grads_);
  grads_.clear();
  return out;
}

std::vector<double> GradientMap::grad(const Tensor& t) const {
  if (t.tape() != tape_ || t.node() < 0) {
    throw ContractError("grad: tensor was not recorded on this tape");
  }
  const auto& g = grads_.at(static_cast<std::size_t>(t.node()));
  if (g.empty()) return std::vector<double>(t.size(), 0.0);
  return g;
}

bool GradientMap::reached(const Tensor& t) const {
  if (t.tape() != tape_ || t.node() < 0) return false;
  return !grads_.at(static_cast<std::size_t>(t.node())).empty();
}

// ---- op plumbing ----

namespace {

// Wires a computed result into the record when any input is on a tape.
// make_back is only invoked when recording, so closures are not built on the
// inference path.
template <typename MakeBack>
Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::initializer_list<const Tensor*> ins, MakeBack&& make_back) {
  check_finite(values, op);
  Tensor out(std::move(shape), std::move(values));
  Tape* tape = common_tape(ins);
  if (tape == nullptr) return out;
  std::vector<int> input_ids;
  for (const Tensor* t : ins) {
    if (t->on_tape()) input_ids.push_back(t->node());
  }
  Tape::attach(out, tape, tape->add_node(out.size(), std::move(input_ids), make_back(out)));
  return out;
}

void accumulate(Tape& tape, const Tensor& input, const std::vector<double>& delta) {
  if (!input.on_tape()) return;
  auto& buf = tape.grad_buffer(input.node());
  for (std::size_t i = 0; i < delta.size(); ++i) buf[i] += delta[i];
}

struct MatDims {
  std::size_t m, k, n;
  Shape out_shape;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b) {
  MatDims d{};
  if (a.ndim() == 2 && b.ndim() == 2) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dims disagree");
    d = {a.rows(), a.cols(), b.cols(), {a.rows(), b.cols()}};
  } else if (a.ndim() == 1 && b.ndim() == 2) {
    if (a.dim(0) != b.rows()) throw DimensionError("matmul: inner dims disagree");
    d = {1, a.dim(0), b.cols(), {b.cols()}};
  } else if (a.ndim() == 2 && b.ndim() == 1) {
    if (a.cols() != b.dim(0)) throw DimensionError("matmul: inner dims disagree");
    d = {a.rows(), a.cols(), 1, {a.rows()}};
  } else if (a.ndim() == 1 && b.ndim() == 1) {
    if (a.dim(0) != b.dim(0)) throw DimensionError("matmul: inner dims disagree");
    d = {1, a.dim(0), 1, {1}};
  } else {
    throw DimensionError("matmul: operands must be 1-D or 2-D");
  }
  return d;
}

}  // namespace

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatDims d = matmul_dims(a, b);
  std::vector<double> out(d.m * d.n);
  kernels::matmul(a.values().data(), b.values().data(), out.data(), d.m, d.k, d.n);
  return make_result(d.out_shape, std::move(out), "matmul", {&a, &b}, [&](const Tensor&) {
    return [a, b, d](Tape& tape, const std::vector<double>& up) {
      if (a.on_tape()) {
        // dA = dC * B^T
        std::vector<double> da(d.m * d.k);
        kernels::matmul_nt(up.data(), b.values().data(), da.data(), d.m, d.n, d.k);
        accumulate(tape, a, da);
      }
      if (b.on_tape()) {
        // dB = A^T * dC
        std::vector<double> db(d.k * d.n);
        kernels::matmul_tn(a.values().data(), up.data(), db.data(), d.k, d.m, d.n);
        accumulate(tape, b, db);
      }
    };
  });
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("transpose: tensor is not 2-D");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
  return make_result({c, r}, std::move(out), "transpose", {&a}, [&](const Tensor&) {
    return [a, r, c](Tape& tape, const std::vector<double>& up) {
      std::vector<double> da(a.size());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] = up[j * r + i];
      accumulate(tape, a, da);
    };
  });
}

namespace {

template <typename Fwd, typename BackA, typename BackB>
Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                         BackA back_a, BackB back_b) {
  if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.values()[i], b.values()[i]);
  return make_result(a.shape(), std::move(out), op, {&a, &b}, [&](const Tensor&) {
    return [a, b, back_a, back_b](Tape& tape, const std::vector<double>& up) {
      if (a.on_tape()) {
        std::vector<double> da(a.size());
        for (std::size_t i = 0; i < da.size(); ++i)
          da[i] = back_a(up[i], a.values()[i], b.values()[i]);
        accumulate(tape, a, da);
      }
      if (b.on_tape()) {
        std::vector<double> db(b.size());
        for (std::size_t i = 0; i < db.size(); ++i)
          db[i] = back_b(up[i], a.values()[i], b.values()[i]);
        accumulate(tape, b, db);
      }
    };
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double u, double, double) { return u; }, [](double u, double, double) { return u; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double u, double, double) { return u; }, [](double u, double, double) { return -u; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double u, double, double y) { return u * y; },
      [](double u, double x, double) { return u * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double u, double, double y) { return u / y; },
      [](double u, double x, double y) { return -u * x / (y * y); });
}

Tensor add_rowwise(const Tensor& a, const Tensor& v) {
  if (a.ndim() != 2 || v.ndim() != 1 || v.dim(0) != a.cols()) {
    throw DimensionError("add_rowwise: expected N x D and D");
  }
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = a.values()[i * d + j] + v.values()[j];
  return make_result(a.shape(), std::move(out), "add_rowwise", {&a, &v}, [&](const Tensor&) {
    return [a, v, n, d](Tape& tape, const std::vector<double>& up) {
      if (a.on_tape()) accumulate(tape, a, up);
      if (v.on_tape()) {
        std::vector<double> dv(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) dv[j] += up[i * d + j];
        accumulate(tape, v, dv);
      }
    };
  });
}

Tensor div_rowwise(const Tensor& a, const Tensor& s) {
  if (a.ndim() != 2 || s.ndim() != 1 || s.dim(0) != a.rows()) {
    throw DimensionError("div_rowwise: expected N x D and N");
  }
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = a.values()[i * d + j] / s.values()[i];
  return make_result(a.shape(), std::move(out), "div_rowwise", {&a, &s}, [&](const Tensor&) {
    return [a, s, n, d](Tape& tape, const std::vector<double>& up) {
      if (a.on_tape()) {
        std::vector<double> da(a.size());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) da[i * d + j] = up[i * d + j] / s.values()[i];
        accumulate(tape, a, da);
      }
      if (s.on_tape()) {
        std::vector<double> ds(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double si = s.values()[i];
          for (std::size_t j = 0; j < d; ++j)
            ds[i] += -up[i * d + j] * a.values()[i * d + j] / (si * si);
        }
        accumulate(tape, s, ds);
      }
    };
  });
}

Tensor tile_rows(const Tensor& v, std::size_t n) {
  if (v.ndim() != 1) throw DimensionError("tile_rows: expected 1-D input");
  if (n == 0) throw DimensionError("tile_rows: n must be positive");
  const std::size_t d = v.dim(0);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(v.values().begin(), v.values().end(), out.begin() + static_cast<long>(i * d));
  return make_result({n, d}, std::move(out), "tile_rows", {&v}, [&](const Tensor&) {
    return [v, n, d](Tape& tape, const std::vector<double>& up) {
      std::vector<double> dv(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) dv[j] += up[i * d + j];
      accumulate(tape, v, dv);
    };
  });
}

namespace {

template <typename Fwd, typename Back>
Tensor unary_elem(const Tensor& a, const char* op, Fwd fwd, Back back) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.values()[i]);
  return make_result(a.shape(), std::move(out), op, {&a}, [&](const Tensor&) {
    return [a, back](Tape& tape, const std::vector<double>& up) {
      std::vector<double> da(a.size());
      for (std::size_t i = 0; i < da.size(); ++i) da[i] = back(up[i], a.values()[i]);
      accumulate(tape, a, da);
    };
  });
}

}  // namespace

Tensor scale(const Tensor& a, double c) {
  return unary_elem(
      a, "scale", [c](double x) { return c * x; }, [c](double u, double) { return c * u; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_elem(
      a, "add_const", [c](double x) { return x + c; }, [](double u, double) { return u; });
}

Tensor relu(const Tensor& a) {
  return unary_elem(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double u, double x) { return x > 0.0 ? u : 0.0; });
}

Tensor sqrt_elem(const Tensor& a) {
  return unary_elem(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double u, double x) { return 0.5 * u / std::sqrt(x); });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary_elem(
      a, "clamp_min", [floor](double x) { return x < floor ? floor : x; },
      [floor](double u, double x) { return x < floor ? 0.0 : u; });
}

namespace {

// Resolves a softmax axis request to "softmax over rows of a 2-D view".
// Returns true if the input must be transposed first.
bool softmax_needs_transpose(const Tensor& a, int axis, const char* op) {
  if (a.ndim() == 1) {
    if (axis != 0 && axis != -1) throw DimensionError(std::string(op) + ": bad axis for 1-D");
    return false;
  }
  if (a.ndim() == 2) {
    if (axis == 1 || axis == -1) return false;
    if (axis == 0) return true;
    throw DimensionError(std::string(op) + ": bad axis for 2-D");
  }
  throw DimensionError(std::string(op) + ": tensor must be 1-D or 2-D");
}

template <bool kLog>
Tensor softmax_rows_impl(const Tensor& a) {
  const std::size_t rows = a.ndim() == 2 ? a.rows() : 1;
  const std::size_t cols = a.ndim() == 2 ? a.cols() : a.dim(0);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = a.values().data() + i * cols;
    double* y = out.data() + i * cols;
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) denom += std::exp(x[j] - mx);
    if constexpr (kLog) {
      const double lse = mx + std::log(denom);
      for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
    } else {
      for (std::size_t j = 0; j < cols; ++j) y[j] = std::exp(x[j] - mx) / denom;
    }
  }
  const char* op = kLog ? "log_softmax" : "softmax";
  return make_result(a.shape(), std::move(out), op, {&a}, [&](const Tensor& result) {
    const std::vector<double> y = result.values();
    return [a, y, rows, cols](Tape& tape, const std::vector<double>& up) {
      std::vector<double> da(a.size());
      for (std::size_t i = 0; i < rows; ++i) {
        const double* yi = y.data() + i * cols;
        const double* ui = up.data() + i * cols;
        double* di = da.data() + i * cols;
        if constexpr (kLog) {
          // d log_softmax: u - softmax * sum(u)
          double usum = 0.0;
          for (std::size_t j = 0; j < cols; ++j) usum += ui[j];
          for (std::size_t j = 0; j < cols; ++j) di[j] = ui[j] - std::exp(yi[j]) * usum;
        } else {
          double dotv = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dotv += ui[j] * yi[j];
          for (std::size_t j = 0; j < cols; ++j) di[j] = yi[j] * (ui[j] - dotv);
        }
      }
      accumulate(tape, a, da);
    };
  });
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  if (softmax_needs_transpose(a, axis, "softmax")) {
    return transpose(softmax_rows_impl<false>(transpose(a)));
  }
  return softmax_rows_impl<false>(a);
}

Tensor log_softmax(const Tensor& a, int axis) {
  if (softmax_needs_transpose(a, axis, "log_softmax")) {
    return transpose(softmax_rows_impl<true>(transpose(a)));
  }
  return softmax_rows_impl<true>(a);
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  return make_result({1}, {acc}, "sum", {&a}, [&](const Tensor&) {
    return [a](Tape& tape, const std::vector<double>& up) {
      accumulate(tape, a, std::vector<double>(a.size(), up[0]));
    };
  });
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  const double inv = 1.0 / static_cast<double>(a.size());
  return make_result({1}, {acc * inv}, "mean", {&a}, [&](const Tensor&) {
    return [a, inv](Tape& tape, const std::vector<double>& up) {
      accumulate(tape, a, std::vector<double>(a.size(), up[0] * inv));
    };
  });
}

Tensor row_sum(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("row_sum: tensor is not 2-D");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += a.values()[i * d + j];
  return make_result({n}, std::move(out), "row_sum", {&a}, [&](const Tensor&) {
    return [a, n, d](Tape& tape, const std::vector<double>& up) {
      std::vector<double> da(a.size());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) da[i * d + j] = up[i];
      accumulate(tape, a, da);
    };
  });
}

Tensor row_max(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("row_max: tensor is not 2-D");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n);
  std::vector<std::size_t> arg(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (a.values()[i * d + j] > a.values()[i * d + best]) best = j;
    arg[i] = best;
    out[i] = a.values()[i * d + best];
  }
  return make_result({n}, std::move(out), "row_max", {&a}, [&](const Tensor&) {
    return [a, arg, n, d](Tape& tape, const std::vector<double>& up) {
      std::vector<double> da(a.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) da[i * d + arg[i]] = up[i];
      accumulate(tape, a, da);
    };
  });
}

Tensor col_max(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("col_max: tensor is not 2-D");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(d);
  std::vector<std::size_t> arg(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (a.values()[i * d + j] > a.values()[best * d + j]) best = i;
    arg[j] = best;
    out[j] = a.values()[best * d + j];
  }
  return make_result({d}, std::move(out), "col_max", {&a}, [&](const Tensor&) {
    return [a, arg, n, d](Tape& tape, const std::vector<double>& up) {
      (void)n;
      std::vector<double> da(a.size(), 0.0);
      for (std::size_t j = 0; j < d; ++j) da[arg[j] * d + j] = up[j];
      accumulate(tape, a, da);
    };
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1) throw DimensionError("dot: expected 1-D operands");
  return sum(mul(a, b));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows()) {
    throw DimensionError("concat_cols: expected 2-D with equal row counts");
  }
  const std::size_t n = a.rows(), da = a.cols(), db = b.cols();
  std::vector<double> out(n * (da + db));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.values().begin() + static_cast<long>(i * da), da,
                out.begin() + static_cast<long>(i * (da + db)));
    std::copy_n(b.values().begin() + static_cast<long>(i * db), db,
                out.begin() + static_cast<long>(i * (da + db) + da));
  }
  return make_result({n, da + db}, std::move(out), "concat_cols", {&a, &b}, [&](const Tensor&) {
    return [a, b, n, da, db](Tape& tape, const std::vector<double>& up) {
      if (a.on_tape()) {
        std::vector<double> ga(n * da);
        for (std::size_t i = 0; i < n; ++i)
          std::copy_n(up.begin() + static_cast<long>(i * (da + db)), da,
                      ga.begin() + static_cast<long>(i * da));
        accumulate(tape, a, ga);
      }
      if (b.on_tape()) {
        std::vector<double> gb(n * db);
        for (std::size_t i = 0; i < n; ++i)
          std::copy_n(up.begin() + static_cast<long>(i * (da + db) + da), db,
                      gb.begin() + static_cast<long>(i * db));
        accumulate(tape, b, gb);
      }
    };
  });
}

Tensor stack_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack_rows: no parts");
  const Shape& part_shape = parts[0].shape();
  const std::size_t part_size = parts[0].size();
  for (const Tensor& p : parts) {
    if (p.shape() != part_shape) throw DimensionError("stack_rows: parts differ in shape");
  }
  std::vector<double> out;
  out.reserve(parts.size() * part_size);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());

  Shape out_shape;
  if (part_size == 1) {
    out_shape = {parts.size()};  // scalars stack into a vector
  } else if (part_shape.size() == 1) {
    out_shape = {parts.size(), part_shape[0]};
  } else {
    throw DimensionError("stack_rows: parts must be scalars or 1-D");
  }

  check_finite(out, "stack_rows");
  Tensor result(std::move(out_shape), std::move(out));

  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    if (!p.on_tape()) continue;
    if (tape == nullptr) tape = p.tape();
    else if (tape != p.tape()) throw ContractError("stack_rows: parts on different tapes");
  }
  if (tape == nullptr) return result;

  std::vector<int> ids;
  std::vector<Tensor> owned(parts.begin(), parts.end());
  for (const Tensor& p : owned) {
    if (p.on_tape()) ids.push_back(p.node());
  }
  Tape::attach(
      result, tape,
      tape->add_node(
          result.size(), std::move(ids),
          [owned = std::move(owned), part_size](Tape& t, const std::vector<double>& up) {
            for (std::size_t i = 0; i < owned.size(); ++i) {
              if (!owned[i].on_tape()) continue;
              std::vector<double> g(up.begin() + static_cast<long>(i * part_size),
                                    up.begin() + static_cast<long>((i + 1) * part_size));
              accumulate(t, owned[i], g);
            }
          }));
  return result;
}

Tensor diag(const Tensor& a) {
  if (a.ndim() != 2 || a.rows() != a.cols()) throw DimensionError("diag: tensor is not square");
  const std::size_t n = a.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i * n + i];
  return make_result({n}, std::move(out), "diag", {&a}, [&](const Tensor&) {
    return [a, n](Tape& tape, const std::vector<double>& up) {
      std::vector<double> da(a.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) da[i * n + i] = up[i];
      accumulate(tape, a, da);
    };
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_product(shape) != a.size()) throw DimensionError("reshape: size mismatch");
  std::vector<double> out = a.values();
  return make_result(std::move(shape), std::move(out), "reshape", {&a}, [&](const Tensor&) {
    return [a](Tape& tape, const std::vector<double>& up) { accumulate(tape, a, up); };
  });
}

Tensor gaussian(SeededRng& rng, const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("gaussian: zero-size shape");
  }
  if (shape.empty()) throw DimensionError("gaussian: empty shape");
  std::vector<double> out(shape_product(shape));
  for (double& x : out) x = rng.normal();
  return Tensor(shape, std::move(out));
}

}  // namespace diffret
