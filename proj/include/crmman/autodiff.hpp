#pragma once

// Dense row-major tensors of doubles with a tape-based reverse-mode
// gradient engine. Operations are free functions over `Var` handles; each
// one evaluates eagerly and records a backward closure on the tape.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace crmman::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor row_vector(std::vector<double> values);
  static Tensor scalar(double value) { return Tensor({1, 1}, value); }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }
  bool empty() const { return values_.empty(); }

  /// Leading extent; for rank-2 tensors the row count.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Product of trailing extents; for rank-2 tensors the column count.
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }

  /// Scalar value of a one-element tensor.
  double item() const;
  bool all_finite() const;
  void fill(double value);
  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Plain value kernels (no recording).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& x);
Tensor elu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
/// Inverted dropout. Identity when `training` is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);
/// Keep-mask used by `dropout`: 0 or 1/(1-rate) per element.
std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed);

/// Uniform in +-sqrt(6 / (rows + cols)), drawn from a generator seeded with `seed`.
Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Parameters.

using ParamId = std::size_t;

/// Named trainable tensors. Insertion order is the canonical order used for
/// gradients, optimizer state and checkpoints.
class ParameterStore {
 public:
  ParamId add(const std::string& name, Tensor value, bool trainable = true);

  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& name) const { return index_.contains(name); }
  ParamId id(const std::string& name) const;

  const std::string& name(ParamId id) const { return entries_.at(id).name; }
  Tensor& value(ParamId id) { return entries_.at(id).value; }
  const Tensor& value(ParamId id) const { return entries_.at(id).value; }
  Tensor& value(const std::string& name) { return value(id(name)); }
  const Tensor& value(const std::string& name) const { return value(id(name)); }
  bool trainable(ParamId id) const { return entries_.at(id).trainable; }
  void set_trainable(ParamId id, bool trainable) { entries_.at(id).trainable = trainable; }

  std::size_t scalar_count() const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, ParamId> index_;
};

/// One gradient tensor per parameter, aligned with ParameterStore ids.
/// Parameters the root does not depend on carry zeros.
struct Gradients {
  std::vector<Tensor> per_param;

  Tensor& operator[](ParamId id) { return per_param[id]; }
  const Tensor& operator[](ParamId id) const { return per_param[id]; }
  std::size_t size() const { return per_param.size(); }

  static Gradients zeros_like(const ParameterStore& store);
  /// Adds `other` into this, parameter by parameter.
  void accumulate(const Gradients& other);
};

// ---------------------------------------------------------------------------
// Recording.

using NodeId = std::size_t;
class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

using BackwardFn = std::function<void(Tape&, NodeId self)>;

/// The computation record: nodes in creation order, which is a topological
/// order by construction. Not thread-safe; use one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Repeated calls for the same id return the
  /// same node. Frozen parameters are recorded as constants.
  Var parameter(ParameterStore& store, ParamId id);
  Var parameter(ParameterStore& store, const std::string& name) {
    return parameter(store, store.id(name));
  }

  /// Records an operation. `backward` is invoked at most once, only when
  /// some input needs a gradient, and must accumulate into `grad(input)`.
  Var record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradient buffer of a node during `backward`, allocated on first use.
  Tensor& grad(NodeId id);

  /// Reverse sweep from a one-element root. Throws UsageError otherwise.
  Gradients backward(Var root);

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::ptrdiff_t param = -1;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  ParameterStore* store_ = nullptr;
  std::unordered_map<ParamId, NodeId> param_nodes_;
};

// ---------------------------------------------------------------------------
// Recorded operations. All tensors are rank 2; vectors are 1 x n rows.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
/// Multiplies every element of `a` by the one-element `s`.
Var scale_by(Var a, Var s);
/// Adds the 1 x n row `bias` to every row of the m x n `a`.
Var add_row_bias(Var a, Var bias);
Var sum(Var a);
/// Column-wise mean, m x n -> 1 x n.
Var mean_rows(Var a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Stacks the listed rows of `a`; indices may repeat.
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var softmax_rows(Var x);
Var elu(Var x);
Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);
Var tanh(Var x);
Var square(Var x);
Var dropout(Var x, double rate, bool training, std::uint64_t seed);
/// -log softmax(x)[target] for a 1 x n row, via log-sum-exp.
Var neg_log_softmax(Var x, std::size_t target);

}  // namespace crmman::ad
