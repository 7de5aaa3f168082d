#include "crmman/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "crmman/errors.hpp"
#include "crmman/random.hpp"

namespace crmman::ad {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Tensor& t) { return ConstMap(t.values().data(), t.rows(), t.cols()); }
MutMap view(Tensor& t) { return MutMap(t.values().data(), t.rows(), t.cols()); }

// out += a * b^T
void add_matmul_bt(const Tensor& a, const Tensor& b, Tensor& out) {
  view(out).noalias() += view(a) * view(b).transpose();
}

// out += a^T * b
void add_matmul_at(const Tensor& a, const Tensor& b, Tensor& out) {
  view(out).noalias() += view(a).transpose() * view(b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {
  for (std::size_t extent : shape_) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (std::size_t extent : shape_) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape_));
  }
  if (product(shape_) != values_.size()) {
    throw DimensionError("tensor " + shape_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw UsageError("item() on non-scalar tensor " + shape_string(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

// ---------------------------------------------------------------------------
// Value kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  return out;
}

Tensor elu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v >= 0.0 ? v : std::expm1(v);
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu: slope must lie in (0, 1), got " + std::to_string(slope));
  }
  Tensor out = x;
  for (double& v : out.values()) v = v >= 0.0 ? v : slope * v;
  return out;
}

namespace {
void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
}
}  // namespace

std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  check_dropout_rate(rate);
  std::vector<double> mask(n, 1.0);
  if (rate == 0.0) return mask;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  check_dropout_rate(rate);
  if (!training || rate == 0.0) return x;
  const auto mask = dropout_mask(x.size(), rate, seed);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor out = Tensor::matrix(rows, cols);
  for (double& v : out.values()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  return out;
}

// ---------------------------------------------------------------------------
// ParameterStore / Gradients

ParamId ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw UsageError("duplicate parameter name: " + name);
  const ParamId id = entries_.size();
  entries_.push_back({name, std::move(value), trainable});
  index_.emplace(name, id);
  return id;
}

ParamId ParameterStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

Gradients Gradients::zeros_like(const ParameterStore& store) {
  Gradients g;
  g.per_param.reserve(store.size());
  for (ParamId i = 0; i < store.size(); ++i) g.per_param.emplace_back(store.value(i).shape());
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  if (other.size() != size()) throw DimensionError("gradient sets differ in size");
  for (std::size_t i = 0; i < size(); ++i) per_param[i] += other.per_param[i];
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, -1});
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(ParameterStore& store, ParamId id) {
  if (store_ && store_ != &store) {
    throw UsageError("a tape binds parameters from a single store");
  }
  store_ = &store;
  if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return {this, it->second};
  const bool trainable = store.trainable(id);
  nodes_.push_back(Node{store.value(id), {}, {}, trainable, static_cast<std::ptrdiff_t>(id)});
  param_nodes_.emplace(id, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  bool needs = false;
  for (NodeId in : inputs) needs = needs || nodes_[in].requires_grad;
  nodes_.push_back(Node{std::move(value), std::move(inputs),
                        needs ? std::move(backward) : BackwardFn{}, needs, -1});
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad(NodeId id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(nodes_[id].value.shape());
  return g;
}

Gradients Tape::backward(Var root) {
  if (root.tape != this) throw UsageError("backward: root belongs to another tape");
  if (nodes_[root.id].value.size() != 1) {
    throw UsageError("backward: root must be scalar, got " +
                     shape_string(nodes_[root.id].value.shape()));
  }
  Gradients result;
  if (store_) result = Gradients::zeros_like(*store_);

  grads_.assign(nodes_.size(), Tensor{});
  grad(root.id).fill(1.0);
  for (NodeId id = root.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || grads_[id].empty()) continue;
    if (node.param >= 0) {
      result[static_cast<ParamId>(node.param)] += grads_[id];
    } else if (node.backward) {
      node.backward(*this, id);
    }
  }
  grads_.clear();
  return result;
}

// ---------------------------------------------------------------------------
// Recorded operations

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  Tensor out = matmul(a.value(), b.value());
  return t.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) add_matmul_bt(g, t.value(b), t.grad(a));
    if (t.requires_grad(b)) add_matmul_at(t.value(a), g, t.grad(b));
  });
}

Var transpose(Var a) {
  return a.tape->record(transpose(a.value()), {a.id}, [a = a.id](Tape& t, NodeId self) {
    t.grad(a) += transpose(t.grad(self));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) t.grad(b) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad(a);
      const Tensor& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      const Tensor& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return a.tape->record(std::move(out), {a.id}, [a = a.id, factor](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) {
    throw DimensionError("scale_by: factor must have one element, got " +
                         shape_string(s.shape()));
  }
  const double factor = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return a.tape->record(std::move(out), {a.id, s.id}, [a = a.id, s = s.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      const double factor = t.value(s)[0];
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    }
    if (t.requires_grad(s)) {
      const Tensor& av = t.value(a);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      t.grad(s)[0] += acc;
    }
  });
}

Var add_row_bias(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  require_matrix(av, "add_row_bias");
  if (bv.size() != av.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_string(bv.shape()) +
                         " does not match " + shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return a.tape->record(std::move(out), {a.id, bias.id},
                        [a = a.id, b = bias.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var sum(Var a) {
  const auto vals = a.value().values();
  const double total = std::accumulate(vals.begin(), vals.end(), 0.0);
  return a.tape->record(Tensor::scalar(total), {a.id}, [a = a.id](Tape& t, NodeId self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(a).values()) v += g;
  });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "mean_rows");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::matrix(1, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c] += av(r, c);
  for (double& v : out.values()) v /= static_cast<double>(m);
  return a.tape->record(std::move(out), {a.id}, [a = a.id, m, n](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += g[c] * inv;
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<NodeId> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row counts differ, " +
                           shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    offsets.push_back(n);
    n += p.cols();
    ids.push_back(p.id);
  }
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < m; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + offsets[k]);
  }
  return parts.front().tape->record(std::move(out), ids, [ids, offsets](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& gk = t.grad(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r)
        for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(r, offsets[k] + c);
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_matrix(av, "slice_cols");
  if (begin >= end || end > av.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(av.shape()));
  }
  Tensor out = Tensor::matrix(av.rows(), end - begin);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = av(r, c);
  return a.tape->record(std::move(out), {a.id}, [a = a.id, begin](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  const Tensor& av = a.value();
  require_matrix(av, "gather_rows");
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor out = Tensor::matrix(indices.size(), av.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= av.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(indices[k]) +
                           " out of range for " + shape_string(av.shape()));
    }
    std::copy(av.row(indices[k]).begin(), av.row(indices[k]).end(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return a.tape->record(std::move(out), {a.id}, [a = a.id, idx = std::move(idx)](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(a);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto dst = ga.row(idx[k]);
      auto src = g.row(k);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var softmax_rows(Var x) {
  Tensor out = softmax_rows(x.value());
  return x.tape->record(std::move(out), {x.id}, [x = x.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var elu(Var x) {
  return x.tape->record(elu(x.value()), {x.id}, [x = x.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(x);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (in[i] >= 0.0 ? 1.0 : y[i] + 1.0);
  });
}

Var leaky_relu(Var x, double slope) {
  return x.tape->record(leaky_relu(x.value(), slope), {x.id}, [x = x.id, slope](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (in[i] >= 0.0 ? 1.0 : slope);
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return x.tape->record(std::move(out), {x.id}, [x = x.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::tanh(v);
  return x.tape->record(std::move(out), {x.id}, [x = x.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var square(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= v;
  return x.tape->record(std::move(out), {x.id}, [x = x.id](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * g[i] * in[i];
  });
}

Var dropout(Var x, double rate, bool training, std::uint64_t seed) {
  check_dropout_rate(rate);
  if (!training || rate == 0.0) return x;
  auto mask = dropout_mask(x.value().size(), rate, seed);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape->record(std::move(out), {x.id}, [x = x.id, mask = std::move(mask)](Tape& t, NodeId self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var neg_log_softmax(Var x, std::size_t target) {
  const Tensor& xv = x.value();
  if (xv.rows() != 1 || target >= xv.cols()) {
    throw DimensionError("neg_log_softmax: target " + std::to_string(target) +
                         " invalid for " + shape_string(xv.shape()));
  }
  const auto vals = xv.values();
  const double mx = *std::max_element(vals.begin(), vals.end());
  double total = 0.0;
  for (double v : vals) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  return x.tape->record(Tensor::scalar(lse - vals[target]), {x.id},
                        [x = x.id, target, lse](Tape& t, NodeId self) {
    const double g = t.grad(self)[0];
    const Tensor& in = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < in.size(); ++i) {
      gx[i] += g * (std::exp(in[i] - lse) - (i == target ? 1.0 : 0.0));
    }
  });
}

}  // namespace crmman::ad
