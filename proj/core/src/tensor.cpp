// Copyright 2026 The fsdelib Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fsdelib/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "fsdelib/errors.hpp"

namespace fsd {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_node_id{1};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t rows_of(const Shape& s) {
  if (s.size() <= 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

detail::TensorImpl& in(detail::TensorImpl& out, std::size_t i) {
  return *out.node->inputs[i];
}

enum class Broadcast { kElementwise, kRow, kScalar };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kElementwise;
  if (b.numel() == 1) return Broadcast::kScalar;
  const bool row_vector =
      b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1);
  if (row_vector && b.cols() == a.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(op) + ": cannot combine " +
                       shape_string(a.shape()) + " with " +
                       shape_string(b.shape()));
}

std::size_t b_index(Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::kElementwise:
      return i;
    case Broadcast::kRow:
      return i % cols;
    case Broadcast::kScalar:
      return 0;
  }
  return 0;
}

void check_last_axis(const Tensor& x, int axis, const char* op) {
  const int rank = static_cast<int>(x.rank());
  const bool last = axis == -1 || (rank > 0 && axis == rank - 1) ||
                    (rank == 0 && axis == 0);
  if (!last) {
    throw DimensionError(std::string(op) +
                         ": only the last axis is supported");
  }
  if (x.cols() == 0) {
    throw DimensionError(std::string(op) + ": empty axis");
  }
}

template <typename F>
Tensor unary_op(const Tensor& x, F&& f, detail::BackwardFn backward) {
  const auto src = x.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void detail::TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double bound,
                       bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  std::vector<double> data(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
  return Tensor(Shape{n, n}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape().size()) {
    throw DimensionError("dimension " + std::to_string(i) +
                         " out of range for " + shape_string(shape()));
  }
  return shape()[i];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }

std::span<const double> Tensor::data() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) {
    throw DimensionError("index out of range");
  }
  return impl_->data[r * cols() + c];
}

std::vector<double> Tensor::row(std::size_t r) const {
  if (r >= rows()) throw DimensionError("row index out of range");
  const auto d = data().subspan(r * cols(), cols());
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!impl_) throw ContractError("use of an undefined tensor");
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const {
  return impl_ && impl_->grad.size() == impl_->data.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) {
    throw ContractError("tensor " + shape_string(shape()) +
                        " has no populated gradient");
  }
  return impl_->grad;
}

void Tensor::ensure_grad() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  impl_->ensure_grad();
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

// ---------------------------------------------------------------------------
// Tape

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      detail::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
  return out;
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward() needs a scalar root, got " +
                        (root.defined() ? shape_string(root.shape())
                                        : std::string("undefined")));
  }
  if (!root.requires_grad()) {
    throw ContractError("backward() root does not require grad");
  }

  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<detail::TensorImpl*> stack{root.impl().get()};
  while (!stack.empty()) {
    auto* t = stack.back();
    stack.pop_back();
    if (!t->node || !seen.insert(t).second) continue;
    order.push_back(t);
    for (auto& input : t->node->inputs) {
      if (input->requires_grad && input->node) stack.push_back(input.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::TensorImpl* a, const detail::TensorImpl* b) {
              return a->node->id > b->node->id;
            });
  for (auto* t : order) t->grad.assign(t->data.size(), 0.0);

  auto* r = root.impl().get();
  r->ensure_grad();
  r->grad[0] += 1.0;
  for (auto* t : order) t->node->backward(*t);
}

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands, got " +
                         shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions disagree: " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> C(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_op_result({m, n}, std::move(C), {a, b},
                        [m, k, n](detail::TensorImpl& out) {
                          auto& ta = in(out, 0);
                          auto& tb = in(out, 1);
                          const double* G = out.grad.data();
                          if (ta.requires_grad) {
                            ta.ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                double s = 0.0;
                                for (std::size_t j = 0; j < n; ++j)
                                  s += G[i * n + j] * tb.data[p * n + j];
                                ta.grad[i * k + p] += s;
                              }
                          }
                          if (tb.requires_grad) {
                            tb.ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                const double av = ta.data[i * k + p];
                                if (av == 0.0) continue;
                                for (std::size_t j = 0; j < n; ++j)
                                  tb.grad[p * n + j] += av * G[i * n + j];
                              }
                          }
                        });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast mode = broadcast_mode(a, b, "add");
  const std::size_t cols = a.cols();
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i)
    out[i] = A[i] + B[b_index(mode, i, cols)];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [mode, cols](detail::TensorImpl& o) {
                          auto& ta = in(o, 0);
                          auto& tb = in(o, 1);
                          if (ta.requires_grad) {
                            ta.ensure_grad();
                            for (std::size_t i = 0; i < o.grad.size(); ++i)
                              ta.grad[i] += o.grad[i];
                          }
                          if (tb.requires_grad) {
                            tb.ensure_grad();
                            for (std::size_t i = 0; i < o.grad.size(); ++i)
                              tb.grad[b_index(mode, i, cols)] += o.grad[i];
                          }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast mode = broadcast_mode(a, b, "mul");
  const std::size_t cols = a.cols();
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i)
    out[i] = A[i] * B[b_index(mode, i, cols)];
  return make_op_result(
      a.shape(), std::move(out), {a, b}, [mode, cols](detail::TensorImpl& o) {
        auto& ta = in(o, 0);
        auto& tb = in(o, 1);
        if (ta.requires_grad) {
          ta.ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            ta.grad[i] += o.grad[i] * tb.data[b_index(mode, i, cols)];
        }
        if (tb.requires_grad) {
          tb.ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            tb.grad[b_index(mode, i, cols)] += o.grad[i] * ta.data[i];
        }
      });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, [factor](double v) { return v * factor; },
      [factor](detail::TensorImpl& o) {
        auto& t = in(o, 0);
        t.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          t.grad[i] += o.grad[i] * factor;
      });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](detail::TensorImpl& o) {
        auto& t = in(o, 0);
        t.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          t.grad[i] += o.grad[i] * (1.0 - o.data[i] * o.data[i]);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
      },
      [](detail::TensorImpl& o) {
        auto& t = in(o, 0);
        t.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          t.grad[i] += o.grad[i] * o.data[i] * (1.0 - o.data[i]);
      });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](detail::TensorImpl& o) {
        auto& t = in(o, 0);
        t.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          if (t.data[i] > 0.0) t.grad[i] += o.grad[i];
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](detail::TensorImpl& o) {
        auto& t = in(o, 0);
        t.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          t.grad[i] += o.grad[i] * o.data[i];
      });
}

Tensor log_softmax(const Tensor& x, int axis) {
  check_last_axis(x, axis, "log_softmax");
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(xr[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xr[c] - lse;
  }
  return make_op_result(x.shape(), std::move(out), {x},
                        [rows, cols](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r) {
                            const double* g = o.grad.data() + r * cols;
                            const double* y = o.data.data() + r * cols;
                            double gs = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) gs += g[c];
                            for (std::size_t c = 0; c < cols; ++c)
                              t.grad[r * cols + c] += g[c] - std::exp(y[c]) * gs;
                          }
                        });
}

Tensor softmax(const Tensor& x, int axis) {
  check_last_axis(x, axis, "softmax");
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = std::exp(xr[c] - mx);
      s += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= s;
  }
  return make_op_result(x.shape(), std::move(out), {x},
                        [rows, cols](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r) {
                            const double* g = o.grad.data() + r * cols;
                            const double* y = o.data.data() + r * cols;
                            double dot = 0.0;
                            for (std::size_t c = 0; c < cols; ++c)
                              dot += g[c] * y[c];
                            for (std::size_t c = 0; c < cols; ++c)
                              t.grad[r * cols + c] += y[c] * (g[c] - dot);
                          }
                        });
}

Tensor logsumexp(const Tensor& x) {
  check_last_axis(x, -1, "logsumexp");
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto X = x.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    if (mx == kNegInf) {
      out[r] = kNegInf;
      continue;
    }
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(xr[c] - mx);
    out[r] = mx + std::log(s);
  }
  Shape shape = x.shape();
  if (!shape.empty()) shape.pop_back();
  return make_op_result(std::move(shape), std::move(out), {x},
                        [rows, cols](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (o.data[r] == kNegInf) continue;
                            for (std::size_t c = 0; c < cols; ++c)
                              t.grad[r * cols + c] +=
                                  o.grad[r] *
                                  std::exp(t.data[r * cols + c] - o.data[r]);
                          }
                        });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index) {
  const std::size_t n = table.rows(), cols = table.cols();
  const auto T = table.data();
  std::vector<double> out(index.size() * cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) {
      throw DimensionError("gather_rows index " + std::to_string(index[i]) +
                           " out of range for " + std::to_string(n) + " rows");
    }
    std::copy_n(T.data() + index[i] * cols, cols, out.data() + i * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op_result({index.size(), cols}, std::move(out), {table},
                        [idx = std::move(idx), cols](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t c = 0; c < cols; ++c)
                              t.grad[idx[i] * cols + c] += o.grad[i * cols + c];
                        });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows column mismatch: " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_op_result({rows, cols}, std::move(out),
                        std::vector<Tensor>(parts.begin(), parts.end()),
                        [offsets = std::move(offsets)](detail::TensorImpl& o) {
                          for (std::size_t k = 0; k < offsets.size(); ++k) {
                            auto& t = in(o, k);
                            if (!t.requires_grad) continue;
                            t.ensure_grad();
                            for (std::size_t i = 0; i < t.grad.size(); ++i)
                              t.grad[i] += o.grad[offsets[k] + i];
                          }
                        });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols row mismatch: " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    cols += p.cols();
  }
  std::vector<double> out(rows * cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto d = p.data();
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.data() + r * w, w, out.data() + r * cols + off);
    off += w;
  }
  return make_op_result(
      {rows, cols}, std::move(out),
      std::vector<Tensor>(parts.begin(), parts.end()),
      [widths = std::move(widths), rows, cols](detail::TensorImpl& o) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          auto& t = in(o, k);
          const std::size_t w = widths[k];
          if (t.requires_grad) {
            t.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < w; ++c)
                t.grad[r * w + c] += o.grad[r * cols + off + c];
          }
          off += w;
        }
      });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t cols = x.cols();
  const auto d = x.data();
  std::vector<double> out(d.begin() + begin * cols, d.begin() + end * cols);
  return make_op_result({end - begin, cols}, std::move(out), {x},
                        [begin, cols](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                            t.grad[begin * cols + i] += o.grad[i];
                        });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols(), w = end - begin;
  const auto d = x.data();
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(d.data() + r * cols + begin, w, out.data() + r * w);
  return make_op_result({rows, w}, std::move(out), {x},
                        [rows, cols, begin, w](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < w; ++c)
                              t.grad[r * cols + begin + c] += o.grad[r * w + c];
                        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.numel() != cols || bias.numel() != cols) {
    throw DimensionError("layer_norm gain/bias must have " +
                         std::to_string(cols) + " values");
  }
  const auto X = x.data();
  const auto G = gain.data();
  const auto B = bias.data();
  std::vector<double> out(X.size());
  std::vector<double> xhat(X.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xr[c] - mean) * inv_std[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * G[c] + B[c];
    }
  }
  return make_op_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::TensorImpl& o) {
        auto& tx = in(o, 0);
        auto& tg = in(o, 1);
        auto& tb = in(o, 2);
        if (tg.requires_grad) tg.ensure_grad();
        if (tb.requires_grad) tb.ensure_grad();
        if (tx.requires_grad) tx.ensure_grad();
        std::vector<double> dh(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = o.grad.data() + r * cols;
          const double* h = xhat.data() + r * cols;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            if (tg.requires_grad) tg.grad[c] += g[c] * h[c];
            if (tb.requires_grad) tb.grad[c] += g[c];
            dh[c] = g[c] * tg.data[c];
            mean_dh += dh[c];
            mean_dh_h += dh[c] * h[c];
          }
          if (!tx.requires_grad) continue;
          mean_dh /= static_cast<double>(cols);
          mean_dh_h /= static_cast<double>(cols);
          for (std::size_t c = 0; c < cols; ++c)
            tx.grad[r * cols + c] +=
                inv_std[r] * (dh[c] - mean_dh - h[c] * mean_dh_h);
        }
      });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() > 2) {
    throw DimensionError("transpose expects rank <= 2, got " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto d = x.data();
  std::vector<double> out(d.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = d[r * cols + c];
  return make_op_result({cols, rows}, std::move(out), {x},
                        [rows, cols](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < cols; ++c)
                              t.grad[r * cols + c] += o.grad[c * rows + r];
                        });
}

Tensor sum(const Tensor& x) {
  const auto d = x.data();
  double s = 0.0;
  for (double v : d) s += v;
  return make_op_result(Shape{}, {s}, {x}, [](detail::TensorImpl& o) {
    auto& t = in(o, 0);
    t.ensure_grad();
    for (auto& g : t.grad) g += o.grad[0];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " to " +
                         shape_string(shape) + " changes element count");
  }
  const auto d = x.data();
  return make_op_result(std::move(shape), std::vector<double>(d.begin(), d.end()),
                        {x}, [](detail::TensorImpl& o) {
                          auto& t = in(o, 0);
                          t.ensure_grad();
                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                            t.grad[i] += o.grad[i];
                        });
}

}  // namespace fsd
