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

#pragma once

// Dense float64 tensors with a reverse-mode gradient tape.
//
// A Tensor is a cheap shared handle to storage. Operations on tensors that
// require gradients record a node holding their inputs and a backward rule;
// nodes carry a monotonically increasing id, so sorting the nodes reachable
// from a root by descending id yields a valid reverse topological order.
//
// All operations view a tensor as a matrix [rows x cols], where cols is the
// last dimension and rows is the product of the leading ones. A rank-0 or
// rank-1 tensor is a single row.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fsd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl;

using BackwardFn = std::function<void(TensorImpl& out)>;

struct Node {
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  void ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev,
                      bool requires_grad = false);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double bound,
                        bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Writable storage. Only meaningful for leaves (parameters, inputs); writing
  // into a recorded intermediate does not update downstream values.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> row(std::size_t r) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero grad buffer if none is populated.
  void ensure_grad();
  void zero_grad();

  // Copy of the values with no tape history.
  Tensor detach() const;
  bool is_leaf() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Creates an op result. When grad mode is on and any input requires grad the
// result is attached to a new tape node running `backward`.
Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs, detail::BackwardFn backward);

// Populates grads of every requires_grad ancestor of a scalar root. Leaf
// grads accumulate across calls; intermediate grads are reset per call.
void backward(const Tensor& root);

// Primitive set.
Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise when shapes agree; b may also be a row vector of width
// a.cols() broadcast over rows, or a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
// Normalizes along the last axis. `axis` must name the last axis (-1 or
// rank-1).
Tensor log_softmax(const Tensor& x, int axis = -1);
Tensor softmax(const Tensor& x, int axis = -1);
// Reduces the last axis; result shape is the leading dims (rank-0 for a
// vector).
Tensor logsumexp(const Tensor& x);
// Rows of a matrix selected by index, e.g. an embedding lookup.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// Normalizes each row then applies per-column gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor transpose(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace fsd
