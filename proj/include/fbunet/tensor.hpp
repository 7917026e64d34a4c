// Copyright 2026 The fbunet Authors
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

#ifndef FBUNET_TENSOR_HPP_
#define FBUNET_TENSOR_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "fbunet/errors.hpp"

namespace fbunet
{

/// Dense column vector used as flat storage for every tensor.
template <typename T>
using Vec = Eigen::Array<T, Eigen::Dynamic, 1>;

/// Row-major matrix views used by the GEMM-backed kernels.
template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Numeric mode of a whole graph. Extended precision is required for gradient checking.
enum class Precision { standard, extended };

struct Shape
{
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::int64_t numel() const { return std::int64_t{n} * c * h * w; }
  std::int64_t plane() const { return std::int64_t{h} * w; }
  bool operator==(const Shape &) const = default;
  std::string str() const;
};

namespace detail
{

template <typename T>
struct Node
{
  Shape shape;
  Vec<T> values;
  Vec<T> grad;  // empty until first touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward;

  /// Gradient buffer, zero-initialized on first access.
  Vec<T> & grad_buffer()
  {
    if (grad.size() != values.size()) {
      grad = Vec<T>::Zero(values.size());
    }
    return grad;
  }
};

bool grad_mode_enabled();

}  // namespace detail

/// Disables graph recording on the current thread while alive.
class NoGradGuard
{
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard & operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

/// 4-D (n, c, h, w) tensor handle. Copies share storage and graph position;
/// use `detach()` or `clone()` for an independent copy.
template <typename T>
class Tensor
{
public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  using BackwardFn = std::function<void(detail::Node<T> &)>;

  Tensor() = default;
  explicit Tensor(const Shape & shape, T fill = T(0));
  Tensor(const Shape & shape, Vec<T> values);
  Tensor(const Shape & shape, std::initializer_list<T> values);

  explicit operator bool() const { return static_cast<bool>(node_); }

  const Shape & shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->shape.numel(); }
  int n() const { return node_->shape.n; }
  int c() const { return node_->shape.c; }
  int h() const { return node_->shape.h; }
  int w() const { return node_->shape.w; }

  const Vec<T> & values() const { return node_->values; }
  Vec<T> & values() { return node_->values; }
  T * data() { return node_->values.data(); }
  const T * data() const { return node_->values.data(); }

  std::int64_t index(int in, int ic, int ih, int iw) const
  {
    const Shape & s = node_->shape;
    return ((std::int64_t{in} * s.c + ic) * s.h + ih) * s.w + iw;
  }
  T operator()(int in, int ic, int ih, int iw) const { return node_->values[index(in, ic, ih, iw)]; }
  T & operator()(int in, int ic, int ih, int iw) { return node_->values[index(in, ic, ih, iw)]; }

  bool requires_grad() const { return node_->requires_grad; }
  /// Marks a leaf as trainable and allocates a zero gradient.
  Tensor & set_requires_grad(bool on);
  bool is_leaf() const { return !node_->backward; }
  bool has_grad() const { return node_->grad.size() == node_->values.size(); }
  const Vec<T> & grad() const { return node_->grad; }
  Vec<T> & grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// New leaf holding a copy of the values.
  Tensor detach() const;
  /// Deep copy preserving requires_grad (gradient is not copied).
  Tensor clone() const;

  const NodePtr & node() const { return node_; }

  /// Builds an op result. The graph edge and backward closure are recorded
  /// only when grad mode is on and some parent requires a gradient.
  static Tensor make_result(
    const Shape & shape, Vec<T> values, std::vector<Tensor> parents, BackwardFn backward);

private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Reverse-mode sweep from a (1,1,1,1) loss. Leaf gradients accumulate.
template <typename T>
void backward(const Tensor<T> & loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward(const Tensor<float> &);
extern template void backward(const Tensor<double> &);

}  // namespace fbunet

#endif  // FBUNET_TENSOR_HPP_
