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

#include "fbunet/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace fbunet
{

std::string Shape::str() const
{
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

namespace detail
{
namespace
{
thread_local bool g_grad_mode = true;
}

bool grad_mode_enabled() { return g_grad_mode; }

void set_grad_mode(bool on) { g_grad_mode = on; }

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_mode_enabled()) { detail::set_grad_mode(false); }

NoGradGuard::~NoGradGuard() { detail::set_grad_mode(previous_); }

namespace
{

void check_shape(const Shape & shape)
{
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor dimension " + shape.str());
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(const Shape & shape, T fill) : node_(std::make_shared<detail::Node<T>>())
{
  check_shape(shape);
  node_->shape = shape;
  node_->values = Vec<T>::Constant(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(const Shape & shape, Vec<T> values) : node_(std::make_shared<detail::Node<T>>())
{
  check_shape(shape);
  if (values.size() != shape.numel()) {
    throw ShapeError(
      "value count " + std::to_string(values.size()) + " does not match shape " + shape.str());
  }
  node_->shape = shape;
  node_->values = std::move(values);
}

template <typename T>
Tensor<T>::Tensor(const Shape & shape, std::initializer_list<T> values)
: Tensor(shape, Eigen::Map<const Vec<T>>(values.begin(), static_cast<Eigen::Index>(values.size())))
{
}

template <typename T>
Tensor<T> & Tensor<T>::set_requires_grad(bool on)
{
  if (!is_leaf()) {
    throw ContractError("requires_grad can only be set on leaf tensors");
  }
  node_->requires_grad = on;
  if (on) {
    node_->grad_buffer().setZero();
  } else {
    node_->grad = Vec<T>();
  }
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad()
{
  node_->grad_buffer().setZero();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const
{
  return Tensor(node_->shape, node_->values);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const
{
  Tensor copy(node_->shape, node_->values);
  if (node_->requires_grad && is_leaf()) {
    copy.set_requires_grad(true);
  }
  return copy;
}

template <typename T>
Tensor<T> Tensor<T>::make_result(
  const Shape & shape, Vec<T> values, std::vector<Tensor> parents, BackwardFn backward)
{
  Tensor out(shape, std::move(values));
  if (!detail::grad_mode_enabled()) {
    return out;
  }
  bool any = false;
  for (const auto & p : parents) {
    any = any || p.requires_grad();
  }
  if (!any) {
    return out;
  }
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto & p : parents) {
    out.node_->parents.push_back(p.node_);
  }
  out.node_->backward = std::move(backward);
  return out;
}

template <typename T>
void backward(const Tensor<T> & loss)
{
  if (!loss || loss.shape() != Shape{1, 1, 1, 1}) {
    throw ContractError("backward() requires a (1,1,1,1) loss tensor");
  }
  using Node = detail::Node<T>;
  Node * root = loss.node().get();
  if (!root->requires_grad) {
    return;
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node *> order;
  std::unordered_set<Node *> visited;
  std::vector<std::pair<Node *, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto & [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node * parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node * node : order) {
    if (node->backward) {
      node->grad_buffer().setZero();
    }
  }
  root->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node * node = *it;
    if (node->backward) {
      node->backward(*node);
      if (node != root) {
        node->grad = Vec<T>();
      }
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float> &);
template void backward(const Tensor<double> &);

}  // namespace fbunet
