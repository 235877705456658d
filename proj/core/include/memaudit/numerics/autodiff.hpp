// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over a linear tape.
//
// A Tape owns every intermediate value produced during one forward pass.
// Primitive ops append a node holding the forward value and a closure that
// pushes the node's gradient to its inputs. Tape::backward() seeds the scalar
// loss with 1 and walks the nodes in reverse recording order.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "memaudit/numerics/ops.hpp"
#include "memaudit/numerics/tensor.hpp"

namespace memaudit::numerics {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is tracked.
  Var variable(Tensor value);
  /// Leaf excluded from differentiation.
  Var constant(Tensor value);

  /// Records an op result. `inputs` lists the operand node ids.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Propagates d(loss)/d(node) to every node that requires a gradient.
  /// Tracked leaves the loss does not depend on keep an exact zero gradient.
  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of a node after backward(); zeros if the node is unreachable.
  const Tensor& grad(const Var& v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of an input node, allocated on first use. Ops call this
  /// from their backward closures.
  Tensor& grad_buffer(std::size_t id);
  const Tensor& output_grad(std::size_t self) const { return nodes_[self].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  // Deque keeps value references stable while ops append nodes.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// Differentiable counterparts of the kernels in ops.hpp.
Var conv3d(const Var& input, const Var& kernel, ConvGeometry geom);
Var transposed_conv3d(const Var& input, const Var& kernel, ConvGeometry geom);
/// Adds bias[c] over every voxel of channel c. Bias is [C], or [N,C] for a
/// per-sample shift (used for time conditioning).
Var add_channel_bias(const Var& input, const Var& bias);
Var dense(const Var& input, const Var& weights, const Var& bias);
Var leaky_relu(const Var& x, double slope = kDefaultLeakySlope);
Var tanh(const Var& x);
Var reshape(const Var& x, Shape shape);
Var sum(const Var& x);
/// [N,C,spatial...] -> [N,C]: mean over every spatial position.
Var spatial_mean(const Var& x);
Var l1_loss(const Var& x, const Var& x_hat);
Var mse_loss(const Var& a, const Var& b);

}  // namespace memaudit::numerics
