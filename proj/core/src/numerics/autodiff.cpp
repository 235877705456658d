// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "memaudit/errors.hpp"

namespace memaudit::numerics {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::variable(Tensor value) {
  nodes_.push_back({std::move(value), {}, {}, {}, true});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back({std::move(value), {}, {}, {}, false});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_.at(id).requires_grad;
  Node node{std::move(value), {}, std::move(inputs), {}, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) {
    throw std::invalid_argument("backward: loss belongs to another tape");
  }
  if (backward_done_) {
    throw std::logic_error("backward: tape already differentiated");
  }
  Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_to_string(root.value.shape()));
  }
  if (!root.value.all_finite()) {
    throw NumericalError("backward: loss is not finite");
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

const Tensor& Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) {
    // Unreached: materialize an exact zero of the right shape.
    auto& self = const_cast<Tape&>(*this);
    return self.grad_buffer(v.id());
  }
  return n.grad;
}

namespace {

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()) + " differ");
  }
}

Shape spatial_output(const Shape& input, std::size_t channels,
                     const std::size_t (&extent)[3], std::size_t batch) {
  if (input.size() == 4) return {channels, extent[0], extent[1], extent[2]};
  return {batch, channels, extent[0], extent[1], extent[2]};
}

}  // namespace

Var conv3d(const Var& input, const Var& kernel, ConvGeometry geom) {
  require_same_tape(input, kernel, "conv3d");
  const auto d = kernels::conv_dims(input.shape(), kernel.shape(), geom);
  Tensor out(spatial_output(input.shape(), d.c_out, d.out, d.batch));
  kernels::conv_forward(d, input.value().data().data(),
                        kernel.value().data().data(), out.data().data());
  const std::size_t xi = input.id(), ki = kernel.id();
  return input.tape().record(
      std::move(out), {xi, ki}, [d, xi, ki](Tape& t, std::size_t self) {
        const double* dy = t.output_grad(self).data().data();
        if (t.requires_grad(xi)) {
          kernels::conv_backward_input(d, dy, t.value(ki).data().data(),
                                       t.grad_buffer(xi).data().data());
        }
        if (t.requires_grad(ki)) {
          kernels::conv_backward_kernel(d, t.value(xi).data().data(), dy,
                                        t.grad_buffer(ki).data().data());
        }
      });
}

Var transposed_conv3d(const Var& input, const Var& kernel, ConvGeometry geom) {
  require_same_tape(input, kernel, "transposed_conv3d");
  const auto d =
      kernels::transposed_conv_dims(input.shape(), kernel.shape(), geom);
  Tensor out(spatial_output(input.shape(), d.c_in, d.in, d.batch));
  kernels::conv_backward_input(d, input.value().data().data(),
                               kernel.value().data().data(), out.data().data());
  const std::size_t xi = input.id(), ki = kernel.id();
  return input.tape().record(
      std::move(out), {xi, ki}, [d, xi, ki](Tape& t, std::size_t self) {
        const double* dy = t.output_grad(self).data().data();
        if (t.requires_grad(xi)) {
          kernels::conv_forward(d, dy, t.value(ki).data().data(),
                                t.grad_buffer(xi).data().data());
        }
        if (t.requires_grad(ki)) {
          // Roles swap: the upstream gradient is the "input" of the conv.
          kernels::conv_backward_kernel(d, dy, t.value(xi).data().data(),
                                        t.grad_buffer(ki).data().data());
        }
      });
}

Var add_channel_bias(const Var& input, const Var& bias) {
  require_same_tape(input, bias, "add_channel_bias");
  const Shape& s = input.shape();
  if (s.size() < 2) {
    throw ShapeError("add_channel_bias: input needs a channel axis, got " +
                     shape_to_string(s));
  }
  // Rank-4 inputs are unbatched [C,...]; rank 2 and 5 carry a batch axis.
  const bool batched = s.size() != 4;
  const std::size_t batch = batched ? s[0] : 1;
  const std::size_t channels = batched ? s[1] : s[0];
  const std::size_t inner = shape_size(s) / (batch * channels);
  const Shape& bs = bias.shape();
  bool per_sample;
  if (bs == Shape{channels}) {
    per_sample = false;
  } else if (batched && bs == Shape{batch, channels}) {
    per_sample = true;
  } else {
    throw ShapeError("add_channel_bias: bias " + shape_to_string(bs) +
                     " does not match channel axis C=" + std::to_string(channels));
  }
  Tensor out = input.value();
  const Tensor& b = bias.value();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double shift = b[per_sample ? n * channels + c : c];
      double* p = out.data().data() + (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += shift;
    }
  }
  const std::size_t xi = input.id(), bi = bias.id();
  return input.tape().record(
      std::move(out), {xi, bi},
      [=](Tape& t, std::size_t self) {
        const Tensor& g = t.output_grad(self);
        if (t.requires_grad(xi)) {
          Tensor& gx = t.grad_buffer(xi);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.grad_buffer(bi);
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
              const double* p = g.data().data() + (n * channels + c) * inner;
              double acc = 0.0;
              for (std::size_t i = 0; i < inner; ++i) acc += p[i];
              gb[per_sample ? n * channels + c : c] += acc;
            }
          }
        }
      });
}

Var dense(const Var& input, const Var& weights, const Var& bias) {
  require_same_tape(input, weights, "dense");
  require_same_tape(input, bias, "dense");
  Tensor out = numerics::dense(input.value(), weights.value(), bias.value());
  const std::size_t m = weights.shape()[0];
  const std::size_t n = weights.shape()[1];
  const std::size_t rows = input.value().size() / n;
  const std::size_t xi = input.id(), wi = weights.id(), bi = bias.id();
  return input.tape().record(
      std::move(out), {xi, wi, bi}, [=](Tape& t, std::size_t self) {
        const double* g = t.output_grad(self).data().data();
        const double* x = t.value(xi).data().data();
        const double* w = t.value(wi).data().data();
        if (t.requires_grad(xi)) {
          double* gx = t.grad_buffer(xi).data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = g[r * m + i];
              const double* wrow = w + i * n;
              double* gxr = gx + r * n;
              for (std::size_t j = 0; j < n; ++j) gxr[j] += gi * wrow[j];
            }
          }
        }
        if (t.requires_grad(wi)) {
          double* gw = t.grad_buffer(wi).data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = g[r * m + i];
              const double* xr = x + r * n;
              double* gwrow = gw + i * n;
              for (std::size_t j = 0; j < n; ++j) gwrow[j] += gi * xr[j];
            }
          }
        }
        if (t.requires_grad(bi)) {
          double* gb = t.grad_buffer(bi).data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < m; ++i) gb[i] += g[r * m + i];
          }
        }
      });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = numerics::leaky_relu(x.value(), slope);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi},
                         [xi, slope](Tape& t, std::size_t self) {
                           const Tensor& g = t.output_grad(self);
                           const Tensor& v = t.value(xi);
                           Tensor& gx = t.grad_buffer(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += v[i] < 0.0 ? slope * g[i] : g[i];
                           }
                         });
}

Var tanh(const Var& x) {
  Tensor out = numerics::tanh(x.value());
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t xi = x.id();
  return x.tape().record(Tensor::scalar(acc), {xi},
                         [xi](Tape& t, std::size_t self) {
                           const double g = t.output_grad(self)[0];
                           Tensor& gx = t.grad_buffer(xi);
                           for (double& v : gx.data()) v += g;
                         });
}

Var spatial_mean(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 3) {
    throw ShapeError("spatial_mean: expected [N,C,spatial...], got " + shape_to_string(s));
  }
  const std::size_t rows = s[0] * s[1];
  const std::size_t inner = x.value().size() / rows;
  Tensor out({s[0], s[1]}, 0.0);
  const auto& xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < inner; ++i) acc += xv[r * inner + i];
    out[r] = acc / static_cast<double>(inner);
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi},
                         [xi, rows, inner](Tape& t, std::size_t self) {
                           const Tensor& g = t.output_grad(self);
                           Tensor& gx = t.grad_buffer(xi);
                           const double scale = 1.0 / static_cast<double>(inner);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double gr = g[r] * scale;
                             for (std::size_t i = 0; i < inner; ++i) gx[r * inner + i] += gr;
                           }
                         });
}

Var l1_loss(const Var& x, const Var& x_hat) {
  require_same_tape(x, x_hat, "l1_loss");
  require_same_shape(x, x_hat, "l1_loss");
  const double value = numerics::l1_loss(x.value(), x_hat.value());
  const std::size_t ai = x.id(), bi = x_hat.id();
  return x.tape().record(
      Tensor::scalar(value), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& a = t.value(ai);
        const Tensor& b = t.value(bi);
        const double scale = t.output_grad(self)[0] / static_cast<double>(a.size());
        const bool ga = t.requires_grad(ai), gb = t.requires_grad(bi);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double diff = a[i] - b[i];
          // Subgradient 0 at ties.
          const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          if (ga) t.grad_buffer(ai)[i] += scale * sgn;
          if (gb) t.grad_buffer(bi)[i] -= scale * sgn;
        }
      });
}

Var mse_loss(const Var& a, const Var& b) {
  require_same_tape(a, b, "mse_loss");
  require_same_shape(a, b, "mse_loss");
  const double value = numerics::mse_loss(a.value(), b.value());
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      Tensor::scalar(value), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& x = t.value(ai);
        const Tensor& y = t.value(bi);
        const double scale =
            2.0 * t.output_grad(self)[0] / static_cast<double>(x.size());
        const bool ga = t.requires_grad(ai), gb = t.requires_grad(bi);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double diff = scale * (x[i] - y[i]);
          if (ga) t.grad_buffer(ai)[i] += diff;
          if (gb) t.grad_buffer(bi)[i] -= diff;
        }
      });
}

}  // namespace memaudit::numerics
