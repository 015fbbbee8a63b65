#pragma once

#include <span>
#include <vector>

#include "remembra/tape.hpp"
#include "remembra/tensor.hpp"

namespace remembra {

// Differentiable primitives. Every op computes its value through the kernel
// layer and, when `tape` is non-null and an input is tracked, records a node
// with the matching backward rule. Passing tape = nullptr gives plain value
// computation.

enum class OpKind {
  matmul,
  conv2d,
  add,
  mul,
  relu,
  tanh,
  sigmoid,
  mean_spatial,
  concat,
  softmax_cross_entropy,
  huber,
};

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
// Stride 1, zero "same" padding; x is [N,H,W,Ci], k is [kh,kw,Ci,Co] with odd kh/kw.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& k);
// add: equal shapes, [M,N]+[N] row broadcast, [N,H,W,C]+[C] channel broadcast, or [1] scalar.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
// mul: equal shapes, or [1] scalar on either side.
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double k);
Tensor relu(Tape* tape, const Tensor& x);
Tensor tanh(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);
// [N,H,W,C] -> [N,C] mean over the spatial window.
Tensor mean_spatial(Tape* tape, const Tensor& x);
// axis 0 for any rank (equal trailing dims) or axis 1 for rank 2.
Tensor concat(Tape* tape, std::span<const Tensor> parts, int axis);
// Mean cross-entropy of softmax(logits[N,C]) at integer labels (length N).
Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits, std::span<const int> labels);
// scale * mean_i rho_delta(a_i - b_i), the standard Huber penalty.
Tensor huber_loss(Tape* tape, const Tensor& a, const Tensor& b, double delta = 1.0,
                  double scale = 1.0);
// -mean_i sum_c target[i,c] log softmax(logits)[i,c]; targets are constants.
Tensor soft_cross_entropy(Tape* tape, const Tensor& logits, const Tensor& target_probs);
Tensor groupnorm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 int groups, double eps = 1e-5);
Tensor transpose2d(Tape* tape, const Tensor& x);
Tensor reshape(Tape* tape, const Tensor& x, Shape shape);

// Uniform dispatch over the primitive op set. Ops with non-tensor arguments
// take them here as trailing config: labels for softmax_cross_entropy (cast
// from the second tensor), delta/scale for huber.
Tensor forward_primitive(Tape* tape, OpKind kind, std::span<const Tensor> inputs,
                         double delta = 1.0, double scale = 1.0);

// Value-only helpers.
Tensor softmax(const Tensor& logits);
Tensor mean_rows(const Tensor& x);  // [N,D] -> [D]
double accuracy_top1(const Tensor& logits, std::span<const int> labels);

}  // namespace remembra
