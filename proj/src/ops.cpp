#include "remembra/ops.hpp"

#include <cmath>
#include <cstring>

#include "remembra/kernels.hpp"

namespace remembra {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul: need rank-2 tensors, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  require(a.dim(1) == b.dim(0),
          "matmul: inner dims differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor out({M, N});
  kernels::gemm_nn(M, N, K, a.data(), b.data(), out.data(), false);
  if (!tape) return out;
  return tape->emit(out, {&a, &b}, [a, b, M, K, N](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::gemm_nt(M, K, N, g.data(), b.data(), gin[0]->data(), true);
    if (gin[1]) kernels::gemm_tn(K, N, M, a.data(), g.data(), gin[1]->data(), true);
  });
}

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& k) {
  require(x.rank() == 4, "conv2d: input must be [N,H,W,C], got " + shape_str(x.shape()));
  require(k.rank() == 4, "conv2d: kernel must be [kh,kw,Ci,Co], got " + shape_str(k.shape()));
  require(k.dim(0) % 2 == 1 && k.dim(1) % 2 == 1, "conv2d: kernel dims must be odd for same padding");
  require(x.dim(3) == k.dim(2), "conv2d: channel mismatch, input " + shape_str(x.shape()) +
                                    " vs kernel " + shape_str(k.shape()));
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int kh = k.dim(0), kw = k.dim(1), Co = k.dim(3);
  Tensor out({N, H, W, Co});
  kernels::conv2d(x.data(), N, H, W, Ci, k.data(), kh, kw, Co, out.data(), false);
  if (!tape) return out;
  return tape->emit(out, {&x, &k},
                    [x, k, N, H, W, Ci, kh, kw, Co](const Tensor& g, const std::vector<Tensor*>& gin) {
                      if (gin[0])
                        kernels::conv2d_grad_input(g.data(), N, H, W, Co, k.data(), kh, kw, Ci,
                                                   gin[0]->data(), true);
                      if (gin[1])
                        kernels::conv2d_grad_weight(g.data(), N, H, W, Co, x.data(), Ci, kh, kw,
                                                    gin[1]->data(), true);
                    });
}

namespace {
enum class AddMode { same, rowvec, chanvec, scalar_b };
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  AddMode mode;
  if (a.same_shape(b)) {
    mode = AddMode::same;
  } else if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) {
    mode = AddMode::rowvec;
  } else if (a.rank() == 4 && b.rank() == 1 && b.dim(0) == a.dim(3)) {
    mode = AddMode::chanvec;
  } else if (is_scalar(b)) {
    mode = AddMode::scalar_b;
  } else {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape());
  switch (mode) {
    case AddMode::same:
      kernels::ew_add(a.data(), b.data(), out.data(), a.size());
      break;
    case AddMode::rowvec:
      kernels::add_rowvec(a.data(), b.data(), out.data(), a.dim(0), a.dim(1));
      break;
    case AddMode::chanvec:
      kernels::add_chanvec(a.data(), b.data(), out.data(), a.size() / a.dim(3), a.dim(3));
      break;
    case AddMode::scalar_b: {
      const double k = b[0];
      for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + k;
      break;
    }
  }
  if (!tape) return out;
  return tape->emit(out, {&a, &b}, [mode, a, b](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::ew_add(gin[0]->data(), g.data(), gin[0]->data(), g.size());
    if (gin[1]) {
      switch (mode) {
        case AddMode::same:
          kernels::ew_add(gin[1]->data(), g.data(), gin[1]->data(), g.size());
          break;
        case AddMode::rowvec:
          kernels::colsum(g.data(), gin[1]->data(), a.dim(0), a.dim(1), true);
          break;
        case AddMode::chanvec:
          kernels::chansum(g.data(), gin[1]->data(), g.size() / a.dim(3), a.dim(3), true);
          break;
        case AddMode::scalar_b:
          (*gin[1])[0] += kernels::det_sum(g.data(), g.size());
          break;
      }
    }
  });
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  kernels::ew_sub(a.data(), b.data(), out.data(), a.size());
  if (!tape) return out;
  return tape->emit(out, {&a, &b}, [](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::ew_add(gin[0]->data(), g.data(), gin[0]->data(), g.size());
    if (gin[1]) kernels::ew_axpy(-1.0, g.data(), gin[1]->data(), g.size());
  });
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  const bool sa = is_scalar(a) && !a.same_shape(b);
  const bool sb = is_scalar(b) && !a.same_shape(b);
  require(a.same_shape(b) || sa || sb,
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(sa ? b.shape() : a.shape());
  if (sa) {
    kernels::ew_scale(b.data(), a[0], out.data(), b.size());
  } else if (sb) {
    kernels::ew_scale(a.data(), b[0], out.data(), a.size());
  } else {
    kernels::ew_mul(a.data(), b.data(), out.data(), a.size());
  }
  if (!tape) return out;
  return tape->emit(out, {&a, &b}, [a, b, sa, sb](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) {
      if (sa) {
        Tensor t(g.shape());
        kernels::ew_mul(g.data(), b.data(), t.data(), g.size());
        (*gin[0])[0] += kernels::det_sum(t.data(), t.size());
      } else if (sb) {
        kernels::ew_axpy(b[0], g.data(), gin[0]->data(), g.size());
      } else {
        kernels::ew_mul_acc(g.data(), b.data(), gin[0]->data(), g.size());
      }
    }
    if (gin[1]) {
      if (sb) {
        Tensor t(g.shape());
        kernels::ew_mul(g.data(), a.data(), t.data(), g.size());
        (*gin[1])[0] += kernels::det_sum(t.data(), t.size());
      } else if (sa) {
        kernels::ew_axpy(a[0], g.data(), gin[1]->data(), g.size());
      } else {
        kernels::ew_mul_acc(g.data(), a.data(), gin[1]->data(), g.size());
      }
    }
  });
}

Tensor scale(Tape* tape, const Tensor& a, double k) {
  Tensor out(a.shape());
  kernels::ew_scale(a.data(), k, out.data(), a.size());
  if (!tape) return out;
  return tape->emit(out, {&a}, [k](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::ew_axpy(k, g.data(), gin[0]->data(), g.size());
  });
}

Tensor relu(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  kernels::relu(x.data(), out.data(), x.size());
  if (!tape) return out;
  return tape->emit(out, {&x}, [x](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::relu_backward(g.data(), x.data(), gin[0]->data(), g.size(), true);
  });
}

Tensor tanh(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  kernels::tanh_(x.data(), out.data(), x.size());
  if (!tape) return out;
  return tape->emit(out, {&x}, [out](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::tanh_backward(g.data(), out.data(), gin[0]->data(), g.size(), true);
  });
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  kernels::sigmoid(x.data(), out.data(), x.size());
  if (!tape) return out;
  return tape->emit(out, {&x}, [out](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::sigmoid_backward(g.data(), out.data(), gin[0]->data(), g.size(), true);
  });
}

Tensor mean_spatial(Tape* tape, const Tensor& x) {
  require(x.rank() == 4, "mean_spatial: input must be [N,H,W,C], got " + shape_str(x.shape()));
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor out({N, C});
  kernels::mean_spatial(x.data(), N, H, W, C, out.data());
  if (!tape) return out;
  return tape->emit(out, {&x}, [N, H, W, C](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::mean_spatial_backward(g.data(), N, H, W, C, gin[0]->data(), true);
  });
}

Tensor concat(Tape* tape, std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const int rank = parts[0].rank();
  require(axis == 0 || (axis == 1 && rank == 2), "concat: unsupported axis");
  Shape out_shape = parts[0].shape();
  for (size_t p = 1; p < parts.size(); ++p) {
    require(parts[p].rank() == rank, "concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d == axis) continue;
      require(parts[p].dim(d) == parts[0].dim(d),
              "concat: dim mismatch at axis " + std::to_string(d));
    }
    out_shape[static_cast<size_t>(axis)] += parts[p].dim(axis);
  }
  Tensor out(out_shape);
  std::vector<int64_t> offsets(parts.size());
  if (axis == 0) {
    int64_t off = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = off;
      std::memcpy(out.data() + off, parts[p].data(), sizeof(double) * static_cast<size_t>(parts[p].size()));
      off += parts[p].size();
    }
  } else {
    const int M = out_shape[0], N = out_shape[1];
    int col = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = col;
      const int pn = parts[p].dim(1);
      for (int i = 0; i < M; ++i)
        std::memcpy(out.data() + static_cast<int64_t>(i) * N + col,
                    parts[p].data() + static_cast<int64_t>(i) * pn, sizeof(double) * static_cast<size_t>(pn));
      col += pn;
    }
  }
  if (!tape) return out;
  std::vector<const Tensor*> in_ptrs;
  std::vector<Shape> part_shapes;
  for (const Tensor& p : parts) {
    in_ptrs.push_back(&p);
    part_shapes.push_back(p.shape());
  }
  return tape->emit(out, in_ptrs,
                    [axis, offsets, part_shapes, out_shape](const Tensor& g, const std::vector<Tensor*>& gin) {
                      for (size_t p = 0; p < gin.size(); ++p) {
                        if (!gin[p]) continue;
                        if (axis == 0) {
                          kernels::ew_add(gin[p]->data(), g.data() + offsets[p], gin[p]->data(),
                                          gin[p]->size());
                        } else {
                          const int M = out_shape[0], N = out_shape[1];
                          const int pn = part_shapes[p][1];
                          for (int i = 0; i < M; ++i)
                            for (int j = 0; j < pn; ++j)
                              (*gin[p])[static_cast<int64_t>(i) * pn + j] +=
                                  g[static_cast<int64_t>(i) * N + offsets[p] + j];
                        }
                      }
                    });
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 2, "softmax: logits must be [N,C]");
  Tensor probs(logits.shape());
  kernels::softmax_rows(logits.data(), logits.dim(0), logits.dim(1), probs.data());
  return probs;
}

Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [N,C], got " + shape_str(logits.shape()));
  const int N = logits.dim(0), C = logits.dim(1);
  require(static_cast<int>(labels.size()) == N, "softmax_cross_entropy: label count " +
                                                    std::to_string(labels.size()) + " vs batch " +
                                                    std::to_string(N));
  for (int i = 0; i < N; ++i)
    require(labels[i] >= 0 && labels[i] < C, "softmax_cross_entropy: label " +
                                                 std::to_string(labels[i]) + " out of range [0," +
                                                 std::to_string(C) + ")");
  Tensor probs = softmax(logits);
  Tensor per_row({N});
  for (int i = 0; i < N; ++i) {
    const double p = probs[static_cast<int64_t>(i) * C + labels[i]];
    per_row[i] = -std::log(p > 1e-300 ? p : 1e-300);
  }
  Tensor loss = Tensor::scalar(kernels::det_sum(per_row.data(), N) / N);
  if (!loss.all_finite()) throw NonFiniteError("softmax_cross_entropy: non-finite loss");
  if (!tape) return loss;
  std::vector<int> labels_copy(labels.begin(), labels.end());
  return tape->emit(loss, {&logits},
                    [probs, labels_copy, N, C](const Tensor& g, const std::vector<Tensor*>& gin) {
                      if (!gin[0]) return;
                      const double k = g[0] / N;
                      for (int i = 0; i < N; ++i)
                        for (int c = 0; c < C; ++c) {
                          const int64_t idx = static_cast<int64_t>(i) * C + c;
                          (*gin[0])[idx] += k * (probs[idx] - (labels_copy[static_cast<size_t>(i)] == c ? 1.0 : 0.0));
                        }
                    });
}

Tensor huber_loss(Tape* tape, const Tensor& a, const Tensor& b, double delta, double scale) {
  require_same_shape("huber_loss", a, b);
  require(delta > 0.0, "huber_loss: delta must be positive");
  require(scale > 0.0, "huber_loss: scale must be positive");
  const int64_t n = a.size();
  Tensor per({static_cast<int>(n)});
  for (int64_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    const double ad = std::fabs(d);
    per[i] = ad <= delta ? 0.5 * d * d : delta * (ad - 0.5 * delta);
  }
  Tensor loss = Tensor::scalar(scale * kernels::det_sum(per.data(), n) / static_cast<double>(n));
  if (!loss.all_finite()) throw NonFiniteError("huber_loss: non-finite loss");
  if (!tape) return loss;
  return tape->emit(loss, {&a, &b}, [a, b, delta, scale, n](const Tensor& g, const std::vector<Tensor*>& gin) {
    const double k = g[0] * scale / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double d = a[i] - b[i];
      d = d > delta ? delta : (d < -delta ? -delta : d);
      if (gin[0]) (*gin[0])[i] += k * d;
      if (gin[1]) (*gin[1])[i] -= k * d;
    }
  });
}

Tensor soft_cross_entropy(Tape* tape, const Tensor& logits, const Tensor& target_probs) {
  require(logits.rank() == 2, "soft_cross_entropy: logits must be [N,C]");
  require_same_shape("soft_cross_entropy", logits, target_probs);
  const int N = logits.dim(0), C = logits.dim(1);
  Tensor probs = softmax(logits);
  Tensor per_row({N});
  for (int i = 0; i < N; ++i) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) {
      const int64_t idx = static_cast<int64_t>(i) * C + c;
      const double p = probs[idx] > 1e-300 ? probs[idx] : 1e-300;
      acc -= target_probs[idx] * std::log(p);
    }
    per_row[i] = acc;
  }
  Tensor loss = Tensor::scalar(kernels::det_sum(per_row.data(), N) / N);
  if (!loss.all_finite()) throw NonFiniteError("soft_cross_entropy: non-finite loss");
  if (!tape) return loss;
  return tape->emit(loss, {&logits, &target_probs},
                    [probs, target_probs, N, C](const Tensor& g, const std::vector<Tensor*>& gin) {
                      if (!gin[0]) return;
                      const double k = g[0] / N;
                      for (int i = 0; i < N; ++i) {
                        double q_total = 0.0;
                        for (int c = 0; c < C; ++c) q_total += target_probs[static_cast<int64_t>(i) * C + c];
                        for (int c = 0; c < C; ++c) {
                          const int64_t idx = static_cast<int64_t>(i) * C + c;
                          (*gin[0])[idx] += k * (probs[idx] * q_total - target_probs[idx]);
                        }
                      }
                    });
}

Tensor groupnorm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 int groups, double eps) {
  require(x.rank() == 4, "groupnorm: input must be [N,H,W,C], got " + shape_str(x.shape()));
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(groups >= 1 && C % groups == 0,
          "groupnorm: groups " + std::to_string(groups) + " must divide channels " + std::to_string(C));
  require(gamma.rank() == 1 && gamma.dim(0) == C, "groupnorm: gamma must be [C]");
  require(beta.rank() == 1 && beta.dim(0) == C, "groupnorm: beta must be [C]");
  Tensor out(x.shape());
  Tensor mean({N, groups}), rstd({N, groups});
  kernels::groupnorm(x.data(), N, H, W, C, groups, eps, gamma.data(), beta.data(), out.data(),
                     mean.data(), rstd.data());
  if (!tape) return out;
  return tape->emit(out, {&x, &gamma, &beta},
                    [x, gamma, mean, rstd, N, H, W, C, groups](const Tensor& g, const std::vector<Tensor*>& gin) {
                      kernels::groupnorm_backward(g.data(), x.data(), gamma.data(), mean.data(),
                                                  rstd.data(), N, H, W, C, groups,
                                                  gin[0] ? gin[0]->data() : nullptr,
                                                  gin[1] ? gin[1]->data() : nullptr,
                                                  gin[2] ? gin[2]->data() : nullptr, true);
                    });
}

Tensor transpose2d(Tape* tape, const Tensor& x) {
  require(x.rank() == 2, "transpose2d: input must be rank 2, got " + shape_str(x.shape()));
  const int M = x.dim(0), N = x.dim(1);
  Tensor out({N, M});
  kernels::transpose2d(x.data(), M, N, out.data());
  if (!tape) return out;
  return tape->emit(out, {&x}, [M, N](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (!gin[0]) return;
    Tensor t({M, N});
    kernels::transpose2d(g.data(), N, M, t.data());
    kernels::ew_add(gin[0]->data(), t.data(), gin[0]->data(), t.size());
  });
}

Tensor reshape(Tape* tape, const Tensor& x, Shape shape) {
  require(shape_size(shape) == x.size(), "reshape: size mismatch " + shape_str(x.shape()) +
                                             " -> " + shape_str(shape));
  Tensor out(shape, std::vector<double>(x.data(), x.data() + x.size()));
  if (!tape) return out;
  return tape->emit(out, {&x}, [](const Tensor& g, const std::vector<Tensor*>& gin) {
    if (gin[0]) kernels::ew_add(gin[0]->data(), g.data(), gin[0]->data(), g.size());
  });
}

Tensor forward_primitive(Tape* tape, OpKind kind, std::span<const Tensor> in, double delta,
                         double scale) {
  const auto arity = [&](size_t n) {
    require(in.size() == n, "forward_primitive: wrong input count");
  };
  switch (kind) {
    case OpKind::matmul:
      arity(2);
      return matmul(tape, in[0], in[1]);
    case OpKind::conv2d:
      arity(2);
      return conv2d(tape, in[0], in[1]);
    case OpKind::add:
      arity(2);
      return add(tape, in[0], in[1]);
    case OpKind::mul:
      arity(2);
      return mul(tape, in[0], in[1]);
    case OpKind::relu:
      arity(1);
      return relu(tape, in[0]);
    case OpKind::tanh:
      arity(1);
      return tanh(tape, in[0]);
    case OpKind::sigmoid:
      arity(1);
      return sigmoid(tape, in[0]);
    case OpKind::mean_spatial:
      arity(1);
      return mean_spatial(tape, in[0]);
    case OpKind::concat:
      return concat(tape, in, 0);
    case OpKind::softmax_cross_entropy: {
      arity(2);
      std::vector<int> labels(static_cast<size_t>(in[1].size()));
      for (int64_t i = 0; i < in[1].size(); ++i) labels[static_cast<size_t>(i)] = static_cast<int>(in[1][i]);
      return softmax_cross_entropy(tape, in[0], labels);
    }
    case OpKind::huber:
      arity(2);
      return huber_loss(tape, in[0], in[1], delta, scale);
  }
  throw std::logic_error("forward_primitive: unknown op");
}

Tensor mean_rows(const Tensor& x) {
  require(x.rank() == 2, "mean_rows: input must be [N,D]");
  const int N = x.dim(0), D = x.dim(1);
  Tensor out({D});
  kernels::colsum(x.data(), out.data(), N, D, false);
  kernels::ew_scale(out.data(), 1.0 / N, out.data(), D);
  return out;
}

double accuracy_top1(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2, "accuracy_top1: logits must be [N,C]");
  const int N = logits.dim(0), C = logits.dim(1);
  require(static_cast<int>(labels.size()) == N, "accuracy_top1: label count mismatch");
  int correct = 0;
  for (int i = 0; i < N; ++i) {
    int best = 0;
    for (int c = 1; c < C; ++c)
      if (logits[static_cast<int64_t>(i) * C + c] > logits[static_cast<int64_t>(i) * C + best]) best = c;
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / N;
}

}  // namespace remembra
