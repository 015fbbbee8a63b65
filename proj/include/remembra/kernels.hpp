#pragma once

#include <cstdint>

// Numeric kernels behind the autodiff ops. Every kernel exists twice: a
// serial reference (kernels::serial) and an OpenMP version (kernels::omp).
// The OpenMP versions parallelize over independent output elements and keep
// each element's accumulation order identical to the serial code, so the two
// backends produce bit-identical results for any thread count.

namespace remembra::kernels {

enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();
int thread_count();
// Applies REMEMBRA_THREADS / REMEMBRA_BACKEND if set. Called once, lazily.
void init_from_env();

#define REMEMBRA_KERNEL_DECLS                                                              \
  /* C = op(A) * op(B); nn: A[MxK] B[KxN]; nt: A[MxK] B[NxK]; tn: A[KxM] B[KxN] */        \
  void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C,           \
               bool accumulate);                                                           \
  void gemm_nt(int M, int N, int K, const double* A, const double* B, double* C,           \
               bool accumulate);                                                           \
  void gemm_tn(int M, int N, int K, const double* A, const double* B, double* C,           \
               bool accumulate);                                                           \
  /* NHWC conv, stride 1, zero "same" padding, odd kernel dims */                          \
  void conv2d(const double* X, int N, int H, int W, int Ci, const double* K, int kh,       \
              int kw, int Co, double* Y, bool accumulate);                                 \
  void conv2d_grad_input(const double* G, int N, int H, int W, int Co, const double* K,    \
                         int kh, int kw, int Ci, double* dX, bool accumulate);             \
  void conv2d_grad_weight(const double* G, int N, int H, int W, int Co, const double* X,   \
                          int Ci, int kh, int kw, double* dK, bool accumulate);            \
  /* mean/rstd are per (n, group), length N*groups */                                      \
  void groupnorm(const double* X, int N, int H, int W, int C, int groups, double eps,      \
                 const double* gamma, const double* beta, double* Y, double* mean,         \
                 double* rstd);                                                            \
  void groupnorm_backward(const double* G, const double* X, const double* gamma,           \
                          const double* mean, const double* rstd, int N, int H, int W,     \
                          int C, int groups, double* dX, double* dgamma, double* dbeta,    \
                          bool accumulate);                                                \
  void ew_add(const double* a, const double* b, double* y, int64_t n);                     \
  void ew_sub(const double* a, const double* b, double* y, int64_t n);                     \
  void ew_mul(const double* a, const double* b, double* y, int64_t n);                     \
  void ew_mul_acc(const double* a, const double* b, double* y, int64_t n);                 \
  void ew_scale(const double* a, double k, double* y, int64_t n);                          \
  void ew_axpy(double k, const double* x, double* y, int64_t n); /* y += k*x */            \
  void relu(const double* x, double* y, int64_t n);                                        \
  void relu_backward(const double* g, const double* x, double* dx, int64_t n,              \
                     bool accumulate);                                                     \
  void tanh_(const double* x, double* y, int64_t n);                                       \
  void tanh_backward(const double* g, const double* y, double* dx, int64_t n,              \
                     bool accumulate);                                                     \
  void sigmoid(const double* x, double* y, int64_t n);                                     \
  void sigmoid_backward(const double* g, const double* y, double* dx, int64_t n,           \
                        bool accumulate);                                                  \
  void add_rowvec(const double* X, const double* b, double* Y, int M, int N);              \
  void add_chanvec(const double* X, const double* b, double* Y, int64_t outer, int C);     \
  void colsum(const double* G, double* out, int M, int N, bool accumulate);                \
  void chansum(const double* G, double* out, int64_t outer, int C, bool accumulate);       \
  void mean_spatial(const double* X, int N, int H, int W, int C, double* Y);               \
  void mean_spatial_backward(const double* G, int N, int H, int W, int C, double* dX,      \
                             bool accumulate);                                             \
  void softmax_rows(const double* logits, int N, int C, double* probs);                    \
  void transpose2d(const double* X, int M, int N, double* Y);                              \
  /* Order-fixed chunked sum: identical result for any backend/thread count. */            \
  double det_sum(const double* x, int64_t n);

namespace serial {
REMEMBRA_KERNEL_DECLS
}
namespace omp {
REMEMBRA_KERNEL_DECLS
}
// Dispatch on the active backend.
REMEMBRA_KERNEL_DECLS

#undef REMEMBRA_KERNEL_DECLS

}  // namespace remembra::kernels
