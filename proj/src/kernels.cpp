#include "remembra/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace remembra::kernels {

namespace {
std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::openmp
#else
    Backend::serial
#endif
};
std::atomic<bool> g_env_done{false};
}  // namespace

bool openmp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

void set_backend(Backend b) { g_backend.store(b); }

Backend backend() {
  init_from_env();
  return g_backend.load();
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void init_from_env() {
  bool expected = false;
  if (!g_env_done.compare_exchange_strong(expected, true)) return;
  if (const char* t = std::getenv("REMEMBRA_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0) {
#ifdef _OPENMP
      omp_set_num_threads(n);
#endif
      if (n == 1) g_backend.store(Backend::serial);
    }
  }
  if (const char* b = std::getenv("REMEMBRA_BACKEND")) {
    const std::string s(b);
    if (s == "serial") g_backend.store(Backend::serial);
    if (s == "openmp" && openmp_compiled()) g_backend.store(Backend::openmp);
  }
}

#define REMEMBRA_DISPATCH(call)                  \
  if (backend() == Backend::openmp) {            \
    omp::call;                                   \
  } else {                                       \
    serial::call;                                \
  }

void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C, bool acc) {
  REMEMBRA_DISPATCH(gemm_nn(M, N, K, A, B, C, acc))
}
void gemm_nt(int M, int N, int K, const double* A, const double* B, double* C, bool acc) {
  REMEMBRA_DISPATCH(gemm_nt(M, N, K, A, B, C, acc))
}
void gemm_tn(int M, int N, int K, const double* A, const double* B, double* C, bool acc) {
  REMEMBRA_DISPATCH(gemm_tn(M, N, K, A, B, C, acc))
}
void conv2d(const double* X, int N, int H, int W, int Ci, const double* K, int kh, int kw,
            int Co, double* Y, bool acc) {
  REMEMBRA_DISPATCH(conv2d(X, N, H, W, Ci, K, kh, kw, Co, Y, acc))
}
void conv2d_grad_input(const double* G, int N, int H, int W, int Co, const double* K,
                       int kh, int kw, int Ci, double* dX, bool acc) {
  REMEMBRA_DISPATCH(conv2d_grad_input(G, N, H, W, Co, K, kh, kw, Ci, dX, acc))
}
void conv2d_grad_weight(const double* G, int N, int H, int W, int Co, const double* X,
                        int Ci, int kh, int kw, double* dK, bool acc) {
  REMEMBRA_DISPATCH(conv2d_grad_weight(G, N, H, W, Co, X, Ci, kh, kw, dK, acc))
}
void groupnorm(const double* X, int N, int H, int W, int C, int groups, double eps,
               const double* gamma, const double* beta, double* Y, double* mean,
               double* rstd) {
  REMEMBRA_DISPATCH(groupnorm(X, N, H, W, C, groups, eps, gamma, beta, Y, mean, rstd))
}
void groupnorm_backward(const double* G, const double* X, const double* gamma,
                        const double* mean, const double* rstd, int N, int H, int W, int C,
                        int groups, double* dX, double* dgamma, double* dbeta, bool acc) {
  REMEMBRA_DISPATCH(groupnorm_backward(G, X, gamma, mean, rstd, N, H, W, C, groups, dX,
                                       dgamma, dbeta, acc))
}
void ew_add(const double* a, const double* b, double* y, int64_t n) {
  REMEMBRA_DISPATCH(ew_add(a, b, y, n))
}
void ew_sub(const double* a, const double* b, double* y, int64_t n) {
  REMEMBRA_DISPATCH(ew_sub(a, b, y, n))
}
void ew_mul(const double* a, const double* b, double* y, int64_t n) {
  REMEMBRA_DISPATCH(ew_mul(a, b, y, n))
}
void ew_mul_acc(const double* a, const double* b, double* y, int64_t n) {
  REMEMBRA_DISPATCH(ew_mul_acc(a, b, y, n))
}
void ew_scale(const double* a, double k, double* y, int64_t n) {
  REMEMBRA_DISPATCH(ew_scale(a, k, y, n))
}
void ew_axpy(double k, const double* x, double* y, int64_t n) {
  REMEMBRA_DISPATCH(ew_axpy(k, x, y, n))
}
void relu(const double* x, double* y, int64_t n) { REMEMBRA_DISPATCH(relu(x, y, n)) }
void relu_backward(const double* g, const double* x, double* dx, int64_t n, bool acc) {
  REMEMBRA_DISPATCH(relu_backward(g, x, dx, n, acc))
}
void tanh_(const double* x, double* y, int64_t n) { REMEMBRA_DISPATCH(tanh_(x, y, n)) }
void tanh_backward(const double* g, const double* y, double* dx, int64_t n, bool acc) {
  REMEMBRA_DISPATCH(tanh_backward(g, y, dx, n, acc))
}
void sigmoid(const double* x, double* y, int64_t n) { REMEMBRA_DISPATCH(sigmoid(x, y, n)) }
void sigmoid_backward(const double* g, const double* y, double* dx, int64_t n, bool acc) {
  REMEMBRA_DISPATCH(sigmoid_backward(g, y, dx, n, acc))
}
void add_rowvec(const double* X, const double* b, double* Y, int M, int N) {
  REMEMBRA_DISPATCH(add_rowvec(X, b, Y, M, N))
}
void add_chanvec(const double* X, const double* b, double* Y, int64_t outer, int C) {
  REMEMBRA_DISPATCH(add_chanvec(X, b, Y, outer, C))
}
void colsum(const double* G, double* out, int M, int N, bool acc) {
  REMEMBRA_DISPATCH(colsum(G, out, M, N, acc))
}
void chansum(const double* G, double* out, int64_t outer, int C, bool acc) {
  REMEMBRA_DISPATCH(chansum(G, out, outer, C, acc))
}
void mean_spatial(const double* X, int N, int H, int W, int C, double* Y) {
  REMEMBRA_DISPATCH(mean_spatial(X, N, H, W, C, Y))
}
void mean_spatial_backward(const double* G, int N, int H, int W, int C, double* dX,
                           bool acc) {
  REMEMBRA_DISPATCH(mean_spatial_backward(G, N, H, W, C, dX, acc))
}
void softmax_rows(const double* logits, int N, int C, double* probs) {
  REMEMBRA_DISPATCH(softmax_rows(logits, N, C, probs))
}
void transpose2d(const double* X, int M, int N, double* Y) {
  REMEMBRA_DISPATCH(transpose2d(X, M, N, Y))
}
double det_sum(const double* x, int64_t n) {
  if (backend() == Backend::openmp) return omp::det_sum(x, n);
  return serial::det_sum(x, n);
}

#undef REMEMBRA_DISPATCH

}  // namespace remembra::kernels
