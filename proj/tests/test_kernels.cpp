#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "remembra/kernels.hpp"
#include "remembra/rng.hpp"

using namespace remembra;

namespace {

std::vector<double> random_vec(int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

// The OpenMP kernels must be bit-identical to the serial reference: they
// parallelize over output elements and keep per-element accumulation order.

TEST_CASE("gemm variants: omp matches serial bit-exactly") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int M = 3 + static_cast<int>(rng.below(60));
    const int N = 3 + static_cast<int>(rng.below(60));
    const int K = 3 + static_cast<int>(rng.below(60));
    auto A = random_vec(static_cast<int64_t>(M) * K, rng);
    auto B = random_vec(static_cast<int64_t>(K) * N, rng);
    std::vector<double> c1(static_cast<size_t>(M) * N), c2 = c1;
    kernels::serial::gemm_nn(M, N, K, A.data(), B.data(), c1.data(), false);
    kernels::omp::gemm_nn(M, N, K, A.data(), B.data(), c2.data(), false);
    CHECK(c1 == c2);

    auto Bt = random_vec(static_cast<int64_t>(N) * K, rng);
    kernels::serial::gemm_nt(M, N, K, A.data(), Bt.data(), c1.data(), false);
    kernels::omp::gemm_nt(M, N, K, A.data(), Bt.data(), c2.data(), false);
    CHECK(c1 == c2);

    auto At = random_vec(static_cast<int64_t>(K) * M, rng);
    kernels::serial::gemm_tn(M, N, K, At.data(), B.data(), c1.data(), false);
    kernels::omp::gemm_tn(M, N, K, At.data(), B.data(), c2.data(), false);
    CHECK(c1 == c2);
  }
}

TEST_CASE("gemm_nn small case against hand result") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  std::vector<double> A{1, 2, 3, 4}, B{5, 6, 7, 8}, C(4);
  kernels::gemm_nn(2, 2, 2, A.data(), B.data(), C.data(), false);
  CHECK(C == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("conv2d: omp matches serial bit-exactly and padding is zero") {
  Rng rng(11);
  const int N = 2, H = 7, W = 5, Ci = 3, kh = 3, kw = 3, Co = 4;
  auto X = random_vec(static_cast<int64_t>(N) * H * W * Ci, rng);
  auto K = random_vec(static_cast<int64_t>(kh) * kw * Ci * Co, rng);
  std::vector<double> y1(static_cast<size_t>(N) * H * W * Co), y2 = y1;
  kernels::serial::conv2d(X.data(), N, H, W, Ci, K.data(), kh, kw, Co, y1.data(), false);
  kernels::omp::conv2d(X.data(), N, H, W, Ci, K.data(), kh, kw, Co, y2.data(), false);
  CHECK(y1 == y2);

  std::vector<double> g = random_vec(static_cast<int64_t>(N) * H * W * Co, rng);
  std::vector<double> dx1(X.size()), dx2(X.size()), dk1(K.size()), dk2(K.size());
  kernels::serial::conv2d_grad_input(g.data(), N, H, W, Co, K.data(), kh, kw, Ci, dx1.data(), false);
  kernels::omp::conv2d_grad_input(g.data(), N, H, W, Co, K.data(), kh, kw, Ci, dx2.data(), false);
  CHECK(dx1 == dx2);
  kernels::serial::conv2d_grad_weight(g.data(), N, H, W, Co, X.data(), Ci, kh, kw, dk1.data(), false);
  kernels::omp::conv2d_grad_weight(g.data(), N, H, W, Co, X.data(), Ci, kh, kw, dk2.data(), false);
  CHECK(dk1 == dk2);
}

TEST_CASE("conv2d 1x1 identity kernel passes input through") {
  const int N = 1, H = 4, W = 4, Ci = 1, Co = 1;
  std::vector<double> X(16);
  for (size_t i = 0; i < X.size(); ++i) X[i] = static_cast<double>(i);
  std::vector<double> K{1.0}, Y(16);
  kernels::conv2d(X.data(), N, H, W, Ci, K.data(), 1, 1, Co, Y.data(), false);
  CHECK(X == Y);
}

TEST_CASE("groupnorm: omp matches serial, normalizes per group") {
  Rng rng(13);
  const int N = 3, H = 4, W = 4, C = 8, G = 2;
  auto X = random_vec(static_cast<int64_t>(N) * H * W * C, rng);
  std::vector<double> gamma(C, 1.0), beta(C, 0.0);
  std::vector<double> y1(X.size()), y2(X.size()), m1(static_cast<size_t>(N) * G), m2 = m1, r1 = m1, r2 = m1;
  kernels::serial::groupnorm(X.data(), N, H, W, C, G, 1e-5, gamma.data(), beta.data(), y1.data(), m1.data(), r1.data());
  kernels::omp::groupnorm(X.data(), N, H, W, C, G, 1e-5, gamma.data(), beta.data(), y2.data(), m2.data(), r2.data());
  CHECK(y1 == y2);
  CHECK(m1 == m2);

  // normalized output has ~zero mean per (n, group)
  for (int n = 0; n < N; ++n) {
    for (int g = 0; g < G; ++g) {
      double mean = 0.0;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int c = g * (C / G); c < (g + 1) * (C / G); ++c)
            mean += y1[static_cast<size_t>(((n * H + h) * W + w) * C + c)];
      mean /= H * W * (C / G);
      CHECK(std::abs(mean) < 1e-12);
    }
  }

  auto g = random_vec(static_cast<int64_t>(N) * H * W * C, rng);
  std::vector<double> dx1(X.size()), dx2(X.size()), dg1(C), dg2(C), db1(C), db2(C);
  kernels::serial::groupnorm_backward(g.data(), X.data(), gamma.data(), m1.data(), r1.data(), N, H, W, C, G,
                                      dx1.data(), dg1.data(), db1.data(), false);
  kernels::omp::groupnorm_backward(g.data(), X.data(), gamma.data(), m2.data(), r2.data(), N, H, W, C, G,
                                   dx2.data(), dg2.data(), db2.data(), false);
  CHECK(dx1 == dx2);
  CHECK(dg1 == dg2);
  CHECK(db1 == db2);
}

TEST_CASE("det_sum is chunk-order deterministic and matches both backends") {
  Rng rng(17);
  auto v = random_vec(10000, rng);
  const double a = kernels::serial::det_sum(v.data(), static_cast<int64_t>(v.size()));
  const double b = kernels::omp::det_sum(v.data(), static_cast<int64_t>(v.size()));
  CHECK(a == b);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(23);
  auto l = random_vec(7 * 9, rng);
  std::vector<double> p1(l.size()), p2(l.size());
  kernels::serial::softmax_rows(l.data(), 7, 9, p1.data());
  kernels::omp::softmax_rows(l.data(), 7, 9, p2.data());
  CHECK(p1 == p2);
  for (int i = 0; i < 7; ++i) {
    double s = 0.0;
    for (int c = 0; c < 9; ++c) s += p1[static_cast<size_t>(i * 9 + c)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("elementwise and reduction kernels agree across backends") {
  Rng rng(29);
  auto a = random_vec(5000, rng), b = random_vec(5000, rng);
  std::vector<double> y1(5000), y2(5000);
  kernels::serial::ew_mul(a.data(), b.data(), y1.data(), 5000);
  kernels::omp::ew_mul(a.data(), b.data(), y2.data(), 5000);
  CHECK(y1 == y2);
  kernels::serial::relu(a.data(), y1.data(), 5000);
  kernels::omp::relu(a.data(), y2.data(), 5000);
  CHECK(y1 == y2);
  std::vector<double> c1(50), c2(50);
  kernels::serial::colsum(a.data(), c1.data(), 100, 50, false);
  kernels::omp::colsum(a.data(), c2.data(), 100, 50, false);
  CHECK(c1 == c2);
}
