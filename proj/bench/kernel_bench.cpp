// Compares the serial reference kernels against the OpenMP versions: wall
// time per call and bit-equality of the outputs.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "remembra/kernels.hpp"
#include "remembra/rng.hpp"

using namespace remembra;

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_vec(int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.normal();
  return v;
}

template <typename F>
double time_ms(F&& fn, int reps) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms, bool equal) {
  std::printf("%-28s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
              omp_ms, serial_ms / omp_ms, equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  kernels::init_from_env();
  std::printf("threads: %d (openmp %s)\n\n", kernels::thread_count(),
              kernels::openmp_compiled() ? "compiled in" : "absent");
  Rng rng(1234);

  {
    const int M = 256, K = 256, N = 256;
    auto A = random_vec(static_cast<int64_t>(M) * K, rng);
    auto B = random_vec(static_cast<int64_t>(K) * N, rng);
    std::vector<double> c1(static_cast<size_t>(M) * N), c2 = c1;
    const double ts = time_ms([&] { kernels::serial::gemm_nn(M, N, K, A.data(), B.data(), c1.data(), false); }, 10);
    const double to = time_ms([&] { kernels::omp::gemm_nn(M, N, K, A.data(), B.data(), c2.data(), false); }, 10);
    report("gemm_nn 256^3", ts, to, c1 == c2);
  }
  {
    const int N = 8, H = 32, W = 32, Ci = 8, kh = 3, kw = 3, Co = 16;
    auto X = random_vec(static_cast<int64_t>(N) * H * W * Ci, rng);
    auto K = random_vec(static_cast<int64_t>(kh) * kw * Ci * Co, rng);
    std::vector<double> y1(static_cast<size_t>(N) * H * W * Co), y2 = y1;
    const double ts = time_ms([&] { kernels::serial::conv2d(X.data(), N, H, W, Ci, K.data(), kh, kw, Co, y1.data(), false); }, 5);
    const double to = time_ms([&] { kernels::omp::conv2d(X.data(), N, H, W, Ci, K.data(), kh, kw, Co, y2.data(), false); }, 5);
    report("conv2d 8x32x32x8 -> 16", ts, to, y1 == y2);

    std::vector<double> g = random_vec(static_cast<int64_t>(N) * H * W * Co, rng);
    std::vector<double> dk1(K.size()), dk2(K.size());
    const double ts2 = time_ms([&] { kernels::serial::conv2d_grad_weight(g.data(), N, H, W, Co, X.data(), Ci, kh, kw, dk1.data(), false); }, 5);
    const double to2 = time_ms([&] { kernels::omp::conv2d_grad_weight(g.data(), N, H, W, Co, X.data(), Ci, kh, kw, dk2.data(), false); }, 5);
    report("conv2d_grad_weight", ts2, to2, dk1 == dk2);
  }
  {
    const int N = 16, H = 16, W = 16, C = 32, G = 4;
    auto X = random_vec(static_cast<int64_t>(N) * H * W * C, rng);
    std::vector<double> gamma(C, 1.0), beta(C, 0.0);
    std::vector<double> y1(X.size()), y2(X.size());
    std::vector<double> m1(static_cast<size_t>(N) * G), r1 = m1, m2 = m1, r2 = m1;
    const double ts = time_ms([&] { kernels::serial::groupnorm(X.data(), N, H, W, C, G, 1e-5, gamma.data(), beta.data(), y1.data(), m1.data(), r1.data()); }, 10);
    const double to = time_ms([&] { kernels::omp::groupnorm(X.data(), N, H, W, C, G, 1e-5, gamma.data(), beta.data(), y2.data(), m2.data(), r2.data()); }, 10);
    report("groupnorm 16x16x16x32", ts, to, y1 == y2);
  }
  {
    const int64_t n = 1 << 22;
    auto v = random_vec(n, rng);
    double s1 = 0.0, s2 = 0.0;
    const double ts = time_ms([&] { s1 = kernels::serial::det_sum(v.data(), n); }, 10);
    const double to = time_ms([&] { s2 = kernels::omp::det_sum(v.data(), n); }, 10);
    report("det_sum 4M", ts, to, s1 == s2);
  }
  return 0;
}
