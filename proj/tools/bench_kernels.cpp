// Times the serial reference kernels against their OpenMP variants and
// verifies that both produce bit-identical output.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "diffret/kernels.hpp"
#include "diffret/rng.hpp"

namespace {

using Kernel = void (*)(const double*, const double*, double*, std::size_t, std::size_t,
                        std::size_t);

double time_ms(Kernel kernel, const std::vector<double>& a, const std::vector<double>& b,
               std::vector<double>& c, std::size_t m, std::size_t k, std::size_t n,
               int reps) {
  // Warm-up pass, then best-of-reps wall time.
  kernel(a.data(), b.data(), c.data(), m, k, n);
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    kernel(a.data(), b.data(), c.data(), m, k, n);
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

struct KernelPair {
  const char* name;
  Kernel serial;
  Kernel parallel;
};

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel variants fall back to serial\n");
#endif

  const KernelPair pairs[] = {
      {"matmul", diffret::kernels::matmul_serial, diffret::kernels::matmul_omp},
      {"matmul_nt", diffret::kernels::matmul_nt_serial, diffret::kernels::matmul_nt_omp},
      {"matmul_tn", diffret::kernels::matmul_tn_serial, diffret::kernels::matmul_tn_omp},
  };
  const std::size_t sizes[] = {32, 64, 128, 256};

  diffret::SeededRng rng(7);
  std::printf("%-10s %6s %12s %12s %9s %12s\n", "kernel", "size", "serial(ms)", "openmp(ms)",
              "speedup", "bit-identical");
  for (const KernelPair& kp : pairs) {
    for (std::size_t s : sizes) {
      std::vector<double> a(s * s), b(s * s), c1(s * s), c2(s * s);
      for (double& v : a) v = rng.normal();
      for (double& v : b) v = rng.normal();
      const int reps = s <= 64 ? 50 : 10;
      const double t_serial = time_ms(kp.serial, a, b, c1, s, s, s, reps);
      const double t_omp = time_ms(kp.parallel, a, b, c2, s, s, s, reps);
      const bool identical = std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0;
      std::printf("%-10s %6zu %12.3f %12.3f %8.2fx %12s\n", kp.name, s, t_serial, t_omp,
                  t_serial / t_omp, identical ? "yes" : "NO");
      if (!identical) return 1;
    }
  }
  return 0;
}
