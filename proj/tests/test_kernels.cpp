#include <cstring>
#include <vector>

#include "diffret/kernels.hpp"
#include "diffret/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace diffret;

namespace {

std::vector<double> random_vec(SeededRng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("kernels: serial matches the triple-loop oracle") {
  SeededRng rng(21);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                         {3, 4, 2},
                         {7, 5, 9},
                         {16, 16, 16}}) {
    const std::vector<double> a = random_vec(rng, m * k);
    const std::vector<double> b = random_vec(rng, k * n);
    std::vector<double> c(m * n);
    kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n);
    const std::vector<double> ref = oracles::naive_matmul(a, b, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("kernels: OpenMP variants are bit-identical to serial") {
  SeededRng rng(22);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{5, 7, 3},
                         {64, 32, 48},
                         {33, 65, 17}}) {
    const std::vector<double> a = random_vec(rng, m * k);
    const std::vector<double> b = random_vec(rng, k * n);
    std::vector<double> c1(m * n), c2(m * n), c3(m * n), c4(m * n), c5(m * n), c6(m * n);

    kernels::matmul_serial(a.data(), b.data(), c1.data(), m, k, n);
    kernels::matmul_omp(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);

    // Transposed variants need b shaped n x k / a shaped k x m; reuse sizes.
    const std::vector<double> bt = random_vec(rng, n * k);
    kernels::matmul_nt_serial(a.data(), bt.data(), c3.data(), m, k, n);
    kernels::matmul_nt_omp(a.data(), bt.data(), c4.data(), m, k, n);
    CHECK(std::memcmp(c3.data(), c4.data(), c3.size() * sizeof(double)) == 0);

    const std::vector<double> at = random_vec(rng, k * m);
    const std::vector<double> bb = random_vec(rng, k * n);
    kernels::matmul_tn_serial(at.data(), bb.data(), c5.data(), m, k, n);
    kernels::matmul_tn_omp(at.data(), bb.data(), c6.data(), m, k, n);
    CHECK(std::memcmp(c5.data(), c6.data(), c5.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("kernels: transposed variants match explicit transposition") {
  SeededRng rng(23);
  const std::size_t m = 4, k = 6, n = 5;
  const std::vector<double> a = random_vec(rng, m * k);
  const std::vector<double> b = random_vec(rng, n * k);  // for nt: b is n x k
  std::vector<double> c(m * n);
  kernels::matmul_nt(a.data(), b.data(), c.data(), m, k, n);
  std::vector<double> b_t(k * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) b_t[j * n + i] = b[i * k + j];
  }
  const std::vector<double> ref = oracles::naive_matmul(a, b_t, m, k, n);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  const std::vector<double> a2 = random_vec(rng, k * m);  // for tn: a is k x m
  std::vector<double> c2(m * n);
  const std::vector<double> b2 = random_vec(rng, k * n);
  kernels::matmul_tn(a2.data(), b2.data(), c2.data(), m, k, n);
  std::vector<double> a2_t(m * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < m; ++j) a2_t[j * k + i] = a2[i * m + j];
  }
  const std::vector<double> ref2 = oracles::naive_matmul(a2_t, b2, m, k, n);
  for (std::size_t i = 0; i < c2.size(); ++i) {
    CHECK(c2[i] == doctest::Approx(ref2[i]).epsilon(1e-12));
  }
}

TEST_CASE("kernels: parallel toggle is restored and harmless") {
  const bool before = kernels::parallel_enabled();
  kernels::set_parallel_enabled(false);
  SeededRng rng(24);
  const std::vector<double> a = random_vec(rng, 8 * 8);
  const std::vector<double> b = random_vec(rng, 8 * 8);
  std::vector<double> c1(64), c2(64);
  kernels::matmul(a.data(), b.data(), c1.data(), 8, 8, 8);
  kernels::set_parallel_enabled(true);
  kernels::matmul(a.data(), b.data(), c2.data(), 8, 8, 8);
  kernels::set_parallel_enabled(before);
  CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);
}
