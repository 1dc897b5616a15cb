#include <doctest.h>

#include <array>
#include <cstring>
#include <string>

#include "probelab/kernels.hpp"
#include "probelab/rng.hpp"

using namespace probelab;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, size_t n, double scale = 2.0) {
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(rng.uniform(-scale, scale));
  return v;
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST_CASE("matmul matches hand results") {
  const auto& t = kernels::table_for<double>(kernels::Isa::scalar);
  {
    // identity * A = A
    const std::vector<double> eye = {1, 0, 0, 1};
    const std::vector<double> a = {1, 2, 3, 4};
    std::vector<double> c(4, -1);
    t.matmul(eye.data(), a.data(), c.data(), 2, 2, 2, false);
    CHECK(c == a);
  }
  {
    // [[1,2]] x [[3],[4]] = [[11]]
    const std::vector<double> a = {1, 2};
    const std::vector<double> b = {3, 4};
    std::vector<double> c(1, 0);
    t.matmul(a.data(), b.data(), c.data(), 1, 2, 1, false);
    CHECK(c[0] == doctest::Approx(11.0));
  }
  {
    // accumulate flag seeds the output
    const std::vector<double> a = {1, 0, 0, 1};
    const std::vector<double> b = {5, 6, 7, 8};
    std::vector<double> c = {1, 1, 1, 1};
    t.matmul(a.data(), b.data(), c.data(), 2, 2, 2, true);
    CHECK(c == std::vector<double>{6, 7, 8, 9});
  }
}

TEST_CASE_TEMPLATE("avx2 kernels are bit-identical to scalar", T, float, double) {
  if (!kernels::avx2_supported()) return;
  const auto& scalar = kernels::table_for<T>(kernels::Isa::scalar);
  const auto& avx2 = kernels::table_for<T>(kernels::Isa::avx2);
  Rng rng(1234);

  // Irregular sizes exercise every tail path.
  for (const auto [m, k, n] : {std::array<size_t, 3>{1, 1, 1},
                               std::array<size_t, 3>{3, 5, 7},
                               std::array<size_t, 3>{8, 16, 17},
                               std::array<size_t, 3>{13, 48, 33},
                               std::array<size_t, 3>{2, 64, 64}}) {
    const auto a = random_vec<T>(rng, m * k);
    const auto b = random_vec<T>(rng, k * n);
    std::vector<T> c0(m * n), c1(m * n);
    scalar.matmul(a.data(), b.data(), c0.data(), m, k, n, false);
    avx2.matmul(a.data(), b.data(), c1.data(), m, k, n, false);
    CHECK(bit_equal(c0, c1));
    auto acc0 = random_vec<T>(rng, m * n);
    auto acc1 = acc0;
    scalar.matmul(a.data(), b.data(), acc0.data(), m, k, n, true);
    avx2.matmul(a.data(), b.data(), acc1.data(), m, k, n, true);
    CHECK(bit_equal(acc0, acc1));
  }

  for (const size_t n : {1u, 7u, 8u, 31u, 256u}) {
    const auto a = random_vec<T>(rng, n);
    const auto b = random_vec<T>(rng, n);
    std::vector<T> c0(n), c1(n);
    scalar.add(a.data(), b.data(), c0.data(), n);
    avx2.add(a.data(), b.data(), c1.data(), n);
    CHECK(bit_equal(c0, c1));
    scalar.mul(a.data(), b.data(), c0.data(), n);
    avx2.mul(a.data(), b.data(), c1.data(), n);
    CHECK(bit_equal(c0, c1));
    auto y0 = random_vec<T>(rng, n);
    auto y1 = y0;
    const T alpha = static_cast<T>(0.37);
    scalar.axpy(alpha, a.data(), y0.data(), n);
    avx2.axpy(alpha, a.data(), y1.data(), n);
    CHECK(bit_equal(y0, y1));
    scalar.scale(alpha, a.data(), c0.data(), n);
    avx2.scale(alpha, a.data(), c1.data(), n);
    CHECK(bit_equal(c0, c1));
  }

  {
    const size_t n = 203;
    auto p0 = random_vec<T>(rng, n);
    auto p1 = p0;
    const auto g = random_vec<T>(rng, n);
    std::vector<T> m0(n, T(0)), v0(n, T(0)), m1(n, T(0)), v1(n, T(0));
    const T c1b = T(1) - T(0.9);
    const T c2b = T(1) - T(0.999);
    for (int step = 0; step < 3; ++step) {
      scalar.adam_update(p0.data(), g.data(), m0.data(), v0.data(), n, T(1e-3),
                         T(0.9), T(0.999), T(1e-8), c1b, c2b);
      avx2.adam_update(p1.data(), g.data(), m1.data(), v1.data(), n, T(1e-3),
                       T(0.9), T(0.999), T(1e-8), c1b, c2b);
    }
    CHECK(bit_equal(p0, p1));
    CHECK(bit_equal(m0, m1));
    CHECK(bit_equal(v0, v1));
  }
}

TEST_CASE("dispatch honors set_isa and reports a name") {
  const kernels::Isa original = kernels::active_isa();
  kernels::set_isa(kernels::Isa::scalar);
  CHECK(kernels::active_isa() == kernels::Isa::scalar);
  CHECK(std::string(kernels::isa_name(kernels::active_isa())) == "scalar");
  kernels::set_isa(original);
}

TEST_CASE("transpose") {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};  // 2x3
  std::vector<double> t(6);
  kernels::transpose(a.data(), t.data(), 2, 3);
  CHECK(t == std::vector<double>{1, 4, 2, 5, 3, 6});
}
