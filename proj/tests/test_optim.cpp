#include <doctest.h>

#include <cmath>
#include <cstring>

#include "probelab/optim.hpp"
#include "probelab/rng.hpp"

using namespace probelab;

TEST_CASE("zero gradient leaves the parameter fixed") {
  Tensor<double> w({3}, {1.0, -2.0, 0.5});
  const Tensor<double> before = w;
  AdamState<double> st;
  std::vector<double> g(3, 0.0);
  adam_step<double>(w, g, st, 1e-3);
  CHECK(w.data == before.data);
  for (double m : st.m) CHECK(m == 0.0);
  for (double v : st.v) CHECK(v == 0.0);
  CHECK(st.t == 1);
}

TEST_CASE("first Adam step moves by ~lr against the gradient sign") {
  Tensor<double> w({2}, {0.0, 0.0});
  AdamState<double> st;
  const std::vector<double> g = {3.0, -0.25};
  const double lr = 1e-2;
  adam_step<double>(w, std::span<const double>(g), st, lr);
  // Bias-corrected first step: m_hat = g, v_hat = g^2, update = -lr*g/(|g|+eps)
  CHECK(w.data[0] == doctest::Approx(-lr).epsilon(1e-6));
  CHECK(w.data[1] == doctest::Approx(lr).epsilon(1e-5));
}

TEST_CASE("Adam converges on (w-3)^2") {
  Tensor<double> w({1}, {0.0});
  AdamState<double> st;
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> g = {2.0 * (w.data[0] - 3.0)};
    adam_step<double>(w, std::span<const double>(g), st, 1e-1);
  }
  CHECK(std::abs(w.data[0] - 3.0) < 1e-2);
}

TEST_CASE("non-finite gradients abort the step") {
  Tensor<double> w({2}, {1.0, 2.0});
  const Tensor<double> before = w;
  AdamState<double> st;
  const std::vector<double> g = {1.0, std::nan("")};
  CHECK_THROWS_AS(adam_step<double>(w, std::span<const double>(g), st, 1e-3),
                  NumericError);
  CHECK(w.data == before.data);
  CHECK(st.t == 0);
}

TEST_CASE("adam state tracks steps") {
  Tensor<double> w({1}, {0.0});
  AdamState<double> st;
  const std::vector<double> g = {1.0};
  for (int i = 1; i <= 5; ++i) {
    adam_step<double>(w, std::span<const double>(g), st, 1e-3);
    CHECK(st.t == i);
  }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  LrSchedule s{0.4, 100, LrKind::cosine};
  CHECK(cosine_lr(0, s) == doctest::Approx(0.4));
  CHECK(cosine_lr(100, s) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_lr(50, s) == doctest::Approx(0.2));
  CHECK_THROWS_AS(cosine_lr(101, s), ContractError);
  CHECK_THROWS_AS(cosine_lr(-1, s), ContractError);
}

TEST_CASE("cosine schedule is non-increasing and within [0, lr0]") {
  LrSchedule s{1e-3, 333, LrKind::cosine};
  double prev = cosine_lr(0, s);
  for (int64_t step = 1; step <= 333; ++step) {
    const double v = cosine_lr(step, s);
    CHECK(v <= prev + 1e-15);
    CHECK(v >= 0.0);
    CHECK(v <= s.lr0);
    prev = v;
  }
}

TEST_CASE("constant schedule") {
  LrSchedule s{5e-4, 10, LrKind::constant};
  CHECK(cosine_lr(0, s) == 5e-4);
  CHECK(cosine_lr(10, s) == 5e-4);
}

TEST_CASE("xavier bound and determinism") {
  const size_t d = 37;
  const Tensor<double> w = xavier_uniform<double>({2, d}, 99);
  const double a = std::sqrt(6.0 / (2.0 + static_cast<double>(d)));
  for (double v : w.data) CHECK(std::abs(v) <= a);
  const Tensor<double> w2 = xavier_uniform<double>({2, d}, 99);
  CHECK(std::memcmp(w.data.data(), w2.data.data(), w.size() * sizeof(double)) == 0);
  const Tensor<double> w3 = xavier_uniform<double>({2, d}, 100);
  CHECK(std::memcmp(w.data.data(), w3.data.data(), w.size() * sizeof(double)) != 0);
}

TEST_CASE("xavier rejects 1-D shapes") {
  CHECK_THROWS_AS(xavier_uniform<double>({8}, 1), ContractError);
}

TEST_CASE("xavier empirical mean is near zero") {
  const Tensor<double> w = xavier_uniform<double>({100, 100}, 2024);
  const double a = std::sqrt(6.0 / 200.0);
  const double sigma = a / std::sqrt(3.0);
  double mean = 0;
  for (double v : w.data) mean += v;
  mean /= static_cast<double>(w.size());
  CHECK(std::abs(mean) <= 3.0 * sigma / 100.0);  // 3 sigma / sqrt(10000)
}
