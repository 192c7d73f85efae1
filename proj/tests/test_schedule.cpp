// Learning-rate, momentum, and temperature schedules against closed-form
// values.

#include <cmath>
#include <cstdint>

#include "doctest.h"
#include "mclp/error.hpp"
#include "mclp/schedule.hpp"

using namespace mclp;

TEST_CASE("learning rate ramps linearly through warmup") {
  CHECK(lr_at(1.0, 10, 0, 100) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lr_at(1.0, 10, 4, 100) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(lr_at(1.0, 10, 9, 100) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lr_at(2.0, 10, 4, 100) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("learning rate peaks at the warmup boundary and decays to near zero") {
  CHECK(lr_at(3.0, 10, 10, 100) == doctest::Approx(3.0).epsilon(1e-12));
  // Halfway through the cosine leg the rate is half the base.
  CHECK(lr_at(1.0, 10, 55, 100) == doctest::Approx(0.5).epsilon(1e-12));
  // Last step: one cosine increment above zero.
  double last = lr_at(1.0, 10, 99, 100);
  double want = 0.5 * (1.0 + std::cos(std::acos(-1.0) * 89.0 / 90.0));
  CHECK(last == doctest::Approx(want).epsilon(1e-12));
  CHECK(last < 0.001);
  CHECK(last > 0.0);
}

TEST_CASE("learning rate validates its arguments") {
  CHECK_THROWS_AS(lr_at(1.0, 10, -1, 100), UsageError);
  CHECK_THROWS_AS(lr_at(1.0, 10, 100, 100), UsageError);
  CHECK_THROWS_AS(lr_at(1.0, 100, 0, 100), ConfigError);
  CHECK_THROWS_AS(lr_at(1.0, -1, 0, 100), ConfigError);
  CHECK_THROWS_AS(lr_at(1.0, 0, 0, 0), ConfigError);
}

TEST_CASE("momentum walks a cosine from start to final") {
  CHECK(momentum_at(0.99, 0.9999, 0, 3000) ==
        doctest::Approx(0.99).epsilon(1e-12));
  CHECK(momentum_at(0.99, 0.9999, 2999, 3000) ==
        doctest::Approx(0.9999).epsilon(1e-12));
  // Midpoint of an odd-length run sits exactly between the endpoints.
  CHECK(momentum_at(0.99, 0.9999, 1000, 2001) ==
        doctest::Approx((0.99 + 0.9999) / 2.0).epsilon(1e-12));
  // Single-step run jumps straight to the final value.
  CHECK(momentum_at(0.99, 0.9999, 0, 1) ==
        doctest::Approx(0.9999).epsilon(1e-12));
  // Monotone non-decreasing when final exceeds start.
  double prev = -1.0;
  for (std::int64_t s = 0; s < 50; ++s) {
    double m = momentum_at(0.5, 0.9, s, 50);
    CHECK(m >= prev);
    prev = m;
  }
  CHECK_THROWS_AS(momentum_at(0.99, 0.9999, 3000, 3000), UsageError);
  CHECK_THROWS_AS(momentum_at(0.99, 0.9999, 0, 0), ConfigError);
}

TEST_CASE("temperature decays geometrically down to the floor") {
  // 1.0 * 0.99997^10000 = exp(10000 * ln 0.99997) ~= 0.74082.
  double tau = 1.0;
  for (int i = 0; i < 10000; ++i) tau = anneal_tau(tau, 0.99997, 1e-3);
  CHECK(tau == doctest::Approx(0.74082).epsilon(1e-4));

  CHECK(anneal_tau(0.4, 0.5, 0.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(anneal_tau(0.2, 0.5, 0.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(anneal_tau(1.0, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(anneal_tau(1.0, 0.0, 0.1), ConfigError);
  CHECK_THROWS_AS(anneal_tau(1.0, 1.5, 0.1), ConfigError);
}
