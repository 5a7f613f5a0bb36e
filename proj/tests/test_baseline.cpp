#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "csb/baseline_extrapolation.hpp"
#include "csb/rng.hpp"
#include "doctest.h"

using namespace csb;

TEST_CASE("inversion sanity: A * inv(A) = I within 1e-8 at d=50") {
  const int d = 50;
  Rng rng(1);
  std::vector<double> a(d * d);
  for (auto& v : a) v = rng.normal();
  std::vector<double> inv = a;
  REQUIRE(invert_gaussian_elimination(inv, d));

  double max_err = 0.0;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += a[r * d + k] * inv[k * d + c];
      max_err = std::max(max_err, std::abs(s - (r == c ? 1.0 : 0.0)));
    }
  CHECK(max_err <= 1e-8);

  // Identity inversion is exact.
  std::vector<double> eye(d * d, 0.0);
  for (int i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  std::vector<double> eye_inv = eye;
  REQUIRE(invert_gaussian_elimination(eye_inv, d));
  for (int i = 0; i < d * d; ++i) CHECK(std::abs(eye_inv[i] - eye[i]) <= 1e-12);
}

TEST_CASE("singular matrices are rejected") {
  std::vector<double> a = {1.0, 2.0, 2.0, 4.0};  // rank 1
  CHECK(!invert_gaussian_elimination(a, 2));
}

TEST_CASE("calibrate: positive t_ref, cubic growth bracket between d_ref and 2*d_ref") {
  // 64 and 128 keep both working sets on the same cache tier, so the
  // measured ratio tracks the 8x flop count instead of the memory system.
  CubicCostModel small = calibrate(64, 11, 42);
  CubicCostModel big = calibrate(128, 11, 43);
  CHECK(small.t_ref_seconds > 0.0);
  CHECK(big.t_ref_seconds > small.t_ref_seconds);
  const double ratio = big.t_ref_seconds / small.t_ref_seconds;
  CHECK(ratio >= 4.0);
  CHECK(ratio <= 16.0);
  CHECK_THROWS(calibrate(1024, 3, 1));
}

TEST_CASE("extrapolate: exact arithmetic, published anchor, multiplicativity") {
  CubicCostModel anchor{50, 0.000251, 100};
  const double t = extrapolate(anchor, 1e5);
  CHECK(std::abs(t - 2.008e8) / 2.008e8 <= 1e-3);
  CHECK(std::abs(t / 31536000.0 - 6.37) <= 0.01);
  CHECK(human_duration(t).find("years") != std::string::npos);

  CubicCostModel unit{50, 0.000251, 1};
  CHECK(extrapolate(unit, 50) == doctest::Approx(0.000251).epsilon(1e-12));
  CHECK(extrapolate(anchor, 100) == doctest::Approx(8.0 * 100 * 0.000251).epsilon(1e-12));
  // extrapolate(2d)/extrapolate(d) = 8 for any model.
  for (double d : {123.0, 1000.0, 77777.0})
    CHECK(extrapolate(anchor, 2 * d) / extrapolate(anchor, d) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("memory_wall_estimate") {
  CHECK(memory_wall_estimate(1e5, 4) == doctest::Approx(4e10).epsilon(1e-12));
  CHECK(memory_wall_estimate(1, 4) == 4.0);
  CHECK(memory_wall_estimate(1e5, 40) == doctest::Approx(4e11).epsilon(1e-12));  // Hessian 10x
}
