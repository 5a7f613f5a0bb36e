#include "csb/baseline_extrapolation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "csb/errors.hpp"
#include "csb/rng.hpp"

namespace csb {

bool invert_gaussian_elimination(std::vector<double>& a, int d) {
  // Augmented [A | I] elimination, in place.
  std::vector<double> aug(static_cast<std::size_t>(d) * 2 * d, 0.0);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) aug[static_cast<std::size_t>(r) * 2 * d + c] = a[static_cast<std::size_t>(r) * d + c];
    aug[static_cast<std::size_t>(r) * 2 * d + d + r] = 1.0;
  }
  const std::size_t w = static_cast<std::size_t>(2 * d);
  for (int c = 0; c < d; ++c) {
    int piv = c;
    double best = std::abs(aug[static_cast<std::size_t>(c) * w + c]);
    for (int r = c + 1; r < d; ++r) {
      const double v = std::abs(aug[static_cast<std::size_t>(r) * w + c]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best < 1e-12) return false;
    if (piv != c)
      for (std::size_t j = 0; j < w; ++j)
        std::swap(aug[static_cast<std::size_t>(c) * w + j], aug[static_cast<std::size_t>(piv) * w + j]);
    const double dinv = 1.0 / aug[static_cast<std::size_t>(c) * w + c];
    for (std::size_t j = 0; j < w; ++j) aug[static_cast<std::size_t>(c) * w + j] *= dinv;
    for (int r = 0; r < d; ++r) {
      if (r == c) continue;
      const double f = aug[static_cast<std::size_t>(r) * w + c];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < w; ++j)
        aug[static_cast<std::size_t>(r) * w + j] -= f * aug[static_cast<std::size_t>(c) * w + j];
    }
  }
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      a[static_cast<std::size_t>(r) * d + c] = aug[static_cast<std::size_t>(r) * w + d + c];
  return true;
}

namespace {

std::vector<double> random_matrix(int d, Rng& rng) {
  std::vector<double> a(static_cast<std::size_t>(d) * d);
  for (auto& v : a) v = rng.normal();
  return a;
}

}  // namespace

CubicCostModel calibrate(int d_ref, int trials, std::uint64_t seed, int iterations) {
  if (d_ref < 2 || d_ref > 512)
    throw DimensionMismatch("calibrate: d_ref must be in [2, 512] to run densely");
  if (trials < 1) throw DimensionMismatch("calibrate: trials must be >= 1");
  if (iterations < 1) throw DimensionMismatch("calibrate: iterations must be >= 1");

  const Rng master(seed);
  std::vector<double> times;
  times.reserve(trials);
  // Warm-up plus timed trials; a singular draw (vanishing pivot) is retried
  // with a derived seed.
  for (int t = -1; t < trials; ++t) {
    bool done = false;
    for (int attempt = 0; attempt < 8 && !done; ++attempt) {
      Rng rng = master.derive(0xca11u, static_cast<std::uint64_t>(t + 1),
                              static_cast<std::uint64_t>(attempt));
      std::vector<double> a = random_matrix(d_ref, rng);
      const auto t0 = std::chrono::steady_clock::now();
      done = invert_gaussian_elimination(a, d_ref);
      const auto t1 = std::chrono::steady_clock::now();
      if (done && t >= 0) times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    if (!done) throw SingularMatrix("calibrate: repeated singular draws at d_ref " +
                                    std::to_string(d_ref));
  }
  std::sort(times.begin(), times.end());
  const double median = times.size() % 2 ? times[times.size() / 2]
                                         : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
  CubicCostModel model;
  model.d_ref = d_ref;
  model.t_ref_seconds = median;
  model.iterations = iterations;
  return model;
}

double extrapolate(const CubicCostModel& model, double d) {
  const double ratio = d / static_cast<double>(model.d_ref);
  return model.t_ref_seconds * ratio * ratio * ratio * static_cast<double>(model.iterations);
}

double memory_wall_estimate(double d, double bytes_per_entry) {
  return d * d * bytes_per_entry;
}

std::string human_duration(double seconds) {
  char buf[64];
  constexpr double year = 31536000.0;  // 365-day year
  if (seconds >= year) {
    std::snprintf(buf, sizeof(buf), "%.2f years", seconds / year);
  } else if (seconds >= 86400.0) {
    std::snprintf(buf, sizeof(buf), "%.2f days", seconds / 86400.0);
  } else if (seconds >= 3600.0) {
    std::snprintf(buf, sizeof(buf), "%.2f hours", seconds / 3600.0);
  } else if (seconds >= 60.0) {
    std::snprintf(buf, sizeof(buf), "%.2f minutes", seconds / 60.0);
  } else {
    std::snprintf(buf, sizeof(buf), "%.4f seconds", seconds);
  }
  return buf;
}

}  // namespace csb
