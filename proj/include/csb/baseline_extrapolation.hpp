#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace csb {

/// Cubic cost model of a dense structure-agnostic solver:
/// T(d) = t_ref * (d / d_ref)^3 * I.
struct CubicCostModel {
  int d_ref = 50;
  double t_ref_seconds = 0.0;
  int iterations = 100;
};

/// Dense in-place inversion by Gaussian elimination with partial pivoting.
/// Returns false when a pivot collapses. This is the timed core operation,
/// implemented in-repo so the calibration measures the same arithmetic on
/// every platform. Strictly single-threaded.
bool invert_gaussian_elimination(std::vector<double>& a, int d);

/// Times d_ref x d_ref inversions over `trials` runs (one warm-up run is
/// discarded) and takes the median. Singular draws are regenerated with a
/// derived seed, up to a bounded number of retries.
CubicCostModel calibrate(int d_ref, int trials, std::uint64_t seed, int iterations = 100);

/// t_ref * (d/d_ref)^3 * I, exactly.
double extrapolate(const CubicCostModel& model, double d);

/// d^2 * bytes_per_entry.
double memory_wall_estimate(double d, double bytes_per_entry);

/// "6.37 years"-style rendering of a duration in seconds.
std::string human_duration(double seconds);

}  // namespace csb
