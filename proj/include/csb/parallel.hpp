#pragma once

#include <algorithm>
#include <cstddef>

#ifdef CSB_HAVE_OPENMP
#include <omp.h>
#endif

namespace csb {

/// Execution policy for the hot kernels. Serial is the reference
/// implementation; OpenMP must produce bit-identical results (all
/// reductions accumulate in a fixed order that does not depend on the
/// thread count).
enum class ExecPolicy { Serial, OpenMP };

namespace par {

ExecPolicy& default_policy_ref();

inline ExecPolicy default_policy() { return default_policy_ref(); }
inline void set_default_policy(ExecPolicy p) { default_policy_ref() = p; }

inline int max_threads() {
#ifdef CSB_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef CSB_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

/// Static-schedule parallel loop over [0, n). The body must only write
/// state owned by iteration i. Small loops run serially: spawning a team
/// costs more than the work, and the iteration order is identical either
/// way, so results do not change.
template <class F>
inline void parallel_for(std::size_t n, F&& body, ExecPolicy policy) {
  constexpr std::size_t kMinParallel = 64;
  if (policy == ExecPolicy::OpenMP && n >= kMinParallel) {
#ifdef CSB_HAVE_OPENMP
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) body(static_cast<std::size_t>(i));
    return;
#endif
  }
  for (std::size_t i = 0; i < n; ++i) body(i);
}

template <class F>
inline void parallel_for(std::size_t n, F&& body) {
  parallel_for(n, static_cast<F&&>(body), default_policy());
}

/// Splits [0, n) into one contiguous block per worker and calls
/// body(lo, hi) once per block. Lets the body hoist per-thread buffers out
/// of the element loop; outputs must still be owned per element, so the
/// result does not depend on the block count.
template <class F>
inline void parallel_blocks(std::size_t n, F&& body, ExecPolicy policy = default_policy()) {
  if (n == 0) return;
#ifdef CSB_HAVE_OPENMP
  if (policy == ExecPolicy::OpenMP && n >= 2) {
    const int workers = std::min<long long>(max_threads(), static_cast<long long>(n));
#pragma omp parallel for schedule(static, 1)
    for (int w = 0; w < workers; ++w) {
      const std::size_t lo = n * w / workers;
      const std::size_t hi = n * (w + 1) / workers;
      if (lo < hi) body(lo, hi);
    }
    return;
  }
#endif
  (void)policy;
  body(0, n);
}

}  // namespace par
}  // namespace csb
