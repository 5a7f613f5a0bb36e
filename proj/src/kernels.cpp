#include "csb/kernels.hpp"

#include <cmath>
#include <cstring>

namespace csb {
namespace par {
ExecPolicy& default_policy_ref() {
  static ExecPolicy p = ExecPolicy::OpenMP;
  return p;
}
}  // namespace par

namespace kernels {

void dense_forward(const double* x, std::size_t batch, std::size_t in_dim, std::size_t out_dim,
                   const double* W, const double* bias, double* out, ExecPolicy policy) {
  par::parallel_for(batch, [&](std::size_t b) {
    const double* xb = x + b * in_dim;
    double* ob = out + b * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) ob[o] = bias ? bias[o] : 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double xi = xb[i];
      if (xi == 0.0) continue;
      const double* wrow = W + i * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) ob[o] += xi * wrow[o];
    }
  }, policy);
}

void dense_backward(const double* x, const double* dy, std::size_t batch, std::size_t in_dim,
                    std::size_t out_dim, const double* W, double* gW, double* gbias, double* gx,
                    ExecPolicy policy) {
  // gW rows are owned per input index i, so the batch loop accumulates in a
  // fixed order inside one thread regardless of the thread count.
  if (gW) {
    par::parallel_for(in_dim, [&](std::size_t i) {
      double* grow = gW + i * out_dim;
      std::memset(grow, 0, out_dim * sizeof(double));
      for (std::size_t b = 0; b < batch; ++b) {
        const double xi = x[b * in_dim + i];
        if (xi == 0.0) continue;
        const double* dyb = dy + b * out_dim;
        for (std::size_t o = 0; o < out_dim; ++o) grow[o] += xi * dyb[o];
      }
    }, policy);
  }
  if (gbias) {
    par::parallel_for(out_dim, [&](std::size_t o) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += dy[b * out_dim + o];
      gbias[o] = s;
    }, policy);
  }
  if (gx) {
    par::parallel_for(batch, [&](std::size_t b) {
      const double* dyb = dy + b * out_dim;
      double* gxb = gx + b * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) {
        const double* wrow = W + i * out_dim;
        double s = 0.0;
        for (std::size_t o = 0; o < out_dim; ++o) s += wrow[o] * dyb[o];
        gxb[i] = s;
      }
    }, policy);
  }
}

void conv1d_forward(const double* x, std::size_t batch, std::size_t positions,
                    std::size_t channels, std::size_t left_context, std::size_t out_channels,
                    const double* W, const double* bias, double* out, ExecPolicy policy) {
  const std::size_t taps = left_context + 1;
  par::parallel_for(batch * positions, [&](std::size_t bi) {
    const std::size_t b = bi / positions;
    const std::size_t i = bi % positions;
    const double* xb = x + b * positions * channels;
    double* o = out + bi * out_channels;
    for (std::size_t c = 0; c < out_channels; ++c) o[c] = bias ? bias[c] : 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t k = 0; k < taps; ++k) {
        const long long pos = static_cast<long long>(i) - static_cast<long long>(left_context) +
                              static_cast<long long>(k);
        if (pos < 0) continue;  // zero padding on the left
        const double v = xb[static_cast<std::size_t>(pos) * channels + ch];
        if (v == 0.0) continue;
        const double* wrow = W + (ch * taps + k) * out_channels;
        for (std::size_t c = 0; c < out_channels; ++c) o[c] += v * wrow[c];
      }
    }
  }, policy);
}

void conv1d_backward(const double* x, const double* dy, std::size_t batch, std::size_t positions,
                     std::size_t channels, std::size_t left_context, std::size_t out_channels,
                     const double* W, double* gW, double* gbias, double* gx, ExecPolicy policy) {
  const std::size_t taps = left_context + 1;
  if (gW) {
    // One thread owns one output channel column; (b, i) accumulation order
    // is fixed.
    par::parallel_for(out_channels, [&](std::size_t c) {
      for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t k = 0; k < taps; ++k) gW[(ch * taps + k) * out_channels + c] = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x + b * positions * channels;
        const double* dyb = dy + b * positions * out_channels;
        for (std::size_t i = 0; i < positions; ++i) {
          const double g = dyb[i * out_channels + c];
          if (g == 0.0) continue;
          for (std::size_t ch = 0; ch < channels; ++ch) {
            for (std::size_t k = 0; k < taps; ++k) {
              const long long pos = static_cast<long long>(i) -
                                    static_cast<long long>(left_context) + static_cast<long long>(k);
              if (pos < 0) continue;
              gW[(ch * taps + k) * out_channels + c] +=
                  g * xb[static_cast<std::size_t>(pos) * channels + ch];
            }
          }
        }
      }
    }, policy);
  }
  if (gbias) {
    par::parallel_for(out_channels, [&](std::size_t c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < positions; ++i) s += dy[(b * positions + i) * out_channels + c];
      gbias[c] = s;
    }, policy);
  }
  if (gx) {
    par::parallel_for(batch * positions, [&](std::size_t bp) {
      const std::size_t b = bp / positions;
      const std::size_t p = bp % positions;
      const double* dyb = dy + b * positions * out_channels;
      double* g = gx + bp * channels;
      for (std::size_t ch = 0; ch < channels; ++ch) g[ch] = 0.0;
      // Input position p feeds outputs i = p .. p+L through tap k = p-i+L.
      for (std::size_t k = 0; k < taps; ++k) {
        const std::size_t i = p + left_context - k;
        if (i >= positions) continue;
        const double* dyrow = dyb + i * out_channels;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const double* wrow = W + (ch * taps + k) * out_channels;
          double s = 0.0;
          for (std::size_t c = 0; c < out_channels; ++c) s += wrow[c] * dyrow[c];
          g[ch] += s;
        }
      }
    }, policy);
  }
}

void tanh_forward(const double* x, std::size_t n, double* y, ExecPolicy policy) {
  par::parallel_for(n, [&](std::size_t i) { y[i] = std::tanh(x[i]); }, policy);
}

void tanh_backward(const double* y, const double* dy, std::size_t n, double* dx, ExecPolicy policy) {
  par::parallel_for(n, [&](std::size_t i) { dx[i] = dy[i] * (1.0 - y[i] * y[i]); }, policy);
}

void sgd_momentum_update(double* params, double* velocity, const double* grads, std::size_t n,
                         double lr, double mu, ExecPolicy policy) {
  par::parallel_for(n, [&](std::size_t i) {
    velocity[i] = mu * velocity[i] - lr * grads[i];
    params[i] += velocity[i];
  }, policy);
}

}  // namespace kernels
}  // namespace csb
