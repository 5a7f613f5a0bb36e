#pragma once

#include <cstddef>
#include <vector>

#include "csb/parallel.hpp"

namespace csb::kernels {

// Batched dense / 1-D convolution kernels used by the trainers. Every
// kernel has one implementation driven by an ExecPolicy: the Serial policy
// is the reference, and the OpenMP policy parallelizes only over indices
// whose accumulation order is thread-private, so both policies produce
// bit-identical results.

/// out[b,:] = W^T x[b,:] + bias with W stored row-major [in][out].
void dense_forward(const double* x, std::size_t batch, std::size_t in_dim, std::size_t out_dim,
                   const double* W, const double* bias, double* out, ExecPolicy policy);

/// Gradients of sum_b <dy[b], y[b]> w.r.t. W, bias and x.
/// Any of gW/gbias/gx may be null to skip that output.
void dense_backward(const double* x, const double* dy, std::size_t batch, std::size_t in_dim,
                    std::size_t out_dim, const double* W, double* gW, double* gbias, double* gx,
                    ExecPolicy policy);

/// Zero-padded 1-D convolution over positions with left context L:
/// out[b,i,c] = bias[c] + sum_{ch} sum_{k=0..L} W[ch,k,c] * x[b, i-L+k, ch].
/// x layout [batch][positions][channels], W layout [channels][L+1][out_c].
void conv1d_forward(const double* x, std::size_t batch, std::size_t positions,
                    std::size_t channels, std::size_t left_context, std::size_t out_channels,
                    const double* W, const double* bias, double* out, ExecPolicy policy);

void conv1d_backward(const double* x, const double* dy, std::size_t batch, std::size_t positions,
                     std::size_t channels, std::size_t left_context, std::size_t out_channels,
                     const double* W, double* gW, double* gbias, double* gx, ExecPolicy policy);

/// y[i] = tanh(x[i]) and the matching backward dx = dy * (1 - y^2).
void tanh_forward(const double* x, std::size_t n, double* y, ExecPolicy policy);
void tanh_backward(const double* y, const double* dy, std::size_t n, double* dx, ExecPolicy policy);

/// In-place SGD with momentum: v = mu*v - lr*g; p += v.
void sgd_momentum_update(double* params, double* velocity, const double* grads, std::size_t n,
                         double lr, double mu, ExecPolicy policy);

}  // namespace csb::kernels
