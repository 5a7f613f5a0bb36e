#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "csb/errors.hpp"
#include "csb/kernels.hpp"
#include "csb/rng.hpp"

namespace csb {

/// Fully connected net with tanh hidden units and a linear head. Parameters
/// are packed in one flat vector (per layer: row-major W then bias) so the
/// optimizer and the serializer can treat every net the same way.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> widths);

  struct Workspace {
    std::size_t batch = 0;
    std::vector<std::vector<double>> acts;  // acts[0] = input copy
    std::vector<double> grad_a, grad_b;     // backward scratch
  };

  void init(Rng& rng);
  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t in_dim() const { return widths_.empty() ? 0 : widths_.front(); }
  std::size_t out_dim() const { return widths_.empty() ? 0 : widths_.back(); }

  Workspace make_workspace(std::size_t batch) const;

  /// out is [batch][out_dim]. Evaluation is const; the workspace carries the
  /// activations backward() needs.
  void forward(const double* x, std::size_t batch, Workspace& ws, double* out,
               ExecPolicy policy = par::default_policy()) const;

  /// Writes exact gradients of sum_b <dy_b, out_b> into `grads` (same
  /// packing as params; every entry is overwritten). Pass gx to also get
  /// input gradients. Reuses the workspace's backward scratch.
  void backward(Workspace& ws, const double* dy, double* grads, double* gx = nullptr,
                ExecPolicy policy = par::default_policy()) const;

  // Offsets into the packed parameter vector.
  std::size_t weight_offset(std::size_t layer) const { return w_off_[layer]; }
  std::size_t bias_offset(std::size_t layer) const { return b_off_[layer]; }
  std::size_t layer_count() const { return widths_.empty() ? 0 : widths_.size() - 1; }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> w_off_, b_off_;
  std::vector<double> params_;
};

/// Structurally decomposed drift: one windowed 1-D convolution (zero left
/// padding, left context L) followed by pointwise layers shared across all
/// positions. Output i can only see input positions {i-L..i}, and the
/// parameter count does not depend on the number of positions.
class Conv1dDrift {
 public:
  struct Config {
    std::size_t left_context = 1;
    std::size_t in_channels = 1;
    bool time_channel = false;           // broadcast scalar t per sample
    std::vector<std::size_t> hidden = {64, 32};
  };

  Conv1dDrift() = default;
  explicit Conv1dDrift(Config cfg);

  struct Workspace {
    std::size_t batch = 0, positions = 0;
    std::vector<double> input;                 // copy of x
    std::vector<double> tval;                  // per-sample t
    std::vector<std::vector<double>> acts;     // per layer, [batch*positions][C]
    std::vector<double> grad_a, grad_b;        // backward scratch
  };

  void init(Rng& rng);
  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const Config& config() const { return cfg_; }

  Workspace make_workspace(std::size_t batch, std::size_t positions) const;

  /// x is [batch][positions][in_channels]; t (may be null when the config
  /// has no time channel) is [batch]; out is [batch][positions].
  void forward(const double* x, const double* t, std::size_t batch, std::size_t positions,
               Workspace& ws, double* out, ExecPolicy policy = par::default_policy()) const;

  /// dy is [batch][positions]; grads packed like params; gx optional
  /// [batch][positions][in_channels].
  void backward(Workspace& ws, const double* dy, double* grads, double* gx = nullptr,
                ExecPolicy policy = par::default_policy()) const;

 private:
  Config cfg_;
  std::vector<std::size_t> w_off_, b_off_;  // per layer (layer 0 = conv)
  std::size_t time_off_ = 0;
  std::vector<double> params_;
};

/// Plain momentum SGD over a packed parameter vector.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, std::size_t n)
      : lr_(lr), mu_(momentum), velocity_(n, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grads,
            ExecPolicy policy = par::default_policy()) {
    if (params.size() != velocity_.size() || grads.size() != params.size())
      throw ShapeMismatch("SgdMomentum: parameter/gradient size mismatch");
    kernels::sgd_momentum_update(params.data(), velocity_.data(), grads.data(), params.size(),
                                 lr_, mu_, policy);
  }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, mu_;
  std::vector<double> velocity_;
};

/// Conv1dDrift preset sized to roughly 12k parameters (chain-drift mode:
/// state channel with left context 1 plus a time channel). The count is
/// independent of the chain length by construction.
Conv1dDrift::Config conv_drift_12k_config();

}  // namespace csb
