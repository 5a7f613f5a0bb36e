#include "csb/structural_net.hpp"

#include <cmath>
#include <cstring>

namespace csb {

// ---- Mlp --------------------------------------------------------------------

Mlp::Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ShapeMismatch("Mlp: need at least input and output widths");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    w_off_.push_back(total);
    total += widths_[l] * widths_[l + 1];
    b_off_.push_back(total);
    total += widths_[l + 1];
  }
  params_.assign(total, 0.0);
}

void Mlp::init(Rng& rng) {
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    double* W = params_.data() + w_off_[l];
    for (std::size_t i = 0; i < widths_[l] * widths_[l + 1]; ++i) W[i] = scale * rng.normal();
    double* b = params_.data() + b_off_[l];
    for (std::size_t i = 0; i < widths_[l + 1]; ++i) b[i] = 0.0;
  }
}

Mlp::Workspace Mlp::make_workspace(std::size_t batch) const {
  Workspace ws;
  ws.batch = batch;
  ws.acts.resize(widths_.size());
  for (std::size_t l = 0; l < widths_.size(); ++l) ws.acts[l].assign(batch * widths_[l], 0.0);
  return ws;
}

void Mlp::forward(const double* x, std::size_t batch, Workspace& ws, double* out,
                  ExecPolicy policy) const {
  if (ws.batch != batch) throw ShapeMismatch("Mlp::forward: workspace batch mismatch");
  std::memcpy(ws.acts[0].data(), x, batch * widths_[0] * sizeof(double));
  const std::size_t L = layer_count();
  for (std::size_t l = 0; l < L; ++l) {
    double* dst = (l + 1 == L) ? out : ws.acts[l + 1].data();
    kernels::dense_forward(ws.acts[l].data(), batch, widths_[l], widths_[l + 1],
                           params_.data() + w_off_[l], params_.data() + b_off_[l], dst, policy);
    if (l + 1 < L) kernels::tanh_forward(dst, batch * widths_[l + 1], dst, policy);
  }
}

void Mlp::backward(Workspace& ws, const double* dy, double* grads, double* gx,
                   ExecPolicy policy) const {
  const std::size_t L = layer_count();
  const std::size_t batch = ws.batch;
  std::vector<double>& cur = ws.grad_a;
  std::vector<double>& prev = ws.grad_b;
  cur.assign(dy, dy + batch * widths_[L]);
  for (std::size_t l = L; l-- > 0;) {
    double* gxl = nullptr;
    if (l > 0) {
      prev.assign(batch * widths_[l], 0.0);
      gxl = prev.data();
    } else if (gx) {
      gxl = gx;
    }
    kernels::dense_backward(ws.acts[l].data(), cur.data(), batch, widths_[l], widths_[l + 1],
                            params_.data() + w_off_[l], grads + w_off_[l], grads + b_off_[l], gxl,
                            policy);
    if (l > 0) {
      // acts[l] holds tanh outputs, so the derivative is available directly.
      kernels::tanh_backward(ws.acts[l].data(), prev.data(), batch * widths_[l], prev.data(),
                             policy);
      cur.swap(prev);
    }
  }
}

// ---- Conv1dDrift ---------------------------------------------------------------

Conv1dDrift::Conv1dDrift(Config cfg) : cfg_(std::move(cfg)) {
  if (cfg_.hidden.empty()) throw ShapeMismatch("Conv1dDrift: need at least one hidden layer");
  const std::size_t taps = cfg_.left_context + 1;
  std::size_t total = 0;
  // layer 0: windowed conv.
  w_off_.push_back(total);
  total += cfg_.in_channels * taps * cfg_.hidden[0];
  if (cfg_.time_channel) {
    time_off_ = total;
    total += cfg_.hidden[0];
  }
  b_off_.push_back(total);
  total += cfg_.hidden[0];
  // pointwise layers, then scalar head.
  std::vector<std::size_t> ch = cfg_.hidden;
  ch.push_back(1);
  for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
    w_off_.push_back(total);
    total += ch[l] * ch[l + 1];
    b_off_.push_back(total);
    total += ch[l + 1];
  }
  params_.assign(total, 0.0);
}

void Conv1dDrift::init(Rng& rng) {
  const std::size_t taps = cfg_.left_context + 1;
  {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.in_channels * taps + 1));
    double* W = params_.data() + w_off_[0];
    for (std::size_t i = 0; i < cfg_.in_channels * taps * cfg_.hidden[0]; ++i)
      W[i] = scale * rng.normal();
    if (cfg_.time_channel)
      for (std::size_t i = 0; i < cfg_.hidden[0]; ++i)
        params_[time_off_ + i] = scale * rng.normal();
  }
  std::vector<std::size_t> ch = cfg_.hidden;
  ch.push_back(1);
  for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(ch[l]));
    double* W = params_.data() + w_off_[l + 1];
    for (std::size_t i = 0; i < ch[l] * ch[l + 1]; ++i) W[i] = scale * rng.normal();
  }
}

Conv1dDrift::Workspace Conv1dDrift::make_workspace(std::size_t batch, std::size_t positions) const {
  Workspace ws;
  ws.batch = batch;
  ws.positions = positions;
  ws.input.assign(batch * positions * cfg_.in_channels, 0.0);
  ws.tval.assign(batch, 0.0);
  ws.acts.resize(cfg_.hidden.size());
  for (std::size_t l = 0; l < cfg_.hidden.size(); ++l)
    ws.acts[l].assign(batch * positions * cfg_.hidden[l], 0.0);
  return ws;
}

void Conv1dDrift::forward(const double* x, const double* t, std::size_t batch,
                          std::size_t positions, Workspace& ws, double* out,
                          ExecPolicy policy) const {
  if (ws.batch != batch || ws.positions != positions)
    throw ShapeMismatch("Conv1dDrift::forward: workspace mismatch");
  if (cfg_.time_channel && t == nullptr)
    throw ShapeMismatch("Conv1dDrift::forward: time channel enabled but t missing");
  std::memcpy(ws.input.data(), x, ws.input.size() * sizeof(double));
  if (cfg_.time_channel) std::memcpy(ws.tval.data(), t, batch * sizeof(double));

  const std::size_t C0 = cfg_.hidden[0];
  kernels::conv1d_forward(x, batch, positions, cfg_.in_channels, cfg_.left_context, C0,
                          params_.data() + w_off_[0], params_.data() + b_off_[0],
                          ws.acts[0].data(), policy);
  if (cfg_.time_channel) {
    const double* wt = params_.data() + time_off_;
    par::parallel_for(batch * positions, [&](std::size_t bp) {
      const double tb = t[bp / positions];
      double* a = ws.acts[0].data() + bp * C0;
      for (std::size_t c = 0; c < C0; ++c) a[c] += tb * wt[c];
    }, policy);
  }
  kernels::tanh_forward(ws.acts[0].data(), ws.acts[0].size(), ws.acts[0].data(), policy);

  const std::size_t rows = batch * positions;
  for (std::size_t l = 1; l < cfg_.hidden.size(); ++l) {
    kernels::dense_forward(ws.acts[l - 1].data(), rows, cfg_.hidden[l - 1], cfg_.hidden[l],
                           params_.data() + w_off_[l], params_.data() + b_off_[l],
                           ws.acts[l].data(), policy);
    kernels::tanh_forward(ws.acts[l].data(), ws.acts[l].size(), ws.acts[l].data(), policy);
  }
  const std::size_t last = cfg_.hidden.size();
  kernels::dense_forward(ws.acts[last - 1].data(), rows, cfg_.hidden[last - 1], 1,
                         params_.data() + w_off_[last], params_.data() + b_off_[last], out, policy);
}

void Conv1dDrift::backward(Workspace& ws, const double* dy, double* grads, double* gx,
                           ExecPolicy policy) const {
  const std::size_t rows = ws.batch * ws.positions;
  const std::size_t last = cfg_.hidden.size();

  std::vector<double>& cur = ws.grad_a;
  std::vector<double>& prev = ws.grad_b;
  cur.assign(dy, dy + rows);
  // head
  prev.assign(rows * cfg_.hidden[last - 1], 0.0);
  kernels::dense_backward(ws.acts[last - 1].data(), cur.data(), rows, cfg_.hidden[last - 1], 1,
                          params_.data() + w_off_[last], grads + w_off_[last],
                          grads + b_off_[last], prev.data(), policy);
  kernels::tanh_backward(ws.acts[last - 1].data(), prev.data(), prev.size(), prev.data(), policy);
  cur.swap(prev);

  for (std::size_t l = last - 1; l-- > 0;) {
    prev.assign(rows * cfg_.hidden[l], 0.0);
    kernels::dense_backward(ws.acts[l].data(), cur.data(), rows, cfg_.hidden[l], cfg_.hidden[l + 1],
                            params_.data() + w_off_[l + 1], grads + w_off_[l + 1],
                            grads + b_off_[l + 1], prev.data(), policy);
    kernels::tanh_backward(ws.acts[l].data(), prev.data(), prev.size(), prev.data(), policy);
    cur.swap(prev);
  }

  // conv layer; cur now holds d(pre-tanh act0).
  kernels::conv1d_backward(ws.input.data(), cur.data(), ws.batch, ws.positions, cfg_.in_channels,
                           cfg_.left_context, cfg_.hidden[0], params_.data() + w_off_[0],
                           grads + w_off_[0], grads + b_off_[0], gx, policy);
  if (cfg_.time_channel) {
    const std::size_t C0 = cfg_.hidden[0];
    double* gt = grads + time_off_;
    par::parallel_for(C0, [&](std::size_t c) {
      double s = 0.0;
      for (std::size_t bp = 0; bp < rows; ++bp)
        s += cur[bp * C0 + c] * ws.tval[bp / ws.positions];
      gt[c] = s;
    }, policy);
  }
}

Conv1dDrift::Config conv_drift_12k_config() {
  Conv1dDrift::Config cfg;
  cfg.left_context = 1;
  cfg.in_channels = 1;
  cfg.time_channel = true;
  cfg.hidden = {107, 107};
  return cfg;
}

}  // namespace csb
