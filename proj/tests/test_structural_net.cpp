#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "csb/structural_net.hpp"
#include "doctest.h"

using namespace csb;

namespace {

// Central finite differences of 0.5 * sum (out - target)^2 w.r.t. params.
template <class Net, class Fwd>
std::vector<double> fd_gradient(Net& net, const Fwd& forward_loss, double h = 1e-4) {
  std::vector<double> g(net.param_count());
  for (std::size_t i = 0; i < net.param_count(); ++i) {
    const double save = net.params()[i];
    net.params()[i] = save + h;
    const double lp = forward_loss();
    net.params()[i] = save - h;
    const double lm = forward_loss();
    net.params()[i] = save;
    g[i] = (lp - lm) / (2.0 * h);
  }
  return g;
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("mlp: zero weights give zero outputs; param_count formula") {
  Mlp net({4, 3, 2});
  CHECK(net.param_count() == 4 * 3 + 3 + 3 * 2 + 2);
  Mlp::Workspace ws = net.make_workspace(2);
  std::vector<double> x = {1, 2, 3, 4, -1, -2, -3, -4}, y(4, 99.0);
  net.forward(x.data(), 2, ws, y.data());
  for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("param_count: global MLP at full scale is ~102M") {
  Mlp net({100000, 512, 100000});
  CHECK(net.param_count() == 100000ull * 512 + 512 + 512ull * 100000 + 100000);
  CHECK(net.param_count() == 102500512ull);
  const double approx = static_cast<double>(net.param_count());
  CHECK(approx / 1.025e8 == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("param_count: conv preset is ~12k and independent of the chain length") {
  Conv1dDrift a(conv_drift_12k_config());
  CHECK(a.param_count() <= 20000);
  CHECK(std::abs(static_cast<double>(a.param_count()) - 12000.0) <= 600.0);
  // d enters forward() only; the parameter vector never sees it.
  Conv1dDrift::Workspace w3 = a.make_workspace(1, 1000);
  Conv1dDrift::Workspace w5 = a.make_workspace(1, 100000);
  CHECK(a.param_count() == Conv1dDrift(conv_drift_12k_config()).param_count());
  (void)w3;
  (void)w5;
}

TEST_CASE("param_count: degenerate nets") {
  CHECK(Mlp({1, 0}).param_count() == 0);  // empty net
  Mlp net({1, 1});
  CHECK(net.param_count() == 2);  // one weight + one bias
}

TEST_CASE("mlp gradients match finite differences (rel err <= 1e-4)") {
  Mlp net({2, 2, 1});  // 2*2+2 + 2*1+1 = 9 params
  Rng rng(77);
  net.init(rng);
  const std::size_t batch = 4;
  std::vector<double> x = {0.3, -1.2, 0.9, 0.1, -0.4, 0.8, 1.5, -0.7};
  std::vector<double> target = {0.5, -0.2, 0.1, 0.9};

  Mlp::Workspace ws = net.make_workspace(batch);
  std::vector<double> out(batch), dy(batch), grads(net.param_count(), 0.0);

  auto loss_fn = [&]() {
    Mlp::Workspace w = net.make_workspace(batch);
    std::vector<double> o(batch);
    net.forward(x.data(), batch, w, o.data());
    double l = 0;
    for (std::size_t i = 0; i < batch; ++i) l += 0.5 * (o[i] - target[i]) * (o[i] - target[i]);
    return l;
  };

  net.forward(x.data(), batch, ws, out.data());
  for (std::size_t i = 0; i < batch; ++i) dy[i] = out[i] - target[i];
  net.backward(ws, dy.data(), grads.data());

  std::vector<double> fd = fd_gradient(net, loss_fn);
  for (std::size_t i = 0; i < grads.size(); ++i) CHECK(rel_err(grads[i], fd[i]) <= 1e-4);
}

TEST_CASE("conv gradients match finite differences (rel err <= 1e-4)") {
  Conv1dDrift::Config cfg;
  cfg.left_context = 1;
  cfg.in_channels = 1;
  cfg.time_channel = true;
  cfg.hidden = {2};
  Conv1dDrift net(cfg);  // conv: 1*2*2 + tW 2 + b 2; head: 2*1+1 = 11 params
  Rng rng(5);
  net.init(rng);

  const std::size_t batch = 3, pos = 5;
  std::vector<double> x(batch * pos), t = {0.2, 0.5, 0.9}, target(batch * pos);
  Rng data_rng(8);
  for (auto& v : x) v = data_rng.normal();
  for (auto& v : target) v = data_rng.normal();

  auto loss_fn = [&]() {
    Conv1dDrift::Workspace w = net.make_workspace(batch, pos);
    std::vector<double> o(batch * pos);
    net.forward(x.data(), t.data(), batch, pos, w, o.data());
    double l = 0;
    for (std::size_t i = 0; i < o.size(); ++i) l += 0.5 * (o[i] - target[i]) * (o[i] - target[i]);
    return l;
  };

  Conv1dDrift::Workspace ws = net.make_workspace(batch, pos);
  std::vector<double> out(batch * pos), dy(batch * pos), grads(net.param_count(), 0.0);
  net.forward(x.data(), t.data(), batch, pos, ws, out.data());
  for (std::size_t i = 0; i < out.size(); ++i) dy[i] = out[i] - target[i];
  net.backward(ws, dy.data(), grads.data());

  std::vector<double> fd = fd_gradient(net, loss_fn);
  REQUIRE(fd.size() == grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) CHECK(rel_err(grads[i], fd[i]) <= 1e-4);
}

TEST_CASE("backward: zero cotangent gives zero gradients") {
  Mlp net({3, 4, 2});
  Rng rng(3);
  net.init(rng);
  Mlp::Workspace ws = net.make_workspace(2);
  std::vector<double> x(6, 0.7), out(4), dy(4, 0.0), grads(net.param_count(), 123.0);
  net.forward(x.data(), 2, ws, out.data());
  net.backward(ws, dy.data(), grads.data());
  for (double g : grads) CHECK(g == 0.0);
}

TEST_CASE("backward: linear net weight gradient is the input outer product") {
  Mlp net({3, 2});  // single linear layer
  Rng rng(4);
  net.init(rng);
  std::vector<double> x = {0.5, -1.0, 2.0}, dy = {0.3, -0.7};
  Mlp::Workspace ws = net.make_workspace(1);
  std::vector<double> out(2), grads(net.param_count(), 0.0);
  net.forward(x.data(), 1, ws, out.data());
  net.backward(ws, dy.data(), grads.data());
  // gW[i][o] = x[i] * dy[o]; gb[o] = dy[o].
  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < 2; ++o)
      CHECK(grads[net.weight_offset(0) + i * 2 + o] == doctest::Approx(x[i] * dy[o]).epsilon(1e-12));
  CHECK(grads[net.bias_offset(0) + 0] == doctest::Approx(0.3));
  CHECK(grads[net.bias_offset(0) + 1] == doctest::Approx(-0.7));
}

TEST_CASE("conv: identity-on-self kernel copies the input channel") {
  Conv1dDrift::Config cfg;
  cfg.left_context = 1;
  cfg.in_channels = 1;
  cfg.time_channel = false;
  cfg.hidden = {1};
  Conv1dDrift net(cfg);
  // Layer 0 weights: [ch=0][k=0 (left)] = 0, [k=1 (self)] = small a so tanh
  // is near-linear; head weight compensates to 1/a.
  const double a = 1e-4;
  std::fill(net.params().begin(), net.params().end(), 0.0);
  net.params()[1] = a;          // conv tap on self
  net.params()[3] = 1.0 / a;    // head weight (offsets: W0[2], b0[1], W1[1], b1[1])
  const std::size_t pos = 6;
  std::vector<double> x = {0.1, -0.2, 0.3, 0.0, 0.5, -0.6}, out(pos);
  Conv1dDrift::Workspace ws = net.make_workspace(1, pos);
  net.forward(x.data(), nullptr, 1, pos, ws, out.data());
  for (std::size_t i = 0; i < pos; ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-6));
}

TEST_CASE("conv receptive field: exact zero cross-gradients outside {i-L..i}") {
  Conv1dDrift::Config cfg;
  cfg.left_context = 1;
  cfg.in_channels = 1;
  cfg.time_channel = true;
  cfg.hidden = {5, 3};
  Conv1dDrift net(cfg);
  Rng rng(6);
  net.init(rng);

  const std::size_t batch = 1, pos = 9;
  std::vector<double> x(pos), t = {0.4};
  for (auto& v : x) v = rng.normal();

  Conv1dDrift::Workspace ws = net.make_workspace(batch, pos);
  std::vector<double> out(pos), dy(pos), grads(net.param_count()), gx(pos);
  net.forward(x.data(), t.data(), batch, pos, ws, out.data());

  for (std::size_t i = 0; i < pos; ++i) {
    std::fill(dy.begin(), dy.end(), 0.0);
    dy[i] = 1.0;  // d out_i / d x_j via the exact backward pass
    net.backward(ws, dy.data(), grads.data(), gx.data());
    for (std::size_t j = 0; j < pos; ++j) {
      const bool inside = j <= i && i <= j + cfg.left_context;
      if (!inside) CHECK(gx[j] == 0.0);
    }
  }

  // Perturbing any input right of i leaves out_i bitwise unchanged.
  std::vector<double> x2 = x;
  x2[5] += 100.0;
  std::vector<double> out2(pos);
  Conv1dDrift::Workspace ws2 = net.make_workspace(batch, pos);
  net.forward(x2.data(), t.data(), batch, pos, ws2, out2.data());
  for (std::size_t i = 0; i < 4; ++i) CHECK(out2[i] == out[i]);
}

TEST_CASE("sgd momentum trains a tiny regression") {
  Mlp net({1, 8, 1});
  Rng rng(12);
  net.init(rng);
  SgdMomentum opt(5e-2, 0.9, net.param_count());

  const std::size_t batch = 32;
  Mlp::Workspace ws = net.make_workspace(batch);
  std::vector<double> x(batch), y(batch), out(batch), dy(batch), grads(net.param_count());
  double first = 0, last = 0;
  for (int step = 0; step < 400; ++step) {
    Rng srng = Rng(100).derive(step);
    for (std::size_t i = 0; i < batch; ++i) {
      x[i] = srng.uniform(-2.0, 2.0);
      y[i] = std::sin(x[i]);
    }
    net.forward(x.data(), batch, ws, out.data());
    double loss = 0;
    for (std::size_t i = 0; i < batch; ++i) {
      const double e = out[i] - y[i];
      loss += e * e / batch;
      dy[i] = 2.0 * e / batch;
    }
    if (step == 0) first = loss;
    last = loss;
    net.backward(ws, dy.data(), grads.data());
    opt.step(net.params(), grads);
  }
  CHECK(last < 0.05 * first);
}
