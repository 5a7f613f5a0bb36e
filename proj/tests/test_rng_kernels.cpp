#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <vector>

#include "csb/kernels.hpp"
#include "csb/rng.hpp"
#include "doctest.h"

using namespace csb;

TEST_CASE("rng streams are reproducible and order-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // Derived streams do not depend on how much the parent stream was used.
  Rng parent(7);
  Rng child_before = parent.derive(3);
  parent.normal();
  parent.normal();
  Rng child_after = parent.derive(3);
  CHECK(child_before.next_u64() == child_after.next_u64());

  CHECK(Rng(1).derive(2).next_u64() != Rng(1).derive(3).next_u64());
  CHECK(Rng(1).next_u64() != Rng(2).next_u64());
}

TEST_CASE("rng normals have sane moments") {
  Rng rng(123);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("dense kernels: OpenMP path is bit-identical to the serial reference") {
  Rng rng(9);
  const std::size_t batch = 37, in = 23, out = 11;
  auto x = random_vec(batch * in, rng);
  auto W = random_vec(in * out, rng);
  auto bias = random_vec(out, rng);
  auto dy = random_vec(batch * out, rng);

  std::vector<double> y_s(batch * out), y_p(batch * out);
  kernels::dense_forward(x.data(), batch, in, out, W.data(), bias.data(), y_s.data(),
                         ExecPolicy::Serial);
  kernels::dense_forward(x.data(), batch, in, out, W.data(), bias.data(), y_p.data(),
                         ExecPolicy::OpenMP);
  CHECK(std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0);

  std::vector<double> gW_s(in * out), gW_p(in * out), gb_s(out), gb_p(out), gx_s(batch * in),
      gx_p(batch * in);
  kernels::dense_backward(x.data(), dy.data(), batch, in, out, W.data(), gW_s.data(), gb_s.data(),
                          gx_s.data(), ExecPolicy::Serial);
  kernels::dense_backward(x.data(), dy.data(), batch, in, out, W.data(), gW_p.data(), gb_p.data(),
                          gx_p.data(), ExecPolicy::OpenMP);
  CHECK(std::memcmp(gW_s.data(), gW_p.data(), gW_s.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(gb_s.data(), gb_p.data(), gb_s.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(gx_s.data(), gx_p.data(), gx_s.size() * sizeof(double)) == 0);
}

TEST_CASE("conv kernels: OpenMP path is bit-identical to the serial reference") {
  Rng rng(11);
  const std::size_t batch = 5, pos = 64, ch = 2, L = 1, oc = 7;
  auto x = random_vec(batch * pos * ch, rng);
  auto W = random_vec(ch * (L + 1) * oc, rng);
  auto bias = random_vec(oc, rng);
  auto dy = random_vec(batch * pos * oc, rng);

  std::vector<double> y_s(batch * pos * oc), y_p(batch * pos * oc);
  kernels::conv1d_forward(x.data(), batch, pos, ch, L, oc, W.data(), bias.data(), y_s.data(),
                          ExecPolicy::Serial);
  kernels::conv1d_forward(x.data(), batch, pos, ch, L, oc, W.data(), bias.data(), y_p.data(),
                          ExecPolicy::OpenMP);
  CHECK(std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0);

  std::vector<double> gW_s(W.size()), gW_p(W.size()), gb_s(oc), gb_p(oc), gx_s(x.size()),
      gx_p(x.size());
  kernels::conv1d_backward(x.data(), dy.data(), batch, pos, ch, L, oc, W.data(), gW_s.data(),
                           gb_s.data(), gx_s.data(), ExecPolicy::Serial);
  kernels::conv1d_backward(x.data(), dy.data(), batch, pos, ch, L, oc, W.data(), gW_p.data(),
                           gb_p.data(), gx_p.data(), ExecPolicy::OpenMP);
  CHECK(std::memcmp(gW_s.data(), gW_p.data(), gW_s.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(gb_s.data(), gb_p.data(), gb_s.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(gx_s.data(), gx_p.data(), gx_s.size() * sizeof(double)) == 0);
}
