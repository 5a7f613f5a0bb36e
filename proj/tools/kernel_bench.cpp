// Times the hot kernels under the serial reference and the OpenMP policy
// and reports the speedup. The two must agree bitwise; this tool is about
// the clock, the tests are about the bits.

#include <chrono>
#include <cstdio>
#include <vector>

#include "csb/kernels.hpp"
#include "csb/rng.hpp"
#include "csb/structural_net.hpp"

using namespace csb;

namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

template <class F>
double time_best_of(int reps, const F& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_s();
    f();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

void fill(std::vector<double>& v, Rng& rng) {
  for (auto& x : v) x = rng.normal();
}

}  // namespace

int main() {
  Rng rng(7);
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial (ms)", "openmp (ms)", "speedup");

  auto report = [&](const char* name, double ts, double tp) {
    std::printf("%-28s %12.2f %12.2f %7.2fx\n", name, ts * 1e3, tp * 1e3, ts / tp);
  };

  {  // dense forward/backward, MLP-audit shape
    const std::size_t B = 16, in = 4096, out = 512;
    std::vector<double> x(B * in), W(in * out), b(out), y(B * out), dy(B * out), gW(in * out),
        gb(out), gx(B * in);
    fill(x, rng);
    fill(W, rng);
    fill(b, rng);
    fill(dy, rng);
    report("dense_forward 16x4096x512",
           time_best_of(5, [&] { kernels::dense_forward(x.data(), B, in, out, W.data(), b.data(),
                                                        y.data(), ExecPolicy::Serial); }),
           time_best_of(5, [&] { kernels::dense_forward(x.data(), B, in, out, W.data(), b.data(),
                                                        y.data(), ExecPolicy::OpenMP); }));
    report("dense_backward 16x4096x512",
           time_best_of(5, [&] {
             kernels::dense_backward(x.data(), dy.data(), B, in, out, W.data(), gW.data(),
                                     gb.data(), gx.data(), ExecPolicy::Serial);
           }),
           time_best_of(5, [&] {
             kernels::dense_backward(x.data(), dy.data(), B, in, out, W.data(), gW.data(),
                                     gb.data(), gx.data(), ExecPolicy::OpenMP);
           }));
  }

  {  // conv forward/backward, audit shape
    const std::size_t B = 8, pos = 10000, ch = 1, L = 1, oc = 64;
    std::vector<double> x(B * pos * ch), W(ch * (L + 1) * oc), b(oc), y(B * pos * oc),
        dy(B * pos * oc), gW(W.size()), gb(oc), gx(x.size());
    fill(x, rng);
    fill(W, rng);
    fill(b, rng);
    fill(dy, rng);
    report("conv1d_forward 8x10000x64",
           time_best_of(5, [&] { kernels::conv1d_forward(x.data(), B, pos, ch, L, oc, W.data(),
                                                         b.data(), y.data(), ExecPolicy::Serial); }),
           time_best_of(5, [&] { kernels::conv1d_forward(x.data(), B, pos, ch, L, oc, W.data(),
                                                         b.data(), y.data(), ExecPolicy::OpenMP); }));
    report("conv1d_backward 8x10000x64",
           time_best_of(5, [&] {
             kernels::conv1d_backward(x.data(), dy.data(), B, pos, ch, L, oc, W.data(), gW.data(),
                                      gb.data(), gx.data(), ExecPolicy::Serial);
           }),
           time_best_of(5, [&] {
             kernels::conv1d_backward(x.data(), dy.data(), B, pos, ch, L, oc, W.data(), gW.data(),
                                      gb.data(), gx.data(), ExecPolicy::OpenMP);
           }));
  }

  {  // batched Euler-Maruyama over independent paths
    const std::size_t paths = 20000;
    const int steps = 200;
    std::vector<double> endpoints(paths);
    auto run = [&](ExecPolicy policy) {
      const Rng master(3);
      par::parallel_for(paths, [&](std::size_t p) {
        Rng r = master.derive(p);
        double x = r.normal();
        const double dt = 1.0 / steps;
        for (int k = 0; k < steps; ++k) x += -x * dt + 0.5 * std::sqrt(dt) * r.normal();
        endpoints[p] = x;
      }, policy);
    };
    report("em_paths 20000x200",
           time_best_of(5, [&] { run(ExecPolicy::Serial); }),
           time_best_of(5, [&] { run(ExecPolicy::OpenMP); }));
  }

  {  // full net step, Mlp
    Mlp net({256, 128, 128, 256});
    Rng irng(5);
    net.init(irng);
    const std::size_t B = 256;
    Mlp::Workspace ws = net.make_workspace(B);
    std::vector<double> x(B * 256), y(B * 256), dy(B * 256), grads(net.param_count());
    fill(x, rng);
    fill(dy, rng);
    auto run = [&](ExecPolicy policy) {
      net.forward(x.data(), B, ws, y.data(), policy);
      net.backward(ws, dy.data(), grads.data(), nullptr, policy);
    };
    report("mlp fwd+bwd 256x[256,128,128,256]",
           time_best_of(5, [&] { run(ExecPolicy::Serial); }),
           time_best_of(5, [&] { run(ExecPolicy::OpenMP); }));
  }

  return 0;
}
