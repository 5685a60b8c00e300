// Benchmark of the OpenMP kernels against the serial reference
// implementations. Reports wall time per call and the speedup for the
// convolution shapes that dominate training.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "artinp/kernels.hpp"
#include "artinp/rng.hpp"
#include "artinp/tensor.hpp"

using namespace artinp;
namespace K = artinp::kernels;

namespace {

double time_call(const std::function<void()>& fn, int reps) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const std::string& name, double serial_ms, double parallel_ms) {
    std::printf("%-34s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(), serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-34s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    Rng rng = make_rng(1);

    // conv shapes taken from the nets: completion encoder / dilated block,
    // translation UNet encoder stage.
    const std::vector<std::pair<std::string, K::ConvGeom>> convs = {
        {"conv 3x3 s2 64ch 80x80", {32, 160, 160, 64, 3, 3, 2, 1, 1}},
        {"conv 3x3 d4 128ch 40x40", {128, 40, 40, 128, 3, 3, 1, 4, 4}},
        {"conv 4x4 s2 128ch 64x64", {64, 64, 64, 128, 4, 4, 2, 1, 1}},
    };

    for (const auto& [name, g] : convs) {
        Tensor x({g.in_c, g.in_h, g.in_w});
        Tensor w({g.out_c, g.in_c, g.kh, g.kw});
        Tensor b({g.out_c});
        Tensor y({g.out_c, g.out_h(), g.out_w()});
        fill_normal(x, rng);
        fill_normal(w, rng, 0.0, 0.05);

        const int reps = 3;
        const double ts = time_call(
            [&] { K::serial::conv2d_forward(x.data(), w.data(), b.data(), g, y.data()); }, reps);
        const double tp = time_call(
            [&] { K::conv2d_forward(x.data(), w.data(), b.data(), g, y.data()); }, reps);
        report(name + " fwd", ts, tp);

        Tensor dy({g.out_c, g.out_h(), g.out_w()});
        fill_normal(dy, rng);
        Tensor dx({g.in_c, g.in_h, g.in_w});
        const double ts2 = time_call(
            [&] { K::serial::conv2d_backward_input(dy.data(), w.data(), g, dx.data()); }, reps);
        const double tp2 = time_call(
            [&] { K::conv2d_backward_input(dy.data(), w.data(), g, dx.data()); }, reps);
        report(name + " bwd_in", ts2, tp2);
    }

    {
        const int m = 256, n = 4096, k = 1152;
        Tensor a({m, k}), b({k, n}), c({m, n});
        fill_normal(a, rng);
        fill_normal(b, rng);
        const double ts =
            time_call([&] { K::serial::gemm(m, n, k, a.data(), b.data(), c.data()); }, 2);
        const double tp = time_call([&] { K::gemm(m, n, k, a.data(), b.data(), c.data()); }, 2);
        report("gemm 256x4096x1152", ts, tp);
        const double gflops = 2.0 * m * n * k / (tp * 1e-3) / 1e9;
        std::printf("gemm throughput: %.2f GFLOP/s\n", gflops);
    }

    {
        const int h = 512, w = 512;
        Tensor f({h, w});
        fill_normal(f, rng);
        std::vector<uint8_t> region(size_t(h) * w, 1);
        Tensor y({h, w});
        const double ts = time_call(
            [&] { K::serial::laplacian_apply(f.data(), region.data(), h, w, y.data()); }, 20);
        const double tp =
            time_call([&] { K::laplacian_apply(f.data(), region.data(), h, w, y.data()); }, 20);
        report("laplacian 512x512", ts, tp);
    }

    return 0;
}
