// Kernel benchmark: OpenMP production kernels against the serial reference
// implementations kept for testing. Reports median wall time and speedup.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "dynomap/classifier.hpp"
#include "dynomap/gating.hpp"
#include "dynomap/layout.hpp"
#include "dynomap/renderer.hpp"
#include "dynomap/rng.hpp"

using namespace dynomap;
using Real = float;

namespace {

double median_ms(const std::function<void()>& fn, int reps) {
    std::vector<double> times;
    fn(); // warm up
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

void report(const std::string& name, double serial_ms, double parallel_ms) {
    std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx\n", name.c_str(),
                serial_ms, parallel_ms, serial_ms / parallel_ms);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynomap kernel benchmark (serial reference vs OpenMP)"};
    int g = 754, p = 64, reps = 5;
    app.add_option("--features", g, "feature count G");
    app.add_option("--pixels", p, "image resolution P");
    app.add_option("--reps", reps, "repetitions per kernel");
    CLI11_PARSE(app, argc, argv);

    std::printf("G=%d P=%d threads=%d reps=%d\n\n", g, p, omp_get_max_threads(), reps);

    Rng rng(42);
    std::vector<Real> gated(g), coords((size_t)g * 2);
    for (auto& v : gated) v = (Real)rng.normal();
    for (auto& v : coords) v = (Real)rng.uniform(-1, 1);
    const GridSpec grid = make_grid(coords.data(), g, 1.0, p);

    // renderer forward
    RenderWorkspace<Real> ws;
    {
        const double s = median_ms(
            [&] { volatile auto img = render_reference(gated.data(), coords.data(), g, grid); },
            reps);
        const double par = median_ms(
            [&] { render(gated.data(), coords.data(), g, grid, ws); }, reps);
        report("render forward", s, par);
    }

    // renderer backward
    {
        std::vector<Real> upstream((size_t)p * p), d_gated(g), d_coords((size_t)g * 2);
        for (auto& v : upstream) v = (Real)rng.normal();
        render(gated.data(), coords.data(), g, grid, ws);
        const double par = median_ms(
            [&] {
                std::fill(d_gated.begin(), d_gated.end(), Real(0));
                std::fill(d_coords.begin(), d_coords.end(), Real(0));
                render_vjp(upstream.data(), gated.data(), coords.data(), grid, ws,
                           d_gated.data(), d_coords.data());
            },
            reps);
        std::printf("%-28s %36s omp %9.3f ms\n", "render vjp", "", par);
    }

    // gating matvec
    {
        std::vector<Real> w((size_t)g * g), b(g);
        for (auto& v : w) v = (Real)rng.normal();
        for (auto& v : b) v = (Real)rng.normal();
        GateWorkspace<Real> gws, gws_ref;
        const double s = median_ms(
            [&] { gate_forward_reference(gated.data(), w.data(), b.data(), g, false, gws_ref); },
            reps);
        const double par = median_ms(
            [&] { gate_forward(gated.data(), w.data(), b.data(), g, false, gws); }, reps);
        report("gate forward (dense)", s, par);
    }

    // conv block at P x P, 16 -> 32 channels
    {
        const int c_in = 16, c_out = 32;
        std::vector<Real> in((size_t)p * p * c_in), weights(conv_weight_count(c_in, c_out)),
            bias(c_out), out((size_t)p * p * c_out), ref(out.size());
        for (auto& v : in) v = (Real)rng.normal();
        for (auto& v : weights) v = (Real)rng.normal();
        const double s = median_ms(
            [&] {
                conv3x3_relu_forward_reference(in.data(), p, p, c_in, weights.data(),
                                               bias.data(), c_out, ref.data());
            },
            reps);
        const double par = median_ms(
            [&] {
                conv3x3_relu_forward(in.data(), p, p, c_in, weights.data(), bias.data(), c_out,
                                     out.data());
            },
            reps);
        report("conv3x3 16->32", s, par);
    }

    // pairwise repulsion
    {
        std::vector<double> cd(coords.begin(), coords.end());
        const double par = median_ms([&] { (void)repel_loss(cd.data(), g, 1e-4); },
                                     reps);
        std::printf("%-28s %36s omp %9.3f ms\n", "repel loss (all pairs)", "", par);
    }

    return 0;
}
