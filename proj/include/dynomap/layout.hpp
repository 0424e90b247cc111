#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dynomap/common.hpp"
#include "dynomap/rng.hpp"

namespace dynomap {

// Learnable 2D feature coordinates and the machinery that keeps them usable:
// three regularizers (centering, spread toward unit dispersion, pairwise
// repulsion) and the velocity-based freeze protocol.
//
// Coordinates are stored row-major G x 2. Loss values and intermediates are
// computed in double regardless of the training scalar: the regularizer
// contracts are tighter than float resolution.

inline constexpr double kCenterWeight = 0.01;
inline constexpr double kSpreadWeight = 0.01;
inline constexpr double kRepelWeight = 0.05;
inline constexpr double kDefaultRepelEps = 1e-4;

// Freeze bookkeeping. `frozen` latches: once set, coordinates must never
// change again (the optimizer skips the frozen parameter).
struct LayoutState {
    bool frozen = false;
    int below_threshold_streak = 0;
    double velocity_threshold = 0.002;
    int patience = 15;
    int frozen_epoch = -1; // epoch index at which freezing happened, -1 if never
};

// Streak update after one epoch with mean displacement v. Strict inequality:
// v exactly at the threshold resets the streak.
inline void stabilization_update(LayoutState& state, double v, int epoch) {
    if (state.frozen) return;
    if (v < state.velocity_threshold) {
        state.below_threshold_streak += 1;
        if (state.below_threshold_streak >= state.patience) {
            state.frozen = true;
            state.frozen_epoch = epoch;
        }
    } else {
        state.below_threshold_streak = 0;
    }
}

// I.i.d. uniform on [-1,1]^2, deterministic per seed.
template <class R>
std::vector<R> init_coords(int g, uint64_t seed) {
    if (g < 1) throw InputError("init_coords: G must be at least 1");
    Rng rng(substream(seed, stream_tag::coords));
    std::vector<R> c((size_t)g * 2);
    for (auto& v : c) v = (R)rng.uniform(-1.0, 1.0);
    return c;
}

// ||mean coordinate||^2.
template <class R>
double center_loss(const R* coords, int g) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < g; ++i) {
        mx += (double)coords[2 * i];
        my += (double)coords[2 * i + 1];
    }
    mx /= g;
    my /= g;
    return mx * mx + my * my;
}

template <class R>
void center_loss_grad(const R* coords, int g, double weight, R* grad) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < g; ++i) {
        mx += (double)coords[2 * i];
        my += (double)coords[2 * i + 1];
    }
    mx /= g;
    my /= g;
    const double gx = weight * 2.0 * mx / g;
    const double gy = weight * 2.0 * my / g;
    for (int i = 0; i < g; ++i) {
        grad[2 * i] += (R)gx;
        grad[2 * i + 1] += (R)gy;
    }
}

// Pooled population std of the 2G centroid-centered coordinate entries:
//   s = sqrt( (1/2G) * sum_i ||c_i - mean||^2 ),  loss = (s - 1)^2.
template <class R>
double spread_loss(const R* coords, int g) {
    if (g < 2) throw InputError("spread_loss: G must be at least 2");
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < g; ++i) {
        mx += (double)coords[2 * i];
        my += (double)coords[2 * i + 1];
    }
    mx /= g;
    my /= g;
    double acc = 0.0;
    for (int i = 0; i < g; ++i) {
        const double dx = (double)coords[2 * i] - mx;
        const double dy = (double)coords[2 * i + 1] - my;
        acc += dx * dx + dy * dy;
    }
    const double s = std::sqrt(acc / (2.0 * g));
    return (s - 1.0) * (s - 1.0);
}

template <class R>
void spread_loss_grad(const R* coords, int g, double weight, R* grad) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < g; ++i) {
        mx += (double)coords[2 * i];
        my += (double)coords[2 * i + 1];
    }
    mx /= g;
    my /= g;
    double acc = 0.0;
    for (int i = 0; i < g; ++i) {
        const double dx = (double)coords[2 * i] - mx;
        const double dy = (double)coords[2 * i + 1] - my;
        acc += dx * dx + dy * dy;
    }
    const double s = std::sqrt(acc / (2.0 * g));
    if (s < 1e-12) return; // collapsed layout: std gradient undefined, repulsion takes over
    // dL/dc_i = 2(s-1) * (c_i - mean) / (2G * s); the mean terms cancel.
    const double f = weight * 2.0 * (s - 1.0) / (2.0 * g * s);
    for (int i = 0; i < g; ++i) {
        grad[2 * i] += (R)(f * ((double)coords[2 * i] - mx));
        grad[2 * i + 1] += (R)(f * ((double)coords[2 * i + 1] - my));
    }
}

// Mean over unordered distinct pairs of 1 / (||c_i - c_j||^2 + eps). Exact
// when G <= pair_budget; otherwise an unbiased estimate from
// pair_budget * G uniformly sampled pairs (fresh stream per call site).
template <class R>
double repel_loss(const R* coords, int g, double eps, int pair_budget = 2048,
                  uint64_t sample_seed = 0) {
    if (g < 2) throw InputError("repel_loss: G must be at least 2");
    if (g <= pair_budget) {
        // Row partials summed serially keep the result thread-count invariant.
        std::vector<double> row(g, 0.0);
#pragma omp parallel for schedule(dynamic, 16)
        for (int i = 0; i < g - 1; ++i) {
            const double xi = (double)coords[2 * i], yi = (double)coords[2 * i + 1];
            double acc = 0.0;
            for (int j = i + 1; j < g; ++j) {
                const double dx = xi - (double)coords[2 * j];
                const double dy = yi - (double)coords[2 * j + 1];
                acc += 1.0 / (dx * dx + dy * dy + eps);
            }
            row[i] = acc;
        }
        double total = 0.0;
        for (int i = 0; i < g - 1; ++i) total += row[i];
        return total / ((double)g * (g - 1) / 2.0);
    }
    const size_t n_pairs = (size_t)pair_budget * (size_t)g;
    Rng rng(sample_seed);
    double total = 0.0;
    for (size_t p = 0; p < n_pairs; ++p) {
        const int i = (int)rng.uniform_index((uint64_t)g);
        int j = (int)rng.uniform_index((uint64_t)(g - 1));
        if (j >= i) ++j;
        const double dx = (double)coords[2 * i] - (double)coords[2 * j];
        const double dy = (double)coords[2 * i + 1] - (double)coords[2 * j + 1];
        total += 1.0 / (dx * dx + dy * dy + eps);
    }
    return total / (double)n_pairs;
}

template <class R>
void repel_loss_grad(const R* coords, int g, double eps, double weight, R* grad,
                     int pair_budget = 2048, uint64_t sample_seed = 0) {
    if (g < 2) throw InputError("repel_loss_grad: G must be at least 2");
    if (g <= pair_budget) {
        const double scale = weight / ((double)g * (g - 1) / 2.0);
        // Per-i accumulation over all partners keeps writes private to i.
#pragma omp parallel for schedule(dynamic, 16)
        for (int i = 0; i < g; ++i) {
            const double xi = (double)coords[2 * i], yi = (double)coords[2 * i + 1];
            double gx = 0.0, gy = 0.0;
            for (int j = 0; j < g; ++j) {
                if (j == i) continue;
                const double dx = xi - (double)coords[2 * j];
                const double dy = yi - (double)coords[2 * j + 1];
                const double d = dx * dx + dy * dy + eps;
                const double f = -2.0 / (d * d);
                gx += f * dx;
                gy += f * dy;
            }
            grad[2 * i] += (R)(scale * gx);
            grad[2 * i + 1] += (R)(scale * gy);
        }
        return;
    }
    // Sampled estimator: gradient of the sampled mean (same pair stream as the
    // matching repel_loss call).
    const size_t n_pairs = (size_t)pair_budget * (size_t)g;
    Rng rng(sample_seed);
    std::vector<double> acc((size_t)g * 2, 0.0);
    const double scale = weight / (double)n_pairs;
    for (size_t p = 0; p < n_pairs; ++p) {
        const int i = (int)rng.uniform_index((uint64_t)g);
        int j = (int)rng.uniform_index((uint64_t)(g - 1));
        if (j >= i) ++j;
        const double dx = (double)coords[2 * i] - (double)coords[2 * j];
        const double dy = (double)coords[2 * i + 1] - (double)coords[2 * j + 1];
        const double d = dx * dx + dy * dy + eps;
        const double f = -2.0 / (d * d);
        acc[2 * i] += f * dx;
        acc[2 * i + 1] += f * dy;
        acc[2 * j] -= f * dx;
        acc[2 * j + 1] -= f * dy;
    }
    for (int i = 0; i < 2 * g; ++i) grad[i] += (R)(scale * acc[i]);
}

// 0.01 * center + 0.01 * spread + 0.05 * repel.
template <class R>
double layout_total_loss(const R* coords, int g, double eps, int pair_budget = 2048,
                         uint64_t sample_seed = 0) {
    return kCenterWeight * center_loss(coords, g) + kSpreadWeight * spread_loss(coords, g) +
           kRepelWeight * repel_loss(coords, g, eps, pair_budget, sample_seed);
}

template <class R>
void layout_total_loss_grad(const R* coords, int g, double eps, R* grad, int pair_budget = 2048,
                            uint64_t sample_seed = 0) {
    center_loss_grad(coords, g, kCenterWeight, grad);
    spread_loss_grad(coords, g, kSpreadWeight, grad);
    repel_loss_grad(coords, g, eps, kRepelWeight, grad, pair_budget, sample_seed);
}

// Mean per-feature displacement between two layouts.
template <class R>
double velocity(const R* coords_now, const R* coords_prev, int g) {
    double acc = 0.0;
    for (int i = 0; i < g; ++i) {
        const double dx = (double)coords_now[2 * i] - (double)coords_prev[2 * i];
        const double dy = (double)coords_now[2 * i + 1] - (double)coords_prev[2 * i + 1];
        acc += std::sqrt(dx * dx + dy * dy);
    }
    return acc / g;
}

} // namespace dynomap
