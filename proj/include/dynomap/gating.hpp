#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dynomap/common.hpp"

namespace dynomap {

// Adaptive per-feature reweighting ahead of rendering:
//   z = W x + b,  g = sigmoid(z),  x_gated = x * g
// with g strictly inside (0,1), so |x_gated_i| <= |x_i| always.
//
// W is G x G row-major; a diagonal variant (W stored as a length-G vector)
// is available for memory-constrained runs.

template <class R>
struct GateWorkspace {
    std::vector<R> z, g, gated;
    void resize(int n) {
        z.resize(n);
        g.resize(n);
        gated.resize(n);
    }
};

template <class R>
inline R sigmoid(R x) {
    return R(1) / (R(1) + std::exp(-x));
}

template <class R>
void gate_forward(const R* x, const R* w, const R* b, int g_dim, bool diagonal,
                  GateWorkspace<R>& ws) {
    ws.resize(g_dim);
    if (diagonal) {
        for (int i = 0; i < g_dim; ++i) ws.z[i] = w[i] * x[i] + b[i];
    } else {
        constexpr int kLanes = sizeof(R) == 4 ? 16 : 8;
        const int vec_end = (g_dim / kLanes) * kLanes;
#pragma omp parallel for schedule(static)
        for (int i = 0; i < g_dim; ++i) {
            const R* __restrict row = w + (size_t)i * g_dim;
            R lanes[kLanes] = {};
            for (int j = 0; j < vec_end; j += kLanes)
                for (int k = 0; k < kLanes; ++k) lanes[k] += row[j + k] * x[j + k];
            R acc = b[i];
            for (int j = vec_end; j < g_dim; ++j) acc += row[j] * x[j];
            for (int k = 0; k < kLanes; ++k) acc += lanes[k];
            ws.z[i] = acc;
        }
    }
    for (int i = 0; i < g_dim; ++i) {
        ws.g[i] = sigmoid(ws.z[i]);
        ws.gated[i] = x[i] * ws.g[i];
    }
}

// Accumulates dW, db and (optionally) dx from the upstream gradient on the
// gated vector. dz is scratch of length G.
template <class R>
void gate_backward(const R* x, const R* w, int g_dim, bool diagonal, const GateWorkspace<R>& ws,
                   const R* d_gated, R* dw, R* db, R* dx, R* dz) {
    for (int i = 0; i < g_dim; ++i) {
        const R s = ws.g[i];
        dz[i] = d_gated[i] * x[i] * s * (R(1) - s);
    }
    if (diagonal) {
        for (int i = 0; i < g_dim; ++i) {
            dw[i] += dz[i] * x[i];
            db[i] += dz[i];
        }
        if (dx)
            for (int i = 0; i < g_dim; ++i) dx[i] += d_gated[i] * ws.g[i] + w[i] * dz[i];
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < g_dim; ++i) {
        R* dwrow = dw + (size_t)i * g_dim;
        const R dzi = dz[i];
        for (int j = 0; j < g_dim; ++j) dwrow[j] += dzi * x[j];
        db[i] += dzi;
    }
    if (dx) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < g_dim; ++j) {
            R acc = d_gated[j] * ws.g[j];
            for (int i = 0; i < g_dim; ++i) acc += w[(size_t)i * g_dim + j] * dz[i];
            dx[j] += acc;
        }
    }
}

// Plain-loop reference, kept for kernel tests and the benchmark.
template <class R>
void gate_forward_reference(const R* x, const R* w, const R* b, int g_dim, bool diagonal,
                            GateWorkspace<R>& ws) {
    ws.resize(g_dim);
    for (int i = 0; i < g_dim; ++i) {
        R acc = b[i];
        if (diagonal) {
            acc += w[i] * x[i];
        } else {
            for (int j = 0; j < g_dim; ++j) acc += w[(size_t)i * g_dim + j] * x[j];
        }
        ws.z[i] = acc;
        ws.g[i] = sigmoid(acc);
        ws.gated[i] = x[i] * ws.g[i];
    }
}

} // namespace dynomap
