#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dynomap/common.hpp"
#include "dynomap/rng.hpp"

namespace dynomap {

// Convolutional backbone over standardized rendered images plus the tabular
// skip head. Activations are laid out height x width x channels so the
// channel loops run over contiguous memory. Conv weights are stored
// [ky][kx][c_in][c_out]: forward, input-gradient and weight-gradient kernels
// all reduce over a contiguous fastest axis.

struct ConvBlockSpec {
    int filters = 0;
    bool pool = true; // 2x2 max pool after the conv
};

struct BackboneConfig {
    std::vector<ConvBlockSpec> blocks{{16, true}, {32, true}, {64, true}};

    int embedding_dim() const { return blocks.empty() ? 0 : blocks.back().filters; }
};

struct HeadConfig {
    double dropout = 0.5;
    int hidden = 64;
    int classes = 2;
};

inline size_t conv_weight_count(int c_in, int c_out) { return (size_t)9 * c_in * c_out; }

// out[y][x][co] = relu( b[co] + sum_{ky,kx,ci} w[ky][kx][ci][co] * in[y+ky-1][x+kx-1][ci] )
// Interior pixels take a branch-free path; borders fall back to tap checks.
template <class R>
void conv3x3_relu_forward(const R* in, int h, int w, int c_in, const R* weights, const R* bias,
                          int c_out, R* out) {
#pragma omp parallel
    {
        std::vector<R> acc_buf(c_out);
        R* __restrict acc = acc_buf.data();
#pragma omp for schedule(static)
        for (int y = 0; y < h; ++y) {
            const bool y_interior = (y > 0 && y < h - 1);
            for (int x = 0; x < w; ++x) {
                for (int co = 0; co < c_out; ++co) acc[co] = bias[co];
                if (y_interior && x > 0 && x < w - 1) {
                    const R* __restrict in_base = in + ((size_t)(y - 1) * w + (x - 1)) * c_in;
                    const R* __restrict w_tap = weights;
                    for (int ky = 0; ky < 3; ++ky) {
                        const R* in_px = in_base + (size_t)ky * w * c_in;
                        for (int kx = 0; kx < 3; ++kx) {
                            for (int ci = 0; ci < c_in; ++ci) {
                                const R v = in_px[ci];
                                const R* __restrict w_vec = w_tap + (size_t)ci * c_out;
                                for (int co = 0; co < c_out; ++co) acc[co] += v * w_vec[co];
                            }
                            in_px += c_in;
                            w_tap += (size_t)c_in * c_out;
                        }
                    }
                } else {
                    for (int ky = 0; ky < 3; ++ky) {
                        const int yy = y + ky - 1;
                        if (yy < 0 || yy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int xx = x + kx - 1;
                            if (xx < 0 || xx >= w) continue;
                            const R* in_px = in + ((size_t)yy * w + xx) * c_in;
                            const R* w_tap = weights + ((size_t)ky * 3 + kx) * c_in * c_out;
                            for (int ci = 0; ci < c_in; ++ci) {
                                const R v = in_px[ci];
                                const R* w_vec = w_tap + (size_t)ci * c_out;
                                for (int co = 0; co < c_out; ++co) acc[co] += v * w_vec[co];
                            }
                        }
                    }
                }
                R* out_px = out + ((size_t)y * w + x) * c_out;
                for (int co = 0; co < c_out; ++co) out_px[co] = acc[co] > R(0) ? acc[co] : R(0);
            }
        }
    }
}

// Transpose conv weights [ky][kx][ci][co] -> [ky][kx][co][ci] so the input
// gradient can run with a contiguous ci axis.
template <class R>
void conv3x3_transpose_weights(const R* weights, int c_in, int c_out, R* weights_t) {
    for (int tap = 0; tap < 9; ++tap) {
        const R* src = weights + (size_t)tap * c_in * c_out;
        R* dst = weights_t + (size_t)tap * c_in * c_out;
        for (int ci = 0; ci < c_in; ++ci)
            for (int co = 0; co < c_out; ++co) dst[(size_t)co * c_in + ci] = src[(size_t)ci * c_out + co];
    }
}

// Input gradient in gather form: every d_in row is owned by one iteration, so
// the result does not depend on thread count. d_pre is the post-ReLU-masked
// upstream gradient; weights_t is the [ky][kx][co][ci] transpose.
template <class R>
void conv3x3_input_grad(const R* d_pre, int h, int w, int c_out, const R* weights_t, int c_in,
                        R* d_in) {
#pragma omp parallel for schedule(static)
    for (int yy = 0; yy < h; ++yy) {
        const bool y_interior = (yy > 0 && yy < h - 1);
        for (int xx = 0; xx < w; ++xx) {
            R* __restrict din_px = d_in + ((size_t)yy * w + xx) * c_in;
            if (y_interior && xx > 0 && xx < w - 1) {
                const R* __restrict w_tap = weights_t;
                for (int ky = 0; ky < 3; ++ky) {
                    const R* dp_row = d_pre + ((size_t)(yy - ky + 1) * w + xx + 1) * c_out;
                    for (int kx = 0; kx < 3; ++kx) {
                        const R* __restrict dp_px = dp_row - (size_t)kx * c_out;
                        for (int co = 0; co < c_out; ++co) {
                            const R v = dp_px[co];
                            const R* __restrict w_vec = w_tap + (size_t)co * c_in;
                            for (int ci = 0; ci < c_in; ++ci) din_px[ci] += v * w_vec[ci];
                        }
                        w_tap += (size_t)c_in * c_out;
                    }
                }
            } else {
                for (int ky = 0; ky < 3; ++ky) {
                    const int y = yy - ky + 1;
                    if (y < 0 || y >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int x = xx - kx + 1;
                        if (x < 0 || x >= w) continue;
                        const R* dp_px = d_pre + ((size_t)y * w + x) * c_out;
                        const R* w_tap = weights_t + ((size_t)ky * 3 + kx) * c_in * c_out;
                        for (int co = 0; co < c_out; ++co) {
                            const R v = dp_px[co];
                            const R* w_vec = w_tap + (size_t)co * c_in;
                            for (int ci = 0; ci < c_in; ++ci) din_px[ci] += v * w_vec[ci];
                        }
                    }
                }
            }
        }
    }
}

// Weight/bias gradients; each (ky,kx,ci) weight row is owned by one
// iteration of the parallel loop.
template <class R>
void conv3x3_weight_grad(const R* in, const R* d_pre, int h, int w, int c_in, int c_out,
                         R* d_weights, R* d_bias) {
#pragma omp parallel for schedule(static) collapse(2)
    for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
            for (int ci = 0; ci < c_in; ++ci) {
                R* dw_vec = d_weights + (((size_t)ky * 3 + kx) * c_in + ci) * c_out;
                const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
                const int x0 = std::max(0, 1 - kx), x1 = std::min(w, w + 1 - kx);
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        const R v = in[((size_t)(y + ky - 1) * w + (x + kx - 1)) * c_in + ci];
                        const R* dp_px = d_pre + ((size_t)y * w + x) * c_out;
                        for (int co = 0; co < c_out; ++co) dw_vec[co] += v * dp_px[co];
                    }
                }
            }
        }
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const R* dp_px = d_pre + ((size_t)y * w + x) * c_out;
            for (int co = 0; co < c_out; ++co) d_bias[co] += dp_px[co];
        }
}

// 2x2 max pool, stride 2, floor on odd sizes. Ties route to the first
// maximum in scan order.
template <class R>
void maxpool2x2_forward(const R* in, int h, int w, int c, R* out, int* argmax) {
    const int ho = h / 2, wo = w / 2;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < ho; ++y) {
        for (int x = 0; x < wo; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                R best = in[((size_t)(2 * y) * w + 2 * x) * c + ch];
                int best_idx = (2 * y) * w + 2 * x;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = (2 * y + dy) * w + (2 * x + dx);
                        const R v = in[(size_t)idx * c + ch];
                        if (v > best) {
                            best = v;
                            best_idx = idx;
                        }
                    }
                out[((size_t)y * wo + x) * c + ch] = best;
                argmax[((size_t)y * wo + x) * c + ch] = best_idx;
            }
        }
    }
}

template <class R>
void maxpool2x2_backward(const R* d_out, int ho, int wo, int c, const int* argmax, R* d_in) {
    for (int k = 0; k < ho * wo; ++k)
        for (int ch = 0; ch < c; ++ch)
            d_in[(size_t)argmax[(size_t)k * c + ch] * c + ch] += d_out[(size_t)k * c + ch];
}

// Naive single-threaded conv kept for kernel tests and the benchmark.
template <class R>
void conv3x3_relu_forward_reference(const R* in, int h, int w, int c_in, const R* weights,
                                    const R* bias, int c_out, R* out) {
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int co = 0; co < c_out; ++co) {
                R acc = bias[co];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int yy = y + ky - 1, xx = x + kx - 1;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        for (int ci = 0; ci < c_in; ++ci)
                            acc += weights[(((size_t)ky * 3 + kx) * c_in + ci) * c_out + co] *
                                   in[((size_t)yy * w + xx) * c_in + ci];
                    }
                out[((size_t)y * w + x) * c_out + co] = acc > R(0) ? acc : R(0);
            }
}

// Smoothed cross-entropy with log-sum-exp stabilization. Returns the loss;
// d_logits (optional) receives softmax(logits) - q.
template <class R>
double ce_label_smoothing(const R* logits, int classes, int label, double smoothing,
                          R* d_logits = nullptr) {
    if (classes < 2) throw InputError("ce_label_smoothing: need at least 2 classes");
    if (label < 0 || label >= classes) throw InputError("ce_label_smoothing: label out of range");
    double mx = (double)logits[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, (double)logits[c]);
    if (!std::isfinite(mx)) throw NumericError("ce_label_smoothing: non-finite logits");
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp((double)logits[c] - mx);
    const double log_z = std::log(z) + mx;
    double loss = 0.0;
    for (int c = 0; c < classes; ++c) {
        const double q = smoothing / classes + (c == label ? 1.0 - smoothing : 0.0);
        const double log_p = (double)logits[c] - log_z;
        loss -= q * log_p;
        if (d_logits) d_logits[c] = (R)(std::exp(log_p) - q);
    }
    return loss;
}

} // namespace dynomap
