#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "dynomap/common.hpp"

namespace dynomap {

// Deterministic polynomial expf (Cephes-style range reduction), accurate to
// a few float ulps and auto-vectorizable. The double path keeps libm exp:
// verification suites compare against references at 1e-12.
inline float fast_exp(float x) {
    x = std::min(88.0f, std::max(-87.0f, x));
    const float log2e = 1.44269504088896341f;
    const float c1 = 0.693359375f, c2 = -2.12194440e-4f;
    float n = std::floor(x * log2e + 0.5f);
    float r = x - n * c1;
    r = r - n * c2;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    int32_t bits;
    const float scale_src = n;
    bits = (int32_t)scale_src;
    bits = (bits + 127) << 23;
    float scale;
    std::memcpy(&scale, &bits, 4);
    return p * scale;
}

inline double fast_exp(double x) { return std::exp(x); }

// Differentiable rendering of a gated feature vector onto a P x P grid:
//
//   I(u,v) = sum_i gated_i * exp(-||(u,v) - c_i||^2 / (2 sigma_i^2))
//   sigma_i = 0.5 + 4.5 * tanh(|gated_i|)
//
// The grid spans the coordinate bounding box plus padding and is treated as
// a constant: no gradient flows through grid placement. The production
// kernels exploit that the 2D Gaussian factors into per-axis terms; the
// reference implementation evaluates the joint exponential directly.

struct GridSpec {
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    int p = 0;
    std::vector<double> xs, ys; // pixel centers, endpoints at the box edges

    double pixel_x(int col) const { return xs[col]; }
    double pixel_y(int row) const { return ys[row]; }
};

template <class R>
inline R kernel_width(R gated) {
    return R(0.5) + R(4.5) * std::tanh(std::abs(gated));
}

template <class R>
inline R kernel_width_derivative(R gated) {
    if (gated == R(0)) return R(0); // subgradient at the |.| kink
    const R t = std::tanh(std::abs(gated));
    const R d = R(4.5) * (R(1) - t * t);
    return gated > R(0) ? d : -d;
}

template <class R>
GridSpec make_grid(const R* coords, int g, double padding, int p) {
    if (g < 1) throw InputError("make_grid: G must be at least 1");
    if (p < 1) throw InputError("make_grid: P must be at least 1");
    double x_lo = (double)coords[0], x_hi = (double)coords[0];
    double y_lo = (double)coords[1], y_hi = (double)coords[1];
    for (int i = 1; i < g; ++i) {
        x_lo = std::min(x_lo, (double)coords[2 * i]);
        x_hi = std::max(x_hi, (double)coords[2 * i]);
        y_lo = std::min(y_lo, (double)coords[2 * i + 1]);
        y_hi = std::max(y_hi, (double)coords[2 * i + 1]);
    }
    GridSpec grid;
    grid.p = p;
    grid.x_min = x_lo - padding;
    grid.x_max = x_hi + padding;
    grid.y_min = y_lo - padding;
    grid.y_max = y_hi + padding;
    if (grid.x_max - grid.x_min < 1e-12) {
        grid.x_min -= 0.5;
        grid.x_max += 0.5;
    }
    if (grid.y_max - grid.y_min < 1e-12) {
        grid.y_min -= 0.5;
        grid.y_max += 0.5;
    }
    grid.xs.resize(p);
    grid.ys.resize(p);
    if (p == 1) {
        grid.xs[0] = 0.5 * (grid.x_min + grid.x_max);
        grid.ys[0] = 0.5 * (grid.y_min + grid.y_max);
    } else {
        const double sx = (grid.x_max - grid.x_min) / (p - 1);
        const double sy = (grid.y_max - grid.y_min) / (p - 1);
        for (int k = 0; k < p; ++k) {
            grid.xs[k] = grid.x_min + k * sx;
            grid.ys[k] = grid.y_min + k * sy;
        }
    }
    return grid;
}

// Cached per-feature axis factors, reused by the VJP. cutoff_sigmas <= 0
// disables truncation (the default: exact gradients).
template <class R>
struct RenderWorkspace {
    int g = 0, p = 0;
    std::vector<R> ex, ey;       // g*p each: exp(-dx^2 / 2 sigma^2) per axis
    std::vector<R> wey_t;        // p*g: gated[i] * ey[i][r], transposed for the row loop
    std::vector<R> xs_r, ys_r;   // pixel centers in the working scalar
    std::vector<R> sigma;        // g
    std::vector<int> col_lo, col_hi, row_lo, row_hi; // active pixel ranges per feature
    std::vector<R> image;        // p*p, pre-standardization

    void resize(int g_, int p_) {
        g = g_;
        p = p_;
        ex.resize((size_t)g * p);
        ey.resize((size_t)g * p);
        wey_t.resize((size_t)p * g);
        xs_r.resize(p);
        ys_r.resize(p);
        sigma.resize(g);
        col_lo.resize(g);
        col_hi.resize(g);
        row_lo.resize(g);
        row_hi.resize(g);
        image.assign((size_t)p * p, R(0));
    }
};

template <class R>
void render(const R* gated, const R* coords, int g, const GridSpec& grid, RenderWorkspace<R>& ws,
            double cutoff_sigmas = 0.0) {
    const int p = grid.p;
    ws.resize(g, p);
    for (int k = 0; k < p; ++k) {
        ws.xs_r[k] = (R)grid.xs[k];
        ws.ys_r[k] = (R)grid.ys[k];
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < g; ++i) {
        const R s = kernel_width(gated[i]);
        ws.sigma[i] = s;
        const R inv2s2 = R(1) / (R(2) * s * s);
        const R cx = coords[2 * i];
        const R cy = coords[2 * i + 1];
        int clo = 0, chi = p - 1, rlo = 0, rhi = p - 1;
        if (cutoff_sigmas > 0.0) {
            const double reach = cutoff_sigmas * (double)s;
            const auto clamp_range = [&](const std::vector<double>& axis, double c, int& lo,
                                         int& hi) {
                lo = (int)(std::lower_bound(axis.begin(), axis.end(), c - reach) - axis.begin());
                hi = (int)(std::upper_bound(axis.begin(), axis.end(), c + reach) - axis.begin()) - 1;
            };
            clamp_range(grid.xs, (double)cx, clo, chi);
            clamp_range(grid.ys, (double)cy, rlo, rhi);
        }
        ws.col_lo[i] = clo;
        ws.col_hi[i] = chi;
        ws.row_lo[i] = rlo;
        ws.row_hi[i] = rhi;
        R* __restrict exrow = ws.ex.data() + (size_t)i * p;
        R* __restrict eyrow = ws.ey.data() + (size_t)i * p;
        const R* __restrict xs = ws.xs_r.data();
        const R* __restrict ys = ws.ys_r.data();
        for (int k = 0; k < p; ++k) {
            const R dx = xs[k] - cx;
            const R dy = ys[k] - cy;
            exrow[k] = fast_exp(-dx * dx * inv2s2);
            eyrow[k] = fast_exp(-dy * dy * inv2s2);
        }
        if (cutoff_sigmas > 0.0) {
            for (int k = 0; k < p; ++k) {
                if (k < clo || k > chi) exrow[k] = R(0);
                if (k < rlo || k > rhi) eyrow[k] = R(0);
            }
        }
    }

#pragma omp parallel for schedule(static)
    for (int r = 0; r < p; ++r) {
        R* __restrict wt = ws.wey_t.data() + (size_t)r * g;
        for (int i = 0; i < g; ++i) wt[i] = gated[i] * ws.ey[(size_t)i * p + r];
    }

    // rank-1 accumulation blocked over features so the block's ex rows stay
    // cache-resident across the image rows a thread owns
    constexpr int kBlock = 128;
#pragma omp parallel
    {
        for (int ib = 0; ib < g; ib += kBlock) {
            const int ie = std::min(g, ib + kBlock);
#pragma omp for schedule(static)
            for (int r = 0; r < p; ++r) {
                R* __restrict out = ws.image.data() + (size_t)r * p;
                const R* __restrict wt = ws.wey_t.data() + (size_t)r * g;
                for (int i = ib; i < ie; ++i) {
                    const R coef = wt[i];
                    if (coef == R(0)) continue;
                    const R* __restrict exrow = ws.ex.data() + (size_t)i * p;
                    const int lo = ws.col_lo[i], hi = ws.col_hi[i];
                    for (int c = lo; c <= hi; ++c) out[c] += coef * exrow[c];
                }
            }
        }
    }
}

// Naive joint-exponential renderer, kept as the test/bench reference.
template <class R>
std::vector<R> render_reference(const R* gated, const R* coords, int g, const GridSpec& grid) {
    const int p = grid.p;
    std::vector<R> image((size_t)p * p, R(0));
    for (int i = 0; i < g; ++i) {
        const double s = (double)kernel_width(gated[i]);
        const double inv2s2 = 1.0 / (2.0 * s * s);
        const double cx = (double)coords[2 * i];
        const double cy = (double)coords[2 * i + 1];
        for (int r = 0; r < p; ++r) {
            for (int c = 0; c < p; ++c) {
                const double dx = grid.xs[c] - cx;
                const double dy = grid.ys[r] - cy;
                image[(size_t)r * p + c] +=
                    (R)((double)gated[i] * std::exp(-(dx * dx + dy * dy) * inv2s2));
            }
        }
    }
    return image;
}

// Per-sample standardization statistics; accumulation in double.
//
// The divisor carries a soft floor,
//   s_eff = sqrt(var + f0^2 * exp(-var / f0^2)),  f0 = 0.05,
// so near-empty images scale down smoothly instead of being zeroed and the
// whole pipeline stays smooth at the zero input (attribution paths start
// there). For any normally rendered image (std >~ 4*f0) the correction is
// below 1e-6 relative, so the standardized std-equals-1 contract holds.
// A strictly constant image maps to all zeros.
struct ImageStats {
    double mean = 0.0;
    double std = 0.0;           // raw population std
    double effective_std = 0.0; // soft-floored divisor
    double var_gain = 1.0;      // d(s_eff^2)/d(var), used by the backward pass
    bool clamped = false;       // raw std below the floor scale
};

inline constexpr double kImageStdFloor = 0.05;

template <class R>
ImageStats standardize_image(R* image, int p) {
    const size_t n = (size_t)p * p;
    double mean = 0.0;
    R lo = image[0], hi = image[0];
    for (size_t k = 0; k < n; ++k) {
        mean += (double)image[k];
        lo = std::min(lo, image[k]);
        hi = std::max(hi, image[k]);
    }
    mean /= (double)n;
    double acc = 0.0;
    for (size_t k = 0; k < n; ++k) {
        const double d = (double)image[k] - mean;
        acc += d * d;
    }
    const double var = acc / (double)n;
    ImageStats st;
    st.mean = mean;
    st.std = std::sqrt(var);
    const double f2 = kImageStdFloor * kImageStdFloor;
    const double damp = std::exp(-var / f2);
    st.effective_std = std::sqrt(var + f2 * damp);
    st.var_gain = 1.0 - damp;
    st.clamped = st.std < kImageStdFloor;
    if (lo == hi) {
        // exactly constant image: all zeros, mean free of accumulation noise
        st.mean = (double)lo;
        st.std = 0.0;
        std::fill(image, image + n, R(0));
        return st;
    }
    const R inv = (R)(1.0 / st.effective_std);
    const R mu = (R)mean;
    for (size_t k = 0; k < n; ++k) image[k] = (image[k] - mu) * inv;
    return st;
}

// Backward through per-sample standardization. `standardized` is the output
// of the forward pass; accumulates into d_raw. With y = (x - mu)/s_eff and
// q' = d(s_eff^2)/d(var):
//   dL/dx_i = (u_i - mean(u) - q' * y_i * mean(u . y)) / s_eff
template <class R>
void standardize_image_backward(const R* upstream, const R* standardized, const ImageStats& st,
                                int p, R* d_raw) {
    const size_t n = (size_t)p * p;
    double u_mean = 0.0, uy_mean = 0.0;
    for (size_t k = 0; k < n; ++k) {
        u_mean += (double)upstream[k];
        uy_mean += (double)upstream[k] * (double)standardized[k];
    }
    u_mean /= (double)n;
    uy_mean /= (double)n;
    const double inv_std = 1.0 / st.effective_std;
    const double gain = st.var_gain * uy_mean;
    for (size_t k = 0; k < n; ++k)
        d_raw[k] += (R)(inv_std *
                        ((double)upstream[k] - u_mean - (double)standardized[k] * gain));
}

// Reverse-mode accumulation for the renderer. Consumes the cached axis
// factors from the forward pass. The sigma chain through tanh(|gated|) is
// included in d_gated; d_coords can be skipped once the layout is frozen.
// Row partials accumulate in the working scalar; cross-row sums in double.
template <class R>
void render_vjp(const R* upstream, const R* gated, const R* coords, const GridSpec& grid,
                const RenderWorkspace<R>& ws, R* d_gated, R* d_coords,
                bool want_coord_grads = true) {
    const int p = grid.p;
    constexpr int kMaxP = 512;
    if (p > kMaxP) throw InputError("render_vjp: P exceeds the supported maximum");

#pragma omp parallel
    {
        R dxv[kMaxP];
#pragma omp for schedule(static)
        for (int i = 0; i < ws.g; ++i) {
            const double s = (double)ws.sigma[i];
            const R cx = coords[2 * i];
            const R cy = coords[2 * i + 1];
            const R* __restrict exrow = ws.ex.data() + (size_t)i * p;
            const R* __restrict eyrow = ws.ey.data() + (size_t)i * p;
            const int clo = ws.col_lo[i], chi = ws.col_hi[i];
            const int rlo = ws.row_lo[i], rhi = ws.row_hi[i];
            for (int c = clo; c <= chi; ++c) dxv[c] = ws.xs_r[c] - cx;

            // lane-split accumulators: independent partial sums vectorize and
            // keep a fixed summation order regardless of thread count
            constexpr int kLanes = sizeof(R) == 4 ? 16 : 8;
            const int span = chi - clo + 1;
            const int vec_end = clo + (span / kLanes) * kLanes;

            double s00 = 0.0, s10 = 0.0, s01 = 0.0, srr = 0.0;
            if (want_coord_grads) {
                for (int r = rlo; r <= rhi; ++r) {
                    const R* __restrict urow = upstream + (size_t)r * p;
                    R l0[kLanes] = {}, l1[kLanes] = {}, l2[kLanes] = {};
                    for (int c = clo; c < vec_end; c += kLanes) {
                        for (int k = 0; k < kLanes; ++k) {
                            const R w = urow[c + k] * exrow[c + k];
                            const R wd = w * dxv[c + k];
                            l0[k] += w;
                            l1[k] += wd;
                            l2[k] += wd * dxv[c + k];
                        }
                    }
                    for (int c = vec_end; c <= chi; ++c) {
                        const R w = urow[c] * exrow[c];
                        const R wd = w * dxv[c];
                        l0[0] += w;
                        l1[0] += wd;
                        l2[0] += wd * dxv[c];
                    }
                    R a0 = R(0), a1 = R(0), a2 = R(0);
                    for (int k = 0; k < kLanes; ++k) {
                        a0 += l0[k];
                        a1 += l1[k];
                        a2 += l2[k];
                    }
                    const double ey = (double)eyrow[r];
                    const double dy = (double)(ws.ys_r[r] - cy);
                    s00 += ey * (double)a0;
                    s10 += ey * (double)a1;
                    s01 += ey * dy * (double)a0;
                    srr += ey * ((double)a2 + dy * dy * (double)a0);
                }
            } else {
                for (int r = rlo; r <= rhi; ++r) {
                    const R* __restrict urow = upstream + (size_t)r * p;
                    R l0[kLanes] = {}, l2[kLanes] = {};
                    for (int c = clo; c < vec_end; c += kLanes) {
                        for (int k = 0; k < kLanes; ++k) {
                            const R w = urow[c + k] * exrow[c + k];
                            l0[k] += w;
                            l2[k] += w * dxv[c + k] * dxv[c + k];
                        }
                    }
                    for (int c = vec_end; c <= chi; ++c) {
                        const R w = urow[c] * exrow[c];
                        l0[0] += w;
                        l2[0] += w * dxv[c] * dxv[c];
                    }
                    R a0 = R(0), a2 = R(0);
                    for (int k = 0; k < kLanes; ++k) {
                        a0 += l0[k];
                        a2 += l2[k];
                    }
                    const double ey = (double)eyrow[r];
                    const double dy = (double)(ws.ys_r[r] - cy);
                    s00 += ey * (double)a0;
                    srr += ey * ((double)a2 + dy * dy * (double)a0);
                }
            }

            const double xt = (double)gated[i];
            const double dsig = (double)kernel_width_derivative(gated[i]);
            // d/d gated: direct kernel term plus the sigma chain
            //   dk/dsigma = k * r^2 / sigma^3, dsigma/dgated = dsig.
            d_gated[i] += (R)(s00 + xt * srr / (s * s * s) * dsig);
            if (want_coord_grads) {
                const double inv_s2 = 1.0 / (s * s);
                d_coords[2 * i] += (R)(xt * s10 * inv_s2);
                d_coords[2 * i + 1] += (R)(xt * s01 * inv_s2);
            }
        }
    }
}

} // namespace dynomap
