#include "dynomap/spatial_stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "dynomap/rng.hpp"

namespace dynomap {

KnnWeightMatrix knn_weights(const std::vector<double>& coords, int n, int k) {
    if (k < 1 || k >= n) throw InputError("knn_weights: need 1 <= k < N");
    for (int i = 0; i < 2 * n; ++i)
        if (!std::isfinite(coords[i])) throw NumericError("knn_weights: non-finite coordinate");

    KnnWeightMatrix w;
    w.n = n;
    w.k = k;
    w.neighbors.resize((size_t)n * k);

#pragma omp parallel
    {
        std::vector<std::pair<double, int>> cand(n - 1);
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            const double xi = coords[2 * i], yi = coords[2 * i + 1];
            int m = 0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double dx = xi - coords[2 * j];
                const double dy = yi - coords[2 * j + 1];
                cand[m++] = {dx * dx + dy * dy, j};
            }
            std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
            for (int j = 0; j < k; ++j) w.neighbors[(size_t)i * k + j] = cand[j].second;
        }
    }
    return w;
}

double morans_i(const std::vector<double>& a, const KnnWeightMatrix& w) {
    const int n = w.n;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += a[i];
    mean /= n;
    double denom = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a[i] - mean;
        denom += d * d;
    }
    if (denom == 0.0) throw DegenerateVariance("morans_i: constant attribution values");
    double num = 0.0;
    for (int i = 0; i < n; ++i) {
        const double di = a[i] - mean;
        for (int j = 0; j < w.k; ++j) num += di * (a[w.neighbor(i, j)] - mean);
    }
    const double s0 = (double)n * w.k; // every row has exactly k ones
    return ((double)n / s0) * (num / denom);
}

namespace {

NullSummary permutation_null(double observed, int n_perm, uint64_t seed,
                             const std::function<double(const std::vector<int>&)>& stat, int n) {
    if (n_perm < 1) throw InputError("permutation null: n_perm must be >= 1");
    NullSummary s;
    s.observed = observed;
    s.n_perm = n_perm;
    s.seed = seed;
    std::vector<double> null_vals(n_perm);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n_perm; ++p) {
        Rng rng(substream(seed, stream_tag::permute, (uint64_t)p));
        const auto perm = random_permutation(n, rng);
        null_vals[p] = stat(perm);
    }
    double mean = 0.0;
    long count_ge = 0;
    for (double v : null_vals) {
        mean += v;
        if (v >= observed) ++count_ge;
    }
    mean /= n_perm;
    double var = 0.0;
    for (double v : null_vals) {
        const double d = v - mean;
        var += d * d;
    }
    s.null_mean = mean;
    s.null_std = std::sqrt(var / n_perm);
    s.p_value = (1.0 + (double)count_ge) / (1.0 + (double)n_perm);
    s.null_values = std::move(null_vals);
    return s;
}

} // namespace

NullSummary morans_null(const std::vector<double>& a, const KnnWeightMatrix& w, int n_perm,
                        uint64_t seed) {
    const double observed = morans_i(a, w);
    const int n = w.n;
    return permutation_null(
        observed, n_perm, seed,
        [&](const std::vector<int>& perm) {
            std::vector<double> shuffled(n);
            for (int i = 0; i < n; ++i) shuffled[i] = a[perm[i]];
            return morans_i(shuffled, w);
        },
        n);
}

std::vector<uint8_t> top_q_indicator(const std::vector<double>& a, double q) {
    const int n = (int)a.size();
    if (q <= 0.0 || q >= 100.0) throw InputError("top_q_indicator: need 0 < q < 100");
    const int count = (int)std::ceil(q * n / 100.0);
    if (count < 1) throw InputError("top_q_indicator: empty high set");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        if (a[x] != a[y]) return a[x] > a[y];
        return x < y;
    });
    std::vector<uint8_t> z(n, 0);
    for (int i = 0; i < count; ++i) z[order[i]] = 1;
    return z;
}

namespace {

double coherence_of_labels(const std::vector<uint8_t>& z, const KnnWeightMatrix& w) {
    double total = 0.0;
    int high = 0;
    for (int i = 0; i < w.n; ++i) {
        if (!z[i]) continue;
        int same = 0;
        for (int j = 0; j < w.k; ++j) same += (z[w.neighbor(i, j)] == z[i]);
        total += (double)same / w.k;
        ++high;
    }
    if (high == 0) throw InputError("knn_coherence: empty high set");
    return total / high;
}

} // namespace

double knn_coherence(const std::vector<double>& coords, int n, const std::vector<double>& a,
                     int k, double q) {
    const auto w = knn_weights(coords, n, k);
    return coherence_of_labels(top_q_indicator(a, q), w);
}

NullSummary coherence_null(const std::vector<double>& coords, int n,
                           const std::vector<double>& a, int k, double q, int n_perm,
                           uint64_t seed) {
    const auto w = knn_weights(coords, n, k);
    const auto z = top_q_indicator(a, q);
    const double observed = coherence_of_labels(z, w);
    return permutation_null(
        observed, n_perm, seed,
        [&](const std::vector<int>& perm) {
            std::vector<uint8_t> shuffled(n);
            for (int i = 0; i < n; ++i) shuffled[i] = z[perm[i]];
            return coherence_of_labels(shuffled, w);
        },
        n);
}

namespace {

// Closed-form 2x2 SVD via the rotation-scaling decomposition. Returns
// sigma1 >= sigma2 >= 0 and the orthogonal factor R = U * V^T (the maximizer
// of trace(R^T M) over rotations and reflections).
struct Svd2 {
    double s1 = 0, s2 = 0;
    double r[2][2] = {{1, 0}, {0, 1}};
};

Svd2 svd2x2(const double m[2][2]) {
    const double e = 0.5 * (m[0][0] + m[1][1]);
    const double f = 0.5 * (m[0][0] - m[1][1]);
    const double g = 0.5 * (m[1][0] + m[0][1]);
    const double h = 0.5 * (m[1][0] - m[0][1]);
    const double q = std::sqrt(e * e + h * h);
    const double r = std::sqrt(f * f + g * g);
    Svd2 out;
    out.s1 = q + r;
    out.s2 = std::abs(q - r);
    const double a1 = std::atan2(g, f);
    const double a2 = std::atan2(h, e);
    const double theta = 0.5 * (a2 - a1); // V rotation angle
    const double phi = 0.5 * (a2 + a1);   // U rotation angle
    // U = R(phi), V = R(theta), M = U * diag(s1, s2 * sign(q - r)) * V^T.
    // The trace maximizer over O(2) absorbs the sign into R = U * S * V^T
    // with S = diag(1, sign(q - r)).
    const double cu = std::cos(phi), su = std::sin(phi);
    const double cv = std::cos(theta), sv = std::sin(theta);
    const double sgn = (q - r) >= 0.0 ? 1.0 : -1.0;
    // M = R(phi) diag(q+r, q-r) R(theta), so V^T = diag(1, sgn) R(theta) and
    // the maximizer is R = U diag(1, sgn) R(theta).
    const double u[2][2] = {{cu, -su}, {su, cu}};
    const double vt[2][2] = {{cv, -sv}, {sv, cv}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            out.r[i][j] = u[i][0] * vt[0][j] + u[i][1] * sgn * vt[1][j];
    return out;
}

} // namespace

ProcrustesResult procrustes_distance(const std::vector<double>& a, const std::vector<double>& b,
                                     int n) {
    if ((int)a.size() != 2 * n || (int)b.size() != 2 * n)
        throw InputError("procrustes_distance: shape mismatch");
    double ax = 0, ay = 0, bx = 0, by = 0;
    for (int i = 0; i < n; ++i) {
        ax += a[2 * i];
        ay += a[2 * i + 1];
        bx += b[2 * i];
        by += b[2 * i + 1];
    }
    ax /= n;
    ay /= n;
    bx /= n;
    by /= n;

    double na = 0, nb = 0;
    double m[2][2] = {{0, 0}, {0, 0}}; // M = Bc^T Ac
    for (int i = 0; i < n; ++i) {
        const double pax = a[2 * i] - ax, pay = a[2 * i + 1] - ay;
        const double pbx = b[2 * i] - bx, pby = b[2 * i + 1] - by;
        na += pax * pax + pay * pay;
        nb += pbx * pbx + pby * pby;
        m[0][0] += pbx * pax;
        m[0][1] += pbx * pay;
        m[1][0] += pby * pax;
        m[1][1] += pby * pay;
    }
    if (na <= 0.0 || nb <= 0.0)
        throw DegenerateVariance("procrustes_distance: all-coincident point set");

    const Svd2 svd = svd2x2(m);
    const double nuclear = svd.s1 + svd.s2;

    ProcrustesResult res;
    res.distance = std::max(0.0, 1.0 - (nuclear * nuclear) / (na * nb));
    res.scale = nuclear / nb;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) res.rotation[i][j] = svd.r[i][j];

    // aligned_b = s * Bc * R + mean(a); rows of Bc are points, so each point
    // maps as p -> s * p^T R (+ translation).
    res.aligned_b.resize((size_t)2 * n);
    for (int i = 0; i < n; ++i) {
        const double pbx = b[2 * i] - bx, pby = b[2 * i + 1] - by;
        res.aligned_b[2 * i] = res.scale * (pbx * svd.r[0][0] + pby * svd.r[1][0]) + ax;
        res.aligned_b[2 * i + 1] = res.scale * (pbx * svd.r[0][1] + pby * svd.r[1][1]) + ay;
    }
    return res;
}

std::vector<double> consensus_layout(const std::vector<std::vector<double>>& layouts, int n) {
    if (layouts.empty()) throw InputError("consensus_layout: no layouts");
    std::vector<double> mean((size_t)2 * n, 0.0);
    for (size_t r = 0; r < layouts.size(); ++r) {
        const auto aligned =
            r == 0 ? layouts[0] : procrustes_distance(layouts[0], layouts[r], n).aligned_b;
        for (int i = 0; i < 2 * n; ++i) mean[i] += aligned[i];
    }
    for (auto& v : mean) v /= (double)layouts.size();
    return mean;
}

} // namespace dynomap
