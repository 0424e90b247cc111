#pragma once

#include <cstdint>
#include <vector>

#include "dynomap/common.hpp"

namespace dynomap {

// Spatial organization statistics over a learned layout: Moran's I with
// directed kNN weights, top-q% neighborhood coherence, permutation nulls and
// Procrustes layout comparison. Everything here is double precision.

// Directed kNN graph: row i holds the k nearest neighbors of feature i,
// Euclidean distance, ties broken by smaller index. w_ij = 1 iff j is listed.
struct KnnWeightMatrix {
    int n = 0;
    int k = 0;
    std::vector<int> neighbors; // n * k, row-major

    int neighbor(int i, int j) const { return neighbors[(size_t)i * k + j]; }
};

struct NullSummary {
    double observed = 0;
    double null_mean = 0;
    double null_std = 0; // population std over permutations
    double p_value = 0;  // right-tailed, (1 + #{null >= obs}) / (1 + n_perm)
    int n_perm = 0;
    uint64_t seed = 0;
    std::vector<double> null_values; // per-permutation statistics, plot fodder
};

KnnWeightMatrix knn_weights(const std::vector<double>& coords, int n, int k);

// Global spatial autocorrelation of values `a` over W. Throws
// DegenerateVariance when `a` is constant.
double morans_i(const std::vector<double>& a, const KnnWeightMatrix& w);

NullSummary morans_null(const std::vector<double>& a, const KnnWeightMatrix& w, int n_perm,
                        uint64_t seed);

// Binary top-q% indicator over `a` (count = ceil(q*N/100), value ties broken
// by smaller index). Returns the mean over high-attribution features of the
// fraction of same-label neighbors.
double knn_coherence(const std::vector<double>& coords, int n, const std::vector<double>& a,
                     int k, double q);

NullSummary coherence_null(const std::vector<double>& coords, int n,
                           const std::vector<double>& a, int k, double q, int n_perm,
                           uint64_t seed);

// Top-q% indicator used by knn_coherence, exposed for the null machinery.
std::vector<uint8_t> top_q_indicator(const std::vector<double>& a, double q);

struct ProcrustesResult {
    double distance = 0;            // in [0,1]; 0 iff b is a similarity transform of a
    std::vector<double> aligned_b;  // b mapped onto a (n x 2)
    double scale = 0;
    double rotation[2][2] = {{1, 0}, {0, 1}};
};

// Optimal similarity alignment (translation, rotation/reflection, isotropic
// scale) of b onto a; distance is the normalized residual
// 1 - (sum of singular values)^2 / (|A|^2 |B|^2) of the centered point sets.
ProcrustesResult procrustes_distance(const std::vector<double>& a, const std::vector<double>& b,
                                     int n);

// Mean layout after aligning every run onto the first.
std::vector<double> consensus_layout(const std::vector<std::vector<double>>& layouts, int n);

} // namespace dynomap
