#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dynomap/model.hpp"

namespace dynomap {

// Integrated Gradients over the pipeline input, zero baseline, midpoint-rule
// Riemann sum with m steps. Attribution values and aggregates are kept in
// double regardless of the model scalar.

struct AttributionVector {
    std::vector<double> values; // IG_i per feature
    int target_class = 0;
    std::string tag;            // sample id or class-aggregate label
    int steps = 0;
    double f_x = 0;             // target logit at the input
    double f_baseline = 0;      // target logit at the zero baseline
    double completeness_residual = 0;
};

// Quadrature core over a caller-supplied gradient oracle:
//   grad_fn(point, grad_out) -> f(point)
// Separated from the model so closed-form surrogates can exercise the same
// path in tests.
inline AttributionVector
ig_core(const std::function<double(const std::vector<double>&, std::vector<double>&)>& grad_fn,
        const std::vector<double>& x, const std::vector<double>& baseline, int m) {
    if (m < 1) throw InputError("integrated_gradients: m must be >= 1");
    const size_t g = x.size();
    AttributionVector out;
    out.steps = m;
    out.values.assign(g, 0.0);

    std::vector<double> point(g), grad(g);
    for (int k = 1; k <= m; ++k) {
        const double alpha = (k - 0.5) / m;
        for (size_t i = 0; i < g; ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
        std::fill(grad.begin(), grad.end(), 0.0);
        const double f = grad_fn(point, grad);
        if (!std::isfinite(f)) throw NumericError("integrated_gradients: non-finite objective");
        for (size_t i = 0; i < g; ++i) {
            if (!std::isfinite(grad[i]))
                throw NumericError("integrated_gradients: non-finite gradient");
            out.values[i] += grad[i];
        }
    }
    double sum = 0.0;
    for (size_t i = 0; i < g; ++i) {
        out.values[i] = (x[i] - baseline[i]) * out.values[i] / m;
        sum += out.values[i];
    }
    std::vector<double> tmp(g);
    out.f_baseline = grad_fn(baseline, tmp);
    out.f_x = grad_fn(x, tmp);
    out.completeness_residual = std::abs(sum - (out.f_x - out.f_baseline));
    return out;
}

// Gradient of the target-class logit with respect to the input, inference
// mode (dropout off). Parameter gradients accumulated along the way are
// scratch; the caller's training state is untouched apart from grad buffers.
template <class R>
AttributionVector integrated_gradients(Model<R>& model, const std::vector<double>& x,
                                       int target_class, int m, const GridSpec& grid) {
    if (target_class < 0 || target_class >= model.config().classes)
        throw InputError("integrated_gradients: target class out of range");
    SampleWorkspace<R> ws;
    model.prepare(ws);
    const int g = model.config().g;
    std::vector<R> xr(g), dx(g), d_logits(model.config().classes);

    auto grad_fn = [&](const std::vector<double>& point, std::vector<double>& grad) {
        for (int i = 0; i < g; ++i) xr[i] = (R)point[i];
        const R* logits = model.forward_sample(xr.data(), grid, false, nullptr, ws);
        if (!grad.empty()) {
            std::fill(d_logits.begin(), d_logits.end(), R(0));
            d_logits[target_class] = R(1);
            std::fill(dx.begin(), dx.end(), R(0));
            model.params().zero_grad();
            model.backward_sample(d_logits.data(), xr.data(), grid, ws, false, dx.data());
            for (int i = 0; i < g; ++i) grad[i] = (double)dx[i];
        }
        return (double)logits[target_class];
    };

    std::vector<double> baseline(g, 0.0);
    auto out = ig_core(grad_fn, x, baseline, m);
    out.target_class = target_class;
    model.params().zero_grad();
    return out;
}

struct ClassProfile {
    std::vector<double> mean_abs;   // mean |IG| per feature
    std::vector<double> normalized; // mean_abs / max(mean_abs); zeros if degenerate
    bool all_zero = false;
    std::string class_name;
};

// Mean |IG| per feature over one class's attribution vectors, unit-max
// normalized. An all-zero profile skips normalization and is flagged.
inline ClassProfile class_profile(const std::vector<AttributionVector>& samples, int g) {
    if (samples.empty()) throw InputError("class_profile: empty class");
    ClassProfile prof;
    prof.mean_abs.assign(g, 0.0);
    for (const auto& s : samples) {
        if ((int)s.values.size() != g)
            throw InputError("class_profile: attribution length mismatch");
        for (int i = 0; i < g; ++i) prof.mean_abs[i] += std::abs(s.values[i]);
    }
    for (int i = 0; i < g; ++i) prof.mean_abs[i] /= samples.size();
    const double mx = *std::max_element(prof.mean_abs.begin(), prof.mean_abs.end());
    prof.normalized.assign(g, 0.0);
    if (mx <= 0.0) {
        prof.all_zero = true;
    } else {
        for (int i = 0; i < g; ++i) prof.normalized[i] = prof.mean_abs[i] / mx;
    }
    return prof;
}

// Signed per-feature difference a - b of normalized profiles.
inline std::vector<double> delta_profile(const std::vector<double>& a,
                                         const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("delta_profile: feature sets differ");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

} // namespace dynomap
