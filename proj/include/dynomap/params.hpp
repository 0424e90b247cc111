#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dynomap/common.hpp"

namespace dynomap {

// A named dense parameter array with its gradient buffer. Value and gradient
// are always shape-congruent.
template <class R>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<R> value;
    std::vector<R> grad;
    bool frozen = false;

    size_t size() const { return value.size(); }
};

// Parameters live in a deque so references returned by add() stay valid as
// more parameters are registered.
template <class R>
class ParamSet {
public:
    Param<R>& add(const std::string& name, std::vector<int> shape) {
        size_t n = 1;
        for (int d : shape) n *= (size_t)d;
        params_.push_back(Param<R>{name, std::move(shape),
                                   std::vector<R>(n, R(0)), std::vector<R>(n, R(0)), false});
        return params_.back();
    }

    Param<R>& operator[](size_t i) { return params_[i]; }
    const Param<R>& operator[](size_t i) const { return params_[i]; }
    size_t count() const { return params_.size(); }

    Param<R>* find(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }
    const Param<R>* find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    void zero_grad() {
        for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), R(0));
    }

    size_t total_size() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    std::vector<double> flatten_values() const {
        std::vector<double> out;
        out.reserve(total_size());
        for (const auto& p : params_)
            for (R v : p.value) out.push_back((double)v);
        return out;
    }

    void assign_values(const std::vector<double>& flat) {
        size_t k = 0;
        for (auto& p : params_)
            for (auto& v : p.value) v = (R)flat[k++];
    }

    // Copy values from another set with identical structure (checkpoint restore,
    // best-epoch snapshots).
    void copy_values_from(const ParamSet<R>& other) {
        for (size_t i = 0; i < params_.size(); ++i) params_[i].value = other.params_[i].value;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::deque<Param<R>> params_;
};

// Adam with bias correction. Moment buffers are indexed parallel to the
// ParamSet. Frozen parameters are skipped entirely: value, moments and step
// behavior for them are bit-identical before and after.
template <class R>
struct AdamState {
    std::vector<std::vector<R>> m, v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(const ParamSet<R>& params, double learning_rate = 1e-3)
        : lr(learning_rate) {
        for (size_t i = 0; i < params.count(); ++i) {
            m.emplace_back(params[i].size(), R(0));
            v.emplace_back(params[i].size(), R(0));
        }
    }
};

template <class R>
void adam_step(ParamSet<R>& params, AdamState<R>& state) {
    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, (double)state.t);
    const double c2 = 1.0 - std::pow(state.beta2, (double)state.t);
    const R b1 = (R)state.beta1, b2 = (R)state.beta2;
    const R one_m_b1 = (R)(1.0 - state.beta1), one_m_b2 = (R)(1.0 - state.beta2);
    const R step = (R)(state.lr / c1);
    const R inv_sqrt_c2 = (R)(1.0 / std::sqrt(c2));
    const R eps = (R)state.eps;

    for (size_t i = 0; i < params.count(); ++i) {
        auto& p = params[i];
        if (p.frozen) continue;
        auto& m = state.m[i];
        auto& v = state.v[i];
        bool ok = true;
        const size_t n = p.size();
        for (size_t j = 0; j < n; ++j) {
            const R g = p.grad[j];
            m[j] = b1 * m[j] + one_m_b1 * g;
            v[j] = b2 * v[j] + one_m_b2 * g * g;
            const R denom = std::sqrt(v[j]) * inv_sqrt_c2 + eps;
            p.value[j] -= step * m[j] / denom;
            ok &= std::isfinite((double)p.value[j]);
        }
        if (!ok) throw NumericError("adam_step: non-finite value in parameter '" + p.name + "'");
    }
}

// Max over all parameter entries of |g_analytic - g_fd| / max(1, |g_fd|),
// central differences with step h. `f` evaluates the scalar objective at the
// current parameter values; `point.grad` holds the analytic gradient.
template <class R>
double finite_diff_check(const std::function<double(ParamSet<R>&)>& f, ParamSet<R>& point,
                         double h) {
    double worst = 0.0;
    for (size_t i = 0; i < point.count(); ++i) {
        auto& p = point[i];
        for (size_t j = 0; j < p.size(); ++j) {
            const R saved = p.value[j];
            p.value[j] = (R)((double)saved + h);
            const double fp = f(point);
            p.value[j] = (R)((double)saved - h);
            const double fm = f(point);
            p.value[j] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("finite_diff_check: objective returned non-finite value");
            const double g_fd = (fp - fm) / (2.0 * h);
            const double err = std::abs((double)p.grad[j] - g_fd) / std::max(1.0, std::abs(g_fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace dynomap
