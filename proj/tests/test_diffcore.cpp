#include <doctest.h>

#include <cmath>
#include <limits>

#include "dynomap/params.hpp"
#include "dynomap/rng.hpp"

using namespace dynomap;

TEST_SUITE_BEGIN("diffcore");

TEST_CASE("finite_diff_check: quadratic gradient at theta=3 is 6") {
    ParamSet<double> p;
    auto& theta = p.add("theta", {1});
    theta.value[0] = 3.0;
    theta.grad[0] = 6.0; // analytic d/dtheta theta^2
    const auto f = [](ParamSet<double>& ps) {
        const double t = ps.find("theta")->value[0];
        return t * t;
    };
    CHECK(finite_diff_check<double>(f, p, 1e-5) < 1e-9);
}

TEST_CASE("finite_diff_check: linear objective has near-zero error") {
    ParamSet<double> p;
    auto& a = p.add("a", {4});
    Rng rng(1);
    for (auto& v : a.value) v = rng.normal();
    for (auto& g : a.grad) g = 2.5;
    const auto f = [](ParamSet<double>& ps) {
        double s = 0;
        for (double v : ps.find("a")->value) s += 2.5 * v;
        return s;
    };
    CHECK(finite_diff_check<double>(f, p, 1e-5) < 1e-9);
}

TEST_CASE("finite_diff_check: sum of sines matches cosine oracle") {
    ParamSet<double> p;
    auto& a = p.add("a", {8});
    Rng rng(2);
    for (size_t i = 0; i < a.size(); ++i) {
        a.value[i] = rng.uniform(-2.0, 2.0);
        a.grad[i] = std::cos(a.value[i]);
    }
    const auto f = [](ParamSet<double>& ps) {
        double s = 0;
        for (double v : ps.find("a")->value) s += std::sin(v);
        return s;
    };
    CHECK(finite_diff_check<double>(f, p, 1e-5) < 1e-7);
}

TEST_CASE("finite_diff_check flags a corrupted gradient entry") {
    ParamSet<double> p;
    auto& a = p.add("a", {3});
    for (size_t i = 0; i < a.size(); ++i) {
        a.value[i] = 0.3 * (double)(i + 1);
        a.grad[i] = std::cos(a.value[i]);
    }
    a.grad[1] += 0.1;
    const auto f = [](ParamSet<double>& ps) {
        double s = 0;
        for (double v : ps.find("a")->value) s += std::sin(v);
        return s;
    };
    CHECK(finite_diff_check<double>(f, p, 1e-5) >= 0.05);
}

TEST_CASE("finite_diff_check rejects non-finite objectives") {
    ParamSet<double> p;
    p.add("a", {1});
    const auto f = [](ParamSet<double>&) { return std::nan(""); };
    CHECK_THROWS_AS(finite_diff_check<double>(f, p, 1e-5), NumericError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, t advances") {
    ParamSet<double> p;
    auto& a = p.add("a", {3});
    a.value = {1.0, -2.0, 0.5};
    AdamState<double> st(p, 1e-3);
    adam_step(p, st);
    CHECK(st.t == 1);
    CHECK(a.value == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("adam: first step with unit gradient moves by about -lr") {
    ParamSet<double> p;
    auto& a = p.add("a", {1});
    a.value[0] = 0.7;
    a.grad[0] = 1.0;
    AdamState<double> st(p, 1e-3);
    adam_step(p, st);
    // bias-corrected m_hat = 1, v_hat = 1: update = -lr / (1 + eps)
    CHECK(a.value[0] == doctest::Approx(0.7 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam: frozen parameter is bit-identical after steps") {
    ParamSet<double> p;
    auto& a = p.add("a", {2});
    auto& b = p.add("b", {2});
    a.value = {0.25, -0.5};
    b.value = {1.0, 2.0};
    a.frozen = true;
    AdamState<double> st(p, 1e-2);
    for (int i = 0; i < 5; ++i) {
        a.grad = {3.0, -1.0};
        b.grad = {3.0, -1.0};
        adam_step(p, st);
    }
    CHECK(a.value[0] == 0.25);
    CHECK(a.value[1] == -0.5);
    CHECK(b.value[0] != 1.0);
}

TEST_CASE("adam is bit-deterministic") {
    const auto run = [] {
        ParamSet<double> p;
        auto& a = p.add("a", {4});
        a.value = {0.1, 0.2, 0.3, 0.4};
        AdamState<double> st(p, 1e-3);
        Rng rng(11);
        for (int i = 0; i < 20; ++i) {
            for (auto& g : a.grad) g = rng.normal();
            adam_step(p, st);
        }
        return a.value;
    };
    CHECK(run() == run());
}

TEST_CASE("adam rejects non-finite updates") {
    ParamSet<double> p;
    auto& a = p.add("a", {1});
    a.value[0] = 1.0;
    a.grad[0] = std::numeric_limits<double>::infinity();
    AdamState<double> st(p, 1e-3);
    CHECK_THROWS_AS(adam_step(p, st), NumericError);
}

TEST_CASE("paramset flatten/assign round-trip and zero_grad") {
    ParamSet<double> p;
    p.add("a", {2, 2});
    p.add("b", {3});
    Rng rng(4);
    for (size_t i = 0; i < p.count(); ++i)
        for (auto& v : p[i].value) v = rng.normal();
    const auto flat = p.flatten_values();
    CHECK(flat.size() == 7);
    ParamSet<double> q;
    q.add("a", {2, 2});
    q.add("b", {3});
    q.assign_values(flat);
    CHECK(q.flatten_values() == flat);
    for (size_t i = 0; i < p.count(); ++i)
        for (auto& g : p[i].grad) g = 1.0;
    p.zero_grad();
    for (size_t i = 0; i < p.count(); ++i)
        for (auto g : p[i].grad) CHECK(g == 0.0);
}

TEST_SUITE_END();
