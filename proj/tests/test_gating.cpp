#include <doctest.h>

#include <cmath>

#include "dynomap/gating.hpp"
#include "dynomap/params.hpp"
#include "dynomap/rng.hpp"

using namespace dynomap;

namespace {

// Scalar objective sum(gated) for the finite-difference harness over
// (x, W, b) packed into a ParamSet.
double gate_objective(ParamSet<double>& ps, int g, bool diagonal) {
    GateWorkspace<double> ws;
    gate_forward(ps.find("x")->value.data(), ps.find("w")->value.data(),
                 ps.find("b")->value.data(), g, diagonal, ws);
    double s = 0;
    for (double v : ws.gated) s += v;
    return s;
}

} // namespace

TEST_SUITE_BEGIN("gating");

TEST_CASE("zero input gives zero gated vector") {
    const int g = 5;
    std::vector<double> x(g, 0.0), w(g * g), b(g);
    Rng rng(1);
    for (auto& v : w) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    GateWorkspace<double> ws;
    gate_forward(x.data(), w.data(), b.data(), g, false, ws);
    for (int i = 0; i < g; ++i) {
        CHECK(ws.gated[i] == 0.0);
        CHECK(ws.g[i] == doctest::Approx(sigmoid(b[i])));
    }
}

TEST_CASE("zero weights and bias halve the input") {
    const int g = 4;
    std::vector<double> x = {1.0, -2.0, 0.5, 3.0}, w(g * g, 0.0), b(g, 0.0);
    GateWorkspace<double> ws;
    gate_forward(x.data(), w.data(), b.data(), g, false, ws);
    for (int i = 0; i < g; ++i) {
        CHECK(ws.g[i] == doctest::Approx(0.5));
        CHECK(ws.gated[i] == doctest::Approx(0.5 * x[i]));
    }
}

TEST_CASE("identity weights at x = (ln 3, 0) give gates (0.75, 0.5)") {
    const int g = 2;
    std::vector<double> x = {std::log(3.0), 0.0};
    std::vector<double> w = {1, 0, 0, 1}, b = {0, 0};
    GateWorkspace<double> ws;
    gate_forward(x.data(), w.data(), b.data(), g, false, ws);
    CHECK(ws.g[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(ws.g[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ws.gated[0] == doctest::Approx(0.75 * std::log(3.0)).epsilon(1e-12));
    CHECK(ws.gated[1] == 0.0);
}

TEST_CASE("monotone bound |gated| <= |x| for random parameters") {
    Rng rng(7);
    const int g = 16;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(g), w(g * g), b(g);
        for (auto& v : x) v = 3.0 * rng.normal();
        for (auto& v : w) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        GateWorkspace<double> ws;
        gate_forward(x.data(), w.data(), b.data(), g, false, ws);
        for (int i = 0; i < g; ++i) {
            CHECK(std::abs(ws.gated[i]) <= std::abs(x[i]));
            CHECK(ws.g[i] > 0.0);
            CHECK(ws.g[i] < 1.0);
        }
    }
}

TEST_CASE("gate gradients match finite differences (dense and diagonal)") {
    Rng rng(3);
    for (const bool diagonal : {false, true}) {
        for (int trial = 0; trial < 5; ++trial) {
            const int g = 6;
            ParamSet<double> ps;
            auto& x = ps.add("x", {g});
            auto& w = ps.add("w", diagonal ? std::vector<int>{g} : std::vector<int>{g, g});
            auto& b = ps.add("b", {g});
            for (auto& v : x.value) v = rng.normal();
            for (auto& v : w.value) v = rng.normal();
            for (auto& v : b.value) v = rng.normal();

            GateWorkspace<double> ws;
            gate_forward(x.value.data(), w.value.data(), b.value.data(), g, diagonal, ws);
            std::vector<double> upstream(g, 1.0), dz(g);
            gate_backward(x.value.data(), w.value.data(), g, diagonal, ws, upstream.data(),
                          w.grad.data(), b.grad.data(), x.grad.data(), dz.data());

            const auto f = [&](ParamSet<double>& q) {
                return gate_objective(q, g, diagonal);
            };
            CHECK(finite_diff_check<double>(f, ps, 1e-6) < 1e-7);
        }
    }
}

TEST_CASE("parallel kernel matches the serial reference") {
    Rng rng(9);
    const int g = 33;
    std::vector<double> x(g), w(g * g), b(g);
    for (auto& v : x) v = rng.normal();
    for (auto& v : w) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    GateWorkspace<double> fast, ref;
    gate_forward(x.data(), w.data(), b.data(), g, false, fast);
    gate_forward_reference(x.data(), w.data(), b.data(), g, false, ref);
    for (int i = 0; i < g; ++i) CHECK(fast.gated[i] == doctest::Approx(ref.gated[i]).epsilon(1e-14));
}

TEST_SUITE_END();
