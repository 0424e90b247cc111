#include <doctest.h>

#include <cmath>

#include "dynomap/layout.hpp"
#include "dynomap/params.hpp"
#include "dynomap/rng.hpp"

using namespace dynomap;

namespace {

std::vector<double> rotate_all(const std::vector<double>& coords, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    std::vector<double> out(coords.size());
    for (size_t i = 0; i < coords.size() / 2; ++i) {
        out[2 * i] = c * coords[2 * i] - s * coords[2 * i + 1];
        out[2 * i + 1] = s * coords[2 * i] + c * coords[2 * i + 1];
    }
    return out;
}

std::vector<double> permute_points(const std::vector<double>& coords, Rng& rng) {
    const int g = (int)coords.size() / 2;
    const auto perm = random_permutation(g, rng);
    std::vector<double> out(coords.size());
    for (int i = 0; i < g; ++i) {
        out[2 * i] = coords[2 * perm[i]];
        out[2 * i + 1] = coords[2 * perm[i] + 1];
    }
    return out;
}

} // namespace

TEST_SUITE_BEGIN("layout");

TEST_CASE("init_coords: range, determinism, single point") {
    const auto c = init_coords<double>(1000, 5);
    double mx = 0, my = 0;
    for (int i = 0; i < 1000; ++i) {
        CHECK(c[2 * i] >= -1.0);
        CHECK(c[2 * i] <= 1.0);
        CHECK(c[2 * i + 1] >= -1.0);
        CHECK(c[2 * i + 1] <= 1.0);
        mx += c[2 * i];
        my += c[2 * i + 1];
    }
    CHECK(std::abs(mx / 1000) < 0.1);
    CHECK(std::abs(my / 1000) < 0.1);
    CHECK(init_coords<double>(1000, 5) == c);
    const auto single = init_coords<double>(1, 9);
    CHECK(single.size() == 2);
    CHECK_THROWS_AS(init_coords<double>(0, 1), InputError);
}

TEST_CASE("center_loss hand examples") {
    const std::vector<double> sym = {1, 0, -1, 0};
    CHECK(center_loss(sym.data(), 2) == doctest::Approx(0.0).epsilon(1e-15));
    const std::vector<double> one = {1, 1};
    CHECK(center_loss(one.data(), 1) == doctest::Approx(2.0).epsilon(1e-12));
    const std::vector<double> three = {2, 0, 0, 2, 1, 1}; // mean (1,1)
    CHECK(center_loss(three.data(), 3) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("spread_loss hand examples") {
    // pooled std exactly 1
    const std::vector<double> unit = {1, 1, 1, -1, -1, 1, -1, -1};
    CHECK(spread_loss(unit.data(), 4) == doctest::Approx(0.0).epsilon(1e-12));
    const std::vector<double> collapsed = {0.3, -0.2, 0.3, -0.2, 0.3, -0.2};
    CHECK(spread_loss(collapsed.data(), 3) == doctest::Approx(1.0).epsilon(1e-12));
    // {(2,0), (-2,0)}: pooled entries {2,-2,0,0}, std sqrt(2)
    const std::vector<double> pair = {2, 0, -2, 0};
    const double expect = (std::sqrt(2.0) - 1.0) * (std::sqrt(2.0) - 1.0);
    CHECK(spread_loss(pair.data(), 2) == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(spread_loss(pair.data(), 1), InputError);
}

TEST_CASE("repel_loss hand examples") {
    const double eps = 1e-4;
    const std::vector<double> coincident = {0.5, 0.5, 0.5, 0.5};
    CHECK(repel_loss(coincident.data(), 2, eps) == doctest::Approx(1e4).epsilon(1e-12));
    const std::vector<double> unitpair = {0, 0, 1, 0};
    CHECK(repel_loss(unitpair.data(), 2, eps) ==
          doctest::Approx(1.0 / 1.0001).epsilon(1e-12));
    // three collinear points at x = 0, 1, 2
    const std::vector<double> collinear = {0, 0, 1, 0, 2, 0};
    const double oracle = (1.0 / 1.0001 + 1.0 / 4.0001 + 1.0 / 1.0001) / 3.0;
    CHECK(repel_loss(collinear.data(), 3, eps) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(repel_loss(collinear.data(), 3, eps) - oracle) < 1e-9);
}

TEST_CASE("layout_total_loss composes the three terms") {
    // mean 0, pooled std 1: only the repulsion term remains
    const std::vector<double> unit = {1, 1, 1, -1, -1, 1, -1, -1};
    const double r = repel_loss(unit.data(), 4, 1e-4);
    CHECK(layout_total_loss(unit.data(), 4, 1e-4) == doctest::Approx(0.05 * r).epsilon(1e-12));

    // centered collinear points: compose the three oracles
    const std::vector<double> tri = {-1, 0, 0, 0, 1, 0};
    const double c = center_loss(tri.data(), 3);
    const double s = spread_loss(tri.data(), 3);
    const double rr = repel_loss(tri.data(), 3, 1e-4);
    CHECK(layout_total_loss(tri.data(), 3, 1e-4) ==
          doctest::Approx(0.01 * c + 0.01 * s + 0.05 * rr).epsilon(1e-12));

    // all points coincident at the origin: 0.01*0 + 0.01*1 + 0.05*1e4
    const std::vector<double> origin = {0, 0, 0, 0, 0, 0};
    CHECK(layout_total_loss(origin.data(), 3, 1e-4) ==
          doctest::Approx(500.01).epsilon(1e-12));
}

TEST_CASE("regularizers are non-negative and zero at their targets") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> c((size_t)20 * 2);
        for (auto& v : c) v = rng.uniform(-2, 2);
        CHECK(center_loss(c.data(), 20) >= 0.0);
        CHECK(spread_loss(c.data(), 20) >= 0.0);
        CHECK(repel_loss(c.data(), 20, 1e-4) > 0.0);
    }
}

TEST_CASE("invariances: permutation for all, rotation for the total") {
    Rng rng(8);
    std::vector<double> c((size_t)12 * 2);
    for (auto& v : c) v = rng.uniform(-1.5, 1.5);
    const auto perm = permute_points(c, rng);
    CHECK(repel_loss(perm.data(), 12, 1e-4) ==
          doctest::Approx(repel_loss(c.data(), 12, 1e-4)).epsilon(1e-12));
    CHECK(spread_loss(perm.data(), 12) == doctest::Approx(spread_loss(c.data(), 12)).epsilon(1e-12));
    CHECK(center_loss(perm.data(), 12) == doctest::Approx(center_loss(c.data(), 12)).epsilon(1e-12));

    const auto rot = rotate_all(c, 0.83);
    CHECK(center_loss(rot.data(), 12) == doctest::Approx(center_loss(c.data(), 12)).epsilon(1e-10));
    CHECK(repel_loss(rot.data(), 12, 1e-4) ==
          doctest::Approx(repel_loss(c.data(), 12, 1e-4)).epsilon(1e-10));
    CHECK(layout_total_loss(rot.data(), 12, 1e-4) ==
          doctest::Approx(layout_total_loss(c.data(), 12, 1e-4)).epsilon(1e-10));
}

TEST_CASE("gradients of all three losses pass finite differences") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const int g = 7;
        ParamSet<double> ps;
        auto& c = ps.add("coords", {g, 2});
        for (auto& v : c.value) v = rng.uniform(-1.2, 1.2);

        SUBCASE("center") {
            center_loss_grad(c.value.data(), g, 1.0, c.grad.data());
            const auto f = [&](ParamSet<double>& q) {
                return center_loss(q.find("coords")->value.data(), g);
            };
            CHECK(finite_diff_check<double>(f, ps, 1e-6) < 1e-8);
        }
        SUBCASE("spread") {
            spread_loss_grad(c.value.data(), g, 1.0, c.grad.data());
            const auto f = [&](ParamSet<double>& q) {
                return spread_loss(q.find("coords")->value.data(), g);
            };
            CHECK(finite_diff_check<double>(f, ps, 1e-6) < 1e-8);
        }
        SUBCASE("repel") {
            repel_loss_grad(c.value.data(), g, 1e-4, 1.0, c.grad.data());
            const auto f = [&](ParamSet<double>& q) {
                return repel_loss(q.find("coords")->value.data(), g, 1e-4);
            };
            CHECK(finite_diff_check<double>(f, ps, 1e-6) < 1e-6);
        }
        SUBCASE("total") {
            layout_total_loss_grad(c.value.data(), g, 1e-4, c.grad.data());
            const auto f = [&](ParamSet<double>& q) {
                return layout_total_loss(q.find("coords")->value.data(), g, 1e-4);
            };
            CHECK(finite_diff_check<double>(f, ps, 1e-6) < 1e-6);
        }
    }
}

TEST_CASE("sampled repulsion estimator is unbiased against the exact mean") {
    Rng rng(14);
    const int g = 60;
    std::vector<double> c((size_t)g * 2);
    for (auto& v : c) v = rng.uniform(-1, 1);
    const double exact = repel_loss(c.data(), g, 1e-4);
    double mean = 0;
    const int reps = 40;
    for (int r = 0; r < reps; ++r)
        mean += repel_loss(c.data(), g, 1e-4, /*pair_budget=*/8, substream(99, 1, r));
    mean /= reps;
    CHECK(mean == doctest::Approx(exact).epsilon(0.05));
}

TEST_CASE("velocity hand examples") {
    std::vector<double> a = {0.1, 0.2, -0.3, 0.4};
    CHECK(velocity(a.data(), a.data(), 2) == 0.0);
    std::vector<double> b = a;
    for (int i = 0; i < 2; ++i) {
        b[2 * i] += 0.003;
        b[2 * i + 1] += 0.004;
    }
    CHECK(velocity(b.data(), a.data(), 2) == doctest::Approx(0.005).epsilon(1e-12));
    std::vector<double> c = a;
    c[0] += 0.001;
    c[3] += 0.003;
    CHECK(velocity(c.data(), a.data(), 2) == doctest::Approx(0.002).epsilon(1e-12));
}

TEST_CASE("stabilization: 15 low-velocity epochs freeze the layout") {
    LayoutState st;
    for (int e = 0; e < 15; ++e) {
        CHECK_FALSE(st.frozen);
        stabilization_update(st, 0.001, e);
    }
    CHECK(st.frozen);
    CHECK(st.frozen_epoch == 14);
}

TEST_CASE("stabilization: spike resets the streak") {
    LayoutState st;
    for (int e = 0; e < 14; ++e) stabilization_update(st, 0.001, e);
    CHECK(st.below_threshold_streak == 14);
    stabilization_update(st, 0.01, 14);
    CHECK_FALSE(st.frozen);
    CHECK(st.below_threshold_streak == 0);
}

TEST_CASE("stabilization: velocity exactly at the threshold is not below it") {
    LayoutState st;
    for (int e = 0; e < 14; ++e) stabilization_update(st, 0.001, e);
    stabilization_update(st, 0.002, 14);
    CHECK_FALSE(st.frozen);
    CHECK(st.below_threshold_streak == 0);
}

TEST_CASE("stabilization: frozen state latches") {
    LayoutState st;
    for (int e = 0; e < 15; ++e) stabilization_update(st, 0.0, e);
    CHECK(st.frozen);
    stabilization_update(st, 10.0, 15);
    CHECK(st.frozen);
    CHECK(st.frozen_epoch == 14);
}

TEST_SUITE_END();
