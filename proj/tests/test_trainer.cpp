#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dynomap/rng.hpp"
#include "dynomap/trainer.hpp"

using namespace dynomap;

namespace {

// Two Gaussian blobs with means +/- mu on every dimension: a linear rule
// through the tabular skip path separates them perfectly.
FeatureMatrix make_blobs(int n, int g, double mu, uint64_t seed) {
    FeatureMatrix m;
    Rng rng(seed);
    m.class_names = {"neg", "pos"};
    for (int c = 0; c < g; ++c) m.feature_names.push_back("f" + std::to_string(c));
    m.values.resize((size_t)n * g);
    for (int i = 0; i < n; ++i) {
        const int y = i % 2;
        m.labels.push_back(y);
        m.sample_ids.push_back(std::to_string(i));
        for (int c = 0; c < g; ++c)
            m.values[(size_t)i * g + c] = (y == 0 ? -mu : mu) + rng.normal();
    }
    return m;
}

TrainConfig small_config(uint64_t seed, int epochs, int pixels = 12) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.max_epochs = epochs;
    cfg.pixels = pixels;
    cfg.conv_filters = {8, 16};
    cfg.batch_size = 16;
    return cfg;
}

} // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("metrics: perfect predictions give all ones") {
    const std::vector<std::vector<long>> confusion = {{5, 0}, {0, 7}};
    const auto m = metrics_from_confusion(confusion);
    CHECK(m.accuracy == doctest::Approx(1.0));
    CHECK(m.macro_f1 == doctest::Approx(1.0));
    CHECK(m.macro_sensitivity == doctest::Approx(1.0));
    CHECK(m.macro_specificity == doctest::Approx(1.0));
}

TEST_CASE("metrics: symmetric confusion gives 0.5 across the board") {
    const std::vector<std::vector<long>> confusion = {{1, 1}, {1, 1}};
    const auto m = metrics_from_confusion(confusion);
    CHECK(m.accuracy == doctest::Approx(0.5));
    CHECK(m.macro_f1 == doctest::Approx(0.5));
    CHECK(m.macro_sensitivity == doctest::Approx(0.5));
    CHECK(m.macro_specificity == doctest::Approx(0.5));
}

TEST_CASE("metrics: all predicted class 0 with supports (8,2)") {
    const std::vector<std::vector<long>> confusion = {{8, 0}, {2, 0}};
    const auto m = metrics_from_confusion(confusion);
    CHECK(m.accuracy == doctest::Approx(0.8));
    CHECK(m.macro_sensitivity == doctest::Approx(0.5));
    CHECK(m.zero_division_flag[1]); // class 1 never predicted: F1 defined as 0
    CHECK(m.per_class_f1[1] == 0.0);
}

TEST_CASE("metrics: confusion row sums equal class support; rates in [0,1]") {
    const std::vector<std::vector<long>> confusion = {{3, 2, 0}, {1, 4, 1}, {0, 0, 6}};
    const auto m = metrics_from_confusion(confusion);
    long row0 = 0;
    for (long v : m.confusion[0]) row0 += v;
    CHECK(row0 == 5);
    for (int k = 0; k < 3; ++k) {
        CHECK(m.per_class_recall[k] >= 0.0);
        CHECK(m.per_class_recall[k] <= 1.0);
        CHECK(m.per_class_specificity[k] >= 0.0);
        CHECK(m.per_class_specificity[k] <= 1.0);
    }
}

TEST_CASE("separable blobs reach valid accuracy >= 0.99") {
    const auto data = make_blobs(200, 10, 1.5, 404);
    std::vector<int> rows(200);
    std::iota(rows.begin(), rows.end(), 0);
    const auto [fit_rows, valid_rows] = carve_validation(rows, data.labels, 0.2, 11);
    auto [fit, stats] = standardize(data.rows(fit_rows));
    auto [valid, s2] = standardize(data.rows(valid_rows), stats);

    TrainConfig cfg = small_config(15, 120);
    Model<float> model(cfg.model_config(data.g(), 2), 15);
    const auto result = train(model, cfg, fit, valid);
    CHECK(result.best_valid_acc >= 0.99);
    CHECK((int)result.history.size() == 120);
}

TEST_CASE("permuted labels stay near chance over 5 seeds") {
    double acc_sum = 0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        auto data = make_blobs(120, 6, 1.5, 500 + seed);
        Rng rng(substream(777, 1, seed));
        shuffle(data.labels, rng); // destroy the signal
        std::vector<int> rows(120);
        std::iota(rows.begin(), rows.end(), 0);
        const auto [fit_rows, valid_rows] = carve_validation(rows, data.labels, 0.33, seed);
        auto [fit, stats] = standardize(data.rows(fit_rows));
        auto [valid, s2] = standardize(data.rows(valid_rows), stats);
        TrainConfig cfg = small_config(900 + seed, 25, 8);
        cfg.conv_filters = {8};
        Model<float> model(cfg.model_config(data.g(), 2), 900 + seed);
        const auto result = train(model, cfg, fit, valid);
        acc_sum += result.best_valid_acc;
    }
    CHECK(std::abs(acc_sum / 5.0 - 0.5) <= 0.15);
}

TEST_CASE("fixed seed gives a bit-identical training history") {
    const auto run = [] {
        const auto data = make_blobs(60, 5, 1.0, 42);
        std::vector<int> rows(60);
        std::iota(rows.begin(), rows.end(), 0);
        const auto [fit_rows, valid_rows] = carve_validation(rows, data.labels, 0.2, 3);
        auto [fit, stats] = standardize(data.rows(fit_rows));
        auto [valid, s2] = standardize(data.rows(valid_rows), stats);
        TrainConfig cfg = small_config(7, 12, 8);
        cfg.conv_filters = {4};
        Model<float> model(cfg.model_config(data.g(), 2), 7);
        auto result = train(model, cfg, fit, valid);
        return std::pair{result.history, model.params().flatten_values()};
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.first.size() == b.first.size());
    for (size_t e = 0; e < a.first.size(); ++e) {
        CHECK(a.first[e].train_loss == b.first[e].train_loss);
        CHECK(a.first[e].valid_acc == b.first[e].valid_acc);
        CHECK(a.first[e].velocity == b.first[e].velocity);
        CHECK(a.first[e].frozen == b.first[e].frozen);
    }
    CHECK(a.second == b.second);
}

TEST_CASE("training loss is mostly non-increasing early (5-seed majority)") {
    int seeds_ok = 0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const auto data = make_blobs(240, 10, 0.8, 600 + seed);
        std::vector<int> rows(240);
        std::iota(rows.begin(), rows.end(), 0);
        const auto [fit_rows, valid_rows] = carve_validation(rows, data.labels, 0.15, seed);
        auto [fit, stats] = standardize(data.rows(fit_rows));
        auto [valid, s2] = standardize(data.rows(valid_rows), stats);
        TrainConfig cfg = small_config(1000 + seed, 50, 8);
        cfg.conv_filters = {8};
        cfg.dropout = 0.0; // dropout noise would swamp the per-epoch descent
        Model<float> model(cfg.model_config(data.g(), 2), 1000 + seed);
        const auto result = train(model, cfg, fit, valid);
        int non_increasing = 0;
        for (size_t e = 1; e < result.history.size(); ++e)
            if (result.history[e].train_loss <= result.history[e - 1].train_loss)
                ++non_increasing;
        if (non_increasing >= (int)(0.8 * (result.history.size() - 1))) ++seeds_ok;
    }
    CHECK(seeds_ok >= 3);
}

TEST_CASE("freeze latches coordinates to the end of training") {
    const auto data = make_blobs(60, 5, 1.0, 88);
    std::vector<int> rows(60);
    std::iota(rows.begin(), rows.end(), 0);
    const auto [fit_rows, valid_rows] = carve_validation(rows, data.labels, 0.2, 5);
    auto [fit, stats] = standardize(data.rows(fit_rows));
    auto [valid, s2] = standardize(data.rows(valid_rows), stats);

    TrainConfig cfg = small_config(21, 25, 8);
    cfg.conv_filters = {4};
    cfg.velocity_threshold = 1e9; // force freezing after `patience` epochs
    cfg.patience = 5;
    Model<float> model(cfg.model_config(data.g(), 2), 21);

    const auto result = train(model, cfg, fit, valid);
    CHECK(result.frozen_epoch == 4);
    for (size_t e = 0; e < result.history.size(); ++e)
        CHECK(result.history[e].frozen == (e >= 4));
    CHECK(result.best_epoch >= result.frozen_epoch);
}

TEST_CASE("evaluate is a pure function of params and split") {
    const auto data = make_blobs(40, 5, 1.0, 19);
    auto [std_data, stats] = standardize(data);
    TrainConfig cfg = small_config(33, 1, 8);
    cfg.conv_filters = {4};
    Model<float> model(cfg.model_config(data.g(), 2), 33);
    const auto m1 = evaluate(model, std_data);
    const auto m2 = evaluate(model, std_data);
    CHECK(m1.accuracy == m2.accuracy);
    CHECK(m1.confusion == m2.confusion);
    CHECK_THROWS_AS(evaluate(model, FeatureMatrix{}), InputError);
}

TEST_CASE("carve_validation is stratified and deterministic") {
    std::vector<int> labels(50);
    for (size_t i = 0; i < labels.size(); ++i) labels[i] = (int)(i % 2);
    std::vector<int> rows(50);
    std::iota(rows.begin(), rows.end(), 0);
    const auto [fit, valid] = carve_validation(rows, labels, 0.1, 3);
    CHECK(fit.size() + valid.size() == 50);
    int v0 = 0, v1 = 0;
    for (int r : valid) (labels[r] == 0 ? v0 : v1) += 1;
    CHECK(v0 >= 2);
    CHECK(v1 >= 2);
    CHECK(v0 + v1 <= 6);
    const auto again = carve_validation(rows, labels, 0.1, 3);
    CHECK(again.first == fit);
    CHECK(again.second == valid);
}

TEST_CASE("cross_validate on separable blobs") {
    auto data = make_blobs(90, 6, 1.5, 321);
    TrainConfig cfg = small_config(55, 40, 8);
    cfg.conv_filters = {8};
    cfg.folds = 3;
    const auto outcomes = cross_validate<float>(data, cfg);
    REQUIRE(outcomes.size() == 3);
    std::vector<Metrics> fold_metrics;
    for (const auto& o : outcomes) fold_metrics.push_back(o.test_metrics);
    const auto summary = summarize(fold_metrics);
    CHECK(summary.mean_accuracy >= 0.95);
    std::vector<int> seen(90, 0);
    for (const auto& o : outcomes)
        for (int r : o.test_rows) seen[r] += 1;
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_CASE("train rejects a training split with an empty class") {
    auto data = make_blobs(20, 4, 1.0, 5);
    auto [std_data, stats] = standardize(data);
    TrainConfig cfg = small_config(1, 2, 8);
    cfg.conv_filters = {4};
    FeatureMatrix only_zero = std_data;
    for (auto& y : only_zero.labels) y = 0;
    Model<float> model(cfg.model_config(data.g(), 2), 1);
    CHECK_THROWS_AS(train(model, cfg, only_zero, std_data), InputError);
}

TEST_SUITE_END();
