#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dynomap/dataset.hpp"
#include "dynomap/model.hpp"

namespace dynomap {

// Training orchestration: epoch loop, velocity monitoring and freezing,
// post-stabilization model selection, evaluation metrics and K-fold
// cross-validation.

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 16;
    int max_epochs = 1000;
    int patience = 15;
    double velocity_threshold = 0.002;
    int pixels = 64;
    double padding = 1.0;
    double label_smoothing = 0.1;
    uint64_t seed = 0;
    int folds = 5;
    double valid_fraction = 0.1; // carved out of the training split, stratified

    std::vector<int> conv_filters{16, 32, 64};
    int head_hidden = 64;
    double dropout = 0.5;
    bool diagonal_gate = false;
    double render_cutoff = 0.0;
    double repel_eps = kDefaultRepelEps;
    int repel_pair_budget = 2048;

    ModelConfig model_config(int g, int classes) const {
        ModelConfig mc;
        mc.g = g;
        mc.p = pixels;
        mc.classes = classes;
        mc.padding = padding;
        mc.label_smoothing = label_smoothing;
        mc.backbone.blocks.clear();
        for (int f : conv_filters) mc.backbone.blocks.push_back({f, true});
        mc.head_hidden = head_hidden;
        mc.dropout = dropout;
        mc.diagonal_gate = diagonal_gate;
        mc.render_cutoff_sigmas = render_cutoff;
        mc.repel_eps = repel_eps;
        mc.repel_pair_budget = repel_pair_budget;
        return mc;
    }
};

struct CurvePoint {
    double x = 0, y = 0;
};

struct Metrics {
    double accuracy = 0;
    double macro_f1 = 0;
    double macro_sensitivity = 0;
    double macro_specificity = 0;
    std::vector<std::vector<long>> confusion; // [true][pred]
    std::vector<double> per_class_precision, per_class_recall, per_class_specificity,
        per_class_f1;
    std::vector<bool> zero_division_flag;
    std::vector<std::vector<CurvePoint>> pr_curves;  // per class: (recall, precision)
    std::vector<std::vector<CurvePoint>> roc_curves; // per class: (fpr, tpr)
};

// Metrics from a finished confusion matrix. Classes with empty support or no
// predicted positives take F1 = 0 and are flagged.
inline Metrics metrics_from_confusion(const std::vector<std::vector<long>>& confusion) {
    const int c = (int)confusion.size();
    Metrics m;
    m.confusion = confusion;
    long total = 0, correct = 0;
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            total += confusion[i][j];
            if (i == j) correct += confusion[i][j];
        }
    m.accuracy = total ? (double)correct / total : 0.0;
    m.per_class_precision.resize(c);
    m.per_class_recall.resize(c);
    m.per_class_specificity.resize(c);
    m.per_class_f1.resize(c);
    m.zero_division_flag.assign(c, false);
    for (int k = 0; k < c; ++k) {
        long tp = confusion[k][k];
        long fn = 0, fp = 0;
        for (int j = 0; j < c; ++j)
            if (j != k) {
                fn += confusion[k][j];
                fp += confusion[j][k];
            }
        const long tn = total - tp - fn - fp;
        const long support = tp + fn;
        const long predicted = tp + fp;
        m.per_class_recall[k] = support ? (double)tp / support : 0.0;
        m.per_class_precision[k] = predicted ? (double)tp / predicted : 0.0;
        m.per_class_specificity[k] = (tn + fp) ? (double)tn / (tn + fp) : 0.0;
        if (support == 0 || predicted == 0) {
            m.zero_division_flag[k] = true;
            m.per_class_f1[k] = 0.0;
        } else {
            const double pr = m.per_class_precision[k], rc = m.per_class_recall[k];
            m.per_class_f1[k] = (pr + rc) > 0 ? 2 * pr * rc / (pr + rc) : 0.0;
        }
    }
    const auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    };
    m.macro_f1 = mean(m.per_class_f1);
    m.macro_sensitivity = mean(m.per_class_recall);
    m.macro_specificity = mean(m.per_class_specificity);
    return m;
}

// One-vs-rest curves from per-sample class scores, threshold swept over the
// sorted scores (ties broken by sample index for determinism).
inline void attach_curves(Metrics& m, const std::vector<std::vector<double>>& scores,
                          const std::vector<int>& labels, int classes) {
    const int n = (int)labels.size();
    m.pr_curves.assign(classes, {});
    m.roc_curves.assign(classes, {});
    for (int c = 0; c < classes; ++c) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores[a][c] != scores[b][c]) return scores[a][c] > scores[b][c];
            return a < b;
        });
        long pos = 0;
        for (int y : labels) pos += (y == c);
        const long neg = n - pos;
        long tp = 0, fp = 0;
        auto& pr = m.pr_curves[c];
        auto& roc = m.roc_curves[c];
        roc.push_back({0.0, 0.0});
        for (int i = 0; i < n; ++i) {
            if (labels[order[i]] == c)
                ++tp;
            else
                ++fp;
            const double recall = pos ? (double)tp / pos : 0.0;
            const double precision = (tp + fp) ? (double)tp / (tp + fp) : 1.0;
            const double fpr = neg ? (double)fp / neg : 0.0;
            pr.push_back({recall, precision});
            roc.push_back({fpr, recall});
        }
    }
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double valid_acc = 0;
    double velocity = 0;
    bool frozen = false;
};

template <class R>
struct TrainResult {
    std::vector<EpochRecord> history;
    int frozen_epoch = -1;
    int best_epoch = -1;
    double best_valid_acc = 0;
    ParamSet<R> best_params; // values of the selected checkpoint
};

namespace detail {

template <class R>
std::vector<R> row_as(const FeatureMatrix& m, int row) {
    std::vector<R> out(m.g());
    for (int c = 0; c < m.g(); ++c) out[c] = (R)m.at(row, c);
    return out;
}

} // namespace detail

// Predict class scores (softmax) for every row; inference mode.
template <class R>
std::vector<std::vector<double>> predict_scores(Model<R>& model, const FeatureMatrix& data) {
    const GridSpec grid = model.current_grid();
    SampleWorkspace<R> ws;
    model.prepare(ws);
    const int classes = model.config().classes;
    std::vector<std::vector<double>> scores(data.n(), std::vector<double>(classes));
    std::vector<R> x(data.g());
    for (int i = 0; i < data.n(); ++i) {
        for (int c = 0; c < data.g(); ++c) x[c] = (R)data.at(i, c);
        const R* logits = model.forward_sample(x.data(), grid, false, nullptr, ws);
        double mx = (double)logits[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, (double)logits[c]);
        double z = 0;
        for (int c = 0; c < classes; ++c) z += std::exp((double)logits[c] - mx);
        for (int c = 0; c < classes; ++c) scores[i][c] = std::exp((double)logits[c] - mx) / z;
    }
    return scores;
}

template <class R>
Metrics evaluate(Model<R>& model, const FeatureMatrix& data) {
    if (data.n() == 0) throw InputError("evaluate: empty split");
    const int classes = model.config().classes;
    const auto scores = predict_scores(model, data);
    std::vector<std::vector<long>> confusion(classes, std::vector<long>(classes, 0));
    for (int i = 0; i < data.n(); ++i) {
        int pred = 0;
        for (int c = 1; c < classes; ++c)
            if (scores[i][c] > scores[i][pred]) pred = c;
        confusion[data.labels[i]][pred] += 1;
    }
    Metrics m = metrics_from_confusion(confusion);
    attach_curves(m, scores, data.labels, classes);
    return m;
}

// Joint optimization loop. `train_split` and `valid_split` must already be
// standardized with the training statistics. Model selection follows the
// stabilization rule: best validation accuracy among epochs at or after the
// freeze epoch, falling back to best overall if the layout never froze.
template <class R>
TrainResult<R> train(Model<R>& model, const TrainConfig& cfg, const FeatureMatrix& train_split,
                     const FeatureMatrix& valid_split) {
    const int n = train_split.n();
    const int g = train_split.g();
    if (n == 0) throw InputError("train: empty training split");
    {
        std::vector<int> seen(model.config().classes, 0);
        for (int y : train_split.labels) seen[y] = 1;
        for (int c = 0; c < model.config().classes; ++c)
            if (!seen[c])
                throw InputError("train: class " + std::to_string(c) +
                                 " has no training samples");
    }

    auto& coords_param = *model.params().find("coords");
    LayoutState layout_state;
    layout_state.patience = cfg.patience;
    layout_state.velocity_threshold = cfg.velocity_threshold;

    AdamState<R> adam(model.params(), cfg.lr);
    SampleWorkspace<R> ws;
    model.prepare(ws);

    TrainResult<R> result;
    result.best_params = model.params(); // structure template; values overwritten on selection

    std::vector<R> x(g);
    std::vector<R> d_logits(model.config().classes);
    std::vector<R> prev_coords(coords_param.value);
    std::vector<int> indices(n);
    std::iota(indices.begin(), indices.end(), 0);

    int best_overall_epoch = -1, best_post_freeze_epoch = -1;
    double best_overall_acc = -1.0, best_post_freeze_acc = -1.0;
    ParamSet<R> best_overall = model.params();
    ParamSet<R> best_post_freeze = model.params();

    long step = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        prev_coords = coords_param.value;
        Rng shuffle_rng(substream(cfg.seed, stream_tag::shuffle, (uint64_t)epoch));
        shuffle(indices, shuffle_rng);

        double epoch_loss = 0.0;
        int n_batches = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++step) {
            const int bsz = std::min(cfg.batch_size, n - start);
            const GridSpec grid = model.current_grid();
            model.params().zero_grad();

            double ce_sum = 0.0;
            for (int b = 0; b < bsz; ++b) {
                const int row = indices[start + b];
                for (int c = 0; c < g; ++c) x[c] = (R)train_split.at(row, c);
                Rng drop_rng(
                    substream(cfg.seed, stream_tag::dropout, (uint64_t)epoch, (uint64_t)row));
                const R* logits = model.forward_sample(x.data(), grid, true, &drop_rng, ws);
                ce_sum += ce_label_smoothing(logits, model.config().classes,
                                             train_split.labels[row], cfg.label_smoothing,
                                             d_logits.data());
                const R inv_b = (R)(1.0 / bsz);
                for (auto& v : d_logits) v *= inv_b;
                model.backward_sample(d_logits.data(), x.data(), grid, ws,
                                      !layout_state.frozen, nullptr);
            }

            const uint64_t repel_seed = substream(cfg.seed, stream_tag::repel, (uint64_t)step);
            const double l_layout =
                layout_total_loss(coords_param.value.data(), g, cfg.repel_eps,
                                  cfg.repel_pair_budget, repel_seed);
            if (!layout_state.frozen)
                layout_total_loss_grad(coords_param.value.data(), g, cfg.repel_eps,
                                       coords_param.grad.data(), cfg.repel_pair_budget,
                                       repel_seed);

            const double batch_loss = ce_sum / bsz + l_layout;
            if (!std::isfinite(batch_loss))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step));
            epoch_loss += batch_loss;
            ++n_batches;

            adam_step(model.params(), adam);
        }

        const double v = velocity(coords_param.value.data(), prev_coords.data(), g);
        stabilization_update(layout_state, v, epoch);
        if (layout_state.frozen) coords_param.frozen = true;

        const Metrics vm = evaluate(model, valid_split);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / std::max(1, n_batches);
        rec.valid_acc = vm.accuracy;
        rec.velocity = v;
        rec.frozen = layout_state.frozen;
        result.history.push_back(rec);

        // ties prefer the later epoch: equal accuracy, more converged
        if (rec.valid_acc >= best_overall_acc) {
            best_overall_acc = rec.valid_acc;
            best_overall_epoch = epoch;
            best_overall.copy_values_from(model.params());
        }
        if (layout_state.frozen && rec.valid_acc >= best_post_freeze_acc) {
            best_post_freeze_acc = rec.valid_acc;
            best_post_freeze_epoch = epoch;
            best_post_freeze.copy_values_from(model.params());
        }
    }

    result.frozen_epoch = layout_state.frozen_epoch;
    if (best_post_freeze_epoch >= 0) {
        result.best_epoch = best_post_freeze_epoch;
        result.best_valid_acc = best_post_freeze_acc;
        result.best_params.copy_values_from(best_post_freeze);
    } else if (best_overall_epoch >= 0) {
        result.best_epoch = best_overall_epoch;
        result.best_valid_acc = best_overall_acc;
        result.best_params.copy_values_from(best_overall);
    }
    model.params().copy_values_from(result.best_params);
    return result;
}

// Stratified carve-out of a validation subset from training rows. Returns
// {fit_rows, valid_rows} as indices into `labels`.
inline std::pair<std::vector<int>, std::vector<int>>
carve_validation(const std::vector<int>& rows, const std::vector<int>& labels, double fraction,
                 uint64_t seed) {
    std::vector<std::vector<int>> by_class;
    for (int r : rows) {
        const int y = labels[r];
        if ((int)by_class.size() <= y) by_class.resize(y + 1);
        by_class[y].push_back(r);
    }
    std::vector<int> fit, valid;
    for (size_t c = 0; c < by_class.size(); ++c) {
        auto idx = by_class[c];
        if (idx.empty()) continue;
        Rng rng(substream(seed, stream_tag::valid, (uint64_t)c));
        shuffle(idx, rng);
        int take = (int)std::llround(fraction * (double)idx.size());
        take = std::clamp(take, 1, (int)idx.size() - 1);
        for (size_t j = 0; j < idx.size(); ++j)
            (j < (size_t)take ? valid : fit).push_back(idx[j]);
    }
    std::sort(fit.begin(), fit.end());
    std::sort(valid.begin(), valid.end());
    return {fit, valid};
}

template <class R>
struct FoldOutcome {
    int fold = 0;
    Metrics test_metrics;
    TrainResult<R> training;
    ColumnStats stats;
    std::vector<int> test_rows, fit_rows, valid_rows;
};

struct MetricSummary {
    double mean_accuracy = 0, std_accuracy = 0;
    double mean_macro_f1 = 0, std_macro_f1 = 0;
    double mean_macro_sensitivity = 0, std_macro_sensitivity = 0;
    double mean_macro_specificity = 0, std_macro_specificity = 0;
};

inline MetricSummary summarize(const std::vector<Metrics>& folds) {
    const auto stats = [&](auto field) {
        double mean = 0;
        for (const auto& m : folds) mean += field(m);
        mean /= folds.size();
        double var = 0;
        for (const auto& m : folds) {
            const double d = field(m) - mean;
            var += d * d;
        }
        return std::pair<double, double>{mean, std::sqrt(var / folds.size())};
    };
    MetricSummary s;
    std::tie(s.mean_accuracy, s.std_accuracy) =
        stats([](const Metrics& m) { return m.accuracy; });
    std::tie(s.mean_macro_f1, s.std_macro_f1) =
        stats([](const Metrics& m) { return m.macro_f1; });
    std::tie(s.mean_macro_sensitivity, s.std_macro_sensitivity) =
        stats([](const Metrics& m) { return m.macro_sensitivity; });
    std::tie(s.mean_macro_specificity, s.std_macro_specificity) =
        stats([](const Metrics& m) { return m.macro_specificity; });
    return s;
}

// K rounds of train/evaluate, each fitting standardization on its own
// training rows. `data` holds raw (unstandardized) values.
template <class R>
std::vector<FoldOutcome<R>> cross_validate(const FeatureMatrix& data, const TrainConfig& cfg) {
    const FoldAssignment fa = stratified_folds(data.labels, cfg.folds, cfg.seed);
    std::vector<FoldOutcome<R>> outcomes;
    for (int fold = 0; fold < cfg.folds; ++fold) {
        FoldOutcome<R> out;
        out.fold = fold;
        out.test_rows = fa.test_indices(fold);
        const auto train_rows = fa.train_indices(fold);
        std::tie(out.fit_rows, out.valid_rows) =
            carve_validation(train_rows, data.labels, cfg.valid_fraction,
                             substream(cfg.seed, stream_tag::valid, (uint64_t)fold));

        auto fit_raw = data.rows(out.fit_rows);
        auto [fit_std, stats] = standardize(fit_raw);
        out.stats = stats;
        auto [valid_std, s1] = standardize(data.rows(out.valid_rows), stats);
        auto [test_std, s2] = standardize(data.rows(out.test_rows), stats);

        Model<R> model(cfg.model_config(data.g(), data.classes()),
                       substream(cfg.seed, stream_tag::init, (uint64_t)fold));
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = substream(cfg.seed, stream_tag::init, 1000 + (uint64_t)fold);
        out.training = train(model, fold_cfg, fit_std, valid_std);
        out.test_metrics = evaluate(model, test_std);
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

} // namespace dynomap
