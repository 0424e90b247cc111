// dynomap: tabular-to-image representation learning CLI.
//
// Subcommands wire the library into reproducible runs: every run writes its
// exact configuration to the output directory before computing anything, and
// rerunning from that file reproduces the artifacts bit for bit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dynomap/attribution.hpp"
#include "dynomap/checkpoint.hpp"
#include "dynomap/dataset.hpp"
#include "dynomap/image_io.hpp"
#include "dynomap/plots.hpp"
#include "dynomap/spatial_stats.hpp"
#include "dynomap/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dynomap;

namespace {

using Real = float; // training scalar; verification suites instantiate double

struct RunConfig {
    std::string command;
    std::string data, label, out;
    std::string delimiter = ",";
    int hvg = 0;
    int folds = 5;
    uint64_t seed = 0;
    int pixels = 64;
    double padding = 1.0;
    int batch = 16;
    int epochs = 1000;
    double lr = 1e-3;
    double label_smoothing = 0.1;
    int patience = 15;
    double velocity_threshold = 0.002;
    double valid_fraction = 0.1;
    std::vector<int> conv_filters{16, 32, 64};
    int head_hidden = 64;
    double dropout = 0.5;
    bool diag_gate = false;
    double render_cutoff = 0.0;

    json to_json() const {
        json j;
        j["command"] = command;
        j["data"] = data;
        j["label"] = label;
        j["out"] = out;
        j["delimiter"] = delimiter;
        j["hvg"] = hvg;
        j["folds"] = folds;
        j["seed"] = seed;
        j["pixels"] = pixels;
        j["padding"] = padding;
        j["batch"] = batch;
        j["epochs"] = epochs;
        j["lr"] = lr;
        j["label_smoothing"] = label_smoothing;
        j["patience"] = patience;
        j["velocity_threshold"] = velocity_threshold;
        j["valid_fraction"] = valid_fraction;
        j["conv_filters"] = conv_filters;
        j["head_hidden"] = head_hidden;
        j["dropout"] = dropout;
        j["diag_gate"] = diag_gate;
        j["render_cutoff"] = render_cutoff;
        return j;
    }

    static RunConfig from_json(const json& j) {
        RunConfig c;
        c.command = j.value("command", "train");
        c.data = j.at("data").get<std::string>();
        c.label = j.at("label").get<std::string>();
        c.out = j.value("out", "");
        c.delimiter = j.value("delimiter", ",");
        c.hvg = j.value("hvg", 0);
        c.folds = j.value("folds", 5);
        c.seed = j.value("seed", (uint64_t)0);
        c.pixels = j.value("pixels", 64);
        c.padding = j.value("padding", 1.0);
        c.batch = j.value("batch", 16);
        c.epochs = j.value("epochs", 1000);
        c.lr = j.value("lr", 1e-3);
        c.label_smoothing = j.value("label_smoothing", 0.1);
        c.patience = j.value("patience", 15);
        c.velocity_threshold = j.value("velocity_threshold", 0.002);
        c.valid_fraction = j.value("valid_fraction", 0.1);
        c.conv_filters = j.value("conv_filters", std::vector<int>{16, 32, 64});
        c.head_hidden = j.value("head_hidden", 64);
        c.dropout = j.value("dropout", 0.5);
        c.diag_gate = j.value("diag_gate", false);
        c.render_cutoff = j.value("render_cutoff", 0.0);
        return c;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.lr = lr;
        t.batch_size = batch;
        t.max_epochs = epochs;
        t.patience = patience;
        t.velocity_threshold = velocity_threshold;
        t.pixels = pixels;
        t.padding = padding;
        t.label_smoothing = label_smoothing;
        t.seed = seed;
        t.folds = folds;
        t.valid_fraction = valid_fraction;
        t.conv_filters = conv_filters;
        t.head_hidden = head_hidden;
        t.dropout = dropout;
        t.diagonal_gate = diag_gate;
        t.render_cutoff = render_cutoff;
        return t;
    }
};

char parse_delimiter(const std::string& s) {
    if (s == "tab" || s == "\\t" || s == "\t") return '\t';
    if (s.size() != 1) throw InputError("delimiter must be a single character or 'tab'");
    return s[0];
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt(float v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", (double)v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f << text;
}

json metrics_to_json(const Metrics& m, const std::vector<std::string>& class_names) {
    json j;
    j["accuracy"] = m.accuracy;
    j["macro_f1"] = m.macro_f1;
    j["macro_sensitivity"] = m.macro_sensitivity;
    j["macro_specificity"] = m.macro_specificity;
    j["class_names"] = class_names;
    j["confusion"] = m.confusion;
    json per;
    for (size_t c = 0; c < class_names.size(); ++c) {
        json pc;
        pc["precision"] = m.per_class_precision[c];
        pc["recall"] = m.per_class_recall[c];
        pc["specificity"] = m.per_class_specificity[c];
        pc["f1"] = m.per_class_f1[c];
        pc["zero_division"] = (bool)m.zero_division_flag[c];
        per[class_names[c]] = std::move(pc);
    }
    j["per_class"] = std::move(per);
    json curves;
    for (size_t c = 0; c < class_names.size(); ++c) {
        json pr = json::array(), roc = json::array();
        for (const auto& pt : m.pr_curves[c]) pr.push_back({pt.x, pt.y});
        for (const auto& pt : m.roc_curves[c]) roc.push_back({pt.x, pt.y});
        curves[class_names[c]] = {{"pr", std::move(pr)}, {"roc", std::move(roc)}};
    }
    j["curves"] = std::move(curves);
    return j;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
    std::string text = "epoch,train_loss,valid_acc,velocity,frozen\n";
    for (const auto& r : history) {
        text += std::to_string(r.epoch) + ',' + fmt(r.train_loss) + ',' + fmt(r.valid_acc) +
                ',' + fmt(r.velocity) + ',' + (r.frozen ? "1" : "0") + '\n';
    }
    write_text(path, text);
}

template <class R>
void write_layout_csv(const fs::path& path, const ParamSet<R>& params,
                      const std::vector<std::string>& feature_names, int frozen_epoch) {
    const auto* coords = params.find("coords");
    std::string text = "feature_name,x,y,frozen_epoch\n";
    for (size_t i = 0; i < feature_names.size(); ++i) {
        text += feature_names[i] + ',' + fmt(coords->value[2 * i]) + ',' +
                fmt(coords->value[2 * i + 1]) + ',' + std::to_string(frozen_epoch) + '\n';
    }
    write_text(path, text);
}

json scaler_to_json(const ColumnStats& stats) {
    json j;
    j["feature_names"] = stats.feature_names;
    j["mu"] = stats.mu;
    j["sigma"] = stats.sigma;
    return j;
}

ColumnStats scaler_from_json(const json& j) {
    ColumnStats s;
    s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    s.mu = j.at("mu").get<std::vector<double>>();
    s.sigma = j.at("sigma").get<std::vector<double>>();
    return s;
}

ModelConfig model_config_from_meta(const json& meta) {
    const auto& jm = meta.at("model");
    ModelConfig mc;
    mc.g = jm.at("g").get<int>();
    mc.p = jm.at("p").get<int>();
    mc.classes = jm.at("classes").get<int>();
    mc.padding = jm.at("padding").get<double>();
    mc.label_smoothing = jm.at("label_smoothing").get<double>();
    mc.backbone.blocks.clear();
    for (const auto& b : jm.at("backbone"))
        mc.backbone.blocks.push_back({b.at("filters").get<int>(), b.at("pool").get<bool>()});
    mc.head_hidden = jm.at("head_hidden").get<int>();
    mc.dropout = jm.at("dropout").get<double>();
    mc.diagonal_gate = jm.at("diagonal_gate").get<bool>();
    mc.render_cutoff_sigmas = jm.at("render_cutoff").get<double>();
    mc.repel_eps = jm.at("repel_eps").get<double>();
    mc.repel_pair_budget = jm.at("repel_pair_budget").get<int>();
    return mc;
}

json model_config_to_meta(const ModelConfig& mc) {
    json jm;
    jm["g"] = mc.g;
    jm["p"] = mc.p;
    jm["classes"] = mc.classes;
    jm["padding"] = mc.padding;
    jm["label_smoothing"] = mc.label_smoothing;
    json blocks = json::array();
    for (const auto& b : mc.backbone.blocks)
        blocks.push_back({{"filters", b.filters}, {"pool", b.pool}});
    jm["backbone"] = std::move(blocks);
    jm["head_hidden"] = mc.head_hidden;
    jm["dropout"] = mc.dropout;
    jm["diagonal_gate"] = mc.diagonal_gate;
    jm["render_cutoff"] = mc.render_cutoff_sigmas;
    jm["repel_eps"] = mc.repel_eps;
    jm["repel_pair_budget"] = mc.repel_pair_budget;
    return jm;
}

// Loaded checkpoint plus the reconstructed model.
struct LoadedModel {
    ModelConfig cfg;
    Model<Real> model;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    ColumnStats scaler;
    std::string label_column;
    int frozen_epoch = -1;
};

LoadedModel load_model(const std::string& checkpoint_path) {
    const auto data = read_checkpoint(checkpoint_path);
    const auto meta = json::parse(data.meta_json);
    ModelConfig cfg = model_config_from_meta(meta);
    LoadedModel lm{cfg, Model<Real>(cfg, 0), {}, {}, {}, "", -1};
    params_from_checkpoint(data, lm.model.params());
    lm.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
    lm.class_names = meta.at("class_names").get<std::vector<std::string>>();
    lm.scaler = scaler_from_json(meta.at("scaler"));
    lm.label_column = meta.value("label_column", "");
    lm.frozen_epoch = meta.value("frozen_epoch", -1);
    return lm;
}

FeatureMatrix load_aligned(const LoadedModel& lm, const std::string& data_path,
                           const std::string& label, char delimiter) {
    auto raw = load_table(data_path, label, delimiter);
    auto selected = select_features(raw, lm.feature_names);
    auto [standardized, stats] = standardize(selected, lm.scaler);
    return std::move(standardized);
}

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg) {
    const fs::path out(cfg.out);
    fs::create_directories(out);
    write_text(out / "config.json", cfg.to_json().dump(2) + "\n");

    auto table = load_table(cfg.data, cfg.label, parse_delimiter(cfg.delimiter));
    if (cfg.hvg > 0) table = select_hvg(table, cfg.hvg);
    std::printf("loaded %d samples, %d features, %d classes\n", table.n(), table.g(),
                table.classes());

    const TrainConfig tc = cfg.train_config();
    const auto outcomes = cross_validate<Real>(table, tc);

    std::vector<Metrics> fold_metrics;
    for (const auto& fo : outcomes) {
        const fs::path fold_dir = out / ("fold_" + std::to_string(fo.fold));
        fs::create_directories(fold_dir);

        json meta;
        meta["model"] = model_config_to_meta(tc.model_config(table.g(), table.classes()));
        meta["feature_names"] = table.feature_names;
        meta["class_names"] = table.class_names;
        meta["scaler"] = scaler_to_json(fo.stats);
        meta["label_column"] = cfg.label;
        meta["frozen_epoch"] = fo.training.frozen_epoch;
        meta["best_epoch"] = fo.training.best_epoch;
        meta["seed"] = cfg.seed;
        meta["fold"] = fo.fold;
        write_checkpoint((fold_dir / "checkpoint.bin").string(),
                         checkpoint_from_params(fo.training.best_params, meta.dump()));

        write_history_csv(fold_dir / "history.csv", fo.training.history);
        write_layout_csv(fold_dir / "layout.csv", fo.training.best_params,
                         table.feature_names, fo.training.frozen_epoch);
        write_text(fold_dir / "scaler.json", scaler_to_json(fo.stats).dump(2) + "\n");
        write_text(fold_dir / "metrics.json",
                   metrics_to_json(fo.test_metrics, table.class_names).dump(2) + "\n");
        fold_metrics.push_back(fo.test_metrics);
        std::printf("fold %d: accuracy %.4f macro_f1 %.4f (frozen at epoch %d)\n", fo.fold,
                    fo.test_metrics.accuracy, fo.test_metrics.macro_f1,
                    fo.training.frozen_epoch);
    }

    const auto summary = summarize(fold_metrics);
    json js;
    js["folds"] = cfg.folds;
    js["mean_accuracy"] = summary.mean_accuracy;
    js["std_accuracy"] = summary.std_accuracy;
    js["mean_macro_f1"] = summary.mean_macro_f1;
    js["std_macro_f1"] = summary.std_macro_f1;
    js["mean_macro_sensitivity"] = summary.mean_macro_sensitivity;
    js["std_macro_sensitivity"] = summary.std_macro_sensitivity;
    js["mean_macro_specificity"] = summary.mean_macro_specificity;
    js["std_macro_specificity"] = summary.std_macro_specificity;
    write_text(out / "summary.json", js.dump(2) + "\n");
    std::printf("mean accuracy %.4f +/- %.4f, mean macro_f1 %.4f +/- %.4f\n",
                summary.mean_accuracy, summary.std_accuracy, summary.mean_macro_f1,
                summary.std_macro_f1);
    return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& data_path,
               const std::string& samples_arg, int per_class, const std::string& out_dir,
               const std::string& delimiter) {
    auto lm = load_model(checkpoint);
    if (lm.label_column.empty())
        throw InputError("checkpoint does not record a label column");
    const auto data = load_aligned(lm, data_path, lm.label_column, parse_delimiter(delimiter));

    std::vector<int> rows;
    if (!samples_arg.empty()) {
        std::map<std::string, int> by_id;
        for (int i = 0; i < data.n(); ++i) by_id[data.sample_ids[i]] = i;
        size_t start = 0;
        while (start <= samples_arg.size()) {
            const size_t pos = samples_arg.find(',', start);
            const std::string id = samples_arg.substr(
                start, pos == std::string::npos ? std::string::npos : pos - start);
            if (!id.empty()) {
                const auto it = by_id.find(id);
                if (it == by_id.end()) throw InputError("unknown sample id '" + id + "'");
                rows.push_back(it->second);
            }
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
    } else if (per_class > 0) {
        std::vector<int> taken((size_t)data.classes(), 0);
        for (int i = 0; i < data.n(); ++i)
            if (taken[data.labels[i]] < per_class) {
                rows.push_back(i);
                taken[data.labels[i]] += 1;
            }
    }
    if (rows.empty()) {
        std::printf("no samples requested; nothing to render\n");
        return 0;
    }

    const fs::path out(out_dir);
    const GridSpec grid = lm.model.current_grid();
    SampleWorkspace<Real> ws;
    lm.model.prepare(ws);
    std::vector<Real> x(data.g());
    for (int r : rows) {
        for (int c = 0; c < data.g(); ++c) x[c] = (Real)data.at(r, c);
        lm.model.forward_sample(x.data(), grid, false, nullptr, ws);
        const fs::path dir = out / lm.class_names[data.labels[r]];
        fs::create_directories(dir);
        std::vector<double> img(ws.image_std.begin(), ws.image_std.end());
        const std::string stem = "sample_" + data.sample_ids[r];
        write_png_gray8((dir / (stem + ".png")).string(), to_gray8(img), lm.cfg.p, lm.cfg.p);
        write_matrix_csv((dir / (stem + ".csv")).string(), img, lm.cfg.p, lm.cfg.p);
    }
    std::printf("rendered %zu samples into %s\n", rows.size(), out_dir.c_str());
    return 0;
}

int cmd_attribute(const std::string& checkpoint, const std::string& data_path, int m,
                  const std::string& classes_arg, int forced_target,
                  const std::string& out_dir, const std::string& delimiter) {
    auto lm = load_model(checkpoint);
    const auto data = load_aligned(lm, data_path, lm.label_column, parse_delimiter(delimiter));
    const fs::path out(out_dir);
    fs::create_directories(out);

    std::set<std::string> wanted;
    if (!classes_arg.empty()) {
        size_t start = 0;
        while (start <= classes_arg.size()) {
            const size_t pos = classes_arg.find(',', start);
            const std::string name = classes_arg.substr(
                start, pos == std::string::npos ? std::string::npos : pos - start);
            if (!name.empty()) wanted.insert(name);
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        for (const auto& name : wanted)
            if (std::find(lm.class_names.begin(), lm.class_names.end(), name) ==
                lm.class_names.end())
                throw InputError("unknown class '" + name + "'");
    }

    const GridSpec grid = lm.model.current_grid();
    const int g = data.g();

    // IG per sample, target = predicted class (or the forced one); aggregate
    // |IG| by the sample's true class.
    const auto scores = predict_scores(lm.model, data);
    std::vector<std::vector<AttributionVector>> by_class(lm.class_names.size());
    std::vector<double> xs(g);
    for (int i = 0; i < data.n(); ++i) {
        const std::string& cname = lm.class_names[data.labels[i]];
        if (!wanted.empty() && !wanted.count(cname)) continue;
        int target = forced_target;
        if (target < 0) {
            target = 0;
            for (int c = 1; c < (int)scores[i].size(); ++c)
                if (scores[i][c] > scores[i][target]) target = c;
        }
        for (int c = 0; c < g; ++c) xs[c] = data.at(i, c);
        auto ig = integrated_gradients(lm.model, xs, target, m, grid);
        ig.tag = data.sample_ids[i];
        by_class[data.labels[i]].push_back(std::move(ig));
    }

    std::vector<ClassProfile> profiles(lm.class_names.size());
    std::string csv = "feature,class,mean_abs_ig,normalized\n";
    for (size_t c = 0; c < lm.class_names.size(); ++c) {
        if (by_class[c].empty()) continue;
        profiles[c] = class_profile(by_class[c], g);
        profiles[c].class_name = lm.class_names[c];
        for (int i = 0; i < g; ++i)
            csv += data.feature_names[i] + ',' + lm.class_names[c] + ',' +
                   fmt(profiles[c].mean_abs[i]) + ',' + fmt(profiles[c].normalized[i]) + '\n';
    }
    write_text(out / "attributions.csv", csv);

    // heatmap over the top features by any-class normalized attribution
    {
        std::vector<int> order(g);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> peak(g, 0.0);
        for (size_t c = 0; c < profiles.size(); ++c) {
            if (profiles[c].normalized.empty()) continue;
            for (int i = 0; i < g; ++i) peak[i] = std::max(peak[i], profiles[c].normalized[i]);
        }
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (peak[a] != peak[b]) return peak[a] > peak[b];
            return a < b;
        });
        const int top = std::min(g, 30);
        std::vector<std::vector<double>> cells;
        std::vector<std::string> row_labels, col_labels;
        for (size_t c = 0; c < profiles.size(); ++c) {
            if (profiles[c].normalized.empty()) continue;
            row_labels.push_back(lm.class_names[c]);
            std::vector<double> row;
            for (int j = 0; j < top; ++j) row.push_back(profiles[c].normalized[order[j]]);
            cells.push_back(std::move(row));
        }
        for (int j = 0; j < top; ++j) col_labels.push_back(data.feature_names[order[j]]);
        if (!cells.empty())
            plot_heatmap((out / "heatmap.png").string(), cells, row_labels, col_labels,
                         "NORMALIZED MEAN ABS IG");
    }

    // binary task: signed differential profile, positive favors class_names[1]
    if (lm.class_names.size() == 2 && !profiles[0].normalized.empty() &&
        !profiles[1].normalized.empty()) {
        const auto delta = delta_profile(profiles[1].normalized, profiles[0].normalized);
        std::string dcsv = "feature,delta,positive_class\n";
        for (int i = 0; i < g; ++i)
            dcsv += data.feature_names[i] + ',' + fmt(delta[i]) + ',' + lm.class_names[1] + '\n';
        write_text(out / "delta.csv", dcsv);

        std::vector<int> order(g);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (std::abs(delta[a]) != std::abs(delta[b]))
                return std::abs(delta[a]) > std::abs(delta[b]);
            return a < b;
        });
        const int top = std::min(g, 25);
        std::vector<std::string> names;
        std::vector<double> values;
        for (int j = 0; j < top; ++j) {
            names.push_back(data.feature_names[order[j]]);
            values.push_back(delta[order[j]]);
        }
        plot_butterfly((out / "butterfly.png").string(), names, values, lm.class_names[1],
                       lm.class_names[0], "DELTA ABS IG");
    }

    // completeness bookkeeping for the run
    {
        json j;
        j["ig_steps"] = m;
        j["rule"] = "midpoint";
        double worst = 0;
        long count = 0;
        json residuals = json::array();
        for (size_t c = 0; c < by_class.size(); ++c)
            for (const auto& ig : by_class[c]) {
                worst = std::max(worst, ig.completeness_residual);
                ++count;
                residuals.push_back({{"id", ig.tag},
                                     {"class", lm.class_names[c]},
                                     {"residual", ig.completeness_residual}});
            }
        j["samples"] = count;
        j["max_completeness_residual"] = worst;
        j["residuals"] = std::move(residuals);
        write_text(out / "attribution_meta.json", j.dump(2) + "\n");
    }
    std::printf("attributed %d samples (m=%d) into %s\n", data.n(), m, out_dir.c_str());
    return 0;
}

std::pair<std::vector<std::string>, std::vector<double>>
read_layout_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open layout csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty layout csv: " + path);
    std::vector<std::string> names;
    std::vector<double> coords;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        const auto c3 = line.find(',', c2 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw InputError("malformed layout csv row: " + line);
        names.push_back(line.substr(0, c1));
        coords.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        coords.push_back(std::stod(
            line.substr(c2 + 1, c3 == std::string::npos ? std::string::npos : c3 - c2 - 1)));
    }
    return {names, coords};
}

int cmd_stats(const std::string& checkpoint, const std::string& attributions_path, int k,
              double q, int n_perm, uint64_t seed, const std::string& out_dir) {
    auto lm = load_model(checkpoint);
    const fs::path out(out_dir);
    fs::create_directories(out);

    // per-class mean |IG| keyed by (class, feature)
    std::ifstream in(attributions_path);
    if (!in) throw InputError("cannot open attributions: " + attributions_path);
    std::map<std::string, std::map<std::string, double>> table;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1),
                   c3 = line.find(',', c2 + 1);
        if (c3 == std::string::npos) throw InputError("malformed attributions row: " + line);
        const std::string feature = line.substr(0, c1);
        const std::string cls = line.substr(c1 + 1, c2 - c1 - 1);
        table[cls][feature] = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
    }

    const int n = lm.cfg.g;
    std::vector<double> coords(2 * n);
    const auto* cp = lm.model.params().find("coords");
    for (int i = 0; i < 2 * n; ++i) coords[i] = (double)cp->value[i];
    const auto w = knn_weights(coords, n, k);

    json js;
    js["k"] = k;
    js["q"] = q;
    js["n_perm"] = n_perm;
    js["seed"] = seed;
    json classes;
    for (const auto& [cls, by_feature] : table) {
        std::vector<double> a(n);
        for (int i = 0; i < n; ++i) {
            const auto it = by_feature.find(lm.feature_names[i]);
            if (it == by_feature.end())
                throw InputError("attributions are missing feature '" + lm.feature_names[i] +
                                 "' for class '" + cls + "'");
            a[i] = it->second;
        }
        const auto mi = morans_null(a, w, n_perm, substream(seed, 0xA, 0));
        const auto co = coherence_null(coords, n, a, k, q, n_perm, substream(seed, 0xA, 1));
        const auto null_json = [](const NullSummary& s) {
            json j;
            j["observed"] = s.observed;
            j["null_mean"] = s.null_mean;
            j["null_std"] = s.null_std;
            j["p_value"] = s.p_value;
            j["n_perm"] = s.n_perm;
            return j;
        };
        classes[cls] = {{"morans_i", null_json(mi)}, {"knn_purity", null_json(co)}};
        plot_null_histogram((out / ("morans_" + cls + ".png")).string(), mi.null_values,
                            mi.observed, "MORANS I: " + cls);
        plot_null_histogram((out / ("purity_" + cls + ".png")).string(), co.null_values,
                            co.observed, "KNN PURITY: " + cls);
        std::printf("%s: morans_i %.4f (null %.4f +/- %.4f, p %.4g), purity %.4f (null %.4f "
                    "+/- %.4f, p %.4g)\n",
                    cls.c_str(), mi.observed, mi.null_mean, mi.null_std, mi.p_value,
                    co.observed, co.null_mean, co.null_std, co.p_value);
    }
    js["classes"] = std::move(classes);
    write_text(out / "spatial_stats.json", js.dump(2) + "\n");
    return 0;
}

int cmd_compare(const std::vector<std::string>& layout_paths, const std::string& report_path,
                const std::string& consensus_path) {
    if (layout_paths.size() < 2) throw InputError("compare needs at least two layouts");
    std::vector<std::vector<double>> layouts;
    std::vector<std::string> names;
    for (const auto& path : layout_paths) {
        auto [ns, coords] = read_layout_csv(path);
        if (layouts.empty()) {
            names = ns;
        } else if (ns != names) {
            throw InputError("layout feature names differ between " + layout_paths[0] +
                             " and " + path);
        }
        layouts.push_back(std::move(coords));
    }
    const int n = (int)names.size();
    std::string csv = "layout_a,layout_b,procrustes_distance\n";
    for (size_t i = 0; i < layouts.size(); ++i)
        for (size_t j = i + 1; j < layouts.size(); ++j) {
            const auto res = procrustes_distance(layouts[i], layouts[j], n);
            csv += layout_paths[i] + ',' + layout_paths[j] + ',' + fmt(res.distance) + '\n';
        }
    write_text(report_path, csv);
    if (!consensus_path.empty()) {
        const auto mean = consensus_layout(layouts, n);
        std::string ccsv = "feature_name,x,y\n";
        for (int i = 0; i < n; ++i)
            ccsv += names[i] + ',' + fmt(mean[2 * i]) + ',' + fmt(mean[2 * i + 1]) + '\n';
        write_text(consensus_path, ccsv);
    }
    std::printf("compared %zu layouts -> %s\n", layouts.size(), report_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynomap: learned 2D image representations of tabular data"};
    app.require_subcommand(1);

    auto* train_cmd = app.add_subcommand("train", "K-fold cross-validated training run");
    RunConfig cfg;
    cfg.command = "train";
    std::string config_path;
    train_cmd->add_option("--config", config_path, "rerun from a saved config.json");
    auto* opt_data = train_cmd->add_option("--data", cfg.data, "input CSV/TSV table");
    auto* opt_label = train_cmd->add_option("--label", cfg.label, "label column name");
    auto* opt_out = train_cmd->add_option("--out", cfg.out, "output directory");
    auto* opt_seed = train_cmd->add_option("--seed", cfg.seed, "run seed");
    train_cmd->add_option("--delimiter", cfg.delimiter, "cell delimiter (or 'tab')");
    train_cmd->add_option("--hvg", cfg.hvg, "keep top-N features by variance (0 = all)");
    train_cmd->add_option("--folds", cfg.folds, "cross-validation folds");
    train_cmd->add_option("--pixels", cfg.pixels, "image resolution P");
    train_cmd->add_option("--padding", cfg.padding, "grid padding in layout units");
    train_cmd->add_option("--batch", cfg.batch, "mini-batch size");
    train_cmd->add_option("--epochs", cfg.epochs, "max training epochs");
    train_cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    train_cmd->add_option("--label-smoothing", cfg.label_smoothing, "CE label smoothing");
    train_cmd->add_option("--patience", cfg.patience, "freeze patience (epochs)");
    train_cmd->add_option("--velocity-threshold", cfg.velocity_threshold,
                          "freeze velocity threshold");
    train_cmd->add_option("--valid-fraction", cfg.valid_fraction,
                          "validation share carved from the training split");
    train_cmd->add_option("--conv-filters", cfg.conv_filters, "backbone filter counts");
    train_cmd->add_option("--head-hidden", cfg.head_hidden, "head hidden width");
    train_cmd->add_option("--dropout", cfg.dropout, "head dropout rate");
    train_cmd->add_flag("--diag-gate", cfg.diag_gate, "diagonal gating matrix");
    train_cmd->add_option("--cutoff", cfg.render_cutoff,
                          "kernel cutoff in sigmas (0 = exact)");

    auto* render_cmd = app.add_subcommand("render", "export learned image representations");
    std::string r_checkpoint, r_data, r_samples, r_out, r_delim = ",";
    int r_per_class = 0;
    render_cmd->add_option("--checkpoint", r_checkpoint)->required();
    render_cmd->add_option("--data", r_data)->required();
    render_cmd->add_option("--samples", r_samples, "comma-separated sample ids");
    render_cmd->add_option("--per-class", r_per_class, "first N samples of each class");
    render_cmd->add_option("--delimiter", r_delim);
    render_cmd->add_option("--out", r_out)->required();

    auto* attr_cmd = app.add_subcommand("attribute", "integrated-gradients attribution");
    std::string a_checkpoint, a_data, a_classes, a_out, a_delim = ",";
    int a_steps = 64, a_target = -1;
    attr_cmd->add_option("--checkpoint", a_checkpoint)->required();
    attr_cmd->add_option("--data", a_data)->required();
    attr_cmd->add_option("--ig-steps", a_steps, "Riemann steps m");
    attr_cmd->add_option("--classes", a_classes, "restrict to these true classes");
    attr_cmd->add_option("--target-class", a_target,
                         "attribute this logit instead of the predicted one");
    attr_cmd->add_option("--delimiter", a_delim);
    attr_cmd->add_option("--out", a_out)->required();

    auto* stats_cmd = app.add_subcommand("stats", "spatial statistics of attribution maps");
    std::string s_checkpoint, s_attr, s_out;
    int s_k = 10, s_perms = 1000;
    double s_q = 10.0;
    uint64_t s_seed = 0;
    stats_cmd->add_option("--checkpoint", s_checkpoint)->required();
    stats_cmd->add_option("--attributions", s_attr)->required();
    stats_cmd->add_option("--k", s_k, "spatial neighbors");
    stats_cmd->add_option("--q", s_q, "high-attribution percentile");
    stats_cmd->add_option("--perms", s_perms, "permutations");
    stats_cmd->add_option("--seed", s_seed);
    stats_cmd->add_option("--out", s_out)->required();

    auto* compare_cmd = app.add_subcommand("compare", "Procrustes comparison of layouts");
    std::vector<std::string> c_layouts;
    std::string c_report, c_consensus;
    compare_cmd->add_option("--layouts", c_layouts, "two or more layout.csv files")
        ->required()
        ->expected(-2);
    compare_cmd->add_option("--out", c_report, "pairwise report CSV")->required();
    compare_cmd->add_option("--consensus", c_consensus, "mean aligned layout CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        json err = {{"error", "usage"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    }

    try {
        if (train_cmd->parsed()) {
            if (!config_path.empty()) {
                std::ifstream in(config_path);
                if (!in) throw InputError("cannot open config: " + config_path);
                RunConfig loaded = RunConfig::from_json(json::parse(in));
                // explicit flags override the saved values
                if (opt_data->count()) loaded.data = cfg.data;
                if (opt_label->count()) loaded.label = cfg.label;
                if (opt_out->count()) loaded.out = cfg.out;
                if (opt_seed->count()) loaded.seed = cfg.seed;
                cfg = loaded;
            }
            if (cfg.data.empty() || cfg.label.empty() || cfg.out.empty())
                throw InputError("train requires --data, --label and --out");
            return cmd_train(cfg);
        }
        if (render_cmd->parsed())
            return cmd_render(r_checkpoint, r_data, r_samples, r_per_class, r_out, r_delim);
        if (attr_cmd->parsed())
            return cmd_attribute(a_checkpoint, a_data, a_steps, a_classes, a_target, a_out,
                                 a_delim);
        if (stats_cmd->parsed())
            return cmd_stats(s_checkpoint, s_attr, s_k, s_q, s_perms, s_seed, s_out);
        if (compare_cmd->parsed()) return cmd_compare(c_layouts, c_report, c_consensus);
    } catch (const InputError& e) {
        json err = {{"error", "input"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const NumericError& e) {
        json err = {{"error", "numeric"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    } catch (const std::exception& e) {
        json err = {{"error", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    }
    return 0;
}
