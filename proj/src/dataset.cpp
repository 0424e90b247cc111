#include "dynomap/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dynomap/rng.hpp"

namespace dynomap {

FeatureMatrix FeatureMatrix::rows(const std::vector<int>& idx) const {
    FeatureMatrix out;
    out.feature_names = feature_names;
    out.class_names = class_names;
    out.standardized = standardized;
    out.values.reserve(idx.size() * (size_t)g());
    for (int r : idx) {
        out.values.insert(out.values.end(), values.begin() + (size_t)r * g(),
                          values.begin() + (size_t)(r + 1) * g());
        out.sample_ids.push_back(sample_ids[r]);
        out.labels.push_back(labels[r]);
    }
    return out;
}

std::string ColumnStats::to_json() const {
    nlohmann::json j;
    j["feature_names"] = feature_names;
    j["mu"] = mu;
    j["sigma"] = sigma;
    return j.dump(2);
}

ColumnStats ColumnStats::from_json(const std::string& text) {
    ColumnStats s;
    auto j = nlohmann::json::parse(text);
    s.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    s.mu = j.at("mu").get<std::vector<double>>();
    s.sigma = j.at("sigma").get<std::vector<double>>();
    if (s.mu.size() != s.feature_names.size() || s.sigma.size() != s.feature_names.size())
        throw InputError("fitted statistics: mu/sigma lengths do not match feature names");
    return s;
}

std::vector<int> FoldAssignment::test_indices(int fold) const {
    std::vector<int> out;
    for (int i = 0; i < (int)fold_of_sample.size(); ++i)
        if (fold_of_sample[i] == fold) out.push_back(i);
    return out;
}

std::vector<int> FoldAssignment::train_indices(int fold) const {
    std::vector<int> out;
    for (int i = 0; i < (int)fold_of_sample.size(); ++i)
        if (fold_of_sample[i] != fold) out.push_back(i);
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    for (auto& s : out) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
        size_t b = s.find_first_not_of(' ');
        if (b != std::string::npos && b > 0) s.erase(0, b);
    }
    return out;
}

bool parse_number(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e && !s.empty();
}

} // namespace

FeatureMatrix load_table(const std::string& path, const std::string& label_column,
                         char delimiter) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open table: " + path);

    std::string line;
    if (!std::getline(in, line)) throw InputError("empty table: " + path);
    const auto header = split_line(line, delimiter);

    int label_col = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == label_column) {
            if (label_col >= 0) throw InputError("duplicate label column: " + label_column);
            label_col = (int)i;
        }
    }
    if (label_col < 0) throw InputError("label column '" + label_column + "' not found in header");

    {
        auto names = header;
        std::sort(names.begin(), names.end());
        auto dup = std::adjacent_find(names.begin(), names.end());
        if (dup != names.end()) throw InputError("duplicate header name: " + *dup);
    }

    FeatureMatrix m;
    for (size_t i = 0; i < header.size(); ++i)
        if ((int)i != label_col) m.feature_names.push_back(header[i]);

    std::vector<std::string> raw_labels;
    const int g = (int)m.feature_names.size();
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto cells = split_line(line, delimiter);
        if ((int)cells.size() != (int)header.size())
            throw InputError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        int col = 0;
        for (size_t i = 0; i < cells.size(); ++i) {
            if ((int)i == label_col) {
                raw_labels.push_back(cells[i]);
                continue;
            }
            double v;
            if (!parse_number(cells[i], v))
                throw InputError("row " + std::to_string(row) + ", column '" + header[i] +
                                 "': non-numeric cell '" + cells[i] + "'");
            if (!std::isfinite(v))
                throw NumericError("NonFiniteValue at row " + std::to_string(row) +
                                   ", column '" + header[i] + "'");
            m.values.push_back(v);
            ++col;
        }
        (void)col;
        m.sample_ids.push_back(std::to_string(row));
        ++row;
    }
    if (row == 0) throw InputError("table has no data rows: " + path);
    (void)g;

    auto classes = raw_labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    m.class_names = classes;
    m.labels.reserve(raw_labels.size());
    for (const auto& s : raw_labels) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), s);
        m.labels.push_back((int)(it - classes.begin()));
    }
    return m;
}

FeatureMatrix select_hvg(const FeatureMatrix& m, int n) {
    if (m.standardized) throw InputError("select_hvg expects raw (unstandardized) values");
    if (n > m.g()) throw InputError("select_hvg: n exceeds feature count");

    const int g = m.g();
    const int rows = m.n();
    std::vector<double> var(g, 0.0);
    for (int c = 0; c < g; ++c) {
        double mean = 0.0;
        for (int r = 0; r < rows; ++r) mean += m.at(r, c);
        mean /= rows;
        double acc = 0.0;
        for (int r = 0; r < rows; ++r) {
            const double d = m.at(r, c) - mean;
            acc += d * d;
        }
        var[c] = acc / rows;
    }

    std::vector<int> order;
    for (int c = 0; c < g; ++c)
        if (var[c] > 0.0) order.push_back(c);
    if (n > (int)order.size())
        throw InputError("select_hvg: n=" + std::to_string(n) + " exceeds " +
                         std::to_string(order.size()) + " nonzero-variance columns");
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return var[a] > var[b]; });
    order.resize(n);

    FeatureMatrix out;
    out.sample_ids = m.sample_ids;
    out.labels = m.labels;
    out.class_names = m.class_names;
    out.standardized = false;
    for (int c : order) out.feature_names.push_back(m.feature_names[c]);
    out.values.resize((size_t)rows * n);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j)
            out.values[(size_t)r * n + j] = m.at(r, order[j]);
    return out;
}

std::pair<FeatureMatrix, ColumnStats>
standardize(const FeatureMatrix& m, const std::optional<ColumnStats>& stats_from) {
    const int g = m.g();
    const int rows = m.n();

    ColumnStats stats;
    if (stats_from) {
        stats = *stats_from;
        if (stats.feature_names != m.feature_names)
            throw InputError("standardize: fitted statistics feature names do not match");
    } else {
        stats.feature_names = m.feature_names;
        stats.mu.resize(g);
        stats.sigma.resize(g);
        for (int c = 0; c < g; ++c) {
            double mean = 0.0;
            for (int r = 0; r < rows; ++r) mean += m.at(r, c);
            mean /= rows;
            double acc = 0.0;
            for (int r = 0; r < rows; ++r) {
                const double d = m.at(r, c) - mean;
                acc += d * d;
            }
            const double sd = std::sqrt(acc / rows);
            if (sd == 0.0)
                throw NumericError("standardize: zero-std column '" + m.feature_names[c] + "'");
            stats.mu[c] = mean;
            stats.sigma[c] = sd;
        }
    }

    FeatureMatrix out = m;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < g; ++c)
            out.at(r, c) = (m.at(r, c) - stats.mu[c]) / stats.sigma[c];
    out.standardized = true;
    return {std::move(out), std::move(stats)};
}

FeatureMatrix select_features(const FeatureMatrix& m, const std::vector<std::string>& names) {
    std::map<std::string, int> index;
    for (int c = 0; c < m.g(); ++c) index[m.feature_names[c]] = c;
    std::vector<int> cols;
    for (const auto& name : names) {
        const auto it = index.find(name);
        if (it == index.end())
            throw InputError("select_features: feature '" + name + "' not found in data");
        cols.push_back(it->second);
    }
    FeatureMatrix out;
    out.feature_names = names;
    out.sample_ids = m.sample_ids;
    out.labels = m.labels;
    out.class_names = m.class_names;
    out.standardized = m.standardized;
    out.values.resize((size_t)m.n() * names.size());
    for (int r = 0; r < m.n(); ++r)
        for (size_t j = 0; j < cols.size(); ++j)
            out.values[(size_t)r * names.size() + j] = m.at(r, cols[j]);
    return out;
}

FoldAssignment stratified_folds(const std::vector<int>& labels, int k, uint64_t seed) {
    if (k < 2) throw InputError("stratified_folds: K must be at least 2");
    const int n = (int)labels.size();
    const int classes = n ? 1 + *std::max_element(labels.begin(), labels.end()) : 0;

    std::vector<std::vector<int>> by_class(classes);
    for (int i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    for (int c = 0; c < classes; ++c)
        if ((int)by_class[c].size() < k)
            throw InputError("stratified_folds: class " + std::to_string(c) + " has " +
                             std::to_string(by_class[c].size()) + " samples, fewer than K=" +
                             std::to_string(k));

    FoldAssignment fa;
    fa.k = k;
    fa.seed = seed;
    fa.fold_of_sample.assign(n, -1);
    for (int c = 0; c < classes; ++c) {
        auto idx = by_class[c];
        Rng rng(substream(seed, stream_tag::folds, (uint64_t)c));
        shuffle(idx, rng);
        // Round-robin deal; the starting fold rotates per class so remainders
        // do not pile onto the low folds.
        for (size_t j = 0; j < idx.size(); ++j)
            fa.fold_of_sample[idx[j]] = (int)((j + c) % k);
    }
    return fa;
}

} // namespace dynomap
