#pragma once

#include <string>
#include <vector>

#include "dynomap/params.hpp"

namespace dynomap {

// Flat binary parameter container with a JSON manifest:
//   bytes 0..7   magic "DYNOCKPT"
//   bytes 8..15  manifest length (LE u64)
//   manifest     JSON: dtype, entries [{name, shape, offset, count}], meta
//   payload      raw little-endian values, in manifest order
// `meta` is an opaque JSON blob owned by the caller (model config, class
// names, fitted statistics, ...).

struct CheckpointEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values; // interchange in double; payload uses dtype
};

struct CheckpointData {
    std::string dtype; // "f32" or "f64"
    std::vector<CheckpointEntry> entries;
    std::string meta_json;

    const CheckpointEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

template <class R>
CheckpointData checkpoint_from_params(const ParamSet<R>& params, std::string meta_json) {
    CheckpointData data;
    data.dtype = sizeof(R) == 4 ? "f32" : "f64";
    data.meta_json = std::move(meta_json);
    for (size_t i = 0; i < params.count(); ++i) {
        const auto& p = params[i];
        CheckpointEntry e;
        e.name = p.name;
        e.shape = p.shape;
        e.values.assign(p.value.begin(), p.value.end());
        data.entries.push_back(std::move(e));
    }
    return data;
}

template <class R>
void params_from_checkpoint(const CheckpointData& data, ParamSet<R>& params) {
    for (size_t i = 0; i < params.count(); ++i) {
        auto& p = params[i];
        const auto* e = data.find(p.name);
        if (!e) throw InputError("checkpoint: missing parameter '" + p.name + "'");
        if (e->values.size() != p.value.size())
            throw InputError("checkpoint: size mismatch for parameter '" + p.name + "'");
        for (size_t j = 0; j < p.value.size(); ++j) p.value[j] = (R)e->values[j];
    }
}

} // namespace dynomap
