#include "dynomap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace dynomap {

namespace {
constexpr char kMagic[8] = {'D', 'Y', 'N', 'O', 'C', 'K', 'P', 'T'};
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
    const bool f32 = data.dtype == "f32";
    if (!f32 && data.dtype != "f64")
        throw InputError("checkpoint: unknown dtype '" + data.dtype + "'");

    nlohmann::json manifest;
    manifest["dtype"] = data.dtype;
    manifest["meta"] = nlohmann::json::parse(data.meta_json.empty() ? "{}" : data.meta_json);
    uint64_t offset = 0;
    const size_t elem = f32 ? 4 : 8;
    auto& list = manifest["params"] = nlohmann::json::array();
    for (const auto& e : data.entries) {
        nlohmann::json j;
        j["name"] = e.name;
        j["shape"] = e.shape;
        j["offset"] = offset;
        j["count"] = e.values.size();
        list.push_back(std::move(j));
        offset += e.values.size() * elem;
    }
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("checkpoint: cannot write " + path);
    out.write(kMagic, 8);
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), (std::streamsize)text.size());
    for (const auto& e : data.entries) {
        if (f32) {
            std::vector<float> buf(e.values.begin(), e.values.end());
            out.write(reinterpret_cast<const char*>(buf.data()),
                      (std::streamsize)(buf.size() * 4));
        } else {
            out.write(reinterpret_cast<const char*>(e.values.data()),
                      (std::streamsize)(e.values.size() * 8));
        }
    }
    if (!out) throw InputError("checkpoint: write failed for " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw InputError("checkpoint: bad magic in " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string text(len, '\0');
    in.read(text.data(), (std::streamsize)len);
    if (!in) throw InputError("checkpoint: truncated manifest in " + path);

    auto manifest = nlohmann::json::parse(text);
    CheckpointData data;
    data.dtype = manifest.at("dtype").get<std::string>();
    data.meta_json = manifest.at("meta").dump();
    const bool f32 = data.dtype == "f32";
    if (!f32 && data.dtype != "f64")
        throw InputError("checkpoint: unknown dtype '" + data.dtype + "'");

    for (const auto& j : manifest.at("params")) {
        CheckpointEntry e;
        e.name = j.at("name").get<std::string>();
        e.shape = j.at("shape").get<std::vector<int>>();
        const size_t count = j.at("count").get<size_t>();
        e.values.resize(count);
        if (f32) {
            std::vector<float> buf(count);
            in.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)(count * 4));
            for (size_t i = 0; i < count; ++i) e.values[i] = buf[i];
        } else {
            in.read(reinterpret_cast<char*>(e.values.data()), (std::streamsize)(count * 8));
        }
        if (!in) throw InputError("checkpoint: truncated payload in " + path);
        data.entries.push_back(std::move(e));
    }
    return data;
}

} // namespace dynomap
