// SPDX-License-Identifier: Apache-2.0
#include "mtx/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mtx {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'X', 'C', 'K', 'P', 'T', '\x01'};

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& f, const std::string& path) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    require(f.good(), ErrorCode::io, "truncated checkpoint: " + path);
    return v;
}

struct Entry {
    std::string name;
    Shape shape;
    std::streampos data_at;
};

std::vector<Entry> scan(std::ifstream& f, const std::string& path) {
    char magic[8];
    f.read(magic, 8);
    require(f.good() && std::memcmp(magic, kMagic, 8) == 0, ErrorCode::data,
            "not a checkpoint file: " + path);
    auto count = read_pod<uint64_t>(f, path);
    std::vector<Entry> entries;
    for (uint64_t i = 0; i < count; ++i) {
        auto name_len = read_pod<uint32_t>(f, path);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        require(f.good(), ErrorCode::io, "truncated checkpoint: " + path);
        auto rank = read_pod<uint32_t>(f, path);
        Shape shape(rank);
        for (auto& d : shape) d = size_t(read_pod<uint64_t>(f, path));
        Entry e{std::move(name), std::move(shape), f.tellg()};
        f.seekg(std::streamoff(shape_numel(e.shape) * sizeof(float)), std::ios::cur);
        require(f.good(), ErrorCode::io, "truncated checkpoint: " + path);
        entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace

void save_checkpoint(const std::string& path, const ParamList& params) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    f.write(kMagic, 8);
    write_pod(f, uint64_t(params.size()));
    for (const auto& p : params) {
        write_pod(f, uint32_t(p.name.size()));
        f.write(p.name.data(), std::streamsize(p.name.size()));
        const auto& shape = p.tensor.shape();
        write_pod(f, uint32_t(shape.size()));
        for (size_t d : shape) write_pod(f, uint64_t(d));
        const auto& data = p.tensor.data();
        f.write(reinterpret_cast<const char*>(data.data()),
                std::streamsize(data.size() * sizeof(float)));
    }
    require(f.good(), ErrorCode::io, "write failed for '" + path + "'");
}

std::vector<std::pair<std::string, Shape>> checkpoint_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "'");
    std::vector<std::pair<std::string, Shape>> out;
    for (auto& e : scan(f, path)) out.emplace_back(std::move(e.name), std::move(e.shape));
    return out;
}

void load_checkpoint(const std::string& path, ParamList& params) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "'");
    auto entries = scan(f, path);
    require(entries.size() == params.size(), ErrorCode::config,
            "checkpoint holds " + std::to_string(entries.size()) + " tensors, model expects " +
                std::to_string(params.size()));
    for (auto& p : params) {
        const Entry* found = nullptr;
        for (const auto& e : entries)
            if (e.name == p.name) {
                found = &e;
                break;
            }
        require(found != nullptr, ErrorCode::config,
                "checkpoint is missing parameter '" + p.name + "'");
        require(found->shape == p.tensor.shape(), ErrorCode::config,
                "checkpoint shape " + shape_str(found->shape) + " does not match parameter '" +
                    p.name + "' " + shape_str(p.tensor.shape()));
        f.clear();
        f.seekg(found->data_at);
        auto& data = p.tensor.data();
        f.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(float)));
        require(f.good(), ErrorCode::io, "truncated checkpoint: " + path);
    }
}

std::vector<std::vector<real>> snapshot_values(const ParamList& params) {
    std::vector<std::vector<real>> snap;
    snap.reserve(params.size());
    for (const auto& p : params) snap.push_back(p.tensor.data());
    return snap;
}

void restore_values(ParamList& params, const std::vector<std::vector<real>>& snap) {
    require(snap.size() == params.size(), ErrorCode::config, "snapshot size mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        require(snap[i].size() == params[i].tensor.data().size(), ErrorCode::config,
                "snapshot tensor size mismatch at '" + params[i].name + "'");
        params[i].tensor.data() = snap[i];
    }
}

} // namespace mtx
