// SPDX-License-Identifier: Apache-2.0
#include "mtx/dataset_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mtx/error.hpp"

namespace mtx {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'T', 'X', 'B', 'L', 'O', 'B', '\x01'};
constexpr int kSchemaVersion = 1;

ModalityKind parse_modality_kind(const std::string& s) {
    for (auto k : {ModalityKind::timeseries, ModalityKind::tabular, ModalityKind::categorical,
                   ModalityKind::image_spatial, ModalityKind::image_flat, ModalityKind::class_map,
                   ModalityKind::dense_map})
        if (s == modality_kind_name(k)) return k;
    fail(ErrorCode::data, "unknown modality kind '" + s + "' in manifest");
}

TaskKind parse_task_kind(const std::string& s) {
    for (auto k : {TaskKind::none, TaskKind::regression, TaskKind::bounded_regression,
                   TaskKind::classification, TaskKind::multiclass_seg, TaskKind::dense_seg})
        if (s == task_kind_name(k)) return k;
    fail(ErrorCode::data, "unknown task kind '" + s + "' in manifest");
}

// Per-sample tensor shape, used purely as a self-describing blob header.
std::vector<uint64_t> sample_dims(const ModalitySpec& s) {
    switch (s.kind) {
        case ModalityKind::timeseries: return {s.max_len, s.features};
        case ModalityKind::tabular: return {s.features};
        case ModalityKind::categorical: return {};
        case ModalityKind::image_spatial:
        case ModalityKind::image_flat:
        case ModalityKind::dense_map: return {s.channels, s.height, s.width};
        case ModalityKind::class_map: return {s.height, s.width};
    }
    return {};
}

template <typename T>
void write_section(std::ofstream& f, const std::vector<T>& v) {
    uint64_t n = v.size();
    f.write(reinterpret_cast<const char*>(&n), sizeof n);
    if (n) f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(n * sizeof(T)));
}

template <typename T>
void read_section(std::ifstream& f, std::vector<T>& v, const std::string& path) {
    uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof n);
    require(f.good(), ErrorCode::io, "truncated tensor blob '" + path + "'");
    require(n < (uint64_t(1) << 34), ErrorCode::data,
            "implausible section size in '" + path + "'");
    v.resize(size_t(n));
    if (n) {
        f.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(T)));
        require(f.good(), ErrorCode::io, "truncated tensor blob '" + path + "'");
    }
}

void save_column(const ModalityColumn& c, size_t n_samples, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    f.write(kMagic, sizeof kMagic);
    auto dims = sample_dims(c.spec);
    uint32_t ndim = uint32_t(dims.size()) + 1;
    f.write(reinterpret_cast<const char*>(&ndim), sizeof ndim);
    uint64_t lead = n_samples;
    f.write(reinterpret_cast<const char*>(&lead), sizeof lead);
    for (uint64_t d : dims) f.write(reinterpret_cast<const char*>(&d), sizeof d);
    write_section(f, c.values);
    write_section(f, c.ids);
    write_section(f, c.timestamps);
    std::vector<uint64_t> lens(c.lengths.begin(), c.lengths.end());
    write_section(f, lens);
    require(f.good(), ErrorCode::io, "write failed for '" + path + "'");
}

void load_column(ModalityColumn& c, size_t n_samples, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot read tensor blob '" + path + "'");
    char magic[8];
    f.read(magic, sizeof magic);
    require(f.good() && std::memcmp(magic, kMagic, sizeof kMagic) == 0, ErrorCode::data,
            "'" + path + "' is not a tensor blob");
    uint32_t ndim = 0;
    f.read(reinterpret_cast<char*>(&ndim), sizeof ndim);
    require(f.good() && ndim >= 1 && ndim <= 8, ErrorCode::data,
            "corrupt shape header in '" + path + "'");
    std::vector<uint64_t> dims(ndim);
    f.read(reinterpret_cast<char*>(dims.data()), std::streamsize(ndim * sizeof(uint64_t)));
    require(f.good(), ErrorCode::io, "truncated tensor blob '" + path + "'");
    require(dims[0] == n_samples, ErrorCode::data,
            "'" + path + "' holds " + std::to_string(dims[0]) + " samples, manifest says " +
                std::to_string(n_samples));
    auto expect = sample_dims(c.spec);
    require(dims.size() == expect.size() + 1, ErrorCode::data,
            "'" + path + "' shape rank disagrees with the manifest schema");
    for (size_t i = 0; i < expect.size(); ++i)
        require(dims[i + 1] == expect[i], ErrorCode::data,
                "'" + path + "' shape disagrees with the manifest schema");

    read_section(f, c.values, path);
    read_section(f, c.ids, path);
    read_section(f, c.timestamps, path);
    std::vector<uint64_t> lens;
    read_section(f, lens, path);
    c.lengths.assign(lens.begin(), lens.end());
}

} // namespace

void save_dataset(const Dataset& d, const std::string& dir, const std::string& generator_json) {
    d.validate();
    json generator;
    try {
        generator = json::parse(generator_json);
    } catch (const json::exception& e) {
        fail(ErrorCode::usage, std::string("generator block is not valid JSON: ") + e.what());
    }
    require(generator.is_object(), ErrorCode::usage, "generator block must be a JSON object");

    std::filesystem::create_directories(dir);
    auto path = [&](const std::string& name) {
        return (std::filesystem::path(dir) / name).string();
    };

    json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["kind"] = d.kind;
    manifest["samples"] = d.size();
    std::set<int64_t> groups(d.group_ids.begin(), d.group_ids.end());
    std::set<int64_t> strata(d.strata.begin(), d.strata.end());
    manifest["groups"] = groups.size();
    manifest["strata"] = strata.size();
    manifest["generator"] = generator;
    json mods = json::array();
    for (const auto& c : d.columns) {
        const auto& s = c.spec;
        json m;
        m["name"] = s.name;
        m["kind"] = modality_kind_name(s.kind);
        m["target_kind"] = task_kind_name(s.target_kind);
        m["features"] = s.features;
        m["max_len"] = s.max_len;
        m["classes"] = s.classes;
        m["channels"] = s.channels;
        m["height"] = s.height;
        m["width"] = s.width;
        m["imagery"] = s.imagery;
        m["file"] = s.name + ".bin";
        mods.push_back(m);
        save_column(c, d.size(), path(s.name + ".bin"));
    }
    manifest["modalities"] = mods;

    std::ofstream mf(path("manifest.json"), std::ios::binary);
    require(mf.good(), ErrorCode::io, "cannot write manifest in '" + dir + "'");
    mf << manifest.dump(2) << "\n";
    require(mf.good(), ErrorCode::io, "write failed for manifest in '" + dir + "'");

    std::ofstream sf(path("samples.csv"), std::ios::binary);
    require(sf.good(), ErrorCode::io, "cannot write samples.csv in '" + dir + "'");
    sf << "sample_id,group_id,stratum\n";
    for (size_t i = 0; i < d.size(); ++i)
        sf << d.sample_ids[i] << ',' << d.group_ids[i] << ',' << d.strata[i] << '\n';
    require(sf.good(), ErrorCode::io, "write failed for samples.csv in '" + dir + "'");
}

Dataset load_dataset(const std::string& dir) {
    auto path = [&](const std::string& name) {
        return (std::filesystem::path(dir) / name).string();
    };
    std::ifstream mf(path("manifest.json"), std::ios::binary);
    require(mf.good(), ErrorCode::io, "'" + dir + "' has no dataset manifest");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        fail(ErrorCode::data, "corrupt dataset manifest in '" + dir + "': " + e.what());
    }
    require(manifest.value("schema_version", -1) == kSchemaVersion, ErrorCode::data,
            "unsupported dataset schema version in '" + dir + "'");

    Dataset d;
    d.kind = manifest.at("kind").get<std::string>();
    size_t n = manifest.at("samples").get<size_t>();

    std::ifstream sf(path("samples.csv"), std::ios::binary);
    require(sf.good(), ErrorCode::io, "'" + dir + "' has no samples.csv");
    std::string line;
    std::getline(sf, line);
    require(line == "sample_id,group_id,stratum", ErrorCode::data,
            "unexpected samples.csv header in '" + dir + "'");
    while (std::getline(sf, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string a, b, c;
        require(std::getline(row, a, ',') && std::getline(row, b, ',') && std::getline(row, c),
                ErrorCode::data, "malformed samples.csv row '" + line + "'");
        d.sample_ids.push_back(std::stoll(a));
        d.group_ids.push_back(std::stoll(b));
        d.strata.push_back(std::stoll(c));
    }
    require(d.size() == n, ErrorCode::data,
            "samples.csv row count disagrees with the manifest in '" + dir + "'");

    for (const auto& m : manifest.at("modalities")) {
        ModalityColumn c;
        auto& s = c.spec;
        s.name = m.at("name").get<std::string>();
        s.kind = parse_modality_kind(m.at("kind").get<std::string>());
        s.target_kind = parse_task_kind(m.at("target_kind").get<std::string>());
        s.features = m.at("features").get<size_t>();
        s.max_len = m.at("max_len").get<size_t>();
        s.classes = m.at("classes").get<size_t>();
        s.channels = m.at("channels").get<size_t>();
        s.height = m.at("height").get<size_t>();
        s.width = m.at("width").get<size_t>();
        s.imagery = m.at("imagery").get<bool>();
        load_column(c, n, path(m.at("file").get<std::string>()));
        d.columns.push_back(std::move(c));
    }
    d.validate();
    return d;
}

} // namespace mtx
