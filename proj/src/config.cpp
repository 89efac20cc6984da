// SPDX-License-Identifier: Apache-2.0
#include "mtx/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "mtx/error.hpp"

namespace mtx {
namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

uint64_t to_u64(const std::string& where, const std::string& v) {
    // stoull wraps negative input instead of rejecting it.
    require(v.find('-') == std::string::npos, ErrorCode::config,
            where + ": '" + v + "' is not a non-negative integer");
    try {
        size_t used = 0;
        unsigned long long x = std::stoull(v, &used);
        require(used == v.size(), ErrorCode::config, where + ": '" + v + "' is not an integer");
        return x;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorCode::config, where + ": '" + v + "' is not an integer");
    }
}

size_t to_size(const std::string& where, const std::string& v) { return size_t(to_u64(where, v)); }

int to_int(const std::string& where, const std::string& v) {
    try {
        size_t used = 0;
        int x = std::stoi(v, &used);
        require(used == v.size(), ErrorCode::config, where + ": '" + v + "' is not an integer");
        return x;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorCode::config, where + ": '" + v + "' is not an integer");
    }
}

double to_double(const std::string& where, const std::string& v) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        require(used == v.size(), ErrorCode::config, where + ": '" + v + "' is not a number");
        return x;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorCode::config, where + ": '" + v + "' is not a number");
    }
}

// Consumes recognized keys and rejects leftovers, so every key must be
// claimed by exactly one field.
struct KeySink {
    std::string section;
    std::map<std::string, std::string> pending;

    explicit KeySink(const ConfigFile::Section& s) : section(s.name) {
        for (const auto& [k, v] : s.entries) pending[k] = v;
    }
    bool take(const std::string& key, std::string& out) {
        auto it = pending.find(key);
        if (it == pending.end()) return false;
        out = it->second;
        pending.erase(it);
        return true;
    }
    void done() const {
        if (!pending.empty())
            fail(ErrorCode::config,
                 "unknown key '" + pending.begin()->first + "' in section [" + section + "]");
    }
};

} // namespace

bool ConfigFile::Section::has(const std::string& key) const {
    for (const auto& [k, _] : entries)
        if (k == key) return true;
    return false;
}

const std::string& ConfigFile::Section::get(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    fail(ErrorCode::config, "missing key '" + key + "' in section [" + name + "]");
}

const ConfigFile::Section* ConfigFile::find(const std::string& name) const {
    for (const auto& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

ConfigFile parse_config_text(const std::string& text) {
    ConfigFile file;
    ConfigFile::Section* current = nullptr;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        auto where = "line " + std::to_string(lineno);
        if (t.front() == '[') {
            require(t.back() == ']' && t.size() > 2, ErrorCode::config,
                    where + ": malformed section header '" + t + "'");
            auto name = trim(t.substr(1, t.size() - 2));
            require(!name.empty(), ErrorCode::config, where + ": empty section name");
            require(file.find(name) == nullptr, ErrorCode::config,
                    where + ": repeated section [" + name + "]");
            file.sections.push_back({name, {}});
            current = &file.sections.back();
            continue;
        }
        auto eq = t.find('=');
        require(eq != std::string::npos, ErrorCode::config,
                where + ": expected 'key = value', got '" + t + "'");
        require(current != nullptr, ErrorCode::config, where + ": key before any [section]");
        auto key = trim(t.substr(0, eq));
        auto value = trim(t.substr(eq + 1));
        require(!key.empty(), ErrorCode::config, where + ": empty key");
        require(!current->has(key), ErrorCode::config,
                where + ": duplicate key '" + key + "' in section [" + current->name + "]");
        current->entries.emplace_back(key, value);
    }
    return file;
}

ConfigFile load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot read config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

ExperimentConfig parse_experiment(const ConfigFile& file) {
    static const std::set<std::string> known_sections = {"experiment", "dataset", "roles",
                                                         "weights",    "heads",   "train"};
    for (const auto& s : file.sections)
        require(known_sections.count(s.name) != 0, ErrorCode::config,
                "unknown section [" + s.name + "]");

    ExperimentConfig cfg;
    std::string v;

    if (const auto* s = file.find("experiment")) {
        KeySink sink(*s);
        if (sink.take("name", v)) {
            require(!v.empty(), ErrorCode::config, "experiment.name must not be empty");
            cfg.name = v;
        }
        if (sink.take("seed", v)) cfg.seed = to_u64("experiment.seed", v);
        if (sink.take("out_dir", v)) cfg.out_dir = v;
        sink.done();
    }
    cfg.train.seed = cfg.seed;

    const auto* ds = file.find("dataset");
    require(ds != nullptr, ErrorCode::config, "missing [dataset] section");
    {
        KeySink sink(*ds);
        bool has_path = sink.take("path", cfg.dataset.path);
        bool has_kind = sink.take("kind", cfg.dataset.kind);
        require(has_path != has_kind, ErrorCode::config,
                "[dataset] needs exactly one of 'kind' or 'path'");
        if (has_kind) {
            uint64_t gen_seed = cfg.seed;
            if (sink.take("seed", v)) gen_seed = to_u64("dataset.seed", v);
            if (cfg.dataset.kind == "pixel") {
                auto& p = cfg.dataset.pixel;
                p.seed = gen_seed;
                if (sink.take("n_fields", v)) p.n_fields = to_size("dataset.n_fields", v);
                if (sink.take("pixels_per_field", v))
                    p.pixels_per_field = to_size("dataset.pixels_per_field", v);
                if (sink.take("season_len", v)) p.season_len = to_size("dataset.season_len", v);
                if (sink.take("coupling", v)) p.coupling = to_double("dataset.coupling", v);
                if (sink.take("spectral_noise", v))
                    p.spectral_noise = to_double("dataset.spectral_noise", v);
                if (sink.take("yield_noise", v))
                    p.yield_noise = to_double("dataset.yield_noise", v);
            } else if (cfg.dataset.kind == "patch") {
                auto& p = cfg.dataset.patch;
                p.seed = gen_seed;
                if (sink.take("n_regions", v)) p.n_regions = to_size("dataset.n_regions", v);
                if (sink.take("patches_per_region", v))
                    p.patches_per_region = to_size("dataset.patches_per_region", v);
                if (sink.take("height", v)) p.height = to_size("dataset.height", v);
                if (sink.take("width", v)) p.width = to_size("dataset.width", v);
                if (sink.take("noise", v)) p.noise = to_double("dataset.noise", v);
            } else if (cfg.dataset.kind == "tree") {
                auto& p = cfg.dataset.tree;
                p.seed = gen_seed;
                if (sink.take("n_stands", v)) p.n_stands = to_size("dataset.n_stands", v);
                if (sink.take("samples_per_stand", v))
                    p.samples_per_stand = to_size("dataset.samples_per_stand", v);
                if (sink.take("height", v)) p.height = to_size("dataset.height", v);
                if (sink.take("width", v)) p.width = to_size("dataset.width", v);
                if (sink.take("noise", v)) p.noise = to_double("dataset.noise", v);
            } else {
                fail(ErrorCode::config, "unknown dataset kind '" + cfg.dataset.kind +
                                            "' (expected pixel, patch or tree)");
            }
        }
        sink.done();
    }

    const auto* roles = file.find("roles");
    require(roles != nullptr, ErrorCode::config, "missing [roles] section");
    for (const auto& [key, value] : roles->entries) {
        if (key == "main") {
            cfg.roles.main_task = value;
            continue;
        }
        Role r;
        if (value == "input") r = Role::input;
        else if (value == "target") r = Role::target;
        else if (value == "unused") r = Role::unused;
        else
            fail(ErrorCode::config, "roles." + key + ": '" + value +
                                        "' is not a role (input, target or unused)");
        cfg.roles.roles.emplace_back(key, r);
    }
    require(!cfg.roles.main_task.empty(), ErrorCode::config,
            "[roles] must name the main task via 'main = <task>'");

    if (const auto* s = file.find("weights"))
        for (const auto& [key, value] : s->entries)
            cfg.weights[key] = to_double("weights." + key, value);

    if (const auto* s = file.find("heads"))
        for (const auto& [key, value] : s->entries) {
            require(value == "linear" || value == "mlp_bn" || value == "mlp_drop",
                    ErrorCode::config,
                    "heads." + key + ": unknown layout '" + value + "'");
            cfg.heads[key] = value;
        }

    if (const auto* s = file.find("train")) {
        KeySink sink(*s);
        if (sink.take("epochs", v)) {
            cfg.train.epochs = to_int("train.epochs", v);
            require(cfg.train.epochs >= 1, ErrorCode::config, "train.epochs must be >= 1");
        }
        if (sink.take("batch_size", v)) {
            cfg.train.batch_size = to_size("train.batch_size", v);
            require(cfg.train.batch_size >= 1, ErrorCode::config,
                    "train.batch_size must be >= 1");
        }
        if (sink.take("lr", v)) {
            cfg.train.lr = to_double("train.lr", v);
            require(cfg.train.lr > 0, ErrorCode::config, "train.lr must be > 0");
        }
        if (sink.take("weight_by_task", v)) cfg.train.weight_by_task = v;
        sink.done();
    }
    return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
    return parse_experiment(load_config_file(path));
}

void apply_seed_override(ExperimentConfig& cfg, uint64_t seed) {
    cfg.seed = seed;
    cfg.train.seed = seed;
    cfg.dataset.pixel.seed = seed;
    cfg.dataset.patch.seed = seed;
    cfg.dataset.tree.seed = seed;
}

RolePlan resolve_plan(const Dataset& data, const ExperimentConfig& cfg) {
    auto plan = plan_roles(data, cfg.roles);
    auto find_task = [&](const std::string& name, const char* what) -> TaskSpec& {
        for (auto& t : plan.tasks)
            if (t.name == name) return t;
        fail(ErrorCode::config,
             std::string(what) + " configured for '" + name + "', which is not a target task");
    };
    for (const auto& [name, w] : cfg.weights) {
        require(w >= 0, ErrorCode::config, "weights." + name + " must be >= 0");
        find_task(name, "a loss weight").raw_weight = w;
    }
    for (const auto& [name, layout] : cfg.heads) find_task(name, "a head layout").head_layout = layout;
    return plan;
}

} // namespace mtx
