// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtx/multitask.hpp"
#include "mtx/synthdata.hpp"

namespace mtx {

// Key-value config files with [section] headers. One file describes one
// experiment; a directory of them is an experiment matrix. Declaration order
// is preserved because role order is model order.

struct ConfigFile {
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> entries;

        bool has(const std::string& key) const;
        const std::string& get(const std::string& key) const;
    };
    std::vector<Section> sections;

    const Section* find(const std::string& name) const;
};

// '#' or ';' start a comment line; keys and values are trimmed. Duplicate
// keys within a section and repeated section headers are config errors.
ConfigFile parse_config_text(const std::string& text);
ConfigFile load_config_file(const std::string& path);

// Where the training data comes from: a directory written by `generate`, or
// generator parameters to synthesize it in-process. Exactly one of the two.
struct DatasetSource {
    std::string path;
    std::string kind; // "pixel" | "patch" | "tree"
    PixelDatasetParams pixel;
    PatchDatasetParams patch;
    TreeDatasetParams tree;
};

struct ExperimentConfig {
    std::string name = "experiment";
    uint64_t seed = 1;
    std::string out_dir; // empty = resolved by the caller
    DatasetSource dataset;
    ModalityRoleConfig roles;
    std::map<std::string, double> weights;    // per-target raw loss weights
    std::map<std::string, std::string> heads; // per-target head layout
    TrainConfig train;
};

// Sections: [experiment] name/seed/out_dir, [dataset] kind-or-path plus
// generator parameters, [roles] modality = input|target|unused plus
// main = <task>, [weights], [heads], [train]. Unknown sections or keys are
// config errors so typos cannot silently change an experiment.
ExperimentConfig parse_experiment(const ConfigFile& file);
ExperimentConfig load_experiment(const std::string& path);

// --seed N: one override for every seed the experiment uses.
void apply_seed_override(ExperimentConfig& cfg, uint64_t seed);

// Resolved task specs: the role plan with configured weights and head
// layouts applied. Unknown task names in [weights]/[heads] are config errors.
RolePlan resolve_plan(const Dataset& data, const ExperimentConfig& cfg);

} // namespace mtx
