// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace mtx {

enum class Split : int { train = 0, val = 1, test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

struct SplitItem {
    int64_t sample_id;
    int64_t group_id;
    int64_t stratum;
};

struct SplitFractions {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct SplitAssignment {
    std::unordered_map<int64_t, Split> by_sample;
    std::unordered_map<int64_t, Split> by_group;
    std::array<std::vector<int64_t>, 3> samples;  // sample ids per split, ascending

    const std::vector<int64_t>& of(Split s) const { return samples[size_t(s)]; }
};

// Deterministic grouped, stratified assignment. Groups never straddle splits;
// within each stratum groups are shuffled by a seed-derived stream and handed
// greedily to the split with the largest remaining sample deficit. Every
// stratum must contain at least 3 groups, and a group must not appear in two
// strata.
SplitAssignment split_grouped_stratified(const std::vector<SplitItem>& items,
                                         const SplitFractions& fractions, uint64_t seed);

} // namespace mtx
