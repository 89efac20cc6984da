// SPDX-License-Identifier: Apache-2.0
#include "mtx/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mtx/error.hpp"
#include "mtx/rng.hpp"

namespace mtx {

SplitAssignment split_grouped_stratified(const std::vector<SplitItem>& items,
                                         const SplitFractions& fractions, uint64_t seed) {
    require(!items.empty(), ErrorCode::data, "split: no samples");
    const double fr[3] = {fractions.train, fractions.val, fractions.test};
    for (double f : fr)
        require(f > 0.0, ErrorCode::config, "split: fractions must be positive");
    require(std::fabs(fr[0] + fr[1] + fr[2] - 1.0) < 1e-9, ErrorCode::config,
            "split: fractions must sum to 1");

    // stratum -> group -> sample count; ordered maps keep iteration stable.
    std::map<int64_t, std::map<int64_t, size_t>> strata;
    std::unordered_map<int64_t, int64_t> group_stratum;
    for (const auto& it : items) {
        auto found = group_stratum.find(it.group_id);
        if (found == group_stratum.end()) {
            group_stratum[it.group_id] = it.stratum;
        } else {
            require(found->second == it.stratum, ErrorCode::data,
                    "split: group " + std::to_string(it.group_id) +
                        " appears in more than one stratum");
        }
        strata[it.stratum][it.group_id] += 1;
    }

    SplitAssignment out;
    for (auto& [stratum, groups] : strata) {
        require(groups.size() >= 3, ErrorCode::data,
                "split: stratum " + std::to_string(stratum) + " has only " +
                    std::to_string(groups.size()) + " groups, need one per split");
        std::vector<int64_t> order;
        order.reserve(groups.size());
        size_t total = 0;
        for (auto& [g, cnt] : groups) {
            order.push_back(g);
            total += cnt;
        }
        Rng rng = Rng::derive(seed, uint64_t(stratum) * 0x9e3779b97f4a7c15ULL + 1);
        rng.shuffle(order);

        double assigned[3] = {0, 0, 0};
        // first pass: one group per split so no split is empty in any stratum
        size_t preassigned = 0;
        for (int s = 0; s < 3; ++s) {
            int64_t g = order[preassigned++];
            out.by_group[g] = Split(s);
            assigned[s] += double(groups[g]);
        }
        for (size_t i = preassigned; i < order.size(); ++i) {
            int64_t g = order[i];
            int best = 0;
            double best_deficit = -1e300;
            for (int s = 0; s < 3; ++s) {
                double deficit = fr[s] * double(total) - assigned[s];
                if (deficit > best_deficit) {
                    best_deficit = deficit;
                    best = s;
                }
            }
            out.by_group[g] = Split(best);
            assigned[best] += double(groups[g]);
        }
    }

    for (const auto& it : items) out.by_sample[it.sample_id] = out.by_group[it.group_id];
    for (const auto& it : items)
        out.samples[size_t(out.by_sample[it.sample_id])].push_back(it.sample_id);
    for (auto& v : out.samples) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return out;
}

} // namespace mtx
