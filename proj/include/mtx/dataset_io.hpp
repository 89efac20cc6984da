// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "mtx/dataset.hpp"

namespace mtx {

// On-disk dataset layout, one directory per dataset:
//   manifest.json   schema version, kind, counts, per-modality schema, plus
//                   the caller's generator block (parameters and constants)
//   samples.csv     sample_id, group_id, stratum
//   <modality>.bin  tensor blob: magic, [N x per-sample shape] header, then
//                   values / ids / timestamps / lengths sections
// Everything is little-endian and byte-deterministic for a given dataset.

// `generator_json` must be a serialized JSON object; it is embedded verbatim
// under "generator" so a dataset states how it was produced.
void save_dataset(const Dataset& d, const std::string& dir,
                  const std::string& generator_json = "{}");

Dataset load_dataset(const std::string& dir);

} // namespace mtx
