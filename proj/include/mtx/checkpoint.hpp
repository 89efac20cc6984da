// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtx/layers.hpp"

namespace mtx {

// Versioned binary container of named parameter tensors. Layout:
//   8-byte magic "MTXCKPT\x01", u64 tensor count, then per tensor
//   u32 name length, name bytes, u32 rank, u64 extents, f32 values.
// Little-endian throughout.

void save_checkpoint(const std::string& path, const ParamList& params);

// Shape manifest without loading the values.
std::vector<std::pair<std::string, Shape>> checkpoint_manifest(const std::string& path);

// Loads values into an already-assembled parameter list. Name sets and
// shapes must match exactly.
void load_checkpoint(const std::string& path, ParamList& params);

// In-memory value snapshot for best-epoch retention.
std::vector<std::vector<real>> snapshot_values(const ParamList& params);
void restore_values(ParamList& params, const std::vector<std::vector<real>>& snap);

} // namespace mtx
