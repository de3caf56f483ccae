#pragma once

#include <filesystem>

#include "eegpolicy/forest.hpp"

namespace eegpolicy {

// Model file layout: 8-byte magic "BPCFv001", uint64 little-endian length of a JSON
// block (parameters and tree structure), then little-endian binary sections:
// training data, nuisances, per-tree grow/estimate membership and leaf tables.
void save_causal_forest(const CausalForestModel& model, const std::filesystem::path& path);
CausalForestModel load_causal_forest(const std::filesystem::path& path);

}  // namespace eegpolicy
