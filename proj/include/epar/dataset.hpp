#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "epar/corpus.hpp"

namespace epar {

// A data directory holds train.json and dev.json in QAngaroo format, plus
// optional annotations.json and gold_chains.json sidecars keyed by id.
struct Dataset {
    std::vector<QueryInstance> train;
    std::vector<QueryInstance> dev;
    GoldChains gold;
    std::vector<std::string> warnings;
};

Dataset load_dataset(const std::filesystem::path& dir, bool masked = false);

// Writes a synthetic train/dev split; dev ids use the prefix "<prefix>dev".
void write_synthetic_dataset(const std::filesystem::path& dir, SyntheticSpec spec, std::size_t train_size,
                             std::size_t dev_size);

// Default data root: $EPAR_DATA_DIR, else "data".
std::filesystem::path default_data_root();

}  // namespace epar
