#include "epar/dataset.hpp"

#include <cstdlib>

namespace epar {

Dataset load_dataset(const std::filesystem::path& dir, bool masked) {
    Dataset ds;
    const auto train = dir / "train.json", dev = dir / "dev.json";
    if (!std::filesystem::exists(train) && !std::filesystem::exists(dev))
        throw IngestionError("dataset: neither train.json nor dev.json in " + dir.string());
    if (std::filesystem::exists(train)) ds.train = load_qangaroo(train, masked, &ds.warnings);
    if (std::filesystem::exists(dev)) ds.dev = load_qangaroo(dev, masked, &ds.warnings);
    if (std::filesystem::exists(dir / "annotations.json")) {
        auto ann = load_annotations(dir / "annotations.json");
        apply_annotations(ds.train, ann);
        apply_annotations(ds.dev, ann);
    }
    if (std::filesystem::exists(dir / "gold_chains.json")) ds.gold = load_gold_chains(dir / "gold_chains.json");
    return ds;
}

void write_synthetic_dataset(const std::filesystem::path& dir, SyntheticSpec spec, std::size_t train_size,
                             std::size_t dev_size) {
    std::filesystem::create_directories(dir);
    const std::string prefix = spec.id_prefix;
    spec.instances = train_size + dev_size;
    SyntheticDataset all = generate_synthetic(spec);
    std::vector<RawRecord> train(all.records.begin(), all.records.begin() + static_cast<std::ptrdiff_t>(train_size));
    std::vector<RawRecord> dev(all.records.begin() + static_cast<std::ptrdiff_t>(train_size), all.records.end());
    GoldChains gold;
    std::map<std::string, Annotation> ann;
    auto rename = [&](RawRecord& r, const std::string& id) {
        gold[id] = all.gold_chains.at(r.id);
        ann[id] = all.annotations.at(r.id);
        r.id = id;
    };
    for (std::size_t i = 0; i < dev.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%sdev_%05zu", prefix.c_str(), i);
        rename(dev[i], buf);
    }
    for (auto& r : train) rename(r, r.id);
    write_qangaroo_records(dir / "train.json", train);
    write_qangaroo_records(dir / "dev.json", dev);
    write_gold_chains(dir / "gold_chains.json", gold);
    write_annotations(dir / "annotations.json", ann);
}

std::filesystem::path default_data_root() {
    if (const char* env = std::getenv("EPAR_DATA_DIR"); env && *env) return env;
    return "data";
}

}  // namespace epar
