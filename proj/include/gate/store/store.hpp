#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gate/store/bundle.hpp"
#include "gate/store/npz.hpp"

namespace gate::store {

// Bundle files live at <dataset_root>/<image_id>/<combo_id>.npz. Arrays are
// float32 npy members; provenance is a "meta.json" text member so a single
// atomic rename publishes the whole record.
std::filesystem::path bundle_path(const std::filesystem::path& dataset_root,
                                  const std::string& image_id, const std::string& combo_id);

std::filesystem::path save_bundle(const FeatureBundle& bundle, const std::filesystem::path& dataset_root);
FeatureBundle load_bundle(const std::filesystem::path& path);

struct ManifestEntry {
    std::string image_id;
    std::string image_path;
    std::map<std::string, std::string> feature_paths;  // combo_id -> bundle file
    std::optional<std::string> label_path;
};

struct Manifest {
    std::string dataset_id;
    int schema_version = kManifestSchemaVersion;
    std::vector<ManifestEntry> entries;

    void validate(bool check_paths) const;  // unique ids; referenced files exist
    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path, bool check_paths = true);
};

std::filesystem::path manifest_path(const std::filesystem::path& dataset_root);

}  // namespace gate::store
