#include "gate/store/store.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace gate::store {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path bundle_path(const fs::path& dataset_root, const std::string& image_id,
                     const std::string& combo_id) {
    return dataset_root / image_id / (combo_id + ".npz");
}

fs::path manifest_path(const fs::path& dataset_root) { return dataset_root / "manifest.json"; }

fs::path save_bundle(const FeatureBundle& bundle, const fs::path& dataset_root) {
    bundle.validate();

    json meta;
    meta["schema_version"] = kBundleSchemaVersion;
    meta["image_id"] = bundle.image_id;
    meta["combo_id"] = bundle.combo_id;
    meta["timestep"] = bundle.timestep;
    meta["seed"] = bundle.seed;
    meta["model_fingerprint"] = bundle.model_fingerprint;
    meta["conv_features"] = json::array();
    for (const NamedFeature& f : bundle.conv_features) meta["conv_features"].push_back(f.name);
    meta["has_attention"] = bundle.attention_feature.has_value();
    meta["attention_tokens"] = bundle.attention_tokens;

    NpzWriter writer;
    writer.add_text("meta.json", meta.dump(2));
    for (const NamedFeature& f : bundle.conv_features) writer.add_array("conv/" + f.name, f.map);
    if (bundle.attention_feature) writer.add_array("attention", *bundle.attention_feature);

    const fs::path path = bundle_path(dataset_root, bundle.image_id, bundle.combo_id);
    writer.write_atomic(path);
    return path;
}

FeatureBundle load_bundle(const fs::path& path) {
    NpzFile file = NpzFile::read(path);
    auto meta_it = file.texts.find("meta.json");
    if (meta_it == file.texts.end()) throw CorruptFileError("missing meta.json in " + path.string());

    json meta;
    try {
        meta = json::parse(meta_it->second);
    } catch (const json::exception& e) {
        throw CorruptFileError("bad meta.json in " + path.string() + ": " + e.what());
    }
    const int version = meta.value("schema_version", -1);
    if (version != kBundleSchemaVersion) {
        throw SchemaMismatchError("bundle schema v" + std::to_string(version) + " != expected v" +
                                  std::to_string(kBundleSchemaVersion) + " in " + path.string());
    }

    FeatureBundle b;
    b.image_id = meta.at("image_id").get<std::string>();
    b.combo_id = meta.at("combo_id").get<std::string>();
    b.timestep = meta.at("timestep").get<int>();
    b.seed = meta.at("seed").get<uint64_t>();
    b.model_fingerprint = meta.at("model_fingerprint").get<std::string>();
    for (const auto& name_json : meta.at("conv_features")) {
        const std::string name = name_json.get<std::string>();
        auto it = file.arrays.find("conv/" + name);
        if (it == file.arrays.end()) {
            throw CorruptFileError("conv feature '" + name + "' listed but absent in " + path.string());
        }
        b.conv_features.push_back({name, it->second});
    }
    if (meta.value("has_attention", false)) {
        auto it = file.arrays.find("attention");
        if (it == file.arrays.end()) throw CorruptFileError("attention listed but absent: " + path.string());
        b.attention_feature = it->second;
        b.attention_tokens = meta.at("attention_tokens").get<std::vector<std::string>>();
    }
    b.validate();
    return b;
}

void Manifest::validate(bool check_paths) const {
    std::set<std::string> ids;
    for (const ManifestEntry& e : entries) {
        if (!ids.insert(e.image_id).second) {
            throw InvariantError("duplicate image_id in manifest: " + e.image_id);
        }
        if (check_paths) {
            auto must_exist = [&](const std::string& p, const char* what) {
                if (!fs::exists(p)) {
                    throw MissingFileError(std::string(what) + " referenced by manifest does not exist: " + p);
                }
            };
            must_exist(e.image_path, "image");
            for (const auto& [combo, fp] : e.feature_paths) must_exist(fp, "feature file");
            if (e.label_path) must_exist(*e.label_path, "label");
        }
    }
}

void Manifest::save(const fs::path& path) const {
    validate(false);
    json j;
    j["schema_version"] = schema_version;
    j["dataset_id"] = dataset_id;
    j["entries"] = json::array();
    for (const ManifestEntry& e : entries) {
        json je;
        je["image_id"] = e.image_id;
        je["image_path"] = e.image_path;
        je["features"] = e.feature_paths;
        if (e.label_path) je["label_path"] = *e.label_path;
        j["entries"].push_back(je);
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw StoreError("cannot write manifest: " + tmp.string());
        f << j.dump(2) << "\n";
    }
    fs::rename(tmp, path);
}

Manifest Manifest::load(const fs::path& path, bool check_paths) {
    if (!fs::exists(path)) throw MissingFileError("no such manifest: " + path.string());
    std::ifstream f(path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw CorruptFileError("bad manifest json: " + path.string() + ": " + e.what());
    }
    Manifest m;
    m.schema_version = j.value("schema_version", -1);
    if (m.schema_version != kManifestSchemaVersion) {
        throw SchemaMismatchError("manifest schema v" + std::to_string(m.schema_version) +
                                  " != expected v" + std::to_string(kManifestSchemaVersion));
    }
    m.dataset_id = j.at("dataset_id").get<std::string>();
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.image_id = je.at("image_id").get<std::string>();
        e.image_path = je.at("image_path").get<std::string>();
        e.feature_paths = je.at("features").get<std::map<std::string, std::string>>();
        if (je.contains("label_path")) e.label_path = je.at("label_path").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    m.validate(check_paths);
    return m;
}

}  // namespace gate::store
