#include "gate/downstream/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace gate::downstream {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image_file(const fs::path& p) {
    const std::string ext = p.extension().string();
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

KeypointSet keypoints_from_json(const json& kps, const json& size, const json* bbox) {
    KeypointSet set;
    set.height = size.at(0).get<int64_t>();
    set.width = size.at(1).get<int64_t>();
    for (const auto& kp : kps) {
        Keypoint k;
        if (kp.is_array()) {
            k.x = kp.at(0).get<double>();
            k.y = kp.at(1).get<double>();
        } else {
            k.name = kp.value("name", "");
            k.x = kp.at("x").get<double>();
            k.y = kp.at("y").get<double>();
        }
        set.points.push_back(k);
    }
    if (bbox && !bbox->is_null()) {
        set.bbox = {{bbox->at(0).get<double>(), bbox->at(1).get<double>(), bbox->at(2).get<double>(),
                     bbox->at(3).get<double>()}};
    }
    return set;
}

}  // namespace

SegmentationDataset load_folder_masks(const fs::path& images_dir, const fs::path& masks_dir,
                                      int classes, const std::string& dataset_id) {
    if (!fs::is_directory(images_dir)) {
        throw std::invalid_argument("images directory does not exist: " + images_dir.string());
    }
    if (!fs::is_directory(masks_dir)) {
        throw std::invalid_argument("masks directory does not exist: " + masks_dir.string());
    }
    SegmentationDataset ds;
    ds.dataset_id = dataset_id;
    ds.classes = classes;
    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(images_dir)) {
        if (e.is_regular_file() && is_image_file(e.path())) images.push_back(e.path());
    }
    std::sort(images.begin(), images.end());
    for (const fs::path& img : images) {
        const std::string stem = img.stem().string();
        fs::path mask;
        for (const char* ext : {".png", ".bmp", ".pgm"}) {
            fs::path candidate = masks_dir / (stem + ext);
            if (fs::exists(candidate)) {
                mask = candidate;
                break;
            }
        }
        if (mask.empty()) {
            throw std::runtime_error("no mask found for image '" + stem + "' in " + masks_dir.string());
        }
        ds.items.push_back({stem, img, mask});
    }
    if (ds.items.empty()) throw std::runtime_error("no images found in " + images_dir.string());
    return ds;
}

std::vector<CorrespondencePair> load_pairs_jsonl(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open pairs file: " + path.string());
    std::vector<CorrespondencePair> pairs;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        CorrespondencePair p;
        p.pair_id = j.value("pair_id", "pair_" + std::to_string(lineno));
        p.src_image = j.at("src_image").get<std::string>();
        p.tgt_image = j.at("tgt_image").get<std::string>();
        const json* src_bbox = j.contains("src_bbox") ? &j.at("src_bbox") : nullptr;
        const json* tgt_bbox = j.contains("tgt_bbox") ? &j.at("tgt_bbox") : nullptr;
        p.src = keypoints_from_json(j.at("src_kps"), j.at("src_size"), src_bbox);
        p.tgt = keypoints_from_json(j.at("tgt_kps"), j.at("tgt_size"), tgt_bbox);
        if (p.src.points.size() != p.tgt.points.size()) {
            throw std::runtime_error(p.pair_id + ": keypoint counts differ");
        }
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw std::runtime_error("no pairs in " + path.string());
    return pairs;
}

std::vector<CorrespondencePair> load_spair(const fs::path& root, const std::string& split) {
    const fs::path ann_dir = root / "PairAnnotation" / split;
    if (!fs::is_directory(ann_dir)) {
        throw std::runtime_error("no pair annotations at " + ann_dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(ann_dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<CorrespondencePair> pairs;
    for (const fs::path& file : files) {
        std::ifstream f(file);
        json j;
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw std::runtime_error(file.string() + ": " + e.what());
        }
        CorrespondencePair p;
        p.pair_id = file.stem().string();
        const std::string category = j.at("category").get<std::string>();
        p.src_image = root / "JPEGImages" / category / j.at("src_imname").get<std::string>();
        p.tgt_image = root / "JPEGImages" / category / j.at("trg_imname").get<std::string>();

        auto parse_side = [&](const char* kps_key, const char* size_key, const char* bbox_key) {
            KeypointSet set;
            const json& size = j.at(size_key);  // [w, h, c] in this layout
            set.width = size.at(0).get<int64_t>();
            set.height = size.at(1).get<int64_t>();
            for (const auto& kp : j.at(kps_key)) {
                Keypoint k;
                k.x = kp.at(0).get<double>();
                k.y = kp.at(1).get<double>();
                set.points.push_back(k);
            }
            if (j.contains(bbox_key)) {
                const json& bb = j.at(bbox_key);  // [x0, y0, x1, y1]
                const double x0 = bb.at(0).get<double>(), y0 = bb.at(1).get<double>();
                const double x1 = bb.at(2).get<double>(), y1 = bb.at(3).get<double>();
                set.bbox = {{x0, y0, x1 - x0, y1 - y0}};
            }
            return set;
        };
        p.src = parse_side("src_kps", "src_imsize", "src_bndbox");
        p.tgt = parse_side("trg_kps", "trg_imsize", "trg_bndbox");
        if (p.src.points.size() != p.tgt.points.size()) continue;  // unannotated pairs are skipped
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw std::runtime_error("no usable pairs under " + ann_dir.string());
    return pairs;
}

}  // namespace gate::downstream
