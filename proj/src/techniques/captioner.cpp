#include "gate/techniques/captioner.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

namespace gate::techniques {

CaptionerAdapter CaptionerAdapter::make(const std::string& backend_id) {
    CaptionerAdapter a;
    a.backend_id_ = backend_id;
    if (backend_id == "fixed_stub") {
        a.is_stub_ = true;
    } else if (backend_id.rfind("file:", 0) == 0) {
        const std::string path = backend_id.substr(5);
        std::ifstream f(path);
        if (!f) throw std::runtime_error("captioner file backend: cannot open " + path);
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("captioner file backend: bad json in " + path + ": " + e.what());
        }
        for (auto it = j.begin(); it != j.end(); ++it) {
            a.file_captions_[it.key()] = it.value().get<std::string>();
        }
    } else {
        throw std::invalid_argument("unknown captioner backend: " + backend_id);
    }
    return a;
}

const std::string& CaptionerAdapter::caption(const std::string& image_id) {
    auto it = cache_.find(image_id);
    if (it != cache_.end()) return it->second;
    if (is_stub_) {
        return cache_.emplace(image_id, "a photo of " + image_id + ", high quality").first->second;
    }
    auto fit = file_captions_.find(image_id);
    if (fit == file_captions_.end()) {
        throw std::runtime_error("captioner has no caption for image '" + image_id + "'");
    }
    return cache_.emplace(image_id, fit->second).first->second;
}

}  // namespace gate::techniques
