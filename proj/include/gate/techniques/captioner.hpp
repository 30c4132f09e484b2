#pragma once

#include <map>
#include <string>

namespace gate::techniques {

// Adapter over an external captioning backend. Captions are cached so a
// given (backend, image) pair always resolves to the same prompt string.
// Backends: "fixed_stub" (canned captions for tests) and "file:<path>"
// (a JSON object mapping image_id to caption).
class CaptionerAdapter {
public:
    static CaptionerAdapter make(const std::string& backend_id);

    const std::string& caption(const std::string& image_id);
    bool cached(const std::string& image_id) const { return cache_.count(image_id) != 0; }
    void preload(const std::string& image_id, std::string text) { cache_[image_id] = std::move(text); }
    const std::string& backend_id() const { return backend_id_; }

private:
    std::string backend_id_;
    std::map<std::string, std::string> cache_;
    std::map<std::string, std::string> file_captions_;
    bool is_stub_ = false;
};

}  // namespace gate::techniques
