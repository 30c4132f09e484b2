#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gate/backend/nn.hpp"

namespace gate::techniques {

struct LoraEntry {
    std::filesystem::path path;
    double strength = 1.0;  // in (0, 1]
};

class LoraRegistry {
public:
    void register_lora(const std::string& id, const std::filesystem::path& path, double strength = 1.0);
    bool has(const std::string& id) const { return entries_.count(id) != 0; }
    const LoraEntry& at(const std::string& id) const;
    const std::map<std::string, LoraEntry>& entries() const { return entries_; }

private:
    std::map<std::string, LoraEntry> entries_;
};

// Low-rank weight deltas applied in place to a parameter store. Keys follow
// either "<module>.lora_down/<module>.lora_up[/.alpha]" with exact module
// paths, or the community underscore convention with a "lora_unet_" prefix.
// Linear and convolutional targets are both supported; the convolutional
// product runs over flattened (out, in*k*k) views. Originals are snapshotted,
// so revert() restores bit-identical weights.
class LoraPatch {
public:
    LoraPatch() = default;
    LoraPatch(const LoraPatch&) = delete;
    LoraPatch& operator=(const LoraPatch&) = delete;
    LoraPatch(LoraPatch&&) = default;
    LoraPatch& operator=(LoraPatch&&) = default;
    ~LoraPatch();

    static LoraPatch apply(backend::ParamStore& ps, const std::filesystem::path& file, double strength);

    void revert();
    bool active() const { return !snapshots_.empty(); }
    int patched_count() const { return static_cast<int>(snapshots_.size()); }

private:
    backend::ParamStore* ps_ = nullptr;
    std::vector<std::pair<std::string, std::vector<float>>> snapshots_;
};

}  // namespace gate::techniques
