#include "gate/techniques/lora.hpp"

#include <algorithm>
#include <stdexcept>

#include "gate/backend/safetensors.hpp"

namespace gate::techniques {

namespace fs = std::filesystem;
using core::Tensor;

void LoraRegistry::register_lora(const std::string& id, const fs::path& path, double strength) {
    if (id.empty()) throw std::invalid_argument("lora id must not be empty");
    if (entries_.count(id)) throw std::invalid_argument("duplicate lora id: " + id);
    if (!fs::exists(path)) throw std::invalid_argument("lora weight file does not exist: " + path.string());
    if (strength <= 0.0 || strength > 1.0) {
        throw std::invalid_argument("lora strength must be in (0, 1]: " + std::to_string(strength));
    }
    entries_[id] = {path, strength};
}

const LoraEntry& LoraRegistry::at(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw std::out_of_range("unknown lora id: " + id);
    return it->second;
}

namespace {

std::string underscored(const std::string& s) {
    std::string out = s;
    std::replace(out.begin(), out.end(), '.', '_');
    return out;
}

// Resolve a module identifier from a lora file to a weight parameter path.
std::string resolve_target(const backend::ParamStore& ps, std::string module,
                           const std::map<std::string, std::string>& by_underscored) {
    if (module.rfind("lora_unet_", 0) == 0) module = module.substr(10);
    if (ps.find(module + ".weight")) return module + ".weight";
    auto it = by_underscored.find(underscored(module) + "_weight");
    if (it != by_underscored.end()) return it->second;
    throw std::runtime_error("lora target '" + module + "' does not match any model parameter");
}

struct PendingDelta {
    Tensor down, up;
    double alpha = 0.0;  // 0 = unset, defaults to rank
};

}  // namespace

LoraPatch::~LoraPatch() {
    if (active()) revert();
}

LoraPatch LoraPatch::apply(backend::ParamStore& ps, const fs::path& file, double strength) {
    auto tensors = backend::load_safetensors(file);

    std::map<std::string, std::string> by_underscored;
    for (const auto& [name, _] : ps.all()) by_underscored[underscored(name)] = name;

    std::map<std::string, PendingDelta> pending;
    for (auto& [key, tensor] : tensors) {
        std::string rest = key;
        auto strip_suffix = [&](const char* sfx) {
            const std::string s(sfx);
            if (rest.size() > s.size() && rest.compare(rest.size() - s.size(), s.size(), s) == 0) {
                rest = rest.substr(0, rest.size() - s.size());
                return true;
            }
            return false;
        };
        if (strip_suffix(".lora_down.weight") || strip_suffix(".lora_down")) {
            pending[resolve_target(ps, rest, by_underscored)].down = std::move(tensor);
        } else if (strip_suffix(".lora_up.weight") || strip_suffix(".lora_up")) {
            pending[resolve_target(ps, rest, by_underscored)].up = std::move(tensor);
        } else if (strip_suffix(".alpha")) {
            pending[resolve_target(ps, rest, by_underscored)].alpha = tensor.numel() ? tensor[0] : 0.0;
        } else {
            throw std::runtime_error("unrecognized lora key: " + key);
        }
    }
    if (pending.empty()) throw std::runtime_error("lora file has no usable entries: " + file.string());

    LoraPatch patch;
    patch.ps_ = &ps;
    for (auto& [target, delta] : pending) {
        if (delta.down.empty() || delta.up.empty()) {
            throw std::runtime_error("lora target '" + target + "' is missing its down/up pair");
        }
        Tensor* w = ps.find(target);
        // Flattened matrix views: weight (out, in*k*k), up (out, r), down (r, in*k*k).
        const int64_t out_dim = w->dim(0);
        const int64_t in_flat = w->numel() / out_dim;
        const int64_t rank = delta.up.numel() / out_dim;
        if (rank <= 0 || delta.up.numel() != out_dim * rank || delta.down.numel() != rank * in_flat) {
            throw std::runtime_error("lora rank/shape mismatch for '" + target + "': up " +
                                     delta.up.shape_str() + ", down " + delta.down.shape_str() +
                                     ", weight " + w->shape_str());
        }
        const double alpha = delta.alpha > 0.0 ? delta.alpha : static_cast<double>(rank);
        const float s = static_cast<float>(strength * alpha / static_cast<double>(rank));

        patch.snapshots_.emplace_back(target, w->storage());
        for (int64_t o = 0; o < out_dim; ++o) {
            for (int64_t i = 0; i < in_flat; ++i) {
                double acc = 0.0;
                for (int64_t r = 0; r < rank; ++r) {
                    acc += delta.up[o * rank + r] * delta.down[r * in_flat + i];
                }
                (*w)[o * in_flat + i] += s * static_cast<float>(acc);
            }
        }
    }
    return patch;
}

void LoraPatch::revert() {
    if (!ps_) return;
    for (auto& [name, snapshot] : snapshots_) {
        Tensor* w = ps_->find(name);
        std::copy(snapshot.begin(), snapshot.end(), w->data());
    }
    snapshots_.clear();
    ps_ = nullptr;
}

}  // namespace gate::techniques
