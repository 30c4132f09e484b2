#include "gate/backend/sd_weights.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "gate/backend/safetensors.hpp"
#include "gate/core/rng.hpp"

namespace gate::backend {

namespace fs = std::filesystem;

namespace {

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

std::string replace_prefix(const std::string& s, const std::string& from, const std::string& to) {
    return to + s.substr(from.size());
}

// Copies tensors into a store by exact name. 1x1-conv-shaped sources squeeze
// into matching linear parameters. Every parameter must end up covered.
void fill_store(ParamStore& ps, const std::map<std::string, core::Tensor>& src,
                const std::string& what) {
    std::map<std::string, bool> covered;
    for (const auto& [name, _] : ps.all()) covered[name] = false;
    for (const auto& [name, tensor] : src) {
        core::Tensor* dst = ps.find(name);
        if (!dst) throw std::runtime_error(what + ": unknown parameter '" + name + "'");
        if (dst->shape() != tensor.shape()) {
            const bool squeezable = tensor.rank() == 4 && tensor.dim(2) == 1 && tensor.dim(3) == 1 &&
                                    dst->rank() == 2 && dst->numel() == tensor.numel();
            if (!squeezable) {
                throw std::runtime_error(what + ": shape mismatch for '" + name + "': checkpoint " +
                                         tensor.shape_str() + " vs model " + dst->shape_str());
            }
        }
        std::copy(tensor.data(), tensor.data() + tensor.numel(), dst->data());
        covered[name] = true;
    }
    for (const auto& [name, ok] : covered) {
        if (!ok) throw std::runtime_error(what + ": parameter '" + name + "' missing from checkpoint");
    }
}

std::string resnet_suffix(const std::string& legacy) {
    // Denoiser resnet sub-names in the legacy layout.
    static const std::pair<const char*, const char*> table[] = {
        {"in_layers.0.", "norm1."},   {"in_layers.2.", "conv1."},
        {"emb_layers.1.", "time_emb_proj."},
        {"out_layers.0.", "norm2."},  {"out_layers.3.", "conv2."},
        {"skip_connection.", "conv_shortcut."},
    };
    for (const auto& [from, to] : table) {
        if (starts_with(legacy, from)) return replace_prefix(legacy, from, to);
    }
    return {};
}

uint64_t digest_of(const std::map<std::string, core::Tensor>& tensors, uint64_t acc) {
    for (const auto& [name, t] : tensors) {
        acc = core::derive_seed(acc, name);
        acc = core::derive_seed(acc, t.shape_str());
        if (t.numel() > 0) {
            uint64_t bits = 0;
            std::memcpy(&bits, t.data(), std::min<size_t>(8, sizeof(float) * static_cast<size_t>(t.numel())));
            acc ^= bits * 0x9e3779b97f4a7c15ULL;
        }
    }
    return acc;
}

}  // namespace

std::map<std::string, std::string> convert_legacy_unet_keys(const std::vector<std::string>& keys,
                                                            int stages, int res_blocks) {
    std::map<std::string, std::string> out;
    const int per_stage = res_blocks + 1;  // units per input stage incl. downsample slot
    for (const std::string& key : keys) {
        std::string mapped;
        if (starts_with(key, "time_embed.0.")) {
            mapped = replace_prefix(key, "time_embed.0.", "time_embedding.linear_1.");
        } else if (starts_with(key, "time_embed.2.")) {
            mapped = replace_prefix(key, "time_embed.2.", "time_embedding.linear_2.");
        } else if (starts_with(key, "input_blocks.0.0.")) {
            mapped = replace_prefix(key, "input_blocks.0.0.", "conv_in.");
        } else if (starts_with(key, "out.0.")) {
            mapped = replace_prefix(key, "out.0.", "conv_norm_out.");
        } else if (starts_with(key, "out.2.")) {
            mapped = replace_prefix(key, "out.2.", "conv_out.");
        } else if (starts_with(key, "input_blocks.")) {
            std::istringstream ss(key.substr(13));
            int n = 0, sub = 0;
            char dot;
            ss >> n >> dot >> sub >> dot;
            std::string rest;
            std::getline(ss, rest);
            const int i = (n - 1) / per_stage;
            const int j = (n - 1) % per_stage;
            const std::string stage = "down_blocks." + std::to_string(i) + ".";
            if (j == res_blocks) {  // downsampler slot
                if (starts_with(rest, "op.")) {
                    mapped = stage + "downsamplers.0.conv." + rest.substr(3);
                }
            } else if (sub == 0) {
                const std::string s = resnet_suffix(rest);
                if (!s.empty()) mapped = stage + "resnets." + std::to_string(j) + "." + s;
            } else {
                mapped = stage + "attentions." + std::to_string(j) + "." + rest;
            }
        } else if (starts_with(key, "middle_block.")) {
            std::istringstream ss(key.substr(13));
            int n = 0;
            char dot;
            ss >> n >> dot;
            std::string rest;
            std::getline(ss, rest);
            if (n == 1) {
                mapped = "mid_block.attentions.0." + rest;
            } else {
                const std::string s = resnet_suffix(rest);
                if (!s.empty()) mapped = "mid_block.resnets." + std::to_string(n == 0 ? 0 : 1) + "." + s;
            }
        } else if (starts_with(key, "output_blocks.")) {
            std::istringstream ss(key.substr(14));
            int n = 0, sub = 0;
            char dot;
            ss >> n >> dot >> sub >> dot;
            std::string rest;
            std::getline(ss, rest);
            const int up_per_stage = res_blocks + 1;
            const int i = n / up_per_stage;
            const int j = n % up_per_stage;
            const std::string stage = "up_blocks." + std::to_string(i) + ".";
            if (sub == 0) {
                const std::string s = resnet_suffix(rest);
                if (!s.empty()) mapped = stage + "resnets." + std::to_string(j) + "." + s;
            } else if (starts_with(rest, "conv.")) {
                // the upsampler rides as the final sub-module of the stage's last unit
                mapped = stage + "upsamplers.0.conv." + rest.substr(5);
            } else {
                mapped = stage + "attentions." + std::to_string(j) + "." + rest;
            }
        }
        if (mapped.empty()) {
            throw std::runtime_error("unrecognized legacy denoiser key: " + key);
        }
        out[key] = mapped;
    }
    (void)stages;
    return out;
}

std::map<std::string, std::string> convert_legacy_vae_keys(const std::vector<std::string>& keys,
                                                           int stages) {
    std::map<std::string, std::string> out;
    auto attn_suffix = [](const std::string& rest) -> std::string {
        static const std::pair<const char*, const char*> table[] = {
            {"norm.", "group_norm."}, {"q.", "to_q."},       {"k.", "to_k."},
            {"v.", "to_v."},          {"proj_out.", "to_out.0."},
        };
        for (const auto& [from, to] : table) {
            if (starts_with(rest, from)) return replace_prefix(rest, from, to);
        }
        return {};
    };
    auto mid = [&](const std::string& rest, const std::string& side) -> std::string {
        if (starts_with(rest, "block_1.")) return side + ".mid_block.resnets.0." + rest.substr(8);
        if (starts_with(rest, "block_2.")) return side + ".mid_block.resnets.1." + rest.substr(8);
        if (starts_with(rest, "attn_1.")) {
            const std::string s = attn_suffix(rest.substr(7));
            if (!s.empty()) return side + ".mid_block.attentions.0." + s;
        }
        return {};
    };
    auto resnet = [](std::string rest) -> std::string {
        if (starts_with(rest, "nin_shortcut.")) return "conv_shortcut." + rest.substr(13);
        return rest;  // norm1/conv1/norm2/conv2 keep their names
    };

    for (const std::string& key : keys) {
        std::string mapped;
        if (starts_with(key, "encoder.conv_in.") || starts_with(key, "encoder.conv_out.") ||
            starts_with(key, "decoder.conv_in.") || starts_with(key, "decoder.conv_out.") ||
            starts_with(key, "quant_conv.") || starts_with(key, "post_quant_conv.")) {
            mapped = key;
        } else if (starts_with(key, "encoder.norm_out.")) {
            mapped = replace_prefix(key, "encoder.norm_out.", "encoder.conv_norm_out.");
        } else if (starts_with(key, "decoder.norm_out.")) {
            mapped = replace_prefix(key, "decoder.norm_out.", "decoder.conv_norm_out.");
        } else if (starts_with(key, "encoder.mid.")) {
            mapped = mid(key.substr(12), "encoder");
        } else if (starts_with(key, "decoder.mid.")) {
            mapped = mid(key.substr(12), "decoder");
        } else if (starts_with(key, "encoder.down.")) {
            std::istringstream ss(key.substr(13));
            int i = 0;
            char dot;
            ss >> i >> dot;
            std::string rest;
            std::getline(ss, rest);
            const std::string stage = "encoder.down_blocks." + std::to_string(i) + ".";
            if (starts_with(rest, "block.")) {
                std::istringstream bs(rest.substr(6));
                int j = 0;
                bs >> j >> dot;
                std::string inner;
                std::getline(bs, inner);
                mapped = stage + "resnets." + std::to_string(j) + "." + resnet(inner);
            } else if (starts_with(rest, "downsample.conv.")) {
                mapped = stage + "downsamplers.0.conv." + rest.substr(16);
            }
        } else if (starts_with(key, "decoder.up.")) {
            std::istringstream ss(key.substr(11));
            int i = 0;
            char dot;
            ss >> i >> dot;
            std::string rest;
            std::getline(ss, rest);
            // legacy decoder stages are indexed bottom-up; ours run top-down
            const std::string stage = "decoder.up_blocks." + std::to_string(stages - 1 - i) + ".";
            if (starts_with(rest, "block.")) {
                std::istringstream bs(rest.substr(6));
                int j = 0;
                bs >> j >> dot;
                std::string inner;
                std::getline(bs, inner);
                mapped = stage + "resnets." + std::to_string(j) + "." + resnet(inner);
            } else if (starts_with(rest, "upsample.conv.")) {
                mapped = stage + "upsamplers.0.conv." + rest.substr(14);
            }
        }
        if (mapped.empty()) throw std::runtime_error("unrecognized legacy autoencoder key: " + key);
        out[key] = mapped;
    }
    return out;
}

LoadedCheckpoint load_checkpoint_weights(const fs::path& path, ParamStore& unet, ParamStore& vae,
                                         ParamStore& text, ParamStore* control) {
    LoadedCheckpoint result;
    uint64_t digest = 0xcbf29ce484222325ULL;

    auto load_tokenizer = [&](const fs::path& dir) {
        const fs::path vocab = dir / "vocab.json";
        const fs::path merges = dir / "merges.txt";
        if (fs::exists(vocab) && fs::exists(merges)) {
            result.bpe = std::make_shared<BpeTokenizer>(BpeTokenizer::load(vocab, merges));
        }
    };

    if (fs::is_directory(path)) {
        auto component_file = [&](const char* sub) -> fs::path {
            const fs::path dir = path / sub;
            if (!fs::is_directory(dir)) return {};
            for (const auto& e : fs::directory_iterator(dir)) {
                if (e.path().extension() == ".safetensors") return e.path();
            }
            return {};
        };
        const fs::path unet_file = component_file("unet");
        const fs::path vae_file = component_file("vae");
        const fs::path text_file = component_file("text_encoder");
        if (unet_file.empty() || vae_file.empty() || text_file.empty()) {
            throw std::runtime_error("checkpoint directory " + path.string() +
                                     " must contain unet/, vae/ and text_encoder/ tensor files");
        }
        auto unet_t = load_safetensors(unet_file);
        auto vae_t = load_safetensors(vae_file);
        auto text_t = load_safetensors(text_file);
        text_t.erase("text_model.embeddings.position_ids");  // buffer, not a parameter
        fill_store(unet, unet_t, "unet");
        fill_store(vae, vae_t, "vae");
        fill_store(text, text_t, "text_encoder");
        digest = digest_of(unet_t, digest_of(vae_t, digest_of(text_t, digest)));

        if (control) {
            const fs::path control_file = component_file("controlnet");
            if (!control_file.empty()) {
                auto control_t = load_safetensors(control_file);
                fill_store(*control, control_t, "controlnet");
                digest = digest_of(control_t, digest);
            } else {
                control->seed_init(core::derive_seed(0, "control"));
            }
        }
        load_tokenizer(path / "tokenizer");
        if (!result.bpe) {
            throw std::runtime_error("checkpoint directory " + path.string() +
                                     " has no tokenizer/vocab.json + merges.txt");
        }
    } else {
        auto all = load_safetensors(path);
        std::map<std::string, core::Tensor> unet_raw, vae_raw, text_t;
        for (auto& [key, tensor] : all) {
            if (starts_with(key, "model.diffusion_model.")) {
                unet_raw.emplace(key.substr(22), std::move(tensor));
            } else if (starts_with(key, "first_stage_model.")) {
                vae_raw.emplace(key.substr(18), std::move(tensor));
            } else if (starts_with(key, "cond_stage_model.transformer.")) {
                text_t.emplace(key.substr(29), std::move(tensor));
            }
            // anything else (ema copies, schedule buffers) is ignored
        }
        if (unet_raw.empty() || vae_raw.empty() || text_t.empty()) {
            throw std::runtime_error("consolidated checkpoint " + path.string() +
                                     " lacks denoiser/autoencoder/text sections");
        }
        std::vector<std::string> keys;
        for (const auto& [k, _] : unet_raw) keys.push_back(k);
        const int stages = 4, res_blocks = 2;
        auto unet_map = convert_legacy_unet_keys(keys, stages, res_blocks);
        std::map<std::string, core::Tensor> unet_t;
        for (auto& [k, t] : unet_raw) unet_t.emplace(unet_map.at(k), std::move(t));

        keys.clear();
        for (const auto& [k, _] : vae_raw) keys.push_back(k);
        auto vae_map = convert_legacy_vae_keys(keys, stages);
        std::map<std::string, core::Tensor> vae_t;
        for (auto& [k, t] : vae_raw) vae_t.emplace(vae_map.at(k), std::move(t));

        text_t.erase("text_model.embeddings.position_ids");
        fill_store(unet, unet_t, "unet");
        fill_store(vae, vae_t, "vae");
        fill_store(text, text_t, "text_encoder");
        digest = digest_of(unet_t, digest_of(vae_t, digest_of(text_t, digest)));
        if (control) control->seed_init(core::derive_seed(0, "control"));

        load_tokenizer(path.parent_path() / "tokenizer");
        if (!result.bpe) {
            throw std::runtime_error("no tokenizer found beside " + path.string() +
                                     " (expected tokenizer/vocab.json + merges.txt)");
        }
    }

    std::ostringstream os;
    os << std::hex << digest;
    result.digest = os.str();
    return result;
}

}  // namespace gate::backend
