#include "gate/backend/clip_text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gate/core/rng.hpp"

namespace gate::backend {

using nlohmann::json;

namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u) || u >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
            if (!std::isspace(u) && u != '\0') words.push_back(std::string(1, ch));
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

}  // namespace

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& vocab_json,
                                const std::filesystem::path& merges_txt) {
    BpeTokenizer t;
    {
        std::ifstream f(vocab_json);
        if (!f) throw std::runtime_error("cannot open vocab: " + vocab_json.string());
        json j;
        f >> j;
        for (auto it = j.begin(); it != j.end(); ++it) t.vocab_[it.key()] = it.value().get<int64_t>();
    }
    {
        std::ifstream f(merges_txt);
        if (!f) throw std::runtime_error("cannot open merges: " + merges_txt.string());
        std::string line;
        int rank = 0;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto sp = line.find(' ');
            if (sp == std::string::npos) continue;
            t.merge_rank_[{line.substr(0, sp), line.substr(sp + 1)}] = rank++;
        }
    }
    auto bos = t.vocab_.find("<|startoftext|>");
    auto eos = t.vocab_.find("<|endoftext|>");
    if (bos == t.vocab_.end() || eos == t.vocab_.end()) {
        throw std::runtime_error("vocab missing start/end tokens: " + vocab_json.string());
    }
    t.bos_ = bos->second;
    t.eos_ = eos->second;
    return t;
}

Tokenization BpeTokenizer::tokenize(const std::string& text) const {
    Tokenization out;
    out.tokens.push_back("<|startoftext|>");
    out.ids.push_back(bos_);
    for (const std::string& word : split_words(text)) {
        // BPE over the word with the end-of-word marker.
        std::vector<std::string> parts;
        for (size_t i = 0; i < word.size(); ++i) parts.push_back(std::string(1, word[i]));
        if (!parts.empty()) parts.back() += "</w>";
        while (parts.size() > 1) {
            int best_rank = std::numeric_limits<int>::max();
            size_t best_i = 0;
            for (size_t i = 0; i + 1 < parts.size(); ++i) {
                auto it = merge_rank_.find({parts[i], parts[i + 1]});
                if (it != merge_rank_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best_i = i;
                }
            }
            if (best_rank == std::numeric_limits<int>::max()) break;
            parts[best_i] += parts[best_i + 1];
            parts.erase(parts.begin() + static_cast<long>(best_i) + 1);
        }
        for (const std::string& p : parts) {
            auto it = vocab_.find(p);
            if (it == vocab_.end()) continue;  // unrepresentable byte; skip
            out.tokens.push_back(p);
            out.ids.push_back(it->second);
        }
    }
    out.tokens.push_back("<|endoftext|>");
    out.ids.push_back(eos_);
    return out;
}

TextEncoder::TextEncoder(ParamStore& ps, const TextEncoderConfig& cfg) : cfg_(cfg) {
    const std::string root = "text_model";
    token_embedding_ = &ps.create(root + ".embeddings.token_embedding.weight", {cfg.vocab_size, cfg.dim});
    ps.set_hint(root + ".embeddings.token_embedding.weight", cfg.dim);
    position_embedding_ =
        &ps.create(root + ".embeddings.position_embedding.weight", {cfg.max_tokens, cfg.dim});
    ps.set_hint(root + ".embeddings.position_embedding.weight", cfg.dim);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = root + ".encoder.layers." + std::to_string(l);
        Block b;
        b.ln1 = LayerNorm::make(ps, p + ".layer_norm1", cfg.dim);
        // The v1 text encoder names its projections q/k/v/out_proj.
        b.attn.to_q = Linear::make(ps, p + ".self_attn.q_proj", cfg.dim, cfg.dim, true);
        b.attn.to_k = Linear::make(ps, p + ".self_attn.k_proj", cfg.dim, cfg.dim, true);
        b.attn.to_v = Linear::make(ps, p + ".self_attn.v_proj", cfg.dim, cfg.dim, true);
        b.attn.to_out = Linear::make(ps, p + ".self_attn.out_proj", cfg.dim, cfg.dim, true);
        b.attn.heads = cfg.heads;
        b.ln2 = LayerNorm::make(ps, p + ".layer_norm2", cfg.dim);
        b.fc1 = Linear::make(ps, p + ".mlp.fc1", cfg.dim, cfg.dim * 4, true);
        b.fc2 = Linear::make(ps, p + ".mlp.fc2", cfg.dim * 4, cfg.dim, true);
        blocks_.push_back(b);
    }
    final_ln_ = LayerNorm::make(ps, root + ".final_layer_norm", cfg.dim);
}

Tokenization TextEncoder::tokenize(const std::string& text) const {
    Tokenization out;
    if (bpe_) {
        out = bpe_->tokenize(text);
    } else {
        out.tokens.push_back("<|startoftext|>");
        for (const std::string& w : split_words(text)) out.tokens.push_back(w);
        out.tokens.push_back("<|endoftext|>");
        out.ids.reserve(out.tokens.size());
        for (const std::string& tkn : out.tokens) {
            out.ids.push_back(static_cast<int64_t>(core::fnv1a64(tkn) % static_cast<uint64_t>(cfg_.vocab_size)));
        }
    }
    if (static_cast<int64_t>(out.tokens.size()) > cfg_.max_tokens) {
        // Truncate, keeping the end token.
        out.tokens.resize(static_cast<size_t>(cfg_.max_tokens));
        out.ids.resize(static_cast<size_t>(cfg_.max_tokens));
        out.tokens.back() = "<|endoftext|>";
        out.ids.back() = bpe_ ? out.ids.back() : static_cast<int64_t>(core::fnv1a64("<|endoftext|>") %
                                                                      static_cast<uint64_t>(cfg_.vocab_size));
    }
    return out;
}

Tensor TextEncoder::encode(const Tokenization& tok) const {
    int64_t seq = tok.prompt_len();
    std::vector<int64_t> ids = tok.ids;
    if (cfg_.pad_to_max && seq < cfg_.max_tokens) {
        ids.resize(static_cast<size_t>(cfg_.max_tokens), ids.back());  // pad with eos
        seq = cfg_.max_tokens;
    }
    Tensor x({seq, cfg_.dim});
    for (int64_t i = 0; i < seq; ++i) {
        const int64_t id = ids[static_cast<size_t>(i)];
        if (id < 0 || id >= cfg_.vocab_size) throw std::out_of_range("token id outside vocabulary");
        for (int64_t d = 0; d < cfg_.dim; ++d) {
            x.at(i, d) = token_embedding_->at(id, d) + position_embedding_->at(i, d);
        }
    }
    for (const Block& b : blocks_) {
        Tensor h = b.ln1.forward(x);
        h = b.attn.forward(h, h, nullptr, /*causal=*/true);
        add_inplace(x, h);
        Tensor m = b.ln2.forward(x);
        m = b.fc2.forward(gelu_quick(b.fc1.forward(m)));
        add_inplace(x, m);
    }
    return final_ln_.forward(x);
}

}  // namespace gate::backend
