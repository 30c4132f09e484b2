#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gate/backend/nn.hpp"

namespace gate::backend {

struct Tokenization {
    std::vector<std::string> tokens;  // human-readable, bos/eos included
    std::vector<int64_t> ids;
    int64_t prompt_len() const { return static_cast<int64_t>(tokens.size()); }
};

// Byte-pair tokenizer for the v1 text encoder vocabulary (vocab.json +
// merges.txt). Used only when a real checkpoint directory provides the files.
class BpeTokenizer {
public:
    static BpeTokenizer load(const std::filesystem::path& vocab_json,
                             const std::filesystem::path& merges_txt);
    Tokenization tokenize(const std::string& text) const;

private:
    std::map<std::string, int64_t> vocab_;
    std::map<std::pair<std::string, std::string>, int> merge_rank_;
    int64_t bos_ = 0, eos_ = 0;
};

struct TextEncoderConfig {
    int64_t dim = 16;
    int heads = 2;
    int layers = 2;
    int64_t max_tokens = 77;
    int64_t vocab_size = 4096;  // hashed stand-in vocabulary
    bool pad_to_max = false;    // real checkpoints pad with eos to max_tokens
};

// Transformer text encoder of the v1 family shape: token + position
// embeddings, pre-norm blocks with causal self-attention and quick-gelu MLP,
// final layer norm.
class TextEncoder {
public:
    TextEncoder(ParamStore& ps, const TextEncoderConfig& cfg);

    // Whitespace/punctuation tokenizer over the hashed vocabulary, or BPE when
    // one was attached.
    Tokenization tokenize(const std::string& text) const;
    Tensor encode(const Tokenization& tok) const;  // (seq, dim)

    void attach_bpe(std::shared_ptr<BpeTokenizer> bpe) { bpe_ = std::move(bpe); }
    const TextEncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        LayerNorm ln1, ln2;
        MultiHeadAttention attn;
        Linear fc1, fc2;
    };
    TextEncoderConfig cfg_;
    Tensor* token_embedding_ = nullptr;     // (vocab, dim)
    Tensor* position_embedding_ = nullptr;  // (max_tokens, dim)
    std::vector<Block> blocks_;
    LayerNorm final_ln_;
    std::shared_ptr<BpeTokenizer> bpe_;
};

}  // namespace gate::backend
