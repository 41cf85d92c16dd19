#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "forge/dpo/linalg.hpp"

namespace forge::dpo {

inline constexpr int kOovId = 0;
inline constexpr int kBosId = 1;

// Character-level vocabulary. Index 0 is OOV, 1 is BOS; the rest are single
// bytes ranked by corpus frequency.
struct Vocab {
    std::vector<std::string> tokens;        // tokens[0]="<oov>", tokens[1]="<bos>"
    std::array<std::int16_t, 256> byte_to_id{};

    int size() const { return static_cast<int>(tokens.size()); }
    void rebuild_index();
};

// Most frequent (target_size - 2) bytes across the texts; frequency ties
// break on byte value. Throws DataError when the texts are empty.
Vocab build_vocab(const std::vector<std::string>& texts, int target_size = 64);

std::vector<int> tokenize(std::string_view text, const Vocab& vocab);

// Tiny autoregressive LM over the char vocab: the prompt is summarized as the
// mean of its token embeddings (zeros when empty), each completion step feeds
// concat(prev-token embedding, prompt context) through one tanh layer.
struct ToyLM {
    Vocab vocab;
    int embed_dim = 16;
    int hidden_dim = 32;
    Mat embed;     // V x d
    Mat hidden_w;  // h x 2d
    Vec hidden_b;  // h
    Mat out_w;     // V x h
    Vec out_b;     // V
};

void validate(const ToyLM& m);

ToyLM make_toy_lm(Vocab vocab, int embed_dim, int hidden_dim, std::uint64_t seed);

// Digest of the canonical serialization; identifies the frozen base weights
// in checkpoints.
std::string model_digest(const ToyLM& m);

void save_model(const ToyLM& m, const std::filesystem::path& path);
ToyLM load_model(const std::filesystem::path& path);

}  // namespace forge::dpo
