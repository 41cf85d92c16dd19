#pragma once

#include <utility>
#include <vector>

#include "forge/chat_endpoint.hpp"
#include "forge/dpo/lora.hpp"

namespace forge::dpo {

// Serves the toy model behind the ChatEndpoint interface so the evaluation
// harness can quiz checkpoints exactly like a remote model. Greedy decoding
// with a fixed token budget keeps replies deterministic; `variant` is ignored
// on purpose.
class ToyChatEndpoint : public ChatEndpoint {
public:
    ToyChatEndpoint(ToyLM model, std::vector<LoraAdapter> adapters, int max_new_tokens = 64)
        : model_(std::move(model)),
          adapters_(std::move(adapters)),
          max_new_tokens_(max_new_tokens) {}

    ChatResult ask(std::string_view system, std::string_view user, std::uint64_t) override {
        std::string prompt;
        prompt.reserve(system.size() + user.size() + 1);
        prompt.append(system);
        prompt.push_back('\n');
        prompt.append(user);
        return ChatResult{true, greedy_generate(model_, adapters_, prompt, max_new_tokens_), {}};
    }

    void set_adapters(std::vector<LoraAdapter> adapters) { adapters_ = std::move(adapters); }

private:
    ToyLM model_;
    std::vector<LoraAdapter> adapters_;
    int max_new_tokens_;
};

}  // namespace forge::dpo
