#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace forge {

struct ChatResult {
    bool ok = false;
    std::string text;
    std::string error;
};

// Minimal "ask a chat model" interface shared by evals and the toy-model
// shim. `variant` perturbs sampling (mapped to a request seed where the
// backend supports one) so retries can ask for a different reply.
class ChatEndpoint {
public:
    virtual ~ChatEndpoint() = default;
    virtual ChatResult ask(std::string_view system, std::string_view user,
                           std::uint64_t variant) = 0;
};

}  // namespace forge
