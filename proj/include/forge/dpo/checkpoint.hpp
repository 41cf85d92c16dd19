#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/dpo/lora.hpp"

namespace forge::dpo {

// Adapter snapshot at one training step. Base weights are stored once in the
// model file; checkpoints carry their digest to detect mismatched pairs.
struct Checkpoint {
    long step = 0;
    std::map<std::string, std::string> config_echo;
    std::string base_digest;
    std::vector<std::string> vocab_tokens;
    std::vector<LoraAdapter> adapters;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// "checkpoint-250" -> 250; used to key trajectories by step.
long checkpoint_step(const std::string& checkpoint_id);

std::string checkpoint_id_for_step(long step);

}  // namespace forge::dpo
