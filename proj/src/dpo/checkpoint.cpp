#include "forge/dpo/checkpoint.hpp"

#include <cctype>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/io.hpp"

namespace forge::dpo {

namespace {

nlohmann::json adapter_json(const LoraAdapter& a) {
    return nlohmann::json{{"target", to_string(a.target)},
                          {"rank", a.rank},
                          {"alpha", a.alpha},
                          {"a", {{"rows", a.a.rows}, {"cols", a.a.cols}, {"data", a.a.data}}},
                          {"b", {{"rows", a.b.rows}, {"cols", a.b.cols}, {"data", a.b.data}}}};
}

Mat mat_from_json(const nlohmann::json& j) {
    Mat m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) {
        throw DataError("matrix data size mismatch");
    }
    return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json adapters = nlohmann::json::array();
    for (const auto& a : ckpt.adapters) {
        adapters.push_back(adapter_json(a));
    }
    nlohmann::json j{{"version", 1},
                     {"kind", "checkpoint"},
                     {"step", ckpt.step},
                     {"config_echo", ckpt.config_echo},
                     {"base_digest", ckpt.base_digest},
                     {"vocab", {{"tokens", ckpt.vocab_tokens}}},
                     {"adapters", adapters}};
    atomic_write_file(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw DataError("checkpoint file is not valid JSON: " + path.string());
    }
    try {
        if (j.value("kind", std::string{}) != "checkpoint") {
            throw DataError("not a checkpoint file: " + path.string());
        }
        if (j.at("version").get<int>() != 1) {
            throw DataError("unsupported checkpoint version in " + path.string());
        }
        Checkpoint c;
        c.step = j.at("step").get<long>();
        c.config_echo = j.value("config_echo", std::map<std::string, std::string>{});
        c.base_digest = j.at("base_digest").get<std::string>();
        c.vocab_tokens = j.at("vocab").at("tokens").get<std::vector<std::string>>();
        for (const auto& aj : j.at("adapters")) {
            LoraAdapter a;
            a.target = lora_target_from_string(aj.at("target").get<std::string>());
            a.rank = aj.at("rank").get<int>();
            a.alpha = aj.at("alpha").get<double>();
            a.a = mat_from_json(aj.at("a"));
            a.b = mat_from_json(aj.at("b"));
            c.adapters.push_back(std::move(a));
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint file " + path.string() + ": " + e.what());
    }
}

long checkpoint_step(const std::string& checkpoint_id) {
    std::size_t end = checkpoint_id.size();
    while (end > 0 && std::isdigit(static_cast<unsigned char>(checkpoint_id[end - 1])) != 0) {
        --end;
    }
    if (end == checkpoint_id.size()) {
        throw DataError("checkpoint id carries no step number: " + checkpoint_id);
    }
    return std::stol(checkpoint_id.substr(end));
}

std::string checkpoint_id_for_step(long step) {
    return "checkpoint-" + std::to_string(step);
}

}  // namespace forge::dpo
