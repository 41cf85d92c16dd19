#include "forge/dpo/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "forge/dpo/rng.hpp"
#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"

namespace forge::dpo {

namespace {

void to_json(nlohmann::json& j, const Mat& m) {
    j = nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
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

nlohmann::json model_json(const ToyLM& m) {
    nlohmann::json em, hw, ow;
    to_json(em, m.embed);
    to_json(hw, m.hidden_w);
    to_json(ow, m.out_w);
    return nlohmann::json{{"version", 1},
                          {"kind", "toy_lm"},
                          {"embed_dim", m.embed_dim},
                          {"hidden_dim", m.hidden_dim},
                          {"vocab", {{"tokens", m.vocab.tokens}}},
                          {"embed", em},
                          {"hidden_w", hw},
                          {"hidden_b", m.hidden_b},
                          {"out_w", ow},
                          {"out_b", m.out_b}};
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw DataError(std::string("non-finite value in ") + what);
        }
    }
}

}  // namespace

void Vocab::rebuild_index() {
    byte_to_id.fill(-1);
    for (std::size_t i = 2; i < tokens.size(); ++i) {
        if (tokens[i].size() != 1) {
            throw DataError("vocab token " + std::to_string(i) + " is not a single byte");
        }
        byte_to_id[static_cast<unsigned char>(tokens[i][0])] = static_cast<std::int16_t>(i);
    }
}

Vocab build_vocab(const std::vector<std::string>& texts, int target_size) {
    if (target_size < 3) {
        throw UsageError("vocab size must be at least 3");
    }
    std::array<std::uint64_t, 256> freq{};
    for (const auto& t : texts) {
        for (unsigned char c : t) {
            ++freq[c];
        }
    }
    std::vector<int> bytes;
    for (int b = 0; b < 256; ++b) {
        if (freq[b] > 0) {
            bytes.push_back(b);
        }
    }
    if (bytes.empty()) {
        throw DataError("cannot build a vocab from empty texts");
    }
    std::stable_sort(bytes.begin(), bytes.end(),
                     [&](int x, int y) { return freq[x] != freq[y] ? freq[x] > freq[y] : x < y; });
    if (bytes.size() > static_cast<std::size_t>(target_size - 2)) {
        bytes.resize(target_size - 2);
    }
    Vocab v;
    v.tokens = {"<oov>", "<bos>"};
    for (int b : bytes) {
        v.tokens.push_back(std::string(1, static_cast<char>(b)));
    }
    v.rebuild_index();
    return v;
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) {
        std::int16_t id = vocab.byte_to_id[c];
        ids.push_back(id >= 0 ? id : kOovId);
    }
    return ids;
}

void validate(const ToyLM& m) {
    const std::size_t v = m.vocab.tokens.size();
    const auto d = static_cast<std::size_t>(m.embed_dim);
    const auto h = static_cast<std::size_t>(m.hidden_dim);
    if (v < 3) {
        throw DataError("vocab too small (need >= 3 tokens)");
    }
    if (m.embed_dim <= 0 || m.hidden_dim <= 0) {
        throw DataError("non-positive model dimensions");
    }
    if (m.embed.rows != v || m.embed.cols != d) {
        throw DataError("embed shape mismatch");
    }
    if (m.hidden_w.rows != h || m.hidden_w.cols != 2 * d || m.hidden_b.size() != h) {
        throw DataError("hidden layer shape mismatch");
    }
    if (m.out_w.rows != v || m.out_w.cols != h || m.out_b.size() != v) {
        throw DataError("output layer shape mismatch");
    }
    check_finite(m.embed.data, "embed");
    check_finite(m.hidden_w.data, "hidden_w");
    check_finite(m.hidden_b, "hidden_b");
    check_finite(m.out_w.data, "out_w");
    check_finite(m.out_b, "out_b");
}

ToyLM make_toy_lm(Vocab vocab, int embed_dim, int hidden_dim, std::uint64_t seed) {
    ToyLM m;
    m.vocab = std::move(vocab);
    m.vocab.rebuild_index();
    m.embed_dim = embed_dim;
    m.hidden_dim = hidden_dim;
    const std::size_t v = m.vocab.tokens.size();
    const auto d = static_cast<std::size_t>(embed_dim);
    const auto h = static_cast<std::size_t>(hidden_dim);
    m.embed = Mat(v, d);
    m.hidden_w = Mat(h, 2 * d);
    m.hidden_b.assign(h, 0.0);
    m.out_w = Mat(v, h);
    m.out_b.assign(v, 0.0);
    Rng rng(seed);
    for (auto& x : m.embed.data) {
        x = rng.uniform(-0.5, 0.5);
    }
    const double hs = 1.0 / std::sqrt(static_cast<double>(2 * d));
    for (auto& x : m.hidden_w.data) {
        x = rng.uniform(-hs, hs);
    }
    const double os = 1.0 / std::sqrt(static_cast<double>(h));
    for (auto& x : m.out_w.data) {
        x = rng.uniform(-os, os);
    }
    validate(m);
    return m;
}

std::string model_digest(const ToyLM& m) {
    return sha256_hex(model_json(m).dump());
}

void save_model(const ToyLM& m, const std::filesystem::path& path) {
    validate(m);
    atomic_write_file(path, model_json(m).dump() + "\n");
}

ToyLM load_model(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw DataError("model file is not valid JSON: " + path.string());
    }
    try {
        if (j.value("kind", std::string{}) != "toy_lm") {
            throw DataError("not a model file: " + path.string());
        }
        if (j.at("version").get<int>() != 1) {
            throw DataError("unsupported model version in " + path.string());
        }
        ToyLM m;
        m.embed_dim = j.at("embed_dim").get<int>();
        m.hidden_dim = j.at("hidden_dim").get<int>();
        m.vocab.tokens = j.at("vocab").at("tokens").get<std::vector<std::string>>();
        m.vocab.rebuild_index();
        m.embed = mat_from_json(j.at("embed"));
        m.hidden_w = mat_from_json(j.at("hidden_w"));
        m.hidden_b = j.at("hidden_b").get<std::vector<double>>();
        m.out_w = mat_from_json(j.at("out_w"));
        m.out_b = j.at("out_b").get<std::vector<double>>();
        validate(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed model file " + path.string() + ": " + e.what());
    }
}

}  // namespace forge::dpo
