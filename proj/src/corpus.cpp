#include "forge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace forge::corpus {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
    return std::string(s.substr(b, e - b));
}

namespace {

// "2021-01-06T12:00:00Z" (or with offset stripped) -> unix seconds.
std::optional<std::int64_t> parse_iso_timestamp(const std::string& s) {
    std::tm tm{};
    std::istringstream in(s);
    in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    if (in.fail()) {
        return std::nullopt;
    }
    return static_cast<std::int64_t>(timegm(&tm));
}

std::optional<std::int64_t> timestamp_from_json(const nlohmann::json& v) {
    if (v.is_number_integer() || v.is_number_unsigned()) {
        return v.get<std::int64_t>();
    }
    if (v.is_number_float()) {
        return static_cast<std::int64_t>(v.get<double>());
    }
    if (v.is_string()) {
        return parse_iso_timestamp(v.get<std::string>());
    }
    return std::nullopt;
}

std::string stringify(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

std::string id_from_json(const nlohmann::json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer() || v.is_number_unsigned()) {
        return v.dump();
    }
    return "";
}

// Maps one raw export line onto a Post. Throws DataError with a reason for
// malformed records; line numbering is added by the caller.
Post adapt_record(const nlohmann::json& j, InputFormat format) {
    if (!j.is_object()) {
        throw DataError("record is not an object");
    }
    const char* text_field = "text";
    const char* time_field = "created_at";
    Post p;
    switch (format) {
        case InputFormat::generic:
            p.source = Source::other;
            break;
        case InputFormat::truth_social:
            p.source = Source::truth_social;
            text_field = "content";
            break;
        case InputFormat::reddit_politosphere:
            p.source = Source::reddit_politosphere;
            text_field = "body";
            time_field = "created_utc";
            break;
    }
    if (!j.contains("id")) {
        throw DataError("missing field 'id'");
    }
    p.id = id_from_json(j.at("id"));
    if (p.id.empty()) {
        throw DataError("empty or non-scalar 'id'");
    }
    if (!j.contains(text_field) || !j.at(text_field).is_string()) {
        throw DataError(std::string("missing field '") + text_field + "'");
    }
    p.text = j.at(text_field).get<std::string>();
    if (trim(p.text).empty()) {
        throw DataError(std::string("empty '") + text_field + "'");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "id" || key == text_field) {
            continue;
        }
        if (key == time_field) {
            p.created_at = timestamp_from_json(value);
            if (!p.created_at) {
                throw DataError(std::string("unparseable '") + time_field + "'");
            }
            continue;
        }
        if (format == InputFormat::generic && key == "source") {
            p.source = source_from_string(stringify(value));
            continue;
        }
        p.meta[key] = stringify(value);
    }
    return p;
}

}  // namespace

std::string to_string(Source s) {
    switch (s) {
        case Source::truth_social: return "truth_social";
        case Source::reddit_politosphere: return "reddit_politosphere";
        case Source::other: return "other";
    }
    throw DataError("bad Source value");
}

std::string to_string(Ideology i) {
    return i == Ideology::left ? "left" : "right";
}

std::string to_string(Provenance p) {
    return p == Provenance::base ? "base" : "synthetic";
}

Source source_from_string(const std::string& s) {
    if (s == "truth_social") return Source::truth_social;
    if (s == "reddit_politosphere") return Source::reddit_politosphere;
    if (s == "other") return Source::other;
    throw DataError("unknown source: " + s);
}

Ideology ideology_from_string(const std::string& s) {
    if (s == "left") return Ideology::left;
    if (s == "right") return Ideology::right;
    throw DataError("unknown ideology: " + s);
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "base") return Provenance::base;
    if (s == "synthetic") return Provenance::synthetic;
    throw DataError("unknown provenance: " + s);
}

InputFormat input_format_from_string(const std::string& s) {
    if (s == "generic") return InputFormat::generic;
    if (s == "truth_social") return InputFormat::truth_social;
    if (s == "reddit_politosphere") return InputFormat::reddit_politosphere;
    throw UsageError("unknown input format: " + s);
}

void validate(const Post& p) {
    if (p.id.empty()) {
        throw DataError("post id empty");
    }
    if (trim(p.text).empty()) {
        throw DataError("post text empty");
    }
}

void validate(const InstructionPair& p) {
    if (trim(p.instruction).empty()) {
        throw DataError("instruction empty");
    }
    if (trim(p.response).empty()) {
        throw DataError("response empty");
    }
    if (p.origin_post_id.empty()) {
        throw DataError("origin_post_id empty");
    }
}

void validate(const PreferenceTriplet& t) {
    if (trim(t.instruction).empty()) {
        throw DataError("instruction empty");
    }
    if (trim(t.chosen).empty()) {
        throw DataError("chosen empty");
    }
    if (trim(t.rejected).empty()) {
        throw DataError("rejected empty");
    }
    if (t.chosen == t.rejected) {
        throw DataError("chosen equals rejected");
    }
    if (t.origin_post_id.empty()) {
        throw DataError("origin_post_id empty");
    }
}

void to_json(nlohmann::json& j, const Post& p) {
    j = nlohmann::json{{"id", p.id},
                       {"source", to_string(p.source)},
                       {"text", p.text},
                       {"meta", p.meta}};
    if (p.created_at) {
        j["created_at"] = *p.created_at;
    }
}

void from_json(const nlohmann::json& j, Post& p) {
    p.id = j.at("id").get<std::string>();
    p.source = source_from_string(j.at("source").get<std::string>());
    p.text = j.at("text").get<std::string>();
    p.meta = j.value("meta", std::map<std::string, std::string>{});
    if (j.contains("created_at")) {
        p.created_at = j.at("created_at").get<std::int64_t>();
    } else {
        p.created_at.reset();
    }
}

void to_json(nlohmann::json& j, const InstructionPair& p) {
    j = nlohmann::json{{"instruction", p.instruction},
                       {"response", p.response},
                       {"origin_post_id", p.origin_post_id},
                       {"ideology", to_string(p.ideology)},
                       {"provenance", to_string(p.provenance)}};
}

void from_json(const nlohmann::json& j, InstructionPair& p) {
    p.instruction = j.at("instruction").get<std::string>();
    p.response = j.at("response").get<std::string>();
    p.origin_post_id = j.at("origin_post_id").get<std::string>();
    p.ideology = ideology_from_string(j.at("ideology").get<std::string>());
    p.provenance = provenance_from_string(j.at("provenance").get<std::string>());
}

void to_json(nlohmann::json& j, const PreferenceTriplet& t) {
    j = nlohmann::json{{"instruction", t.instruction},
                       {"chosen", t.chosen},
                       {"rejected", t.rejected},
                       {"origin_post_id", t.origin_post_id},
                       {"ideology", to_string(t.ideology)}};
}

void from_json(const nlohmann::json& j, PreferenceTriplet& t) {
    t.instruction = j.at("instruction").get<std::string>();
    t.chosen = j.at("chosen").get<std::string>();
    t.rejected = j.at("rejected").get<std::string>();
    t.origin_post_id = j.at("origin_post_id").get<std::string>();
    t.ideology = ideology_from_string(j.at("ideology").get<std::string>());
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = nlohmann::json{{"dataset_id", m.dataset_id},
                       {"record_count", m.record_count},
                       {"content_hash", m.content_hash},
                       {"config_echo", m.config_echo},
                       {"created_at", m.created_at}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.record_count = j.at("record_count").get<std::uint64_t>();
    m.content_hash = j.at("content_hash").get<std::string>();
    m.config_echo = j.value("config_echo", std::map<std::string, std::string>{});
    m.created_at = j.value("created_at", std::string{});
}

std::vector<Post> load_posts(const std::filesystem::path& path, InputFormat format,
                             MalformedPolicy policy, LoadReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open input file: " + path.string());
    }
    std::vector<Post> posts;
    std::unordered_set<std::string> seen_ids;
    LoadReport local;
    std::string line;
    std::size_t line_no = 0;
    auto reject = [&](const std::string& reason) {
        std::string msg = path.filename().string() + ":" + std::to_string(line_no) + ": " + reason;
        if (policy == MalformedPolicy::fail) {
            throw DataError(msg);
        }
        ++local.skipped;
        local.warnings.push_back(msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            reject("invalid record");
            continue;
        }
        try {
            Post p = adapt_record(j, format);
            if (!seen_ids.insert(p.id).second) {
                reject("duplicate id '" + p.id + "'");
                continue;
            }
            posts.push_back(std::move(p));
            ++local.parsed;
        } catch (const DataError& e) {
            reject(e.what());
        }
    }
    if (in.bad()) {
        throw DataError("read failed: " + path.string());
    }
    if (report != nullptr) {
        *report = std::move(local);
    }
    return posts;
}

std::string normalization_key(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    bool pending_space = false;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c) != 0) {
            pending_space = !out.empty();
            ++i;
            continue;
        }
        // URL strip: drop http(s)://... up to the next whitespace.
        if ((c == 'h' || c == 'H')) {
            std::string_view rest = text.substr(i);
            auto has_prefix = [&](std::string_view p) {
                if (rest.size() < p.size()) return false;
                for (std::size_t k = 0; k < p.size(); ++k) {
                    if (std::tolower(static_cast<unsigned char>(rest[k])) != p[k]) return false;
                }
                return true;
            };
            if (has_prefix("http://") || has_prefix("https://")) {
                while (i < text.size() &&
                       std::isspace(static_cast<unsigned char>(text[i])) == 0) {
                    ++i;
                }
                continue;
            }
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
        ++i;
    }
    return out;
}

std::vector<Post> dedup_posts(const std::vector<Post>& posts) {
    std::vector<Post> out;
    std::unordered_set<std::string> seen;
    out.reserve(posts.size());
    for (const auto& p : posts) {
        if (seen.insert(normalization_key(p.text)).second) {
            out.push_back(p);
        }
    }
    return out;
}

namespace detail {

std::string manifest_path(const std::filesystem::path& dataset_path) {
    return dataset_path.string() + ".manifest";
}

DatasetManifest write_lines(const std::vector<std::string>& lines,
                            const std::filesystem::path& path, const std::string& dataset_id,
                            const char* kind, std::map<std::string, std::string> config_echo) {
    std::string body;
    for (const auto& l : lines) {
        body += l;
        body += '\n';
    }
    DatasetManifest m;
    m.dataset_id = dataset_id;
    m.record_count = lines.size();
    m.content_hash = sha256_hex(body);
    m.config_echo = std::move(config_echo);
    m.config_echo["record_kind"] = kind;
    m.created_at = now_iso8601();
    atomic_write_file(path, body);
    nlohmann::json mj = m;
    atomic_write_file(manifest_path(path), mj.dump() + "\n");
    return m;
}

std::vector<std::string> read_lines_checked(const std::filesystem::path& path, const char* kind) {
    std::string body = read_file(path);
    std::filesystem::path mpath = manifest_path(path);
    if (std::filesystem::exists(mpath)) {
        nlohmann::json mj = nlohmann::json::parse(read_file(mpath), nullptr, false);
        if (mj.is_discarded()) {
            throw DataError("invalid manifest: " + mpath.string());
        }
        DatasetManifest m = mj.get<DatasetManifest>();
        if (m.content_hash != sha256_hex(body)) {
            throw DataError("manifest hash mismatch for " + path.string());
        }
        auto it = m.config_echo.find("record_kind");
        if (it != m.config_echo.end() && it->second != kind) {
            throw DataError("dataset " + path.string() + " holds " + it->second +
                            " records, expected " + kind);
        }
        std::size_t count = 0;
        for (char c : body) {
            count += c == '\n' ? 1 : 0;
        }
        if (count != m.record_count) {
            throw DataError("manifest record count mismatch for " + path.string());
        }
    }
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < body.size()) {
        std::size_t end = body.find('\n', start);
        if (end == std::string::npos) {
            end = body.size();
        }
        if (end > start) {
            lines.push_back(body.substr(start, end - start));
        }
        start = end + 1;
    }
    return lines;
}

}  // namespace detail

}  // namespace forge::corpus
