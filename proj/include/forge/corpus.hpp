#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"

namespace forge::corpus {

enum class Source { truth_social, reddit_politosphere, other };
enum class Ideology { left, right };
enum class Provenance { base, synthetic };

std::string to_string(Source s);
std::string to_string(Ideology i);
std::string to_string(Provenance p);
Source source_from_string(const std::string& s);
Ideology ideology_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);

struct Post {
    std::string id;
    Source source = Source::other;
    std::string text;
    std::optional<std::int64_t> created_at;  // unix seconds
    std::map<std::string, std::string> meta;
};

struct InstructionPair {
    std::string instruction;
    std::string response;
    std::string origin_post_id;
    Ideology ideology = Ideology::right;
    Provenance provenance = Provenance::base;
};

struct PreferenceTriplet {
    std::string instruction;
    std::string chosen;
    std::string rejected;
    std::string origin_post_id;
    Ideology ideology = Ideology::right;
};

struct DatasetManifest {
    std::string dataset_id;
    std::uint64_t record_count = 0;
    std::string content_hash;
    std::map<std::string, std::string> config_echo;
    std::string created_at;
};

void validate(const Post& p);
void validate(const InstructionPair& p);
void validate(const PreferenceTriplet& t);

void to_json(nlohmann::json& j, const Post& p);
void from_json(const nlohmann::json& j, Post& p);
void to_json(nlohmann::json& j, const InstructionPair& p);
void from_json(const nlohmann::json& j, InstructionPair& p);
void to_json(nlohmann::json& j, const PreferenceTriplet& t);
void from_json(const nlohmann::json& j, PreferenceTriplet& t);
void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

// Dataset records carry a kind tag so manifests can detect a file read as the
// wrong type. Specialized next to each record type's declaration.
template <typename T>
struct RecordKind;

template <>
struct RecordKind<Post> {
    static constexpr const char* name = "post";
};
template <>
struct RecordKind<InstructionPair> {
    static constexpr const char* name = "instruction_pair";
};
template <>
struct RecordKind<PreferenceTriplet> {
    static constexpr const char* name = "preference_triplet";
};

enum class InputFormat { generic, truth_social, reddit_politosphere };
enum class MalformedPolicy { skip, fail };

InputFormat input_format_from_string(const std::string& s);

struct LoadReport {
    std::size_t parsed = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

// Parses a line-delimited export into Posts, in file order. Malformed lines
// (bad JSON, missing/empty id or text, duplicate id) are skipped with a
// warning or abort with the line number, per policy.
std::vector<Post> load_posts(const std::filesystem::path& path, InputFormat format,
                             MalformedPolicy policy = MalformedPolicy::skip,
                             LoadReport* report = nullptr);

// Leading/trailing ASCII whitespace removed.
std::string trim(std::string_view s);

// Fixed normalization for dedup: lowercase (ASCII), URLs stripped, whitespace
// runs collapsed to single spaces, ends trimmed.
std::string normalization_key(std::string_view text);

// Keeps the first post per normalization key; survivor order = input order.
std::vector<Post> dedup_posts(const std::vector<Post>& posts);

namespace detail {

std::string manifest_path(const std::filesystem::path& dataset_path);
DatasetManifest write_lines(const std::vector<std::string>& lines,
                            const std::filesystem::path& path, const std::string& dataset_id,
                            const char* kind, std::map<std::string, std::string> config_echo);
std::vector<std::string> read_lines_checked(const std::filesystem::path& path, const char* kind);

}  // namespace detail

// Serializes records one per line (sorted keys, UTF-8, no trailing spaces) and
// writes a `<path>.manifest` sidecar with a content hash. Byte-stable for
// equal inputs. Each record is validated; a bad one aborts naming its index.
template <typename T>
DatasetManifest write_dataset(const std::vector<T>& records, const std::filesystem::path& path,
                              const std::string& dataset_id,
                              std::map<std::string, std::string> config_echo = {}) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            validate(records[i]);
        } catch (const DataError& e) {
            throw DataError(path.filename().string() + ": record " + std::to_string(i) + ": " +
                            e.what());
        }
        nlohmann::json j = records[i];
        lines.push_back(j.dump());
    }
    return detail::write_lines(lines, path, dataset_id, RecordKind<T>::name,
                               std::move(config_echo));
}

// Reads a dataset back, validating every record. When the manifest sidecar is
// present, the content hash, record count, and record kind must all match.
template <typename T>
std::vector<T> read_dataset(const std::filesystem::path& path) {
    auto lines = detail::read_lines_checked(path, RecordKind<T>::name);
    std::vector<T> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        nlohmann::json j = nlohmann::json::parse(lines[i], nullptr, false);
        if (j.is_discarded()) {
            throw DataError(path.filename().string() + ":" + std::to_string(i + 1) +
                            ": invalid record");
        }
        T rec;
        try {
            rec = j.get<T>();
            validate(rec);
        } catch (const DataError& e) {
            throw DataError(path.filename().string() + ":" + std::to_string(i + 1) + ": " +
                            e.what());
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.filename().string() + ":" + std::to_string(i + 1) +
                            ": schema mismatch for " + RecordKind<T>::name + ": " + e.what());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace forge::corpus
