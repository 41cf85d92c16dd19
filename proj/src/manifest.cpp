#include "forge/manifest.hpp"

#include <unistd.h>

#include <system_error>
#include <vector>

#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"

namespace forge::manifest {

using nlohmann::json;

void validate(const RunManifest& m) {
    if (m.run_id.empty()) throw DataError("run manifest has empty run_id");
    if (m.subcommand.empty()) throw DataError("run manifest has empty subcommand");
    if (m.tool_version.empty()) throw DataError("run manifest has empty tool_version");
    if (m.started.empty() || m.finished.empty()) {
        throw DataError("run manifest is missing timestamps");
    }
    for (const auto& [path, digest] : m.input_hashes) {
        if (path.empty() || digest.size() != 64) {
            throw DataError("run manifest has a bad input hash entry");
        }
    }
    for (const auto& [path, digest] : m.output_hashes) {
        if (path.empty() || digest.size() != 64) {
            throw DataError("run manifest has a bad output hash entry");
        }
    }
}

void to_json(json& j, const RunManifest& m) {
    j = json{{"run_id", m.run_id},
             {"subcommand", m.subcommand},
             {"config_echo", m.config_echo},
             {"input_hashes", m.input_hashes},
             {"output_hashes", m.output_hashes},
             {"tool_version", m.tool_version},
             {"started", m.started},
             {"finished", m.finished}};
}

void from_json(const json& j, RunManifest& m) {
    j.at("run_id").get_to(m.run_id);
    j.at("subcommand").get_to(m.subcommand);
    j.at("config_echo").get_to(m.config_echo);
    j.at("input_hashes").get_to(m.input_hashes);
    j.at("output_hashes").get_to(m.output_hashes);
    j.at("tool_version").get_to(m.tool_version);
    j.at("started").get_to(m.started);
    j.at("finished").get_to(m.finished);
}

std::string make_run_id(const std::string& subcommand, const std::string& started,
                        const std::map<std::string, std::string>& config_echo) {
    json echo = config_echo;  // std::map keeps keys sorted
    std::string material = subcommand + '\n' + started + '\n' + echo.dump();
    return sha256_hex(material).substr(0, 16);
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
    validate(m);
    json j = m;
    atomic_write_file(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError("run manifest " + path.string() + ": " + e.what());
    }
    try {
        RunManifest m = j.get<RunManifest>();
        validate(m);
        return m;
    } catch (const json::exception& e) {
        throw DataError("run manifest " + path.string() + ": " + e.what());
    }
}

OutputStager::OutputStager(std::filesystem::path out_dir) : out_dir_(std::move(out_dir)) {
    if (out_dir_.empty()) throw UsageError("output directory must not be empty");
    stage_dir_ = out_dir_ / (".stage." + std::to_string(::getpid()));
    std::error_code ec;
    std::filesystem::remove_all(stage_dir_, ec);  // stale dir from a crashed run
    std::filesystem::create_directories(stage_dir_, ec);
    if (ec) {
        throw DataError("cannot create staging directory " + stage_dir_.string() + ": " +
                        ec.message());
    }
}

OutputStager::~OutputStager() {
    if (!committed_) {
        std::error_code ec;
        std::filesystem::remove_all(stage_dir_, ec);
    }
}

std::filesystem::path OutputStager::path_for(const std::string& name) const {
    std::filesystem::path rel(name);
    if (rel.empty() || rel.is_absolute()) {
        throw UsageError("staged output name must be relative: " + name);
    }
    for (const auto& part : rel) {
        if (part == "..") throw UsageError("staged output name may not contain '..': " + name);
    }
    std::filesystem::path p = stage_dir_ / rel;
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    return p;
}

std::map<std::string, std::string> OutputStager::hashes() const {
    std::map<std::string, std::string> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(stage_dir_)) {
        if (!entry.is_regular_file()) continue;
        std::string rel = entry.path().lexically_relative(stage_dir_).generic_string();
        out[rel] = sha256_file(entry.path());
    }
    return out;
}

void OutputStager::commit() {
    if (committed_) throw UsageError("outputs already committed");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(stage_dir_)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    for (const auto& src : files) {
        std::filesystem::path dst = out_dir_ / src.lexically_relative(stage_dir_);
        std::error_code ec;
        if (dst.has_parent_path()) std::filesystem::create_directories(dst.parent_path(), ec);
        std::filesystem::rename(src, dst, ec);
        if (ec) {
            throw DataError("cannot move " + src.string() + " to " + dst.string() + ": " +
                            ec.message());
        }
    }
    committed_ = true;
    std::error_code ec;
    std::filesystem::remove_all(stage_dir_, ec);
}

}  // namespace forge::manifest
