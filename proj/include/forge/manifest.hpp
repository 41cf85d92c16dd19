#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace forge::manifest {

inline constexpr const char* kToolVersion = "forge 0.1.0";

// One record per CLI run: what ran, with which config, over which inputs,
// producing which outputs. Hashes let a replay verify byte-identical results.
struct RunManifest {
    std::string run_id;
    std::string subcommand;
    std::map<std::string, std::string> config_echo;
    std::map<std::string, std::string> input_hashes;   // path -> sha256
    std::map<std::string, std::string> output_hashes;  // relative path -> sha256
    std::string tool_version;
    std::string started;
    std::string finished;
};

void validate(const RunManifest& m);
void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

// Deterministic for fixed (subcommand, start time, config).
std::string make_run_id(const std::string& subcommand, const std::string& started,
                        const std::map<std::string, std::string>& config_echo);

void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

// Collects a run's outputs in a hidden staging directory and renames them
// into the output directory only on commit, so a failed run leaves no
// partial outputs behind.
class OutputStager {
public:
    explicit OutputStager(std::filesystem::path out_dir);
    ~OutputStager();

    OutputStager(const OutputStager&) = delete;
    OutputStager& operator=(const OutputStager&) = delete;

    // Staging path for a named output. `name` must be relative and may
    // contain subdirectories.
    std::filesystem::path path_for(const std::string& name) const;

    // Digests of everything staged so far, keyed by output-relative path.
    std::map<std::string, std::string> hashes() const;

    // Moves staged files into the output directory, replacing existing ones.
    void commit();

    const std::filesystem::path& out_dir() const { return out_dir_; }

private:
    std::filesystem::path out_dir_;
    std::filesystem::path stage_dir_;
    bool committed_ = false;
};

}  // namespace forge::manifest
