#pragma once

#include <chrono>
#include <map>
#include <string>

#include <json.hpp>

#include "cda/common.hpp"

namespace cda {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline std::string hash_file(const std::string& path) {
    return fnv1a64_hex(read_file(path));
}

// Reproducibility sidecar written next to every command's primary output:
// enough to re-run any deterministic command byte-exactly.
struct RunManifest {
    std::string command_line;
    std::string tool_version = std::string(kToolVersion);
    std::string config_hash;
    std::map<std::string, std::string> input_hashes;
    std::map<std::string, std::string> prompt_hashes;
    std::map<std::string, uint64_t> seeds;
    int64_t timestamp = 0;

    void add_input(const std::string& path) { input_hashes[path] = hash_file(path); }

    void add_prompt(const std::string& path) { prompt_hashes[path] = hash_file(path); }

    void stamp() {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        timestamp = std::chrono::duration_cast<std::chrono::seconds>(now).count();
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"command_line", command_line},
                              {"tool_version", tool_version},
                              {"config_hash", config_hash},
                              {"input_hashes", input_hashes},
                              {"prompt_hashes", prompt_hashes},
                              {"seeds", seeds},
                              {"timestamp", timestamp}};
    }

    void save(const std::string& path) const {
        write_file_atomic(path, to_json().dump(2) + "\n");
    }
};

}  // namespace cda
