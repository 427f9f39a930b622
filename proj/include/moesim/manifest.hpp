#pragma once

#include <ctime>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moesim/core.hpp"
#include "moesim/io.hpp"

namespace moesim {

// Reproducibility record embedded in every simulate/compare output: which
// files went in (by content hash), which seeds were used, what was written.
// The timestamp is the only non-deterministic field and lives nowhere else.
struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> inputs;  // (role=path, content hash)
    std::vector<std::string> outputs;
    std::vector<std::pair<std::string, std::uint64_t>> seeds;
    json config = json::object();

    void add_input(const std::string& role, const std::string& path) {
        inputs.emplace_back(role + "=" + path, file_hash(path));
    }

    json to_json() const {
        json jin = json::array();
        for (const auto& [what, hash] : inputs) jin.push_back(json{{"input", what}, {"hash", hash}});
        json jseeds = json::object();
        for (const auto& [name, value] : seeds) jseeds[name] = value;
        return json{{"tool_version", kToolVersion}, {"command", command},   {"created_at", timestamp()},
                    {"inputs", std::move(jin)},     {"outputs", outputs},   {"seeds", std::move(jseeds)},
                    {"config", config}};
    }

    static std::string timestamp() {
        std::time_t now = std::time(nullptr);
        std::tm tm_utc{};
        gmtime_r(&now, &tm_utc);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
        return buf;
    }
};

}  // namespace moesim
