#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cscl {

/// Provenance record written beside every command's primary output. Hashes
/// are FNV-1a 64 over file bytes, so reruns can be compared artifact by
/// artifact.
struct RunManifest {
    std::string command;
    std::string resolved_config;  // full option dump after flag/file layering
    uint64_t seed = 0;
    std::map<std::string, std::string> inputs;   // role -> path
    std::map<std::string, std::string> outputs;  // role -> path
    std::map<std::string, std::string> hashes;   // path -> hex64(fnv1a64(bytes))
    double wall_seconds = 0.0;
};

std::string manifest_json(const RunManifest& manifest);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);

/// Executes one command from argv-style tokens (program name excluded).
/// Returns the exit code: 0 success, 1 domain error (JSON diagnostics on
/// stderr), 2 usage error. Never calls exit(), so tests can drive the full
/// pipeline in-process.
int run(const std::vector<std::string>& args);

}  // namespace cscl
