#pragma once

#include <cstdint>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cscl {

/// Domain error carrying a human-readable message. CLI maps these to
/// machine-readable error JSON and a non-zero exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

enum class LogLevel { debug, info, warn };

namespace detail {
inline LogLevel& log_threshold() {
    static LogLevel lvl = LogLevel::info;
    return lvl;
}
}  // namespace detail

inline void set_log_level(LogLevel lvl) { detail::log_threshold() = lvl; }

/// Logs to stderr; data outputs go to files only.
inline void log(LogLevel lvl, const std::string& msg) {
    if (static_cast<int>(lvl) < static_cast<int>(detail::log_threshold())) return;
    const char* tag = lvl == LogLevel::debug ? "debug" : lvl == LogLevel::warn ? "warn" : "info";
    std::cerr << "[cscl:" << tag << "] " << msg << "\n";
}

inline void log_info(const std::string& msg) { log(LogLevel::info, msg); }
inline void log_warn(const std::string& msg) { log(LogLevel::warn, msg); }

/// FNV-1a 64-bit over raw bytes. Used for artifact content hashes in run
/// manifests and determinism checks.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace cscl
