#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace odg {

// User-facing configuration mistakes (bad config file, missing paths, ...).
// CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures at run time (I/O, divergence, unreachable services, ...).
// CLI maps these to exit code 2.
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

// Generation service could not be reached after retries.
struct OpenGenUnavailable : RuntimeFailure {
    explicit OpenGenUnavailable(const std::string& msg) : RuntimeFailure(msg) {}
};

// FNV-1a, used for parameter digests and cache keys.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 1469598103934665603ull) {
    return fnv1a(s.data(), s.size(), h);
}

inline uint64_t fnv1a(const std::vector<double>& v, uint64_t h = 1469598103934665603ull) {
    return fnv1a(v.data(), v.size() * sizeof(double), h);
}

std::string to_hex(uint64_t h);

std::string base64_encode(const std::vector<unsigned char>& data);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace odg
