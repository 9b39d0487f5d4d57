#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace augdiff {

// Raised when a computation produces or receives non-finite values.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised on malformed file content (bad magic, version, header).
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised on truncated or unreadable files.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a required upstream artifact (checkpoint, manifest) is absent.
struct missing_artifact_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr uint64_t kFnvPrime  = 0x100000001b3ull;

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex_u64(uint64_t v);

// FNV-1a over a file's bytes; throws io_error if unreadable.
uint64_t hash_file(const std::string& path);

inline const char* kCodeVersion = "augdiff 1.0.0";

}  // namespace augdiff
