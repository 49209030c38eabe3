#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace batchflip {

// FNV-1a, 64-bit. Stable across platforms; used for text hashes,
// config hashes and file checksums. Not cryptographic.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t seed = kFnvOffset) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

std::string to_hex16(std::uint64_t value);
std::uint64_t parse_hex16(std::string_view hex);

// Hash of a whole file's bytes; throws std::runtime_error if unreadable.
std::uint64_t hash_file(const std::string& path);

}  // namespace batchflip
