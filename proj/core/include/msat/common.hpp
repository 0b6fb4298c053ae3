#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace msat {

namespace detail {

template <typename... Args>
[[noreturn]] inline void fail(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    throw std::runtime_error(os.str());
}

}  // namespace detail

// Splitmix64 step; used to derive independent RNG streams from one seed.
inline uint64_t hash_mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_mix(uint64_t a, uint64_t b) { return hash_mix(hash_mix(a) ^ b); }
inline uint64_t hash_mix(uint64_t a, uint64_t b, uint64_t c) {
    return hash_mix(hash_mix(a, b) ^ c);
}

// FNV-1a over raw bytes; weight checksums for freeze/isolation contracts.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace msat

#define MSAT_REQUIRE(cond, ...)                      \
    do {                                             \
        if (!(cond)) ::msat::detail::fail(__VA_ARGS__); \
    } while (0)
