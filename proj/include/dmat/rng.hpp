#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace dmat {

// Named substreams. Every random draw in the toolkit is keyed by the global
// seed plus one of these tags plus call-site counters, so results do not
// depend on call order or thread scheduling.
enum class Stream : std::uint64_t {
    filter = 1,
    init = 2,
    shuffle = 3,
    mask = 4,
    split = 5,
    kmeans = 6,
    classify = 7,
    synthetic = 8,
    theory = 9,
};

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Engine seeded from (seed, stream, keys...). std::seed_seq mixes the words,
// so nearby keys give unrelated streams.
inline std::mt19937_64 keyed_engine(std::uint64_t seed, Stream stream,
                                    std::initializer_list<std::uint64_t> keys = {}) {
    std::vector<std::uint32_t> words;
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    push(static_cast<std::uint64_t>(stream));
    for (auto k : keys) push(k);
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

}  // namespace dmat
