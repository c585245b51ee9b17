#pragma once

#include <cstdint>
#include <random>

namespace cdqn::rng {

// splitmix64; used to derive independent substreams from (master seed, index)
// so that environments, samplers and initializers never share a stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t substream(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 0x51ed2700214a11ULL));
}

inline std::mt19937_64 engine(std::uint64_t master, std::uint64_t index) {
    return std::mt19937_64(substream(master, index));
}

}  // namespace cdqn::rng
