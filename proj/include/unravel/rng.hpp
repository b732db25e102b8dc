#pragma once

#include <cstdint>
#include <random>

namespace unravel {

// Stream discipline: every random draw comes from a std::mt19937_64 whose
// state is expanded by std::seed_seq from a 64-bit seed. Ensembles derive one
// seed per (trajectory, channel) stream with stream_seed(master, index), where
// index = trajectory * n_channels + channel. Results therefore do not depend
// on thread count or scheduling.

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Rng(seq);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x5eedu};
    Rng rng(seq);
    return rng();
}

} // namespace unravel
