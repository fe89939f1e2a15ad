#pragma once

#include <array>
#include <cstdint>

// The frozen seed set for the stochastic acceptance criteria. Each seed
// drives one independent replication (graph draw, indistinguishable sets and
// observation streams); the pass thresholds absorb sampling noise.

inline constexpr std::array<std::uint64_t, 50> kAcceptanceSeeds = {
    978846568ull, 1900214155ull, 378490821ull, 2458811964ull, 915692600ull,
    660243438ull, 1336786248ull, 2196290393ull, 2710322434ull, 3099501012ull,
    4005913043ull, 2733590335ull, 3134413928ull, 2271874595ull, 2681473764ull,
    1208368271ull, 2468216756ull, 1185836451ull, 108801396ull, 2916251923ull,
    3727031440ull, 3304458754ull, 2567569968ull, 511190675ull, 534251577ull,
    2866715639ull, 3883598176ull, 1300587720ull, 633491717ull, 1600974663ull,
    601812775ull, 2482189290ull, 85307905ull, 3790162566ull, 1328394252ull,
    2289698957ull, 3729289738ull, 4252489089ull, 1584650012ull, 949892235ull,
    3599239762ull, 811600983ull, 2973488109ull, 628734529ull, 3102844393ull,
    1743225981ull, 883732826ull, 3377317978ull, 990350261ull, 2377722977ull,
};
