/*
   Copyright 2026 The nemlab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace nemlab {

// Salmon et al. SC 2011. Parallel random numbers: as easy as 1, 2, 3.
// Philox4x32 with 10 rounds. Stateless: the output is a pure function of
// (counter, key), so every (seed, particle, step) has its own draw no
// matter which thread evaluates it.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter apply(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57;
    static constexpr std::uint32_t kW0 = 0x9E3779B9;
    static constexpr std::uint32_t kW1 = 0xBB67AE85;
};

/// Substream tags so that different uses of one (particle, step) pair never
/// share a counter.
enum class Stream : std::uint32_t { brownian = 0, initial = 1, auxiliary = 2 };

/// Counter-based stream keyed by (seed, particle). Draw n of a stream is
/// addressed by (step, tag) directly, with no sequential state.
class ParticleStream {
public:
    ParticleStream(std::uint64_t seed, std::uint64_t particle) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          particle_(particle) {}

    /// Two uniforms in (0, 1].
    std::array<double, 2> uniform_pair(std::uint64_t step, Stream tag) const noexcept {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(particle_), static_cast<std::uint32_t>(particle_ >> 32),
                                      static_cast<std::uint32_t>(step),
                                      static_cast<std::uint32_t>(tag) ^ (static_cast<std::uint32_t>(step >> 32) << 8)};
        const auto out = Philox4x32::apply(ctr, key_);
        const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
        const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
        constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
        return {(static_cast<double>(a >> 11) + 1.0) * scale, (static_cast<double>(b >> 11) + 1.0) * scale};
    }

    /// Standard normal by Box-Muller (cosine branch).
    double normal(std::uint64_t step, Stream tag = Stream::brownian) const noexcept {
        const auto u = uniform_pair(step, tag);
        return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
    }

    double uniform(std::uint64_t step, Stream tag) const noexcept { return uniform_pair(step, tag)[0]; }

private:
    Philox4x32::Key key_;
    std::uint64_t particle_;
};

} // namespace nemlab
