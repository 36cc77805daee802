#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace gsde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// A (key, counter) pair maps to four 32-bit words with no hidden state,
/// which lets every (scenario, path, step) own an independent stream.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter bijection(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            ctr = single_round(ctr, key);
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Stream of uniforms/normals addressed by (seed, a, b, c). Drawing is
/// sequential inside the stream; blocks of four words are regenerated from
/// the counter so the stream can be re-created anywhere.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint32_t a, std::uint32_t b, std::uint32_t c) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          base_{a, b, c} {}

    /// Uniform on the open interval (0, 1) with 53-bit resolution.
    double uniform() noexcept {
        const std::uint64_t hi = next_word();
        const std::uint64_t lo = next_word();
        const std::uint64_t bits = ((hi << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t hi = next_word();
        return (hi << 32) | next_word();
    }

private:
    std::uint32_t next_word() noexcept {
        if (used_ == 4) {
            block_ = Philox4x32::bijection({base_[0], base_[1], base_[2], block_index_++}, key_);
            used_ = 0;
        }
        return block_[used_++];
    }

    Philox4x32::Key key_;
    std::array<std::uint32_t, 3> base_;
    std::uint32_t block_index_ = 0;
    Philox4x32::Counter block_{};
    int used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace gsde
