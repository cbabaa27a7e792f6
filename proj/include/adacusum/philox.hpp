#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace adacusum {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A block is a pure function of (key, counter); there is no hidden state, so
/// any replication can be regenerated in isolation and in any order.
class philox4x32 {
public:
    using counter_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    static constexpr counter_type block(counter_type ctr, key_type key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

/// Independent random stream for replication `rep` under `seed`.
///
/// Counter layout: words 0-1 hold the block index, words 2-3 the replication
/// index; the seed is the key. Two streams with different (seed, rep) never
/// share a block, and a stream's output does not depend on how many other
/// streams were consumed before it (the parallel/serial agreement contract).
class substream {
public:
    substream(std::uint64_t seed, std::uint64_t rep) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          rep_(rep) {}

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() noexcept {
        if (cursor_ == 4) refill();
        const std::uint64_t bits =
            (std::uint64_t{buffer_[cursor_]} << 32) | buffer_[cursor_ + 1];
        cursor_ += 2;
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; draws come in pairs.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    std::uint64_t blocks_used() const noexcept { return next_block_; }

private:
    void refill() noexcept {
        const philox4x32::counter_type ctr{
            static_cast<std::uint32_t>(next_block_), static_cast<std::uint32_t>(next_block_ >> 32),
            static_cast<std::uint32_t>(rep_), static_cast<std::uint32_t>(rep_ >> 32)};
        buffer_ = philox4x32::block(ctr, key_);
        ++next_block_;
        cursor_ = 0;
    }

    philox4x32::key_type key_;
    std::uint64_t rep_;
    std::uint64_t next_block_ = 0;
    philox4x32::counter_type buffer_{};
    int cursor_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace adacusum
