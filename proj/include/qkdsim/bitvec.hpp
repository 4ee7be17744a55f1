#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkdsim/rng.hpp"

namespace qkdsim {

// Packed bit sequence used for sifted keys, reconciliation and hashing.
class BitVec {
  public:
    BitVec() = default;
    explicit BitVec(std::size_t n) : n_(n), w_((n + 63) / 64, 0) {}

    static BitVec random(std::size_t n, Rng& rng) {
        BitVec b(n);
        for (auto& w : b.w_) w = rng.u64();
        b.mask_tail();
        return b;
    }

    std::size_t size() const { return n_; }
    bool empty() const { return n_ == 0; }

    bool get(std::size_t i) const { return (w_[i >> 6] >> (i & 63)) & 1u; }

    void set(std::size_t i, bool v) {
        const std::uint64_t m = 1ULL << (i & 63);
        if (v)
            w_[i >> 6] |= m;
        else
            w_[i >> 6] &= ~m;
    }

    void flip(std::size_t i) { w_[i >> 6] ^= 1ULL << (i & 63); }

    void push_back(bool v) {
        if ((n_ & 63) == 0) w_.push_back(0);
        if (v) w_[n_ >> 6] |= 1ULL << (n_ & 63);
        ++n_;
    }

    std::size_t count_ones() const {
        std::size_t c = 0;
        for (auto w : w_) c += static_cast<std::size_t>(std::popcount(w));
        return c;
    }

    std::size_t hamming_distance(const BitVec& other) const {
        if (other.n_ != n_) throw std::invalid_argument("BitVec: size mismatch");
        std::size_t c = 0;
        for (std::size_t i = 0; i < w_.size(); ++i)
            c += static_cast<std::size_t>(std::popcount(w_[i] ^ other.w_[i]));
        return c;
    }

    BitVec operator^(const BitVec& other) const {
        if (other.n_ != n_) throw std::invalid_argument("BitVec: size mismatch");
        BitVec r(n_);
        for (std::size_t i = 0; i < w_.size(); ++i) r.w_[i] = w_[i] ^ other.w_[i];
        return r;
    }

    bool operator==(const BitVec& other) const = default;

    const std::vector<std::uint64_t>& words() const { return w_; }
    std::vector<std::uint64_t>& words() { return w_; }

    // 64-bit polynomial hash over the packed words (Horner over GF(2^64)-ish
    // odd-multiplier ring); used as the reconciliation verification tag.
    std::uint64_t poly_hash() const {
        std::uint64_t h = 0x9ae16a3b2f90404fULL;
        for (auto w : w_) {
            h ^= w;
            h *= 0xc2b2ae3d27d4eb4fULL;
            h ^= h >> 29;
        }
        h ^= n_;
        h *= 0x165667b19e3779f9ULL;
        return h ^ (h >> 32);
    }

  private:
    void mask_tail() {
        if (n_ & 63) w_.back() &= (~0ULL) >> (64 - (n_ & 63));
    }

    std::size_t n_ = 0;
    std::vector<std::uint64_t> w_;
};

}  // namespace qkdsim
