#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

namespace qkdsim {

// Pulse intensity classes, in decreasing mean photon number.
enum class Intensity : int { signal = 0, decoy = 1, vacuum = 2 };
inline constexpr int kIntensityCount = 3;

inline int idx(Intensity k) { return static_cast<int>(k); }

// Finite-key accounting knobs shared by the decoy bounds and the key-length
// formula.
struct SecurityParams {
    std::uint64_t block_size = 1ULL << 20;  // sifted signal bits per PA block
    double epsilon_sec = 1e-10;
    double epsilon_cor = 1e-15;
    double f_ec = 1.14;  // modeled reconciliation inefficiency

    void validate() const {
        if (block_size == 0)
            throw std::invalid_argument("security: block_size must be positive");
        if (epsilon_sec <= 0.0 || epsilon_sec >= 1.0)
            throw std::invalid_argument("security: epsilon_sec out of (0,1)");
        if (epsilon_cor <= 0.0 || epsilon_cor >= 1.0)
            throw std::invalid_argument("security: epsilon_cor out of (0,1)");
        if (f_ec < 1.0)
            throw std::invalid_argument("security: f_ec must be >= 1");
    }
};

// Per-intensity sifted counts feeding the decoy bounds. Counts are stored as
// doubles so analytic (expected-value) blocks can carry fractional tallies;
// Monte Carlo blocks hold integers exactly.
struct BlockStats {
    std::array<double, kIntensityCount> sent{};  // pulses sent
    std::array<double, kIntensityCount> n{};     // sifted detections
    std::array<double, kIntensityCount> m{};     // sifted errors
    SecurityParams sec;

    double qber(Intensity k) const {
        const double nk = n[idx(k)];
        if (nk <= 0.0)
            throw std::domain_error("BlockStats: qber undefined for empty cell");
        return m[idx(k)] / nk;
    }

    void validate() const {
        sec.validate();
        for (int k = 0; k < kIntensityCount; ++k) {
            if (sent[k] < 0.0 || n[k] < 0.0 || m[k] < 0.0)
                throw std::invalid_argument("BlockStats: negative tally");
            if (m[k] > n[k])
                throw std::invalid_argument("BlockStats: errors exceed detections");
        }
    }
};

// Output of the finite-key chain for one block.
struct KeyReport {
    double s0_lower = 0.0;    // vacuum events in the signal block, lower bound
    double s1_lower = 0.0;    // single-photon events, lower bound
    double phi1_upper = 0.5;  // single-photon phase-error rate, upper bound
    std::uint64_t ell = 0;    // secure bits per block
    double skr_bps = 0.0;
    double leak_ec = 0.0;     // reconciliation leakage charged to ell
};

}  // namespace qkdsim
