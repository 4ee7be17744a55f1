#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qkdsim/bitvec.hpp"
#include "qkdsim/protocol.hpp"
#include "qkdsim/stats.hpp"

namespace qkdsim {

// ---------------------------------------------------------------------------
// Information reconciliation
// ---------------------------------------------------------------------------

struct CascadeResult {
    BitVec corrected;            // Bob's key after reconciliation
    std::uint64_t leak_bits = 0; // parity + verification bits disclosed
    std::uint32_t passes = 0;    // scheduled + extra rounds actually run
    std::uint64_t flips = 0;     // bits corrected
    bool verified = false;       // 64-bit hash comparison outcome
};

// Four-pass cascade with back-propagation between passes, top-block size
// ceil(0.73 / qber_estimate) doubling per pass, seeded shuffles, and a 64-bit
// polynomial verification hash. If verification fails, up to four extra
// shuffled rounds run before the block is declared bad (verified=false).
// Throws std::invalid_argument for mismatched/short keys or an estimate
// outside (0, 0.25].
CascadeResult cascade_correct(const BitVec& key_a, const BitVec& key_b,
                              double qber_estimate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Privacy amplification
// ---------------------------------------------------------------------------

// Multiplies the key by the Toeplitz matrix whose first column is the first
// out_len seed bits and whose first row continues through the remaining
// seed bits. seed_bits must hold key.size() + out_len - 1 bits. Bit-exact;
// implemented as a carry-less GF(2) convolution.
BitVec toeplitz_hash(const BitVec& key, const BitVec& seed_bits,
                     std::size_t out_len);

// ---------------------------------------------------------------------------
// Finite-key analysis (vacuum+weak decoy bounds)
// ---------------------------------------------------------------------------

struct DecoyBounds {
    double s0_lower = 0.0;
    double s1_lower = 0.0;
    double phi1_upper = 0.5;
    bool degenerate = false;  // insufficient statistics; forces ell = 0
};

// Lower-bounds the vacuum and single-photon events inside the sifted signal
// block and upper-bounds the single-photon phase-error rate. Finite-sample
// deviations are Hoeffding terms at failure probability epsilon_sec/21 applied
// per intensity class. Bounds are clamped to [0, block_size].
DecoyBounds decoy_bounds(const BlockStats& stats, const SystemParams& params);

double binary_entropy(double x);

// l = floor(s0 + s1 (1 - h2(phi1)) - leak_EC - 6 log2(21/eps_sec)
//           - log2(2/eps_cor)), clamped at zero. The two-argument form charges
// the modeled leak f_EC * n_mu * h2(E_mu); the three-argument form charges a
// measured reconciliation leak instead.
std::uint64_t key_length(const BlockStats& stats, const DecoyBounds& bounds);
std::uint64_t key_length(const BlockStats& stats, const DecoyBounds& bounds,
                         double leak_ec_bits);

// f_EC * n_mu * h2(E_mu), the leak charged by the two-argument key_length.
double modeled_leak_bits(const BlockStats& stats);

// Bounds + key length + rate rolled into one report; leak_ec_bits selects the
// modeled or the measured reconciliation leak.
KeyReport key_report(const BlockStats& stats, const DecoyBounds& bounds,
                     double leak_ec_bits, double sifted_bps);

// ---------------------------------------------------------------------------
// Rate curves
// ---------------------------------------------------------------------------

struct SkrPoint {
    double loss_db = 0.0;
    double sifted_bps = 0.0;
    double qber = 0.0;
    double skr_bps = 0.0;
    std::uint64_t ell = 0;
    DecoyBounds bounds;
};

// Analytic chain rate_model -> block-scaled statistics -> decoy bounds ->
// key length, per channel loss.
std::vector<SkrPoint> skr_curve(const SystemParams& params,
                                const SecurityParams& sec,
                                std::span<const double> losses_db);

// Expected-value BlockStats for one privacy-amplification block at the given
// loss (n_mu equals sec.block_size).
BlockStats analytic_block_stats(const SystemParams& params,
                                const SecurityParams& sec, double loss_db);

}  // namespace qkdsim
