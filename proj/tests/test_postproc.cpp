#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "qkdsim/postproc.hpp"

using namespace qkdsim;

namespace qkdsim::detail {
bool clmul_runtime_supported();
void clmul_accumulate_portable(const std::uint64_t* a, std::size_t na,
                               const std::uint64_t* b, std::size_t nb,
                               std::uint64_t* out);
void clmul_accumulate_fast(const std::uint64_t* a, std::size_t na,
                           const std::uint64_t* b, std::size_t nb,
                           std::uint64_t* out);
}  // namespace qkdsim::detail

namespace {

BitVec with_flips(const BitVec& key, std::size_t n_flips, Rng& rng) {
    BitVec out = key;
    std::set<std::size_t> flipped;
    while (flipped.size() < n_flips) {
        const auto pos = static_cast<std::size_t>(rng.below(key.size()));
        if (flipped.insert(pos).second) out.flip(pos);
    }
    return out;
}

// Direct O(n*m) Toeplitz matrix-vector product from the matrix definition:
// first column = seed[0..m), first row continues with seed[m..m+n-1).
BitVec toeplitz_naive(const BitVec& key, const BitVec& seed, std::size_t m) {
    const std::size_t n = key.size();
    BitVec out(m);
    for (std::size_t i = 0; i < m; ++i) {
        bool acc = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (!key.get(j)) continue;
            const bool t = i >= j ? seed.get(i - j) : seed.get(m - 1 + (j - i));
            acc ^= t;
        }
        out.set(i, acc);
    }
    return out;
}

}  // namespace

TEST_CASE("cascade on identical keys leaks only parities and the tag") {
    Rng rng(1);
    const std::size_t n = 1 << 14;
    const BitVec key = BitVec::random(n, rng);
    const CascadeResult res = cascade_correct(key, key, 0.01, 99);
    CHECK(res.verified);
    CHECK(res.corrected == key);
    CHECK(res.flips == 0);

    // ceil(0.73/q) = 73; four passes of top-block parities plus 64 tag bits.
    std::uint64_t expected = 64;
    for (int p = 0; p < 4; ++p) {
        const std::size_t bs = 73u << p;
        expected += (n + bs - 1) / bs;
    }
    CHECK(res.leak_bits == expected);
}

TEST_CASE("cascade corrects 100 seeded trials per error rate") {
    Rng rng(2);
    const std::size_t n = 1 << 17;

    for (const double qber : {0.005, 0.01, 0.02, 0.042}) {
        int exact = 0;
        double f_min = 1e9, f_max = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const BitVec alice = BitVec::random(n, rng);
            const auto n_err = static_cast<std::size_t>(std::llround(qber * n));
            const BitVec bob = with_flips(alice, n_err, rng);

            const CascadeResult res =
                cascade_correct(alice, bob, qber, 1234 + trial);
            if (res.verified && res.corrected == alice) ++exact;

            const double f = static_cast<double>(res.leak_bits) /
                             (static_cast<double>(n) * binary_entropy(qber));
            f_min = std::min(f_min, f);
            f_max = std::max(f_max, f);
        }
        CAPTURE(qber);
        CHECK(exact == 100);
        CHECK(f_min >= 1.0);
        CHECK(f_max <= 1.3);
        if (qber == 0.01) {
            // The conventional efficiency figure for this regime sits inside
            // the measured spread.
            CHECK(f_min <= 1.14);
            CHECK(f_max >= 1.14);
        }
    }
}

TEST_CASE("cascade at the full block size") {
    Rng rng(3);
    const std::size_t n = 1 << 20;
    const BitVec alice = BitVec::random(n, rng);

    SUBCASE("one percent") {
        const BitVec bob = with_flips(alice, n / 100, rng);
        const CascadeResult res = cascade_correct(alice, bob, 0.01, 777);
        CHECK(res.verified);
        CHECK(res.corrected == alice);
        const double f = static_cast<double>(res.leak_bits) /
                         (static_cast<double>(n) * binary_entropy(0.01));
        CHECK(f <= 1.2);  // the stated leak budget for this regime
    }
    SUBCASE("4.2 percent") {
        const auto n_err = static_cast<std::size_t>(std::llround(0.042 * n));
        const BitVec bob = with_flips(alice, n_err, rng);
        const CascadeResult res = cascade_correct(alice, bob, 0.042, 778);
        CHECK(res.verified);
        CHECK(res.corrected == alice);
        const double f = static_cast<double>(res.leak_bits) /
                         (static_cast<double>(n) * binary_entropy(0.042));
        CHECK(f <= 1.25);
    }
}

TEST_CASE("cascade across random rates in the allowed domain") {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const double qber = rng.uniform(0.002, 0.25);
        const std::size_t n = 2048 + 64 * static_cast<std::size_t>(rng.below(512));
        const BitVec alice = BitVec::random(n, rng);
        const auto n_err =
            std::max<std::size_t>(1, static_cast<std::size_t>(qber * n));
        const BitVec bob = with_flips(alice, n_err, rng);

        const CascadeResult res = cascade_correct(alice, bob, qber, 900 + trial);
        CAPTURE(qber);
        CAPTURE(n);
        CHECK(res.verified);
        CHECK(res.corrected == alice);
        CHECK(res.leak_bits >= n_err);  // at least one disclosure per error
    }
}

TEST_CASE("cascade input validation") {
    Rng rng(4);
    const BitVec a = BitVec::random(2048, rng);
    const BitVec short_b = BitVec::random(1024, rng);
    CHECK_THROWS_AS(cascade_correct(a, short_b, 0.01, 1), std::invalid_argument);
    CHECK_THROWS_AS(cascade_correct(short_b, short_b, 0.3, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(cascade_correct(short_b, short_b, 0.0, 1),
                    std::invalid_argument);
    const BitVec tiny = BitVec::random(512, rng);
    CHECK_THROWS_AS(cascade_correct(tiny, tiny, 0.01, 1), std::invalid_argument);
}

TEST_CASE("toeplitz basics") {
    Rng rng(5);

    SUBCASE("zero key hashes to zero") {
        const BitVec key(4096);
        const BitVec seed = BitVec::random(4096 + 511, rng);
        const BitVec out = toeplitz_hash(key, seed, 512);
        CHECK(out.count_ones() == 0);
    }

    SUBCASE("unit vector reads a matrix column off the seed") {
        const std::size_t n = 2048, m = 256;
        const BitVec seed = BitVec::random(n + m - 1, rng);
        for (const std::size_t j : {std::size_t{0}, std::size_t{37},
                                    std::size_t{255}, std::size_t{2047}}) {
            BitVec key(n);
            key.set(j, true);
            const BitVec out = toeplitz_hash(key, seed, m);
            for (std::size_t i = 0; i < m; ++i) {
                const bool expect =
                    i >= j ? seed.get(i - j) : seed.get(m - 1 + (j - i));
                CHECK(out.get(i) == expect);
            }
        }
    }

    SUBCASE("matches the naive oracle on 4096-bit instances") {
        for (int trial = 0; trial < 25; ++trial) {
            const std::size_t n = 4096, m = 512;
            const BitVec key = BitVec::random(n, rng);
            const BitVec seed = BitVec::random(n + m - 1, rng);
            CHECK(toeplitz_hash(key, seed, m) == toeplitz_naive(key, seed, m));
        }
    }

    SUBCASE("linearity") {
        const std::size_t n = 8192, m = 1024;
        const BitVec seed = BitVec::random(n + m - 1, rng);
        for (int trial = 0; trial < 20; ++trial) {
            const BitVec a = BitVec::random(n, rng);
            const BitVec b = BitVec::random(n, rng);
            const BitVec lhs = toeplitz_hash(a ^ b, seed, m);
            const BitVec rhs = toeplitz_hash(a, seed, m) ^
                               toeplitz_hash(b, seed, m);
            CHECK(lhs == rhs);
        }
    }

    SUBCASE("input validation") {
        const BitVec key = BitVec::random(1024, rng);
        const BitVec seed = BitVec::random(1024, rng);
        CHECK_THROWS_AS(toeplitz_hash(key, seed, 128), std::invalid_argument);
        const BitVec seed_ok = BitVec::random(1024 + 127, rng);
        CHECK_THROWS_AS(toeplitz_hash(key, seed_ok, 2048), std::invalid_argument);
    }
}

namespace {

BlockStats stats_at(const SystemParams& sys, double loss_db) {
    SecurityParams sec;
    return analytic_block_stats(sys, sec, loss_db);
}

}  // namespace

TEST_CASE("decoy bounds against the Poisson decomposition oracle") {
    SystemParams sys;
    sys.e_mis = 0.005606;
    BlockStats stats = stats_at(sys, 12.6);

    // Infinite-sample limit: zero out the Hoeffding deviations by scaling all
    // counts up and comparing the relative bound.
    const double scale = 1e12;
    BlockStats big = stats;
    for (int k = 0; k < kIntensityCount; ++k) {
        big.sent[k] *= scale;
        big.n[k] *= scale;
        big.m[k] *= scale;
    }
    big.sec.block_size =
        static_cast<std::uint64_t>(stats.n[idx(Intensity::signal)] * scale);
    const DecoyBounds bounds = decoy_bounds(big, sys);
    const double s1_rel =
        bounds.s1_lower / big.n[idx(Intensity::signal)];

    // Oracle: exact single-photon event count from Poisson photon statistics.
    const RateModel rm = rate_model(sys, 12.6);
    const double tau1_mu = sys.probabilities[0] * std::exp(-0.6) * 0.6;
    const double y1 = 1.0 - (1.0 - sys.p_dc) * (1.0 - rm.eta) *
                                (1.0 - rm.q_t * sys.p_ap);
    const double n_sent = stats.sent[0] + stats.sent[1] + stats.sent[2];
    const double s1_true = n_sent * 0.5 * tau1_mu * y1;
    const double s1_true_rel = s1_true / stats.n[idx(Intensity::signal)];

    CHECK(s1_rel <= s1_true_rel);
    CHECK(s1_rel > 0.9 * s1_true_rel);  // gap below ten percent
}

TEST_CASE("decoy bounds: dark-count-only regime yields no key") {
    SystemParams sys;
    // Effectively eta = 0: enormous loss, detections are dark counts only.
    BlockStats stats = stats_at(sys, 200.0);
    stats.sec.block_size = 1 << 20;
    const DecoyBounds bounds = decoy_bounds(stats, sys);

    // Dark counts land on n-photon pulses too, so the single-photon event
    // bound stays positive; it must remain below the exact Poisson count.
    const double s1_true = (stats.sent[0] + stats.sent[1] + stats.sent[2]) *
                           0.5 * sys.probabilities[0] * std::exp(-0.6) * 0.6 *
                           (rate_model(sys, 200.0).q_t +
                            sys.p_dc);  // yield is dark-count dominated
    CHECK(bounds.s1_lower <= s1_true);

    // Errors are coin flips: the phase-error bound saturates and the key
    // vanishes.
    CHECK(bounds.phi1_upper == 0.5);
    CHECK(key_length(stats, bounds) == 0);
}

TEST_CASE("doubling counts tightens relative deviations by sqrt(2)") {
    SystemParams sys;
    sys.e_mis = 0.005606;
    const BlockStats stats = stats_at(sys, 12.6);
    const double log_term = std::log(21.0 / stats.sec.epsilon_sec);
    for (int k = 0; k < kIntensityCount; ++k) {
        const double rel1 = std::sqrt(0.5 * stats.n[k] * log_term) / stats.n[k];
        const double rel2 =
            std::sqrt(0.5 * 2.0 * stats.n[k] * log_term) / (2.0 * stats.n[k]);
        CHECK(rel1 / rel2 == doctest::Approx(std::sqrt(2.0)));
    }
}

TEST_CASE("block stats validation") {
    SystemParams sys;
    BlockStats stats = stats_at(sys, 12.6);
    stats.m[0] = stats.n[0] + 1.0;
    CHECK_THROWS_AS(stats.validate(), std::invalid_argument);

    stats = stats_at(sys, 12.6);
    stats.sec.f_ec = 0.9;
    CHECK_THROWS_AS(stats.validate(), std::invalid_argument);

    stats = stats_at(sys, 12.6);
    stats.sec.epsilon_sec = 0.0;
    CHECK_THROWS_AS(stats.validate(), std::invalid_argument);
}

TEST_CASE("decoy bounds precondition") {
    SystemParams sys;
    BlockStats stats = stats_at(sys, 12.6);
    stats.n[idx(Intensity::decoy)] = 0.0;
    stats.m[idx(Intensity::decoy)] = 0.0;
    CHECK_THROWS_AS(decoy_bounds(stats, sys), std::invalid_argument);
}

TEST_CASE("key length formula") {
    SystemParams sys;
    sys.e_mis = 0.005606;
    BlockStats stats = stats_at(sys, 12.6);

    SUBCASE("phi1 = 1/2 voids the single-photon term") {
        DecoyBounds bounds{1000.0, 500000.0, 0.5, false};
        DecoyBounds zero{1000.0, 0.0, 0.5, false};
        // With h2(1/2) = 1 the s1 term vanishes: both give the same length.
        CHECK(key_length(stats, bounds) == key_length(stats, zero));
    }

    SUBCASE("no vacuum or single-photon credit clamps to zero") {
        DecoyBounds bounds{0.0, 0.0, 0.3, false};
        CHECK(key_length(stats, bounds) == 0);
    }

    SUBCASE("monotone in phi1 and s1") {
        std::uint64_t prev = ~0ULL;
        for (double phi1 = 0.01; phi1 <= 0.5; phi1 += 0.02) {
            DecoyBounds bounds{3000.0, 500000.0, phi1, false};
            const std::uint64_t ell = key_length(stats, bounds);
            CHECK(ell <= prev);
            prev = ell;
        }
        std::uint64_t prev_s1 = 0;
        for (double s1 = 0.0; s1 <= 600000.0; s1 += 50000.0) {
            DecoyBounds bounds{3000.0, s1, 0.03, false};
            const std::uint64_t ell = key_length(stats, bounds);
            CHECK(ell >= prev_s1);
            prev_s1 = ell;
        }
    }

    SUBCASE("relaxing epsilon_sec increases the length") {
        const DecoyBounds tight = decoy_bounds(stats, sys);
        const std::uint64_t ell_tight = key_length(stats, tight);
        BlockStats relaxed = stats;
        relaxed.sec.epsilon_sec = 1e-6;
        const DecoyBounds loose = decoy_bounds(relaxed, sys);
        const std::uint64_t ell_loose = key_length(relaxed, loose);
        CHECK(ell_loose > ell_tight);
    }
}

TEST_CASE("skr curve matches the published table") {
    SystemParams sys;
    sys.e_mis = calibrate_misalignment(sys, 10.0, 0.00899);
    sys.duty_factor = calibrate_duty_factor(sys, 10.0, 21969.0);
    SecurityParams sec;

    const double losses[] = {10.0, 12.6, 15.0, 20.0, 25.0, 31.0};
    const auto pts = skr_curve(sys, sec, losses);

    CHECK(pts[0].qber == doctest::Approx(0.00899).epsilon(1e-3));
    CHECK(std::abs(pts[1].qber - 0.00958) < 1e-3);   // 12.6 dB row
    CHECK(std::abs(pts[3].qber - 0.01991) < 1.5e-3); // 20 dB row

    CHECK(pts[1].skr_bps == doctest::Approx(3675.9).epsilon(0.25));
    CHECK(pts[4].skr_bps > 0.0);
    CHECK(pts[5].skr_bps == 0.0);  // beyond the operating envelope
    CHECK(pts[5].ell == 0);
}

TEST_CASE("carry-less multiply backends agree with a bit-level oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t na = 1 + rng.below(6);
        const std::size_t nb = 1 + rng.below(6);
        std::vector<std::uint64_t> a(na), b(nb);
        for (auto& w : a) w = rng.u64();
        for (auto& w : b) w = rng.u64();

        std::vector<std::uint64_t> portable(na + nb + 1, 0);
        detail::clmul_accumulate_portable(a.data(), na, b.data(), nb,
                                          portable.data());

        // Bit-level GF(2) convolution.
        std::vector<std::uint64_t> naive(na + nb + 1, 0);
        for (std::size_t i = 0; i < 64 * na; ++i) {
            if (!((a[i >> 6] >> (i & 63)) & 1u)) continue;
            for (std::size_t j = 0; j < 64 * nb; ++j) {
                if (!((b[j >> 6] >> (j & 63)) & 1u)) continue;
                naive[(i + j) >> 6] ^= 1ULL << ((i + j) & 63);
            }
        }
        CHECK(portable == naive);

        if (detail::clmul_runtime_supported()) {
            std::vector<std::uint64_t> fast(na + nb + 1, 0);
            detail::clmul_accumulate_fast(a.data(), na, b.data(), nb,
                                          fast.data());
            CHECK(fast == naive);
        }
    }
}

TEST_CASE("key report rolls bounds, leak and rate together") {
    SystemParams sys;
    sys.e_mis = calibrate_misalignment(sys, 10.0, 0.00899);
    sys.duty_factor = calibrate_duty_factor(sys, 10.0, 21969.0);
    SecurityParams sec;
    const BlockStats stats = analytic_block_stats(sys, sec, 12.6);
    const DecoyBounds bounds = decoy_bounds(stats, sys);

    const KeyReport modeled =
        key_report(stats, bounds, modeled_leak_bits(stats), 11804.8);
    CHECK(modeled.ell == key_length(stats, bounds));
    CHECK(modeled.s1_lower == bounds.s1_lower);
    CHECK(modeled.skr_bps ==
          doctest::Approx(static_cast<double>(modeled.ell) * 11804.8 /
                          stats.n[idx(Intensity::signal)]));

    // Charging a larger measured leak shortens the key.
    const KeyReport measured =
        key_report(stats, bounds, modeled.leak_ec * 1.2, 11804.8);
    CHECK(measured.ell < modeled.ell);
}

TEST_CASE("toeplitz at production size") {
    Rng rng(6);
    const std::size_t n = 1 << 20;
    const std::size_t m = 30000;
    const BitVec seed = BitVec::random(n + m - 1, rng);
    const BitVec a = BitVec::random(n, rng);
    const BitVec b = BitVec::random(n, rng);
    const BitVec lhs = toeplitz_hash(a ^ b, seed, m);
    const BitVec rhs = toeplitz_hash(a, seed, m) ^ toeplitz_hash(b, seed, m);
    CHECK(lhs == rhs);
    CHECK(lhs.size() == m);
}
