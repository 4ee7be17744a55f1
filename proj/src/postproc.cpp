#include "qkdsim/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <utility>

namespace qkdsim {

namespace detail {
// Carry-less multiply backends (toeplitz_clmul.cpp).
bool clmul_runtime_supported();
void clmul_accumulate_fast(const std::uint64_t* a, std::size_t na,
                           const std::uint64_t* b, std::size_t nb,
                           std::uint64_t* out);

// Portable 4-bit windowed carry-less multiply-accumulate: out[0..na+nb) ^= a*b.
void clmul_accumulate_portable(const std::uint64_t* a, std::size_t na,
                               const std::uint64_t* b, std::size_t nb,
                               std::uint64_t* out) {
    for (std::size_t j = 0; j < nb; ++j) {
        const std::uint64_t bw = b[j];
        if (bw == 0) continue;
        // Nibble products of bw; the high parts hold the 3 overflow bits.
        std::uint64_t tlo[16], thi[16];
        tlo[0] = 0;
        thi[0] = 0;
        tlo[1] = bw;
        thi[1] = 0;
        for (int k = 2; k < 16; k += 2) {
            tlo[k] = tlo[k / 2] << 1;
            thi[k] = (thi[k / 2] << 1) | (tlo[k / 2] >> 63);
            tlo[k + 1] = tlo[k] ^ bw;
            thi[k + 1] = thi[k];
        }
        for (std::size_t i = 0; i < na; ++i) {
            std::uint64_t aw = a[i];
            if (aw == 0) continue;
            std::uint64_t lo = 0, hi = 0;
            for (int s = 0; s < 64 && aw; s += 4, aw >>= 4) {
                const int nib = static_cast<int>(aw & 15);
                if (!nib) continue;
                if (s == 0) {
                    lo ^= tlo[nib];
                    hi ^= thi[nib];
                } else {
                    lo ^= tlo[nib] << s;
                    hi ^= (thi[nib] << s) | (tlo[nib] >> (64 - s));
                }
            }
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

void clmul_accumulate(const std::uint64_t* a, std::size_t na,
                      const std::uint64_t* b, std::size_t nb,
                      std::uint64_t* out) {
    if (clmul_runtime_supported())
        clmul_accumulate_fast(a, na, b, nb, out);
    else
        clmul_accumulate_portable(a, na, b, nb, out);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cascade
// ---------------------------------------------------------------------------

namespace {

struct CascadePass {
    std::vector<std::uint32_t> perm;      // permuted position -> original index
    std::vector<std::uint32_t> inv_perm;  // original index -> permuted position
    std::size_t block_size = 0;
    std::vector<std::uint8_t> diff;       // parity of a^b per block
};

// Parity of the difference vector over a permuted range.
bool range_diff_parity(const BitVec& d, const CascadePass& pass, std::size_t lo,
                       std::size_t hi) {
    bool p = false;
    for (std::size_t i = lo; i < hi; ++i) p ^= d.get(pass.perm[i]);
    return p;
}

}  // namespace

CascadeResult cascade_correct(const BitVec& key_a, const BitVec& key_b,
                              double qber_estimate, std::uint64_t seed) {
    const std::size_t n = key_a.size();
    if (key_b.size() != n)
        throw std::invalid_argument("cascade: key length mismatch");
    if (n < 1024) throw std::invalid_argument("cascade: keys shorter than 1024");
    if (!(qber_estimate > 0.0) || qber_estimate > 0.25)
        throw std::invalid_argument("cascade: qber_estimate outside (0, 0.25]");

    CascadeResult res;
    res.corrected = key_b;
    BitVec diff_vec = key_a ^ key_b;

    Rng rng(derive_seed(seed, 0));
    const std::size_t k1 = std::min<std::size_t>(
        n, std::max<std::size_t>(2, static_cast<std::size_t>(
                                        std::ceil(0.73 / qber_estimate))));

    std::vector<CascadePass> passes;
    std::deque<std::pair<std::size_t, std::size_t>> work;  // (pass, block)

    auto flip_bit = [&](std::size_t orig) {
        res.corrected.flip(orig);
        diff_vec.flip(orig);
        ++res.flips;
        for (std::size_t p = 0; p < passes.size(); ++p) {
            CascadePass& ps = passes[p];
            const std::size_t bi = ps.inv_perm[orig] / ps.block_size;
            ps.diff[bi] ^= 1;
            if (ps.diff[bi]) work.emplace_back(p, bi);
        }
    };

    // Locate one differing bit inside an odd block by halving; each level
    // discloses one parity.
    auto bisect = [&](const CascadePass& ps, std::size_t lo, std::size_t hi) {
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo + 1) / 2;
            ++res.leak_bits;
            if (range_diff_parity(diff_vec, ps, lo, mid))
                hi = mid;
            else
                lo = mid;
        }
        return static_cast<std::size_t>(ps.perm[lo]);
    };

    auto drain = [&] {
        while (!work.empty()) {
            const auto [p, bi] = work.front();
            work.pop_front();
            CascadePass& ps = passes[p];
            if (!ps.diff[bi]) continue;  // already fixed by a cascaded flip
            const std::size_t lo = bi * ps.block_size;
            const std::size_t hi = std::min(n, lo + ps.block_size);
            flip_bit(bisect(ps, lo, hi));
        }
    };

    auto run_round = [&](std::size_t block_size, bool shuffled) {
        CascadePass ps;
        ps.block_size = std::min(block_size, n);
        ps.perm.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            ps.perm[i] = static_cast<std::uint32_t>(i);
        if (shuffled) shuffle(ps.perm, rng);
        ps.inv_perm.resize(n);
        for (std::size_t i = 0; i < n; ++i) ps.inv_perm[ps.perm[i]] = i;

        const std::size_t n_blocks = (n + ps.block_size - 1) / ps.block_size;
        ps.diff.assign(n_blocks, 0);
        res.leak_bits += n_blocks;  // Alice's top-level block parities
        for (std::size_t bi = 0; bi < n_blocks; ++bi) {
            const std::size_t lo = bi * ps.block_size;
            const std::size_t hi = std::min(n, lo + ps.block_size);
            ps.diff[bi] = range_diff_parity(diff_vec, ps, lo, hi);
        }
        passes.push_back(std::move(ps));
        const std::size_t p = passes.size() - 1;
        for (std::size_t bi = 0; bi < n_blocks; ++bi)
            if (passes[p].diff[bi]) work.emplace_back(p, bi);
        drain();
        ++res.passes;
    };

    constexpr int kScheduledPasses = 4;
    for (int pass = 0; pass < kScheduledPasses; ++pass)
        run_round(k1 << pass, pass > 0);

    // Verification tag; Alice's hash is disclosed once.
    res.leak_bits += 64;
    const std::uint64_t tag_a = key_a.poly_hash();
    res.verified = res.corrected.poly_hash() == tag_a;

    constexpr int kMaxExtraRounds = 4;
    for (int extra = 0; !res.verified && extra < kMaxExtraRounds; ++extra) {
        run_round(k1 << (kScheduledPasses - 1), true);
        res.verified = res.corrected.poly_hash() == tag_a;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Toeplitz hashing
// ---------------------------------------------------------------------------

BitVec toeplitz_hash(const BitVec& key, const BitVec& seed_bits,
                     std::size_t out_len) {
    const std::size_t n = key.size();
    if (out_len == 0) return BitVec{};
    if (out_len > n)
        throw std::invalid_argument("toeplitz: out_len exceeds key length");
    if (seed_bits.size() != n + out_len - 1)
        throw std::invalid_argument("toeplitz: seed must hold n + m - 1 bits");

    // Diagonal generator laid out so that output bit i is coefficient n-1+i of
    // the carry-less product key(z) * w(z).
    BitVec w(n + out_len - 1);
    for (std::size_t x = 0; x + 1 < n; ++x)
        w.set(x, seed_bits.get(n + out_len - 2 - x));
    for (std::size_t d = 0; d < out_len; ++d) w.set(n - 1 + d, seed_bits.get(d));

    const auto& aw = key.words();
    const auto& bw = w.words();
    std::vector<std::uint64_t> prod(aw.size() + bw.size() + 1, 0);
    detail::clmul_accumulate(aw.data(), aw.size(), bw.data(), bw.size(),
                             prod.data());

    BitVec out(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const std::size_t s = n - 1 + i;
        if ((prod[s >> 6] >> (s & 63)) & 1u) out.set(i, true);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-key bounds
// ---------------------------------------------------------------------------

double binary_entropy(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

namespace {

// Statistical-fluctuation correction relating the observed to the phase error
// rate between two equally sized single-photon pools.
double phase_error_correction(double eps, double ratio, double c, double d) {
    if (ratio <= 0.0 || ratio >= 1.0 || c <= 0.0 || d <= 0.0) return 0.0;
    const double t1 =
        (c + d) * (1.0 - ratio) * ratio / (c * d * std::log(2.0));
    const double arg =
        (c + d) / (c * d * (1.0 - ratio) * ratio) * std::pow(21.0 / eps, 2.0);
    if (arg <= 1.0) return 0.0;
    return std::sqrt(t1 * std::log2(arg));
}

}  // namespace

DecoyBounds decoy_bounds(const BlockStats& stats, const SystemParams& params) {
    stats.validate();
    params.validate();
    const int s = idx(Intensity::signal);
    const int d1 = idx(Intensity::decoy);
    const int d2 = idx(Intensity::vacuum);
    if (stats.n[s] <= 0.0 || stats.n[d1] <= 0.0)
        throw std::invalid_argument("decoy_bounds: need detections for mu and nu1");

    const double mu = params.intensities[s];
    const double nu1 = params.intensities[d1];
    const double nu2 = params.intensities[d2];
    const double log_term = std::log(21.0 / stats.sec.epsilon_sec);
    const double block = static_cast<double>(stats.sec.block_size);

    const auto dev = [&](double count) {
        return std::sqrt(0.5 * count * log_term);
    };
    std::array<double, kIntensityCount> n_plus{}, n_minus{}, m_plus{}, m_minus{};
    for (int k = 0; k < kIntensityCount; ++k) {
        const double scale =
            std::exp(params.intensities[k]) / params.probabilities[k];
        n_plus[k] = scale * (stats.n[k] + dev(stats.n[k]));
        n_minus[k] = scale * std::max(0.0, stats.n[k] - dev(stats.n[k]));
        m_plus[k] = scale * (stats.m[k] + dev(stats.m[k]));
        m_minus[k] = scale * std::max(0.0, stats.m[k] - dev(stats.m[k]));
    }

    // Share of vacuum / single-photon states that belong to the signal block.
    const double w0 = params.probabilities[s] * std::exp(-mu);
    const double w1 = w0 * mu;

    DecoyBounds out;
    const double s0_scaled =
        (nu1 * n_minus[d2] - nu2 * n_plus[d1]) / (nu1 - nu2);
    out.s0_lower = std::clamp(w0 * s0_scaled, 0.0, block);

    const double denom = mu * (nu1 - nu2) - nu1 * nu1 + nu2 * nu2;
    const double bracket =
        n_minus[d1] - n_plus[d2] -
        (nu1 * nu1 - nu2 * nu2) / (mu * mu) *
            (n_plus[s] - std::max(0.0, s0_scaled));
    out.s1_lower = std::clamp(w1 * mu / denom * bracket, 0.0, block);

    if (out.s1_lower <= 0.0) {
        out.degenerate = true;
        out.phi1_upper = 0.5;
        return out;
    }

    const double v1 =
        std::max(0.0, w1 * (m_plus[d1] - m_minus[d2]) / (nu1 - nu2));
    double phi1 = v1 / out.s1_lower;
    phi1 += phase_error_correction(stats.sec.epsilon_sec,
                                   std::clamp(phi1, 1e-12, 0.5),
                                   0.5 * out.s1_lower, 0.5 * out.s1_lower);
    out.phi1_upper = std::min(phi1, 0.5);
    return out;
}

double modeled_leak_bits(const BlockStats& stats) {
    return stats.sec.f_ec * stats.n[idx(Intensity::signal)] *
           binary_entropy(stats.qber(Intensity::signal));
}

std::uint64_t key_length(const BlockStats& stats, const DecoyBounds& bounds) {
    return key_length(stats, bounds, modeled_leak_bits(stats));
}

std::uint64_t key_length(const BlockStats& stats, const DecoyBounds& bounds,
                         double leak_ec_bits) {
    if (bounds.degenerate) return 0;
    const double delta = 6.0 * std::log2(21.0 / stats.sec.epsilon_sec) +
                         std::log2(2.0 / stats.sec.epsilon_cor);
    const double ell = bounds.s0_lower +
                       bounds.s1_lower * (1.0 - binary_entropy(bounds.phi1_upper)) -
                       leak_ec_bits - delta;
    return ell <= 0.0 ? 0 : static_cast<std::uint64_t>(std::floor(ell));
}

KeyReport key_report(const BlockStats& stats, const DecoyBounds& bounds,
                     double leak_ec_bits, double sifted_bps) {
    KeyReport rep;
    rep.s0_lower = bounds.s0_lower;
    rep.s1_lower = bounds.s1_lower;
    rep.phi1_upper = bounds.phi1_upper;
    rep.leak_ec = leak_ec_bits;
    rep.ell = key_length(stats, bounds, leak_ec_bits);
    rep.skr_bps = static_cast<double>(rep.ell) * sifted_bps /
                  stats.n[idx(Intensity::signal)];
    return rep;
}

// ---------------------------------------------------------------------------
// Rate curves
// ---------------------------------------------------------------------------

BlockStats analytic_block_stats(const SystemParams& params,
                                const SecurityParams& sec, double loss_db) {
    const RateModel rm = rate_model(params, loss_db);
    BlockStats stats;
    stats.sec = sec;
    const int s = idx(Intensity::signal);
    const double n_mu = static_cast<double>(sec.block_size);
    const double n_sent = n_mu / (params.probabilities[s] * rm.q[s] * 0.5);
    for (int k = 0; k < kIntensityCount; ++k) {
        stats.sent[k] = n_sent * params.probabilities[k];
        stats.n[k] = stats.sent[k] * rm.q[k] * 0.5;
        stats.m[k] = stats.n[k] * rm.e[k];
    }
    return stats;
}

std::vector<SkrPoint> skr_curve(const SystemParams& params,
                                const SecurityParams& sec,
                                std::span<const double> losses_db) {
    std::vector<SkrPoint> points;
    points.reserve(losses_db.size());
    for (const double loss : losses_db) {
        const RateModel rm = rate_model(params, loss);
        const BlockStats stats = analytic_block_stats(params, sec, loss);
        SkrPoint pt;
        pt.loss_db = loss;
        pt.qber = rm.e[idx(Intensity::signal)];
        pt.sifted_bps = sifted_rate_bps(params, loss);
        pt.bounds = decoy_bounds(stats, params);
        pt.ell = key_length(stats, pt.bounds);
        pt.skr_bps = static_cast<double>(pt.ell) * pt.sifted_bps /
                     static_cast<double>(sec.block_size);
        points.push_back(pt);
    }
    return points;
}

}  // namespace qkdsim
