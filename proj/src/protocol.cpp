#include "qkdsim/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <vector>

namespace qkdsim {

namespace {

constexpr std::uint64_t kPulsesPerStep = 10000;   // channel step batching
constexpr std::uint64_t kSubBlockPulses = 1 << 22;  // fixed scheduling grain

std::uint64_t probability_threshold(double p) {
    if (p <= 0.0) return 0;
    const long double scaled = std::ldexp(static_cast<long double>(p), 64);
    const long double maxv = 1.8446744073709551615e19L;  // 2^64 - 1
    return scaled >= maxv ? ~0ULL : static_cast<std::uint64_t>(scaled);
}

}  // namespace

void SystemParams::validate() const {
    if (rep_rate <= 0.0) throw std::invalid_argument("system: rep_rate must be > 0");
    double psum = 0.0;
    for (int k = 0; k < kIntensityCount; ++k) {
        if (probabilities[k] < 0.0 || probabilities[k] > 1.0)
            throw std::invalid_argument("system: intensity probability out of [0,1]");
        psum += probabilities[k];
    }
    if (std::abs(psum - 1.0) > 1e-12)
        throw std::invalid_argument("system: intensity probabilities must sum to 1");
    if (!(intensities[0] > intensities[1] && intensities[1] > intensities[2]))
        throw std::invalid_argument("system: intensities must satisfy mu > nu1 > nu2");
    if (intensities[2] != 0.0)
        throw std::invalid_argument("system: vacuum intensity must be 0");
    if (eta_d <= 0.0 || eta_d > 1.0)
        throw std::invalid_argument("system: eta_d out of (0,1]");
    if (p_dc < 0.0 || p_dc >= 1.0)
        throw std::invalid_argument("system: p_dc out of [0,1)");
    if (p_ap < 0.0 || p_ap >= 1.0)
        throw std::invalid_argument("system: p_ap out of [0,1)");
    if (receiver_loss_db < 0.0)
        throw std::invalid_argument("system: receiver_loss_db must be >= 0");
    if (e_mis < 0.0 || e_mis >= 0.5)
        throw std::invalid_argument("system: e_mis out of [0,0.5)");
    if (duty_factor <= 0.0 || duty_factor > 1.0)
        throw std::invalid_argument("system: duty_factor out of (0,1]");
    if (v_pi <= 0.0) throw std::invalid_argument("system: v_pi must be > 0");
}

double overall_efficiency(const SystemParams& params, double channel_loss_db) {
    return std::pow(10.0, -0.1 * (channel_loss_db + params.receiver_loss_db)) *
           params.eta_d;
}

double gain_no_afterpulse(double k, double eta, double p_dc) {
    if (k < 0.0) throw std::invalid_argument("gain: mean photon number < 0");
    return 1.0 - (1.0 - p_dc) * std::exp(-k * eta);
}

RateModel rate_model(const SystemParams& params, double channel_loss_db) {
    RateModel rm;
    rm.eta = overall_efficiency(params, channel_loss_db);
    rm.q_t = 0.0;
    for (int k = 0; k < kIntensityCount; ++k) {
        rm.q0[k] = gain_no_afterpulse(params.intensities[k], rm.eta, params.p_dc);
        rm.q_t += params.probabilities[k] * rm.q0[k];
    }
    for (int k = 0; k < kIntensityCount; ++k) {
        rm.q[k] = rm.q_t * params.p_ap + rm.q0[k];
        if (rm.q[k] <= 0.0)
            throw std::domain_error("rate_model: zero gain, error rate undefined");
        const double num = 0.5 * params.p_dc +
                           params.e_mis *
                               (1.0 - std::exp(-params.intensities[k] * rm.eta)) +
                           0.5 * rm.q_t * params.p_ap;
        rm.e[k] = num / rm.q[k];
    }
    return rm;
}

double sifted_rate_bps(const SystemParams& params, double channel_loss_db) {
    const RateModel rm = rate_model(params, channel_loss_db);
    return params.rep_rate * params.probabilities[0] * rm.q[0] * 0.5 *
           params.duty_factor;
}

double calibrate_misalignment(const SystemParams& params, double anchor_loss_db,
                              double anchor_qber) {
    SystemParams p = params;
    p.e_mis = 0.0;
    const RateModel rm = rate_model(p, anchor_loss_db);
    const double mu = params.intensities[0];
    const double denom = 1.0 - std::exp(-mu * rm.eta);
    if (denom <= 0.0)
        throw std::domain_error("calibrate_misalignment: no signal response");
    const double num =
        anchor_qber * rm.q[0] - 0.5 * params.p_dc - 0.5 * rm.q_t * params.p_ap;
    return num / denom;
}

double calibrate_duty_factor(const SystemParams& params, double anchor_loss_db,
                             double anchor_sifted_bps) {
    SystemParams p = params;
    p.duty_factor = 1.0;
    const double full = sifted_rate_bps(p, anchor_loss_db);
    if (full <= 0.0)
        throw std::domain_error("calibrate_duty_factor: zero predicted rate");
    return anchor_sifted_bps / full;
}

// ---------------------------------------------------------------------------

std::uint64_t PulseBatchRecord::detections(Intensity k) const {
    std::uint64_t d = 0;
    for (int a = 0; a < kAlicePhases; ++a)
        for (int b = 0; b < kBobPhases; ++b) {
            const CellTally& c = cell(idx(k), a, b);
            d += c.spd1 + c.spd2 - c.dbl;
        }
    return d;
}

std::uint64_t PulseBatchRecord::sent(Intensity k) const {
    std::uint64_t s = 0;
    for (int a = 0; a < kAlicePhases; ++a)
        for (int b = 0; b < kBobPhases; ++b) s += cell(idx(k), a, b).sent;
    return s;
}

std::array<DetectionProbabilities, kPhaseCells> smzi_cell_intensities(
    const ChannelState& state, double correction) {
    std::array<DetectionProbabilities, kPhaseCells> out{};
    const JonesVector e_pol =
        apply_polarization(state, JonesVector{1.0, 0.0});
    for (int b = 0; b < kBobPhases; ++b) {
        const double phi_b = bob_phase(b) + correction;
        const auto [tl1, ts1] = smzi_path_transforms(phi_b);
        const auto [tl2, ts2] = smzi_path_transforms_pbs2(phi_b);
        for (int a = 0; a < kAlicePhases; ++a) {
            const double phi_a = alice_phase(a) + state.phase_offset;
            const Complex early = std::exp(Complex{0.0, 1.0} * phi_a);
            const JonesVector o1 = (tl1 + ts1 * early) * e_pol;
            const JonesVector o2 = (tl2 + ts2 * early) * e_pol;
            out[a * kBobPhases + b] = {o1.norm_sq(), o2.norm_sq()};
        }
    }
    return out;
}

DetectorModel make_detector_model(const SystemParams& params,
                                  double channel_loss_db) {
    DetectorModel det;
    det.eta = overall_efficiency(params, channel_loss_db);
    det.e_mis = params.e_mis;
    det.p_dark_det = 0.5 * params.p_dc;
    double q_t = 0.0;
    for (int k = 0; k < kIntensityCount; ++k)
        q_t += params.probabilities[k] *
               gain_no_afterpulse(params.intensities[k], det.eta, params.p_dc);
    det.p_ap_det = 0.5 * q_t * params.p_ap;
    return det;
}

void click_probabilities(const DetectorModel& det, double intensity_k,
                         double i1, double i2, double& p1, double& p2) {
    const double i1e = det.e_mis + (1.0 - 2.0 * det.e_mis) * i1;
    const double i2e = det.e_mis + (1.0 - 2.0 * det.e_mis) * i2;
    const double ps1 = -std::expm1(-intensity_k * det.eta * i1e);
    const double ps2 = -std::expm1(-intensity_k * det.eta * i2e);
    const double miss = (1.0 - det.p_dark_det) * (1.0 - det.p_ap_det);
    p1 = 1.0 - (1.0 - ps1) * miss;
    p2 = 1.0 - (1.0 - ps2) * miss;
}

namespace {

struct StepTable {
    // Click thresholds in 2^-64 units, indexed by intensity * kPhaseCells + cell.
    std::array<std::uint64_t, kIntensityCount * kPhaseCells> t1{};
    std::array<std::uint64_t, kIntensityCount * kPhaseCells> t2{};
};

std::vector<StepTable> build_trajectory(const SystemParams& params,
                                        const ChannelParams& channel,
                                        std::uint64_t n_pulses) {
    const std::uint64_t n_steps = (n_pulses + kPulsesPerStep - 1) / kPulsesPerStep;
    const double dt = static_cast<double>(kPulsesPerStep) / params.rep_rate;
    const DetectorModel det = make_detector_model(params, channel.loss_db);

    std::vector<StepTable> tables(n_steps);
    ChannelState state = make_channel_state(channel);
    for (std::uint64_t s = 0; s < n_steps; ++s) {
        const auto cells = smzi_cell_intensities(state);
        StepTable& tbl = tables[s];
        for (int k = 0; k < kIntensityCount; ++k) {
            for (int c = 0; c < kPhaseCells; ++c) {
                double p1 = 0.0, p2 = 0.0;
                click_probabilities(det, params.intensities[k], cells[c].i_out1,
                                    cells[c].i_out2, p1, p2);
                tbl.t1[k * kPhaseCells + c] = probability_threshold(p1);
                tbl.t2[k * kPhaseCells + c] = probability_threshold(p2);
            }
        }
        advance(state, channel, dt);
    }
    return tables;
}

struct TallySink {
    void on_detection(int /*k*/, bool /*matched*/, int /*a_bit*/, bool /*b_bit*/) {}
};

struct KeySink {
    BitVec alice;
    BitVec bob;
    void on_detection(int k, bool matched, int a_bit, bool b_bit) {
        if (matched && k == idx(Intensity::signal)) {
            alice.push_back(a_bit != 0);
            bob.push_back(b_bit);
        }
    }
};

template <typename Sink>
PulseBatchRecord run_pulses(const SystemParams& params,
                            const std::vector<StepTable>& tables,
                            std::uint64_t lo, std::uint64_t hi,
                            std::uint64_t sub_seed, Sink& sink) {
    PulseBatchRecord rec;
    Rng rng(sub_seed);

    const std::uint64_t c_mu = probability_threshold(params.probabilities[0]);
    const std::uint64_t c_nu1 =
        probability_threshold(params.probabilities[0] + params.probabilities[1]);

    std::uint64_t p = lo;
    while (p < hi) {
        const std::uint64_t step = p / kPulsesPerStep;
        const std::uint64_t chunk_end = std::min(hi, (step + 1) * kPulsesPerStep);
        const StepTable& tbl = tables[step];
        for (; p < chunk_end; ++p) {
            const std::uint64_t u = rng.u64();
            const int k = u < c_mu ? 0 : (u < c_nu1 ? 1 : 2);
            const std::uint64_t v = rng.u64();
            const int a_idx = static_cast<int>(v & 3);
            const int b_idx = static_cast<int>((v >> 2) & 1);
            const int cell = a_idx * kBobPhases + b_idx;
            const int t_idx = k * kPhaseCells + cell;

            CellTally& tally = rec.cells[k * kPhaseCells + cell];
            ++tally.sent;

            const bool click1 = rng.u64() < tbl.t1[t_idx];
            const bool click2 = rng.u64() < tbl.t2[t_idx];
            if (!click1 && !click2) continue;

            tally.spd1 += click1;
            tally.spd2 += click2;
            bool bob_bit;
            if (click1 && click2) {
                ++tally.dbl;
                bob_bit = (v >> 3) & 1;  // squash double clicks to a random bit
            } else {
                bob_bit = click1;  // SPD1 encodes bit 1
            }
            const bool matched = alice_basis(a_idx) == b_idx;
            if (matched && bob_bit != (alice_bit(a_idx) != 0)) ++tally.err;
            sink.on_detection(k, matched, alice_bit(a_idx), bob_bit);
        }
    }
    rec.n_pulses = hi - lo;
    return rec;
}

template <typename Sink>
void simulate_impl(const SystemParams& params, const ChannelParams& channel,
                   std::uint64_t n_pulses, std::uint64_t seed,
                   PulseBatchRecord& out, std::vector<Sink>& sinks) {
    if (n_pulses == 0)
        throw std::invalid_argument("simulate_block: n_pulses must be positive");
    params.validate();
    channel.validate();

    const auto tables = build_trajectory(params, channel, n_pulses);

    const std::uint64_t n_sub = (n_pulses + kSubBlockPulses - 1) / kSubBlockPulses;
    sinks.resize(n_sub);
    std::vector<PulseBatchRecord> parts(n_sub);

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned n_workers =
        static_cast<unsigned>(std::min<std::uint64_t>(hw, n_sub));

    std::atomic<std::uint64_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::uint64_t i = next.fetch_add(1);
            if (i >= n_sub) return;
            const std::uint64_t lo = i * kSubBlockPulses;
            const std::uint64_t hi = std::min(n_pulses, lo + kSubBlockPulses);
            parts[i] = run_pulses(params, tables, lo, hi, derive_seed(seed, i),
                                  sinks[i]);
        }
    };

    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    for (const auto& part : parts) out.merge(part);
}

}  // namespace

PulseBatchRecord simulate_block(const SystemParams& params,
                                const ChannelParams& channel,
                                std::uint64_t n_pulses, std::uint64_t seed) {
    PulseBatchRecord rec;
    std::vector<TallySink> sinks;
    simulate_impl(params, channel, n_pulses, seed, rec, sinks);
    return rec;
}

SiftedKeys simulate_sifted_keys(const SystemParams& params,
                                const ChannelParams& channel,
                                std::uint64_t n_pulses, std::uint64_t seed) {
    SiftedKeys keys;
    std::vector<KeySink> sinks;
    simulate_impl(params, channel, n_pulses, seed, keys.record, sinks);
    for (const auto& s : sinks) {
        for (std::size_t i = 0; i < s.alice.size(); ++i) {
            keys.alice.push_back(s.alice.get(i));
            keys.bob.push_back(s.bob.get(i));
        }
    }
    return keys;
}

BlockStats sift(const PulseBatchRecord& record) {
    BlockStats stats;
    for (int k = 0; k < kIntensityCount; ++k) {
        for (int a = 0; a < kAlicePhases; ++a) {
            for (int b = 0; b < kBobPhases; ++b) {
                const CellTally& c = record.cell(k, a, b);
                stats.sent[k] += static_cast<double>(c.sent);
                if (alice_basis(a) != b) continue;
                stats.n[k] += static_cast<double>(c.spd1 + c.spd2 - c.dbl);
                stats.m[k] += static_cast<double>(c.err);
            }
        }
    }
    return stats;
}

TrackerUpdate phase_track_update(const PhaseTracker& tracker,
                                 std::uint64_t c_plus, std::uint64_t c_minus) {
    TrackerUpdate res;
    res.tracker = tracker;
    const std::uint64_t total = c_plus + c_minus;
    if (total == 0) return res;  // no-update, flagged

    double r = (static_cast<double>(c_plus) - static_cast<double>(c_minus)) /
               static_cast<double>(total);
    r = std::clamp(r, -1.0, 1.0);
    res.delta = std::asin(r);
    res.tracker.estimated_offset =
        wrap_angle(tracker.estimated_offset + tracker.gain * res.delta);
    res.updated = true;
    return res;
}

int mismatch_sign(int a_idx, int b_idx) {
    if (alice_basis(a_idx) == b_idx) return 0;
    return ((a_idx - b_idx) & 3) == 1 ? 1 : -1;
}

}  // namespace qkdsim
