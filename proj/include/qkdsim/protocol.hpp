#pragma once

#include <array>
#include <cstdint>

#include "qkdsim/bitvec.hpp"
#include "qkdsim/channel.hpp"
#include "qkdsim/jones.hpp"
#include "qkdsim/stats.hpp"

namespace qkdsim {

// Source, detector and protocol constants. Defaults are the operating point of
// the modeled system: 40 MHz pulsed decoy BB84 with weak+vacuum decoys.
struct SystemParams {
    double rep_rate = 40e6;  // Hz

    std::array<double, kIntensityCount> intensities{0.6, 0.1, 0.0};
    std::array<double, kIntensityCount> probabilities{29.0 / 32.0, 2.0 / 32.0,
                                                      1.0 / 32.0};

    double eta_d = 0.10;             // detector efficiency (average of the pair)
    double p_dc = 3.5e-6;            // dark-count probability per gate, both SPDs
    double p_ap = 0.005;             // after-pulse probability
    double receiver_loss_db = 5.95;  // L_B
    double e_mis = 0.0056;           // misalignment error (Table-2 calibrated)
    double duty_factor = 0.7902;     // throughput factor kappa (10 dB calibrated)
    double v_pi = 2.5;               // half-wave voltage of Bob's PM, volts

    void validate() const;
};

// Analytic gains and error rates per intensity.
struct RateModel {
    double eta = 0.0;  // overall transmission * detection efficiency
    std::array<double, kIntensityCount> q0{};  // gain without after-pulses
    std::array<double, kIntensityCount> q{};   // gain with after-pulses
    std::array<double, kIntensityCount> e{};   // error rate
    double q_t = 0.0;                          // average gain per pulse sent
};

// 10^(-0.1 (L_C + L_B)) * eta_d
double overall_efficiency(const SystemParams& params, double channel_loss_db);

// 1 - (1 - p_dc) exp(-k eta)
double gain_no_afterpulse(double k, double eta, double p_dc);

// Evaluates the gain/error model at the given channel loss. Throws
// std::domain_error if a gain vanishes (error rate undefined).
RateModel rate_model(const SystemParams& params, double channel_loss_db);

// Predicted sifted key rate in bits/s: rep * p_mu * Q_mu / 2 * kappa.
double sifted_rate_bps(const SystemParams& params, double channel_loss_db);

// Inverts the error-rate model at one anchor row: returns the e_mis for which
// E_mu(anchor_loss) equals anchor_qber.
double calibrate_misalignment(const SystemParams& params, double anchor_loss_db,
                              double anchor_qber);

// One-point fit of the duty factor to an observed sifted rate.
double calibrate_duty_factor(const SystemParams& params, double anchor_loss_db,
                             double anchor_sifted_bps);

// ---------------------------------------------------------------------------
// Monte Carlo pulse engine
// ---------------------------------------------------------------------------

// BB84 phase alphabet: Alice phi_a in {0, pi/2, pi, 3pi/2} indexed 0..3,
// Bob phi_b in {0, pi/2} indexed 0..1. Basis is the low bit of Alice's index;
// her bit is the high bit. SPD1 fires on phase difference pi (bit 1), SPD2 on
// phase difference 0 (bit 0).
inline constexpr int kAlicePhases = 4;
inline constexpr int kBobPhases = 2;
inline constexpr int kPhaseCells = kAlicePhases * kBobPhases;

inline int alice_basis(int a_idx) { return a_idx & 1; }
inline int alice_bit(int a_idx) { return a_idx >> 1; }
inline double alice_phase(int a_idx) {
    return 0.5 * 3.14159265358979323846 * a_idx;
}
inline double bob_phase(int b_idx) { return 0.5 * 3.14159265358979323846 * b_idx; }

struct CellTally {
    std::uint64_t sent = 0;
    std::uint64_t spd1 = 0;    // SPD1 clicked (alone or with SPD2)
    std::uint64_t spd2 = 0;
    std::uint64_t dbl = 0;     // both clicked
    std::uint64_t err = 0;     // matched basis: resolved bit != Alice's bit

    void merge(const CellTally& o) {
        sent += o.sent;
        spd1 += o.spd1;
        spd2 += o.spd2;
        dbl += o.dbl;
        err += o.err;
    }
};

// Aggregated detection outcomes of one simulated block, indexed by
// (intensity, Alice phase index, Bob phase index).
struct PulseBatchRecord {
    std::array<CellTally, kIntensityCount * kPhaseCells> cells{};
    std::uint64_t n_pulses = 0;

    CellTally& cell(int k, int a_idx, int b_idx) {
        return cells[(k * kAlicePhases + a_idx) * kBobPhases + b_idx];
    }
    const CellTally& cell(int k, int a_idx, int b_idx) const {
        return cells[(k * kAlicePhases + a_idx) * kBobPhases + b_idx];
    }

    void merge(const PulseBatchRecord& o) {
        for (std::size_t i = 0; i < cells.size(); ++i) cells[i].merge(o.cells[i]);
        n_pulses += o.n_pulses;
    }

    std::uint64_t detections(Intensity k) const;
    std::uint64_t sent(Intensity k) const;
};

// Interference intensities at both detectors for every (phi_a, phi_b) cell,
// computed through the full receiver chain with the channel's current
// polarization and phase offset. `correction` is subtracted from Bob's phase
// (the tracker output).
std::array<DetectionProbabilities, kPhaseCells> smzi_cell_intensities(
    const ChannelState& state, double correction = 0.0);

// Per-pulse click probabilities at both detectors given the interference
// split (i1, i2), folding in misalignment, dark counts and after-pulses.
struct DetectorModel {
    double eta = 0.0;
    double e_mis = 0.0;
    double p_dark_det = 0.0;  // per detector
    double p_ap_det = 0.0;    // per detector, Q_t * P_ap / 2
};

DetectorModel make_detector_model(const SystemParams& params,
                                  double channel_loss_db);

void click_probabilities(const DetectorModel& det, double intensity_k,
                         double i1, double i2, double& p1, double& p2);

// Simulates n_pulses through the disturbed channel and the SMZI receiver.
// The channel advances once per 10^4 pulses; detection draws are seeded by
// `seed` and the run is bit-reproducible. Fixed-size sub-blocks make the
// result independent of how the work is scheduled.
PulseBatchRecord simulate_block(const SystemParams& params,
                                const ChannelParams& channel,
                                std::uint64_t n_pulses, std::uint64_t seed);

// Same engine, additionally collecting Alice/Bob sifted signal-pulse bits
// (for end-to-end post-processing runs).
struct SiftedKeys {
    BitVec alice;
    BitVec bob;
    PulseBatchRecord record;
};

SiftedKeys simulate_sifted_keys(const SystemParams& params,
                                const ChannelParams& channel,
                                std::uint64_t n_pulses, std::uint64_t seed);

// Basis sifting: keeps matched-basis detections, per intensity. Double clicks
// were resolved to a random bit when recorded, so the error tallies are exact
// counts. Security knobs of the result are default-initialized.
BlockStats sift(const PulseBatchRecord& record);

// ---------------------------------------------------------------------------
// Phase tracking
// ---------------------------------------------------------------------------

// Closed-loop estimator fed by mismatched-basis detections only. The caller
// folds the two mismatched-phase groups so that c_plus counts clicks whose
// probability grows with the residual drift and c_minus the complement.
struct PhaseTracker {
    double estimated_offset = 0.0;  // wrapped to (-pi, pi]
    std::uint64_t window = 2000;    // mismatched detections per update
    double gain = 0.5;
};

struct TrackerUpdate {
    PhaseTracker tracker;
    bool updated = false;
    double delta = 0.0;  // drift estimate of this update, radians
};

TrackerUpdate phase_track_update(const PhaseTracker& tracker,
                                 std::uint64_t c_plus, std::uint64_t c_minus);

// Sign group of a mismatched-basis cell: +1 where the ideal phase difference
// is +pi/2 (SPD1 rate rises with positive residual drift), -1 where it is
// -pi/2, 0 for matched cells.
int mismatch_sign(int a_idx, int b_idx);

}  // namespace qkdsim
