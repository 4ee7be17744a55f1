#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qkdsim/protocol.hpp"

using namespace qkdsim;

namespace {

SystemParams default_system() { return SystemParams{}; }

}  // namespace

TEST_CASE("overall efficiency") {
    SystemParams sys = default_system();
    SUBCASE("lossless unit detector") {
        sys.receiver_loss_db = 0.0;
        sys.eta_d = 1.0;
        CHECK(overall_efficiency(sys, 0.0) == doctest::Approx(1.0));
    }
    SUBCASE("operating points") {
        CHECK(overall_efficiency(sys, 10.0) ==
              doctest::Approx(2.540973e-3).epsilon(1e-6));
        CHECK(overall_efficiency(sys, 12.6) ==
              doctest::Approx(1.396368e-3).epsilon(1e-6));
    }
}

TEST_CASE("gain without after-pulses") {
    CHECK(gain_no_afterpulse(0.0, 0.5, 3.5e-6) == doctest::Approx(3.5e-6));
    CHECK(gain_no_afterpulse(0.6, 1.396368e-3, 3.5e-6) ==
          doctest::Approx(8.4097e-4).epsilon(1e-4));
    CHECK(gain_no_afterpulse(1e9, 1.0, 0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(gain_no_afterpulse(-0.1, 0.5, 0.0), std::invalid_argument);
}

TEST_CASE("rate model reproduces the error-rate table") {
    SystemParams sys = default_system();
    sys.e_mis = calibrate_misalignment(sys, 10.0, 0.00899);
    CHECK(sys.e_mis == doctest::Approx(0.005606).epsilon(2e-3));

    SUBCASE("vacuum error rate is dark-count dominated") {
        const RateModel rm = rate_model(sys, 12.6);
        CHECK(rm.e[idx(Intensity::vacuum)] == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("12.6 dB row") {
        const RateModel rm = rate_model(sys, 12.6);
        CHECK(rm.e[idx(Intensity::signal)] ==
              doctest::Approx(0.00991).epsilon(0.01));
        CHECK(std::abs(rm.e[idx(Intensity::signal)] - 0.00958) < 1e-3);
    }
    SUBCASE("25 dB row") {
        const RateModel rm = rate_model(sys, 25.0);
        CHECK(rm.e[idx(Intensity::signal)] ==
              doctest::Approx(0.0413).epsilon(0.01));
        CHECK(std::abs(rm.e[idx(Intensity::signal)] - 0.04205) < 3e-3);
    }
    SUBCASE("gain is monotone in intensity") {
        for (const double loss : {5.0, 10.0, 15.0, 20.0, 25.0, 30.0}) {
            const RateModel rm = rate_model(sys, loss);
            CHECK(rm.q[0] > rm.q[1]);
            CHECK(rm.q[1] > rm.q[2]);
        }
    }
    SUBCASE("signal error rate grows with loss") {
        double prev = 0.0;
        for (const double loss : {10.0, 12.6, 15.0, 20.0, 25.0, 30.0}) {
            const RateModel rm = rate_model(sys, loss);
            CHECK(rm.e[idx(Intensity::signal)] > prev);
            prev = rm.e[idx(Intensity::signal)];
        }
    }
}

TEST_CASE("rate model invariants over random parameters") {
    Rng rng(404);
    for (int trial = 0; trial < 300; ++trial) {
        SystemParams sys;
        sys.intensities[0] = rng.uniform(0.2, 1.0);
        sys.intensities[1] = rng.uniform(0.01, 0.9) * sys.intensities[0];
        sys.intensities[2] = 0.0;
        const double a = rng.uniform(0.5, 0.97);
        const double b = rng.uniform(0.2, 0.9) * (1.0 - a);
        sys.probabilities = {a, b, 1.0 - a - b};
        sys.eta_d = rng.uniform(0.01, 1.0);
        sys.p_dc = rng.uniform(0.0, 1e-3);
        sys.p_ap = rng.uniform(0.0, 0.05);
        sys.e_mis = rng.uniform(0.0, 0.1);
        sys.validate();

        const double loss = rng.uniform(0.0, 40.0);
        const RateModel rm = rate_model(sys, loss);

        double q_t = 0.0;
        for (int k = 0; k < kIntensityCount; ++k) {
            CHECK(rm.q0[k] >= 0.0);
            CHECK(rm.q0[k] <= rm.q[k]);
            CHECK(rm.q[k] <= 1.0);
            CHECK(rm.e[k] >= 0.0);
            CHECK(rm.e[k] <= 1.0);
            q_t += sys.probabilities[k] * rm.q0[k];
        }
        CHECK(rm.q_t == doctest::Approx(q_t).epsilon(1e-12));
    }
}

TEST_CASE("duty factor calibration") {
    SystemParams sys = default_system();
    const double kappa = calibrate_duty_factor(sys, 10.0, 21969.0);
    CHECK(kappa == doctest::Approx(0.7902).epsilon(2e-3));
    sys.duty_factor = kappa;
    CHECK(sifted_rate_bps(sys, 10.0) == doctest::Approx(21969.0).epsilon(1e-9));
}

TEST_CASE("system parameter validation") {
    SystemParams sys = default_system();
    sys.probabilities = {0.5, 0.25, 0.2};
    CHECK_THROWS_AS(sys.validate(), std::invalid_argument);

    sys = default_system();
    sys.intensities = {0.1, 0.6, 0.0};
    CHECK_THROWS_AS(sys.validate(), std::invalid_argument);

    sys = default_system();
    sys.intensities = {0.6, 0.1, 0.05};
    CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
}

TEST_CASE("simulate_block rejects an empty pulse budget") {
    CHECK_THROWS_AS(simulate_block(SystemParams{}, ChannelParams{}, 0, 1),
                    std::invalid_argument);
}

TEST_CASE("simulate_block determinism") {
    SystemParams sys = default_system();
    ChannelParams ch;
    ch.seed = 3;
    const PulseBatchRecord a = simulate_block(sys, ch, 200000, 42);
    const PulseBatchRecord b = simulate_block(sys, ch, 200000, 42);
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        CHECK(a.cells[i].sent == b.cells[i].sent);
        CHECK(a.cells[i].spd1 == b.cells[i].spd1);
        CHECK(a.cells[i].spd2 == b.cells[i].spd2);
        CHECK(a.cells[i].dbl == b.cells[i].dbl);
        CHECK(a.cells[i].err == b.cells[i].err);
        // Tally sanity per cell.
        CHECK(a.cells[i].spd1 <= a.cells[i].sent);
        CHECK(a.cells[i].spd2 <= a.cells[i].sent);
        CHECK(a.cells[i].dbl <= std::min(a.cells[i].spd1, a.cells[i].spd2));
        CHECK(a.cells[i].err <= a.cells[i].spd1 + a.cells[i].spd2);
    }
    const PulseBatchRecord c = simulate_block(sys, ch, 200000, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.cells.size(); ++i)
        any_diff |= a.cells[i].spd1 != c.cells[i].spd1;
    CHECK(any_diff);

    SUBCASE("holds across the sub-block scheduling boundary") {
        const std::uint64_t n = 9000000;  // spans three scheduling grains
        ChannelParams ch2;
        ch2.seed = 59;
        const PulseBatchRecord x = simulate_block(sys, ch2, n, 61);
        const PulseBatchRecord y = simulate_block(sys, ch2, n, 61);
        for (std::size_t i = 0; i < x.cells.size(); ++i) {
            CHECK(x.cells[i].spd1 == y.cells[i].spd1);
            CHECK(x.cells[i].err == y.cells[i].err);
        }
        std::uint64_t total = 0;
        for (const auto& cell : x.cells) total += cell.sent;
        CHECK(total == n);
    }
}

TEST_CASE("null fringe: matched-basis wrong-detector clicks are noise only") {
    SystemParams sys = default_system();
    sys.e_mis = 0.0;
    ChannelParams ch;
    ch.loss_db = 0.0;
    ch.phase_drift_sigma = 0.0;
    ch.seed = 5;

    const std::uint64_t n = 10000000;
    const PulseBatchRecord rec = simulate_block(sys, ch, n, 7);
    const DetectorModel det = make_detector_model(sys, ch.loss_db);
    const double p_noise = 1.0 - (1.0 - det.p_dark_det) * (1.0 - det.p_ap_det);

    // Alice bit 0 in matched bases: the ideal fringe puts nothing on SPD1.
    for (const int a_idx : {0, 1}) {
        const CellTally& cell =
            rec.cell(idx(Intensity::signal), a_idx, alice_basis(a_idx));
        const double expected = static_cast<double>(cell.sent) * p_noise;
        const double sigma = std::sqrt(expected);
        CHECK(std::abs(static_cast<double>(cell.spd1) - expected) <
              3.0 * sigma + 1.0);
    }
}

TEST_CASE("MC gains and error rates match the analytic model at 12.6 dB") {
    SystemParams sys = default_system();
    ChannelParams ch;
    ch.seed = 11;
    ch.phase_drift_sigma = 0.0;  // the reference model carries no drift term
    const std::uint64_t n = 10000000;
    const PulseBatchRecord rec = simulate_block(sys, ch, n, 13);
    const RateModel rm = rate_model(sys, 12.6);
    const BlockStats stats = sift(rec);

    for (int k = 0; k < kIntensityCount; ++k) {
        const auto kk = static_cast<Intensity>(k);
        const double sent = static_cast<double>(rec.sent(kk));
        const double q_mc = static_cast<double>(rec.detections(kk)) / sent;
        const double sigma_q = std::sqrt(rm.q[k] * (1.0 - rm.q[k]) / sent);
        CHECK(std::abs(q_mc - rm.q[k]) < 3.0 * sigma_q);

        const double e_mc = stats.m[k] / stats.n[k];
        const double sigma_e =
            std::sqrt(rm.e[k] * (1.0 - rm.e[k]) / stats.n[k]);
        CHECK(std::abs(e_mc - rm.e[k]) < 3.0 * sigma_e);
    }
}

TEST_CASE("sift keeps matched bases only") {
    PulseBatchRecord rec;
    // Mismatched-basis detections only.
    rec.cell(0, 0, 1) = {1000, 400, 400, 0, 0};
    rec.cell(0, 1, 0) = {1000, 350, 450, 0, 0};
    BlockStats stats = sift(rec);
    CHECK(stats.n[0] == 0.0);
    CHECK(stats.m[0] == 0.0);
    CHECK(stats.sent[0] == 2000.0);

    // A matched cell with clean clicks on the right detector.
    rec.cell(0, 0, 0) = {1000, 0, 80, 0, 0};
    stats = sift(rec);
    CHECK(stats.n[0] == 80.0);
    CHECK(stats.m[0] == 0.0);

    // Double clicks count once.
    rec.cell(0, 2, 0) = {1000, 90, 12, 10, 6};
    stats = sift(rec);
    CHECK(stats.n[0] == doctest::Approx(80.0 + 92.0));
    CHECK(stats.m[0] == 6.0);
}

TEST_CASE("MC error ratio matches the model through sift") {
    SystemParams sys = default_system();
    ChannelParams ch;
    ch.seed = 21;
    ch.phase_drift_sigma = 0.0;
    const PulseBatchRecord rec = simulate_block(sys, ch, 20000000, 23);
    const BlockStats stats = sift(rec);
    const RateModel rm = rate_model(sys, 12.6);
    const int s = idx(Intensity::signal);
    const double e_mc = stats.m[s] / stats.n[s];
    const double sigma = std::sqrt(rm.e[s] * (1.0 - rm.e[s]) / stats.n[s]);
    CHECK(std::abs(e_mc - rm.e[s]) < 3.0 * sigma);
}

TEST_CASE("phase tracker updates") {
    PhaseTracker tracker;
    tracker.gain = 1.0;

    SUBCASE("balanced counts leave the estimate unchanged") {
        const TrackerUpdate upd = phase_track_update(tracker, 500, 500);
        CHECK(upd.updated);
        CHECK(upd.delta == doctest::Approx(0.0));
        CHECK(upd.tracker.estimated_offset == doctest::Approx(0.0));
    }

    SUBCASE("zero counts: no update, flagged") {
        const TrackerUpdate upd = phase_track_update(tracker, 0, 0);
        CHECK_FALSE(upd.updated);
        CHECK(upd.tracker.estimated_offset == tracker.estimated_offset);
    }

    SUBCASE("counts consistent with +0.1 rad drift") {
        // Mismatched bases split (1 +- sin(drift))/2.
        const double drift = 0.1;
        const std::uint64_t total = 1000000;
        const auto c_plus = static_cast<std::uint64_t>(
            std::llround(0.5 * (1.0 + std::sin(drift)) * total));
        const TrackerUpdate upd =
            phase_track_update(tracker, c_plus, total - c_plus);
        CHECK(upd.updated);
        CHECK(std::abs(upd.delta - drift) < 3.0 / std::sqrt(double(total)));
        CHECK(upd.tracker.estimated_offset == doctest::Approx(upd.delta));
    }

    SUBCASE("estimate ratio is clamped by construction") {
        const TrackerUpdate upd = phase_track_update(tracker, 1000, 0);
        CHECK(upd.delta == doctest::Approx(std::asin(1.0)));
    }
}

TEST_CASE("mismatch sign groups") {
    // Matched cells carry no sign.
    CHECK(mismatch_sign(0, 0) == 0);
    CHECK(mismatch_sign(1, 1) == 0);
    CHECK(mismatch_sign(2, 0) == 0);
    CHECK(mismatch_sign(3, 1) == 0);
    // +pi/2 group.
    CHECK(mismatch_sign(1, 0) == 1);
    CHECK(mismatch_sign(2, 1) == 1);
    // -pi/2 group.
    CHECK(mismatch_sign(0, 1) == -1);
    CHECK(mismatch_sign(3, 0) == -1);
}

TEST_CASE("scrambler on/off leaves the signal error rate inside its band") {
    SystemParams sys = default_system();
    ChannelParams on;
    on.seed = 31;
    ChannelParams off = on;
    off.scramble_rate = 0.0;

    const std::uint64_t n = 10000000;
    const BlockStats a = sift(simulate_block(sys, on, n, 33));
    const BlockStats b = sift(simulate_block(sys, off, n, 33));
    const int s = idx(Intensity::signal);
    const double ea = a.m[s] / a.n[s];
    const double eb = b.m[s] / b.n[s];
    const RateModel rm = rate_model(sys, 12.6);
    const double sigma = std::sqrt(rm.e[s] * (1.0 - rm.e[s]) / a.n[s]);
    CHECK(std::abs(ea - eb) < 3.0 * sigma);
}

TEST_CASE("sifted key collection matches the record tallies") {
    SystemParams sys = default_system();
    ChannelParams ch;
    ch.loss_db = 3.0;
    ch.seed = 41;
    const SiftedKeys keys = simulate_sifted_keys(sys, ch, 2000000, 43);
    const BlockStats stats = sift(keys.record);
    CHECK(static_cast<double>(keys.alice.size()) ==
          stats.n[idx(Intensity::signal)]);
    CHECK(keys.alice.size() == keys.bob.size());
    const double qber =
        static_cast<double>(keys.alice.hamming_distance(keys.bob)) /
        static_cast<double>(keys.alice.size());
    CHECK(qber == doctest::Approx(stats.m[idx(Intensity::signal)] /
                                  stats.n[idx(Intensity::signal)]));
}
