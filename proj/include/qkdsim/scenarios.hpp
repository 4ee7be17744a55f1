#pragma once

#include <string>
#include <vector>

#include "qkdsim/config.hpp"
#include "qkdsim/postproc.hpp"

namespace qkdsim {

struct RunReport {
    std::vector<std::string> files_written;  // relative to out_dir
    std::string summary_json;                // contents of summary.json
};

// Voltage-scan fringe measurement: per-round visibility plus histogram.
RunReport run_visibility_scan(const ScenarioConfig& config);

// Analytic (and optionally Monte Carlo checked) rate table and curve over
// channel losses.
RunReport run_loss_sweep(const ScenarioConfig& config);

// Continuous operation with scrambling, phase drift and the tracking loop;
// emits binned QBER/gain/SKR time series.
RunReport run_long_run(const ScenarioConfig& config);

// End-to-end block: pulse simulation, sifting, cascade reconciliation and
// Toeplitz compression, with measured vs. modeled leakage.
RunReport run_postprocess_demo(const ScenarioConfig& config);

// Dispatch by config.scenario.
RunReport run_scenario(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Long-run engine, exposed for the closed-loop tracking tests.
// ---------------------------------------------------------------------------

struct StreamBin {
    double t_start_s = 0.0;  // displayed time
    double duration_s = 0.0;
    std::array<double, kIntensityCount> sent{};
    std::array<double, kIntensityCount> det{};   // all detections
    std::array<double, kIntensityCount> n{};     // matched-basis detections
    std::array<double, kIntensityCount> m{};     // matched-basis errors

    double qber(Intensity k) const {
        return n[idx(k)] > 0.0 ? m[idx(k)] / n[idx(k)] : 0.0;
    }
    double gain(Intensity k) const {
        return sent[idx(k)] > 0.0 ? det[idx(k)] / sent[idx(k)] : 0.0;
    }
};

struct StreamResult {
    std::vector<StreamBin> bins;
    double tracker_final_offset = 0.0;
};

// Aggregate-rate engine: one channel step per dt seconds, per-cell Poisson
// detection counts at the full repetition rate, mismatched-basis tracker
// updates in the loop. engine_duration_s seconds of dynamics are split into
// bins of engine_bin_s.
StreamResult simulate_stream(const SystemParams& params,
                             const ChannelParams& channel,
                             double engine_duration_s, double engine_bin_s,
                             double dt_s, bool tracking, std::uint64_t seed,
                             double display_scale = 1.0);

}  // namespace qkdsim
