#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdsim/channel.hpp"
#include "qkdsim/protocol.hpp"
#include "qkdsim/stats.hpp"

namespace qkdsim {

// Raised for malformed or inconsistent configuration input; the CLI maps it
// to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VisibilityOptions {
    int rounds = 120;
    double pulses_per_point = 1e7;  // signal pulses counted per voltage point
    double voltage_start = -5.0;
    double voltage_end = 5.0;
    double voltage_step = 0.05;
};

struct LossSweepAnchor {
    double loss_db = 10.0;
    double sifted_bps = 21969.0;
    double qber = 0.00899;
};

struct LossSweepOptions {
    std::vector<double> losses{10.0, 12.6, 15.0, 20.0, 25.0};
    double grid_start = 8.0;
    double grid_stop = 32.0;
    double grid_step = 0.5;
    bool calibrate = true;      // fit e_mis and duty factor at the anchor row
    LossSweepAnchor anchor;
    double mc_pulses = 0.0;     // per-loss Monte Carlo check when > 0
};

struct LongRunOptions {
    double duration_s = 864000.0;  // displayed wall-clock span
    double compression = 1000.0;   // displayed seconds per simulated second
    double dt_s = 0.01;            // engine step
    double bin_s = 10800.0;        // displayed averaging window
    bool tracking = true;
};

struct PostprocessOptions {
    double loss_db = 10.0;
    double n_pulses = 2e8;
    bool run_toeplitz = true;
};

struct ScenarioConfig {
    std::string scenario;  // visibility-scan | long-run | loss-sweep | postprocess-demo
    std::uint64_t seed = 42;
    std::string out_dir = "out";

    SystemParams system;
    ChannelParams channel;
    SecurityParams security;

    VisibilityOptions visibility;
    LossSweepOptions loss_sweep;
    LongRunOptions long_run;
    PostprocessOptions postprocess;

    void validate() const;
};

// Defaults for a scenario name ("" keeps global defaults). The visibility scan
// defaults to e_mis = 0: the scan measures raw interferometer contrast, whose
// floor is set by dark counts and after-pulses, while the QKD scenarios keep
// the Table-row-calibrated misalignment.
ScenarioConfig default_config(const std::string& scenario);

// Parses a JSON config on top of the scenario defaults. Unknown keys are
// rejected.
ScenarioConfig load_config(const std::string& json_text,
                           const std::string& scenario);

ScenarioConfig load_config_file(const std::string& path,
                                const std::string& scenario);

// Fully resolved config as JSON (embedded in every report).
std::string config_to_json(const ScenarioConfig& config);

}  // namespace qkdsim
