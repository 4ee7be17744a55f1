#pragma once

#include <cstdint>

#include "qkdsim/jones.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

// Deployed-fiber model: fixed attenuation, a continuously scrambled
// polarization unitary and a slowly drifting interferometric phase offset.
struct ChannelParams {
    double loss_db = 12.6;           // channel loss L_C
    double scramble_rate = 2.0;      // rad/s expected SU(2) rotation speed scale
    double phase_drift_sigma = 0.05; // rad/sqrt(s) Wiener drift
    std::uint64_t seed = 1;

    void validate() const;
};

struct ChannelState {
    JonesMatrix unitary = JonesMatrix::identity();
    double phase_offset = 0.0;  // wrapped to (-pi, pi]
    double time_s = 0.0;
    std::uint64_t steps = 0;
    Rng rng;

    explicit ChannelState(std::uint64_t seed) : rng(seed) {}
};

ChannelState make_channel_state(const ChannelParams& params);

// One stochastic step of length dt: left-multiplies the unitary by a random
// SU(2) rotation with half-normal angle |N(0, (scramble_rate*dt)^2)| about a
// uniformly random axis, and adds N(0, phase_drift_sigma^2*dt) to the phase
// offset. Re-orthonormalizes every 10^4 steps to pin down unitarity.
void advance(ChannelState& state, const ChannelParams& params, double dt);

// unitary * e_in; norm preserved.
JonesVector apply_polarization(const ChannelState& state, const JonesVector& e_in);

// 10^(-loss_db/10).
double transmittance(const ChannelParams& params);

}  // namespace qkdsim
