#include "qkdsim/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qkdsim {

namespace {

constexpr std::uint64_t kRenormInterval = 10000;

// Gram-Schmidt on the two columns; cheap enough to run periodically.
void reorthonormalize(JonesMatrix& u) {
    const double n0 = std::sqrt(std::norm(u.m00) + std::norm(u.m10));
    u.m00 /= n0;
    u.m10 /= n0;
    const Complex overlap = std::conj(u.m00) * u.m01 + std::conj(u.m10) * u.m11;
    u.m01 -= overlap * u.m00;
    u.m11 -= overlap * u.m10;
    const double n1 = std::sqrt(std::norm(u.m01) + std::norm(u.m11));
    u.m01 /= n1;
    u.m11 /= n1;
}

}  // namespace

void ChannelParams::validate() const {
    if (loss_db < 0.0) throw std::invalid_argument("channel: loss_db must be >= 0");
    if (scramble_rate < 0.0)
        throw std::invalid_argument("channel: scramble_rate must be >= 0");
    if (phase_drift_sigma < 0.0)
        throw std::invalid_argument("channel: phase_drift_sigma must be >= 0");
}

ChannelState make_channel_state(const ChannelParams& params) {
    params.validate();
    return ChannelState(params.seed);
}

void advance(ChannelState& state, const ChannelParams& params, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("channel: dt must be positive");

    // Uniform axis on the sphere.
    const double z = 1.0 - 2.0 * state.rng.uniform();
    const double az = 2.0 * std::numbers::pi * state.rng.uniform();
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double nx = s * std::cos(az);
    const double ny = s * std::sin(az);

    const double delta = std::abs(state.rng.normal(0.0, params.scramble_rate * dt));

    // exp(-i (delta/2) n.sigma) = cos(delta/2) I - i sin(delta/2) n.sigma
    const double c = std::cos(0.5 * delta);
    const double sn = std::sin(0.5 * delta);
    const JonesMatrix step{Complex{c, -sn * z}, Complex{-sn * ny, -sn * nx},
                           Complex{sn * ny, -sn * nx}, Complex{c, sn * z}};

    state.unitary = step * state.unitary;

    state.phase_offset = wrap_angle(
        state.phase_offset +
        state.rng.normal(0.0, params.phase_drift_sigma * std::sqrt(dt)));

    state.time_s += dt;
    if (++state.steps % kRenormInterval == 0) reorthonormalize(state.unitary);
}

JonesVector apply_polarization(const ChannelState& state, const JonesVector& e_in) {
    return state.unitary * e_in;
}

double transmittance(const ChannelParams& params) {
    return std::pow(10.0, -0.1 * params.loss_db);
}

}  // namespace qkdsim
