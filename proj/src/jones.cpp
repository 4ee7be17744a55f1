#include "qkdsim/jones.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qkdsim {

namespace {

constexpr double kUnitNormTol = 1e-9;

const Complex kI{0.0, 1.0};

}  // namespace

JonesVector polarization_state(double theta, double beta) {
    return {Complex{std::cos(theta), 0.0},
            std::exp(kI * beta) * std::sin(theta)};
}

double wrap_angle(double phi) {
    const double two_pi = 2.0 * std::numbers::pi;
    phi = std::fmod(phi, two_pi);
    if (phi > std::numbers::pi) phi -= two_pi;
    if (phi <= -std::numbers::pi) phi += two_pi;
    return phi;
}

PhaseSettings PhaseSettings::from_voltage(double phi_a, double voltage,
                                          double v_pi) {
    PhaseSettings p;
    p.phi_a = phi_a;
    p.v_pi = v_pi;
    p.voltage = voltage;
    p.phi_b = wrap_angle(std::numbers::pi * voltage / v_pi);
    return p;
}

JonesMatrix rotation_matrix() { return {0.0, -1.0, 1.0, 0.0}; }

JonesMatrix element_matrix(ElementKind kind, int /*index*/, int in_port,
                           int out_port) {
    const bool through = (in_port == 1 && out_port == 2) ||
                         (in_port == 2 && out_port == 1);
    const bool cross = (in_port == 1 && out_port == 3) ||
                       (in_port == 3 && out_port == 1);
    if (!through && !cross)
        throw std::invalid_argument("element_matrix: invalid port pair");

    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    switch (kind) {
        case ElementKind::BS: {
            const Complex f = through ? Complex{inv_sqrt2, 0.0}
                                      : kI * inv_sqrt2;
            return JonesMatrix::identity() * f;
        }
        case ElementKind::PBS:
            // Port 2 transmits horizontal, port 3 reflects vertical.
            return through ? JonesMatrix{1.0, 0.0, 0.0, 0.0}
                           : JonesMatrix{0.0, 0.0, 0.0, 1.0};
    }
    throw std::invalid_argument("element_matrix: invalid element kind");
}

std::pair<JonesMatrix, JonesMatrix> smzi_path_transforms(double phi_b) {
    const JonesMatrix R = rotation_matrix();
    const JonesMatrix pm = JonesMatrix::identity() * std::exp(kI * phi_b);

    const auto B = [](int n, int j, int k) {
        return element_matrix(ElementKind::BS, n, j, k);
    };
    const auto P = [](int n, int j, int k) {
        return element_matrix(ElementKind::PBS, n, j, k);
    };

    // Long arm: CW leg enters PBS1 port 1->2, crosses BS1 into the long arm,
    // passes PMb, crosses BS2, the port-3 splice, and exits PBS1 3->1. The CCW
    // leg traverses the mirror-image chain.
    const JonesMatrix t_long =
        P(1, 3, 1) * R * B(2, 3, 1) * pm * B(1, 1, 3) * P(1, 1, 2) +
        P(1, 2, 1) * B(1, 3, 1) * pm * B(2, 1, 3) * R * P(1, 1, 3);

    const JonesMatrix t_short =
        P(1, 3, 1) * R * B(2, 2, 1) * B(1, 1, 2) * P(1, 1, 2) +
        P(1, 2, 1) * B(1, 2, 1) * B(2, 1, 2) * R * P(1, 1, 3);

    return {t_long, t_short};
}

std::pair<JonesMatrix, JonesMatrix> smzi_path_transforms_pbs2(double phi_b) {
    const JonesMatrix R = rotation_matrix();
    const JonesMatrix pm = JonesMatrix::identity() * std::exp(kI * phi_b);

    const auto B = [](int n, int j, int k) {
        return element_matrix(ElementKind::BS, n, j, k);
    };
    const auto P = [](int n, int j, int k) {
        return element_matrix(ElementKind::PBS, n, j, k);
    };

    // Toward PBS2 each pulse leaves the AMZI through the complementary
    // beam-splitter port: cross (factor i/sqrt2) where the PBS1 exit was
    // through, and vice versa. The CW leg carries the port-3 splice of PBS2.
    const JonesMatrix t_long =
        P(2, 3, 1) * R * B(2, 1, 2) * pm * B(1, 1, 3) * P(1, 1, 2) +
        P(2, 2, 1) * B(1, 1, 2) * pm * B(2, 1, 3) * R * P(1, 1, 3);

    const JonesMatrix t_short =
        P(2, 3, 1) * R * B(2, 1, 3) * B(1, 1, 2) * P(1, 1, 2) +
        P(2, 2, 1) * B(1, 1, 3) * B(2, 1, 2) * R * P(1, 1, 3);

    return {t_long, t_short};
}

SmziOutputs smzi_outputs(const JonesVector& e_in, const PhaseSettings& phases) {
    if (std::abs(e_in.norm_sq() - 1.0) > kUnitNormTol)
        throw std::invalid_argument("smzi_outputs: input state must be unit norm");

    const Complex early = std::exp(kI * phases.phi_a);

    const auto [tl1, ts1] = smzi_path_transforms(phases.phi_b);
    const auto [tl2, ts2] = smzi_path_transforms_pbs2(phases.phi_b);

    SmziOutputs out;
    out.out1 = (tl1 + ts1 * early) * e_in;
    out.out2 = (tl2 + ts2 * early) * e_in;
    return out;
}

DetectionProbabilities detection_probabilities(const PhaseSettings& phases) {
    const double c = std::cos(phases.phi_a - phases.phi_b);
    return {0.5 * (1.0 - c), 0.5 * (1.0 + c)};
}

double visibility(std::span<const double> counts) {
    if (counts.size() < 2)
        throw std::invalid_argument("visibility: need at least two samples");
    double lo = counts[0], hi = counts[0];
    for (double c : counts) {
        if (c < 0.0)
            throw std::invalid_argument("visibility: counts must be non-negative");
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    if (hi + lo <= 0.0)
        throw std::domain_error("visibility: undefined for all-zero counts");
    return (hi - lo) / (hi + lo);
}

}  // namespace qkdsim
