#pragma once

#include <complex>
#include <span>
#include <utility>

namespace qkdsim {

using Complex = std::complex<double>;

// Polarization state (h, v) of a fully polarized field. Interferometer inputs
// are unit-norm; SMZI outputs are unnormalized amplitudes whose squared norm is
// the detection probability.
struct JonesVector {
    Complex h{};
    Complex v{};

    double norm_sq() const { return std::norm(h) + std::norm(v); }
};

// Input state parametrized by the angle to horizontal and the H/V phase delay:
// (cos theta, e^{i beta} sin theta).
JonesVector polarization_state(double theta, double beta);

struct JonesMatrix {
    Complex m00{}, m01{}, m10{}, m11{};

    static JonesMatrix identity() { return {1.0, 0.0, 0.0, 1.0}; }

    JonesMatrix operator*(const JonesMatrix& r) const {
        return {m00 * r.m00 + m01 * r.m10, m00 * r.m01 + m01 * r.m11,
                m10 * r.m00 + m11 * r.m10, m10 * r.m01 + m11 * r.m11};
    }

    JonesVector operator*(const JonesVector& x) const {
        return {m00 * x.h + m01 * x.v, m10 * x.h + m11 * x.v};
    }

    JonesMatrix operator+(const JonesMatrix& r) const {
        return {m00 + r.m00, m01 + r.m01, m10 + r.m10, m11 + r.m11};
    }

    JonesMatrix operator*(Complex s) const {
        return {s * m00, s * m01, s * m10, s * m11};
    }

    JonesMatrix adjoint() const {
        return {std::conj(m00), std::conj(m10), std::conj(m01), std::conj(m11)};
    }

    double max_abs_diff(const JonesMatrix& r) const {
        double d = std::abs(m00 - r.m00);
        d = std::max(d, std::abs(m01 - r.m01));
        d = std::max(d, std::abs(m10 - r.m10));
        return std::max(d, std::abs(m11 - r.m11));
    }
};

// Phase modulator settings of the two interferometers. phi_b may be derived
// from a driving voltage via the half-wave voltage v_pi.
struct PhaseSettings {
    double phi_a = 0.0;   // Alice's PM, radians
    double phi_b = 0.0;   // Bob's PM, radians
    double v_pi = 2.5;    // half-wave voltage of Bob's PM, volts
    double voltage = 0.0; // applied drive, volts

    static PhaseSettings from_voltage(double phi_a, double voltage,
                                      double v_pi = 2.5);
};

// Wrap an angle to (-pi, pi].
double wrap_angle(double phi);

// 90-degree splice on the PBS port-3 fiber; identical for both propagation
// directions.
JonesMatrix rotation_matrix();

enum class ElementKind { BS, PBS };

// Jones matrix of the n-th beam splitter / polarizing beam splitter for the
// given in/out port pair. Valid pairs: (1,2), (2,1), (1,3), (3,1).
JonesMatrix element_matrix(ElementKind kind, int index, int in_port, int out_port);

// Long-arm and short-arm transfer matrices of the SMZI seen from the PBS1
// output, assembled as the CW + CCW sum of element-matrix chains.
std::pair<JonesMatrix, JonesMatrix> smzi_path_transforms(double phi_b);

// Same decomposition for the PBS2 output (complementary beam-splitter ports).
std::pair<JonesMatrix, JonesMatrix> smzi_path_transforms_pbs2(double phi_b);

struct SmziOutputs {
    JonesVector out1;  // amplitude toward SPD1 (via PBS1 and the circulator)
    JonesVector out2;  // amplitude toward SPD2 (via PBS2)
};

// Interfered output amplitudes for a unit-norm input state. Throws
// std::invalid_argument if the input is not normalized.
SmziOutputs smzi_outputs(const JonesVector& e_in, const PhaseSettings& phases);

struct DetectionProbabilities {
    double i_out1 = 0.0;
    double i_out2 = 0.0;
};

// Ideal interference outcome: i_out1 = (1 - cos(phi_a - phi_b))/2 and the
// complement. Independent of input polarization.
DetectionProbabilities detection_probabilities(const PhaseSettings& phases);

// Fringe visibility (C_max - C_min) / (C_max + C_min). Throws
// std::invalid_argument for fewer than two samples or negative counts and
// std::domain_error when every count is zero.
double visibility(std::span<const double> counts);

}  // namespace qkdsim
