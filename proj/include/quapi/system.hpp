#pragma once

#include <vector>

#include "quapi/bath.hpp"
#include "quapi/common.hpp"

namespace quapi {

/// System part of the problem in the DVR basis of the bath coupling operator.
struct SystemModel {
    int M = 0;
    std::vector<double> q;  // coupling-operator eigenvalues, one per DVR state
    CMatrix H;              // bare system Hamiltonian
    CMatrix H_a;            // renormalized Hamiltonian
    CMatrix U_fwd;          // exp(-i H_a dt)
    CMatrix U_bwd;          // exp(+i H_a dt)
    double dt = 0.0;
};

/// H - (lambda/pi) diag(q^2).
CMatrix build_renormalized_hamiltonian(const CMatrix& H, const std::vector<double>& q,
                                       const SpectralDensity& sd);

struct Propagators {
    CMatrix fwd;
    CMatrix bwd;
};

/// exp(-i H dt) and its adjoint via a Hermitian eigendecomposition.
Propagators short_time_propagators(const CMatrix& H_a, double dt);

/// Assembles a SystemModel from an explicit Hamiltonian.
SystemModel make_system(const CMatrix& H, std::vector<double> q, const SpectralDensity& sd,
                        double dt);

// ---------------------------------------------------------------------------
// Two-level system dressed by one explicit vibrational mode

struct RCModelSpec {
    double delta = 1.0;  // tunnelling splitting
    double omega = 1.0;  // primary mode frequency
    double g = 0.0;      // TLS-mode coupling
    int n_vib = 2;       // oscillator truncation
    double bias = 0.0;
};

/// The extended model rotated into the eigenbasis of I (x) (B + B^dagger).
/// Basis index = tls * n_vib + k where k labels the X eigenvalue, ascending.
struct RCModel {
    CMatrix H;               // extended Hamiltonian in the DVR basis
    std::vector<double> q;   // X eigenvalues, length 2 n_vib
    CMatrix vib_rotation;    // columns: X eigenvectors in the Fock basis
};

/// H = (Delta/2) sigma_x + (bias/2) sigma_z + g sigma_z (x) X + Omega B^dagger B.
RCModel build_reaction_coordinate_model(const RCModelSpec& spec);

/// Convenience: build_reaction_coordinate_model followed by make_system.
SystemModel make_rc_system(const RCModelSpec& spec, const SpectralDensity& residual, double dt);

/// sigma_z (x) I in the DVR basis (diagonal): +1 on the upper TLS block.
std::vector<double> rc_sigma_z(const RCModelSpec& spec);

/// |up><up| (x) rho_vib with rho_vib thermal at `temperature` (or the
/// vibrational ground state when temperature <= 0), in the DVR basis.
CMatrix rc_initial_state(const RCModel& model, const RCModelSpec& spec, double temperature);

/// Eigenvalues of the extended Hamiltonian, ascending.
std::vector<double> rc_spectrum(const RCModelSpec& spec);

/// g = Omega sqrt(alpha / (8 kappa)).
double map_structured_to_rc(double alpha, double omega, double kappa);
/// alpha = 8 kappa g^2 / Omega^2.
double map_rc_to_structured(double g, double omega, double kappa);

}  // namespace quapi
