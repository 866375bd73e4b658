#pragma once

#include "quapi/engine.hpp"

namespace models {

using namespace quapi;

/// Symmetric spin-boson model with H = (Delta/2) sigma_x, Delta = 1,
/// coordinates +-1/2, starting in |0><0|.
inline RunSpec spin_boson(const SpectralDensity& sd, double temperature, double dt, int dk_max,
                          int n_steps) {
    CMatrix H(2, 2);
    H << 0.0, 0.5, 0.5, 0.0;
    RunSpec s;
    s.system = make_system(H, {0.5, -0.5}, sd, dt);
    s.eta = compute_eta_table(sd, temperature, dt, dk_max);
    s.rho0 = CMatrix::Zero(2, 2);
    s.rho0(0, 0) = 1.0;
    s.n_steps = n_steps;
    s.mask = Mask::all(dk_max);
    return s;
}

/// gamma = 1/16, w_c = 10, k_B T = 0.2, dt = 0.3 in units of Delta.
inline Ohmic benchmark_bath() { return Ohmic{1.0 / 16.0, 10.0}; }

inline RunSpec benchmark(int dk_max, int dk_eff, double theta, int n_steps) {
    RunSpec s = spin_boson(benchmark_bath(), 0.2, 0.3, dk_max, n_steps);
    s.mask = Mask::dense(dk_max, dk_eff);
    s.theta = theta;
    return s;
}

/// Three DVR states with coordinates -1, 0, 1 and nearest-neighbour
/// couplings.
inline RunSpec three_state(const SpectralDensity& sd, double temperature, double dt, int dk_max,
                           int n_steps) {
    CMatrix H = CMatrix::Zero(3, 3);
    H(0, 0) = 0.2;
    H(2, 2) = -0.1;
    H(0, 1) = H(1, 0) = 0.4;
    H(1, 2) = H(2, 1) = Complex(0.3, 0.1);
    H(2, 1) = std::conj(H(1, 2));
    RunSpec s;
    s.system = make_system(H, {-1.0, 0.0, 1.0}, sd, dt);
    s.eta = compute_eta_table(sd, temperature, dt, dk_max);
    s.rho0 = CMatrix::Zero(3, 3);
    s.rho0(0, 0) = 0.7;
    s.rho0(1, 1) = 0.3;
    s.rho0(0, 1) = Complex(0.2, 0.1);
    s.rho0(1, 0) = std::conj(s.rho0(0, 1));
    s.n_steps = n_steps;
    s.mask = Mask::all(dk_max);
    return s;
}

inline double max_deviation(const Trajectory& a, const Trajectory& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < std::min(a.rho.size(), b.rho.size()); ++k)
        d = std::max(d, (a.rho[k] - b.rho[k]).cwiseAbs().maxCoeff());
    return d;
}

}  // namespace models
