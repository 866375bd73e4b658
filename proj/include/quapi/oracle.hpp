#pragma once

#include "quapi/bath.hpp"
#include "quapi/system.hpp"

namespace quapi {

struct OracleLimits {
    int max_states = 3;
    int max_steps = 7;
    double max_paths = 5e6;  // bound on M^(2N)
};

/// Brute-force reduced density matrix at step N: every forward/backward path
/// pair, the product of short-time propagators and the full influence double
/// sum with point N as the measured point. Throws DomainError outside limits.
CMatrix direct_path_sum(const SystemModel& system, const EtaTable& eta, const CMatrix& rho0,
                        int N, const OracleLimits& limits = {});

/// Independent-boson coherence factor
///   exp(-i w01 t) exp(-Gamma(t) - i Phi(t))
/// for a diagonal system whose two coordinates differ by dq (the phase term
/// is exact when the second coordinate is zero).
Complex analytic_dephasing(const SpectralDensity& sd, double temperature, double dq,
                           double omega01, double t);

}  // namespace quapi
