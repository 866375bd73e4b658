#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "quapi/common.hpp"

namespace quapi {

// Spectral densities. Units: hbar = k_B = 1, energies in a user-chosen base
// unit, times in inverse energy.

/// J(w) = (coupling / pi) * w * exp(-w / cutoff)
struct Ohmic {
    double coupling = 0.0;
    double cutoff = 1.0;
};

/// J(w) = 2 alpha w Omega^4 / ((Omega^2 - w^2)^2 + (2 pi kappa w Omega)^2)
struct StructuredPeak {
    double alpha = 0.0;
    double omega = 1.0;
    double kappa = 0.1;
};

/// Piecewise-linear J on a strictly increasing grid, zero outside it.
struct Tabulated {
    std::vector<double> omega;
    std::vector<double> value;
};

using SpectralDensity = std::variant<Ohmic, StructuredPeak, Tabulated>;

/// Validates invariants (finite parameters, increasing grid, J >= 0).
void validate(const SpectralDensity& sd);

/// Reads a two-column `omega,J` CSV with a header line.
Tabulated read_tabulated_csv(const std::filesystem::path& path);

/// J(w). Throws DomainError for w < 0.
double evaluate_sd(const SpectralDensity& sd, double omega);

/// J scaled by a > 0 (used by linearity checks and sweeps).
SpectralDensity scaled(const SpectralDensity& sd, double factor);

/// Frequency above which the [0, w_max] panel integration hands over to a
/// mapped tail integral.
double panel_cutoff(const SpectralDensity& sd);

/// lambda = int_0^inf J(w)/w dw.
double reorganization_energy(const SpectralDensity& sd);

/// C(t) = (1/pi) int_0^inf J(w) [coth(w / 2T) cos(wt) - i sin(wt)] dw.
Complex bath_correlation(const SpectralDensity& sd, double temperature, double t);

// ---------------------------------------------------------------------------
// Influence coefficients

/// Coefficient classes of the discretized influence functional. Each point
/// k of a trajectory holds its coordinate over a window: [0, dt/2] for the
/// first point, [t_N - dt/2, t_N] for the measured point and a full step
/// around t_k otherwise. Every class array is indexed by the lag
/// d = i - j in [0, dk_max); index 0 is the self-interaction of point i.
///
/// The memory window holds dk_max time points: coefficients with
/// d >= dk_max are identically zero.
struct EtaTable {
    double dt = 0.0;
    int dk_max = 0;
    double temperature = 0.0;
    std::uint64_t sd_hash = 0;
    /// Counter-term coefficient lambda / pi. The self-coefficients returned by
    /// coefficient() carry +i * counterterm * window so that propagation with
    /// the renormalized Hamiltonian does not count the polaron shift twice.
    double counterterm = 0.0;

    std::vector<Complex> mid;             // both points interior
    std::vector<Complex> onset;           // j = 0
    std::vector<Complex> terminal;        // i = N
    std::vector<Complex> onset_terminal;  // j = 0 and i = N

    /// Effective eta_{ij} for a trajectory whose last (measured) point is
    /// `last`. Pass std::nullopt for the open-ended iterative propagation in
    /// which no point is terminal yet.
    Complex coefficient(std::size_t i, std::size_t j,
                        std::optional<std::size_t> last) const;
};

/// Fills every coefficient class by double time-window integration of C(t).
EtaTable compute_eta_table(const SpectralDensity& sd, double temperature,
                           double dt, int dk_max);

/// Content hash of everything that determines an EtaTable.
std::uint64_t eta_key_hash(const SpectralDensity& sd, double temperature,
                           double dt, int dk_max);

/// Binary sidecar ("ETA1" + little-endian header + class arrays).
void write_eta_sidecar(const EtaTable& eta, const std::filesystem::path& path);
EtaTable read_eta_sidecar(const std::filesystem::path& path);

/// Looks for a cached table in `cache_dir` and computes and stores one if
/// absent or mismatched.
EtaTable cached_eta_table(const SpectralDensity& sd, double temperature,
                          double dt, int dk_max,
                          const std::filesystem::path& cache_dir);

/// Row-i factor of the influence functional:
///   exp(-sum_j (q_i^+ - q_i^-)(eta_ij q_j^+ - eta_ij^* q_j^-))
/// over the window j = i - L + 1 .. i (newest last, L = window size).
/// `last` has the same meaning as in EtaTable::coefficient.
Complex influence_increment(const EtaTable& eta, std::span<const double> q_fwd,
                            std::span<const double> q_bwd, std::size_t i,
                            std::optional<std::size_t> last);

/// First lag at which |eta_mid(d)| / |eta_mid(0)| drops below `fraction`, or
/// -1 if it never does within the table.
int memory_length(const EtaTable& eta, double fraction);

}  // namespace quapi
