#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "quapi/bath.hpp"
#include "quapi/pathstore.hpp"
#include "quapi/system.hpp"

namespace quapi {

enum class Mode { Premerge, PostmergeReference, FullQuapi };

const char* to_string(Mode mode);
Mode parse_mode(const std::string& s);

/// Which amplitude of a merged configuration drives the next step. The
/// accumulated sum is the default; the representative weight is kept for
/// comparisons.
enum class AmplitudeSource { AccumulatedSum, Representative };

struct RunSpec {
    SystemModel system;
    EtaTable eta;
    CMatrix rho0;
    int n_steps = 0;
    Mask mask;
    double theta = 0.0;
    Mode mode = Mode::Premerge;
    std::uint64_t path_cap = std::uint64_t(1) << 32;
    Execution exec;
    /// Diagonal observable in the DVR basis; empty means sigma_z-like
    /// (+1 on the first half of the states, -1 on the rest).
    std::vector<double> observable;

    double dt() const { return eta.dt; }
    int dk_max() const { return eta.dk_max; }
};

/// Throws DomainError if the run description is inconsistent.
void validate(const RunSpec& spec);

struct Trajectory {
    std::vector<double> times;
    std::vector<CMatrix> rho;
    std::vector<double> trace_drift;
    std::vector<std::uint64_t> path_counts;
    std::vector<Complex> discarded;
};

/// Window length of stored configurations at time step t.
int window_length(const RunSpec& spec, int t);

/// One configuration per nonzero entry of rho0.
OmegaStore initialize(const RunSpec& spec);

/// Propagates every configuration of a store at step t - 1 into its M^2
/// successors at step t. The input may be in either phase.
template <AmplitudeSource S = AmplitudeSource::AccumulatedSum>
OmegaStore expand(const OmegaStore& store, const RunSpec& spec, int t);

/// rho[a, b] = sum over configurations ending in (a, b), no endpoint
/// correction.
CMatrix extract_density_matrix(const OmegaStore& store);

/// Same, with the measurement-point influence classes applied: stored
/// amplitudes treat their newest point as interior, extraction at step t
/// swaps in the terminal coefficients.
CMatrix extract_density_matrix(const OmegaStore& store, const RunSpec& spec, int t);

/// Streaming read of expand(store) followed by extraction at step t, without
/// materializing the successors.
struct ExpansionScan {
    CMatrix rho;
    double max_norm = 0.0;  // max |amplitude|^2 over the successors
    std::uint64_t count = 0;
};
template <AmplitudeSource S = AmplitudeSource::AccumulatedSum>
ExpansionScan scan_expansion(const OmegaStore& store, const RunSpec& spec, int t);

/// The successors with |amplitude|^2 >= threshold_sq, in expand order. The
/// sum of the dropped amplitudes goes to *discarded.
template <AmplitudeSource S = AmplitudeSource::AccumulatedSum>
OmegaStore expand_above(const OmegaStore& store, const RunSpec& spec, int t, double threshold_sq,
                        Complex* discarded = nullptr);

struct StepResult {
    OmegaStore store;
    CMatrix rho;
    Complex discarded;
};

/// One iteration of the selected mode. `store` holds step t - 1.
template <AmplitudeSource S = AmplitudeSource::AccumulatedSum>
StepResult propagate_step(const OmegaStore& store, const RunSpec& spec, int t);

template <AmplitudeSource S = AmplitudeSource::AccumulatedSum>
Trajectory run(const RunSpec& spec);

/// sum_k obs[k] rho[k, k] (real part).
double expectation(const CMatrix& rho, const std::vector<double>& observable);
std::vector<double> default_observable(int M);
std::vector<double> population_series(const Trajectory& traj, const RunSpec& spec);

/// S(w_k) = Re DFT[P]_k / (2 pi N) on w_k = 2 pi k / (N dt), k = 0..N/2.
/// oversample > 1 evaluates the same sum on a grid that much finer
/// (zero padding); the normalization stays 1 / (2 pi N).
std::vector<std::pair<double, double>> spectrum(std::span<const double> P, double dt,
                                                int oversample = 1);

extern template OmegaStore expand<AmplitudeSource::AccumulatedSum>(const OmegaStore&,
                                                                    const RunSpec&, int);
extern template OmegaStore expand<AmplitudeSource::Representative>(const OmegaStore&,
                                                                    const RunSpec&, int);
extern template ExpansionScan scan_expansion<AmplitudeSource::AccumulatedSum>(
    const OmegaStore&, const RunSpec&, int);
extern template ExpansionScan scan_expansion<AmplitudeSource::Representative>(
    const OmegaStore&, const RunSpec&, int);
extern template OmegaStore expand_above<AmplitudeSource::AccumulatedSum>(const OmegaStore&,
                                                                         const RunSpec&, int,
                                                                         double, Complex*);
extern template OmegaStore expand_above<AmplitudeSource::Representative>(const OmegaStore&,
                                                                         const RunSpec&, int,
                                                                         double, Complex*);
extern template StepResult propagate_step<AmplitudeSource::AccumulatedSum>(const OmegaStore&,
                                                                            const RunSpec&, int);
extern template StepResult propagate_step<AmplitudeSource::Representative>(const OmegaStore&,
                                                                            const RunSpec&, int);
extern template Trajectory run<AmplitudeSource::AccumulatedSum>(const RunSpec&);
extern template Trajectory run<AmplitudeSource::Representative>(const RunSpec&);

}  // namespace quapi
