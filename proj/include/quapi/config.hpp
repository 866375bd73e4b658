#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quapi/distributed.hpp"
#include "quapi/engine.hpp"

namespace quapi {

/// Line numbers of the keys a Config was parsed from. Ignored by ==.
struct SourceLines {
    std::map<std::string, int> at;
    int line(const std::string& key) const {
        const auto it = at.find(key);
        return it == at.end() ? 0 : it->second;
    }
    bool operator==(const SourceLines&) const { return true; }
};

/// Flat INI run description:
///
///   [system]       hamiltonian, coordinates, rho0, observable
///                  or rc_delta, rc_omega, rc_g | rc_alpha, rc_kappa,
///                  rc_n_vib, rc_bias, rc_initial
///   [bath]         variant, coupling, cutoff, alpha, omega, kappa, file,
///                  temperature
///   [propagation]  dt, n_steps, dk_max, mask, theta, mode, path_cap
///   [run]          workers, backend, output_dir, deterministic, threads
struct Config {
    // [system]
    std::vector<double> hamiltonian;  // row-major (re, im) pairs
    std::vector<double> coordinates;
    std::vector<double> rho0;  // row-major (re, im) pairs; default |0><0|
    std::vector<double> observable;
    bool rc = false;
    double rc_delta = 1.0;
    double rc_omega = 1.0;
    std::optional<double> rc_g;
    std::optional<double> rc_alpha;
    double rc_kappa = 0.056;
    int rc_n_vib = 2;
    double rc_bias = 0.0;
    std::string rc_initial = "thermal";

    // [bath]
    std::string variant = "ohmic";
    std::optional<double> coupling;
    double cutoff = 1.0;
    double alpha = 0.0;
    double omega = 1.0;
    double kappa = 0.1;
    std::string file;
    double temperature = 1.0;

    // [propagation]
    double dt = 0.1;
    int n_steps = 0;
    int dk_max = 1;
    std::string mask = "all";
    double theta = 0.0;
    std::string mode = "premerge";
    std::uint64_t path_cap = std::uint64_t(1) << 32;

    // [run]
    int workers = 1;
    std::string backend = "thread";
    std::string output_dir = ".";
    bool deterministic = true;
    unsigned threads = 1;

    SourceLines lines;

    bool operator==(const Config&) const = default;
};

/// Throws ConfigError (with the line number) on syntax errors, unknown keys,
/// missing sections and invalid scalar values.
Config parse_config(std::string_view text);
Config load_config(const std::filesystem::path& path);
std::string emit_config(const Config& config);

/// "all", "dense:K" or an explicit comma list.
Mask parse_mask(const std::string& text, int dk_max);

struct Assembled {
    RunSpec spec;
    SpectralDensity sd;
    std::optional<RCModelSpec> rc;
    DistributedOptions distributed;
};

/// Builds every model object. Relative bath files are resolved against
/// `base_dir`; eta tables are cached in `eta_cache` when given.
Assembled assemble(const Config& config, const std::filesystem::path& base_dir = {},
                   const std::optional<std::filesystem::path>& eta_cache = std::nullopt);

}  // namespace quapi
