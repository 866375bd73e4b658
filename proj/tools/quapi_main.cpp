#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "quapi/config.hpp"
#include "quapi/distributed.hpp"
#include "quapi/engine.hpp"
#include "quapi/oracle.hpp"

namespace fs = std::filesystem;
using namespace quapi;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::optional<fs::path> eta_cache_dir() {
    const char* env = std::getenv("QUAPI_ETA_CACHE");
    if (env == nullptr || *env == '\0') return std::nullopt;
    return fs::path(env);
}

Assembled assemble_file(const fs::path& path, Config* out = nullptr) {
    Config cfg = load_config(path);
    if (out) *out = cfg;
    return assemble(cfg, path.parent_path(), eta_cache_dir());
}

Trajectory execute(const Assembled& a) {
    if (a.distributed.workers > 1) return run_distributed(a.spec, a.distributed);
    return run(a.spec);
}

void write_trajectory(const fs::path& dir, const Trajectory& traj, const RunSpec& spec) {
    const int M = spec.system.M;
    std::ofstream os(dir / "trajectory.csv");
    if (!os) throw Error("cannot write " + (dir / "trajectory.csv").string());
    os << "t";
    for (const char* part : {"re", "im"})
        for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b) os << ',' << part << "_rho_" << a << '_' << b;
    os << ",trace_drift,n_paths\n";
    os.precision(17);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        os << traj.times[k];
        for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b) os << ',' << traj.rho[k](a, b).real();
        for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b) os << ',' << traj.rho[k](a, b).imag();
        os << ',' << traj.trace_drift[k] << ',' << traj.path_counts[k] << '\n';
    }

    std::ofstream tel(dir / "telemetry.csv");
    tel << "step,t,n_paths,trace_drift,re_discarded,im_discarded\n";
    tel.precision(17);
    for (std::size_t k = 0; k < traj.times.size(); ++k)
        tel << k << ',' << traj.times[k] << ',' << traj.path_counts[k] << ','
            << traj.trace_drift[k] << ',' << traj.discarded[k].real() << ','
            << traj.discarded[k].imag() << '\n';

    const auto P = population_series(traj, spec);
    std::ofstream pop(dir / "population.csv");
    pop << "t,P\n";
    pop.precision(17);
    for (std::size_t k = 0; k < P.size(); ++k) pop << traj.times[k] << ',' << P[k] << '\n';
}

void write_spectrum(const fs::path& file, const std::vector<double>& P, double dt,
                    int oversample = 1) {
    std::ofstream os(file);
    if (!os) throw Error("cannot write " + file.string());
    os << "omega,S\n";
    os.precision(17);
    for (const auto& [w, s] : spectrum(P, dt, oversample)) os << w << ',' << s << '\n';
}

struct TrajectoryCsv {
    std::vector<double> t;
    std::vector<std::vector<double>> rows;
    int M = 0;
};

TrajectoryCsv read_trajectory(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    const auto columns = std::count(line.begin(), line.end(), ',') + 1;
    const long m2 = (columns - 3) / 2;
    const int M = static_cast<int>(std::lround(std::sqrt(double(m2))));
    if (columns < 5 || 2 * m2 + 3 != columns || long(M) * M != m2)
        throw ConfigError(path.string() + ": not a trajectory file (column count " +
                          std::to_string(columns) + ")", 1);
    TrajectoryCsv csv;
    csv.M = M;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ": bad number '" + cell + "'", lineno);
            }
        }
        if (long(row.size()) != columns)
            throw ConfigError(path.string() + ": wrong column count", lineno);
        csv.t.push_back(row[0]);
        csv.rows.push_back(std::move(row));
    }
    if (csv.t.size() < 2) throw ConfigError(path.string() + ": need at least two rows");
    return csv;
}

int cmd_run(const fs::path& config, std::optional<int> workers, std::optional<std::string> backend,
            std::optional<fs::path> out, bool with_spectrum) {
    Config cfg = load_config(config);
    if (workers) cfg.workers = *workers;
    if (backend) cfg.backend = *backend;
    const fs::path dir = out ? *out : fs::path(cfg.output_dir);
    const Assembled a = assemble(cfg, config.parent_path(), eta_cache_dir());
    const Trajectory traj = execute(a);
    fs::create_directories(dir);
    write_trajectory(dir, traj, a.spec);
    if (with_spectrum) write_spectrum(dir / "spectrum.csv", population_series(traj, a.spec), a.spec.dt());
    std::uint64_t peak = 0;
    for (auto n : traj.path_counts) peak = std::max(peak, n);
    std::cout << "steps " << a.spec.n_steps << ", M " << a.spec.system.M << ", mask {"
              << to_string(a.spec.mask) << "}, peak paths " << peak << ", final trace drift "
              << traj.trace_drift.back() << "\nwrote " << dir.string() << '\n';
    return 0;
}

int cmd_oracle(const fs::path& config, double tol) {
    const Assembled a = assemble_file(config);
    const Trajectory traj = run(a.spec);
    double worst = 0.0;
    for (int t = 0; t <= a.spec.n_steps; ++t) {
        const CMatrix ref = direct_path_sum(a.spec.system, a.spec.eta, a.spec.rho0, t);
        worst = std::max(worst, (traj.rho[std::size_t(t)] - ref).cwiseAbs().maxCoeff());
    }
    std::cout.precision(3);
    std::cout << "max |rho_engine - rho_oracle| over " << a.spec.n_steps + 1 << " steps: "
              << std::scientific << worst << '\n';
    return worst <= tol ? 0 : kExitNumerical;
}

int cmd_spectrum(const fs::path& traj_file, const std::vector<double>& observable,
                 std::optional<fs::path> out, int oversample) {
    const auto csv = read_trajectory(traj_file);
    std::vector<double> obs = observable.empty() ? default_observable(csv.M) : observable;
    if (int(obs.size()) != csv.M) throw ConfigError("--observable needs one value per state");
    std::vector<double> P;
    for (const auto& row : csv.rows) {
        double p = 0.0;
        for (int a = 0; a < csv.M; ++a) p += obs[std::size_t(a)] * row[std::size_t(1 + a * csv.M + a)];
        P.push_back(p);
    }
    const double dt = csv.t[1] - csv.t[0];
    const fs::path file = out ? *out : traj_file.parent_path() / "spectrum.csv";
    write_spectrum(file, P, dt, oversample);
    std::cout << "wrote " << file.string() << '\n';
    return 0;
}

int cmd_eta(const fs::path& config, const fs::path& out) {
    const Config cfg = load_config(config);
    const Assembled a = assemble(cfg, config.parent_path(), eta_cache_dir());
    write_eta_sidecar(a.spec.eta, out);
    std::cout << "eta table: dk_max " << a.spec.eta.dk_max << ", dt " << a.spec.eta.dt
              << ", |eta_mid(0)| " << std::abs(a.spec.eta.mid[0]) << "\nwrote " << out.string()
              << '\n';
    return 0;
}

void apply_param(Config& cfg, const std::string& param, double value) {
    if (param == "dk_max") {
        cfg.dk_max = int(value);
        if (cfg.mask != "all" && cfg.mask.rfind("dense:", 0) != 0) cfg.mask = "all";
    } else if (param == "dk_eff") {
        cfg.mask = "dense:" + std::to_string(int(value));
    } else if (param == "n_vib") {
        if (!cfg.rc) throw ConfigError("sweep over n_vib needs an rc model");
        cfg.rc_n_vib = int(value);
    } else if (param == "theta") {
        cfg.theta = value;
    } else {
        throw ConfigError("sweep parameter must be dk_max, dk_eff, n_vib or theta");
    }
}

std::vector<double> populations(const Config& cfg, const fs::path& base) {
    const Assembled a = assemble(cfg, base, eta_cache_dir());
    Trajectory traj = execute(a);
    auto P = population_series(traj, a.spec);
    return P;
}

int cmd_sweep(const fs::path& config, const std::string& param, const std::vector<double>& values,
              double reference, std::optional<fs::path> out) {
    const Config base = load_config(config);
    Config ref_cfg = base;
    apply_param(ref_cfg, param, reference);
    const auto ref = populations(ref_cfg, config.parent_path());

    std::ostringstream table;
    table << param << ",max_deviation\n";
    table.precision(10);
    for (double v : values) {
        Config cfg = base;
        apply_param(cfg, param, v);
        const auto P = populations(cfg, config.parent_path());
        double dev = 0.0;
        for (std::size_t k = 0; k < std::min(P.size(), ref.size()); ++k)
            dev = std::max(dev, std::abs(P[k] - ref[k]));
        table << v << ',' << dev << '\n';
    }
    if (out) {
        std::ofstream os(*out);
        os << table.str();
    }
    std::cout << table.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quapi: path-integral propagation of open quantum systems"};
    app.require_subcommand(1);

    fs::path config;
    fs::path traj;
    std::optional<fs::path> out;
    std::optional<int> workers;
    std::optional<std::string> backend;
    bool with_spectrum = false;

    auto* run_cmd = app.add_subcommand("run", "propagate and write trajectory/telemetry CSVs");
    run_cmd->add_option("--config", config, "run description")->required();
    run_cmd->add_option("--workers", workers, "number of workers");
    run_cmd->add_option("--backend", backend, "process or thread")->check(CLI::IsMember({"process", "thread"}));
    run_cmd->add_option("--out", out, "output directory");
    run_cmd->add_flag("--spectrum", with_spectrum, "also write spectrum.csv");

    double tol = 1e-12;
    auto* oracle_cmd = app.add_subcommand("oracle", "compare the engine with brute-force path sums");
    oracle_cmd->add_option("--config", config)->required();
    oracle_cmd->add_option("--tol", tol, "maximum accepted deviation");

    std::vector<double> observable;
    auto* spec_cmd = app.add_subcommand("spectrum", "spectrum of <observable>(t) from a trajectory");
    spec_cmd->add_option("--traj", traj, "trajectory.csv")->required();
    spec_cmd->add_option("--observable", observable, "diagonal observable, one value per state")
        ->delimiter(',');
    spec_cmd->add_option("--out", out, "output file");
    int oversample = 1;
    spec_cmd->add_option("--oversample", oversample, "zero-pad the series to this many times its length")
        ->check(CLI::Range(1, 64));

    fs::path eta_out;
    auto* eta_cmd = app.add_subcommand("eta", "compute and store the influence coefficient table");
    eta_cmd->add_option("--config", config)->required();
    eta_cmd->add_option("--out", eta_out)->required();

    std::string param;
    std::vector<double> values;
    double reference = 0.0;
    auto* sweep_cmd = app.add_subcommand("sweep", "convergence study over one parameter");
    sweep_cmd->add_option("--config", config)->required();
    sweep_cmd->add_option("--param", param)
        ->required()
        ->check(CLI::IsMember({"dk_max", "dk_eff", "n_vib", "theta"}));
    sweep_cmd->add_option("--values", values)->required()->delimiter(',');
    sweep_cmd->add_option("--reference", reference)->required();
    sweep_cmd->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run_cmd) return cmd_run(config, workers, backend, out, with_spectrum);
        if (*oracle_cmd) return cmd_oracle(config, tol);
        if (*spec_cmd) return cmd_spectrum(traj, observable, out, oversample);
        if (*eta_cmd) return cmd_eta(config, eta_out);
        if (*sweep_cmd) return cmd_sweep(config, param, values, reference, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
