#include "quapi/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace quapi {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& s, int line, const std::string& key) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end)
        throw ConfigError(key + ": '" + s + "' is not a number", line);
    if (!std::isfinite(v)) throw ConfigError(key + ": value must be finite", line);
    return v;
}

long long to_int(const std::string& s, int line, const std::string& key) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end)
        throw ConfigError(key + ": '" + s + "' is not an integer", line);
    return v;
}

bool to_bool(const std::string& s, int line, const std::string& key) {
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw ConfigError(key + ": expected true or false", line);
}

std::vector<double> to_list(const std::string& s, int line, const std::string& key) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        std::istringstream words(item);
        std::string w;
        while (words >> w) out.push_back(to_double(w, line, key));
    }
    return out;
}

const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s{
        {"system",
         {"hamiltonian", "coordinates", "rho0", "observable", "rc_delta", "rc_omega", "rc_g",
          "rc_alpha", "rc_kappa", "rc_n_vib", "rc_bias", "rc_initial"}},
        {"bath", {"variant", "coupling", "cutoff", "alpha", "omega", "kappa", "file", "temperature"}},
        {"propagation", {"dt", "n_steps", "dk_max", "mask", "theta", "mode", "path_cap"}},
        {"run", {"workers", "backend", "output_dir", "deterministic", "threads"}},
    };
    return s;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt(const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v[k]);
    return s;
}

CMatrix matrix_from_pairs(const std::vector<double>& v, int line, const std::string& key) {
    const auto n2 = v.size() / 2;
    const auto M = static_cast<Eigen::Index>(std::llround(std::sqrt(double(n2))));
    if (v.size() % 2 != 0 || std::size_t(M * M) != n2 || M == 0)
        throw ConfigError(key + ": expected 2*M*M numbers (row-major re, im pairs)", line);
    CMatrix m(M, M);
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = 0; j < M; ++j) {
            const auto k = std::size_t(2 * (i * M + j));
            m(i, j) = Complex(v[k], v[k + 1]);
        }
    return m;
}

}  // namespace

Mask parse_mask(const std::string& text, int dk_max) {
    const std::string t = trim(text);
    if (t == "all") return Mask::all(dk_max);
    if (t.rfind("dense:", 0) == 0) {
        const auto k = to_int(trim(t.substr(6)), 0, "mask");
        if (k < 1) throw ConfigError("mask: dense size must be >= 1");
        if (k > dk_max) throw ConfigError("mask: dense size exceeds dk_max");
        return Mask::dense(dk_max, int(k));
    }
    Mask m;
    for (double v : to_list(t, 0, "mask")) {
        if (v != std::floor(v)) throw ConfigError("mask: lags must be integers");
        m.lags.push_back(int(v));
    }
    try {
        validate_mask(m, dk_max);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("mask: ") + e.what());
    }
    return m;
}

Config parse_config(std::string_view text) {
    Config c;
    std::set<std::string> sections;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find_first_of("#;");
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("malformed section header", lineno);
            section = trim(line.substr(1, line.size() - 2));
            if (!schema().count(section)) throw ConfigError("unknown section [" + section + "]", lineno);
            if (!sections.insert(section).second)
                throw ConfigError("duplicate section [" + section + "]", lineno);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", lineno);
        if (section.empty()) throw ConfigError("key outside of any section", lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!schema().at(section).count(key))
            throw ConfigError("unknown key '" + key + "' in [" + section + "]", lineno);
        if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'", lineno);
        c.lines.at[key] = lineno;
        if (val.empty()) throw ConfigError(key + ": empty value", lineno);

        auto num = [&] { return to_double(val, lineno, key); };
        auto positive = [&] {
            const double v = num();
            if (!(v > 0.0)) throw ConfigError(key + " must be > 0", lineno);
            return v;
        };
        auto nonneg = [&] {
            const double v = num();
            if (!(v >= 0.0)) throw ConfigError(key + " must be >= 0", lineno);
            return v;
        };
        auto integer = [&](long long lo, long long hi) {
            const auto v = to_int(val, lineno, key);
            if (v < lo || v > hi)
                throw ConfigError(key + " must be in [" + std::to_string(lo) + ", " +
                                      std::to_string(hi) + "]",
                                  lineno);
            return v;
        };

        if (key == "hamiltonian") c.hamiltonian = to_list(val, lineno, key);
        else if (key == "coordinates") c.coordinates = to_list(val, lineno, key);
        else if (key == "rho0") c.rho0 = to_list(val, lineno, key);
        else if (key == "observable") c.observable = to_list(val, lineno, key);
        else if (key == "rc_delta") c.rc_delta = positive();
        else if (key == "rc_omega") c.rc_omega = positive();
        else if (key == "rc_g") c.rc_g = num();
        else if (key == "rc_alpha") c.rc_alpha = nonneg();
        else if (key == "rc_kappa") c.rc_kappa = positive();
        else if (key == "rc_n_vib") c.rc_n_vib = int(integer(1, 127));
        else if (key == "rc_bias") c.rc_bias = num();
        else if (key == "rc_initial") {
            if (val != "thermal" && val != "ground")
                throw ConfigError("rc_initial must be thermal or ground", lineno);
            c.rc_initial = val;
        } else if (key == "variant") {
            if (val != "ohmic" && val != "structured" && val != "tabulated" && val != "none")
                throw ConfigError("variant must be ohmic, structured, tabulated or none", lineno);
            c.variant = val;
        } else if (key == "coupling") c.coupling = nonneg();
        else if (key == "cutoff") c.cutoff = positive();
        else if (key == "alpha") c.alpha = nonneg();
        else if (key == "omega") c.omega = positive();
        else if (key == "kappa") c.kappa = positive();
        else if (key == "file") c.file = val;
        else if (key == "temperature") c.temperature = positive();
        else if (key == "dt") c.dt = positive();
        else if (key == "n_steps") c.n_steps = int(integer(0, 100000000));
        else if (key == "dk_max") c.dk_max = int(integer(1, kMaxMemory));
        else if (key == "mask") c.mask = val;
        else if (key == "theta") c.theta = nonneg();
        else if (key == "mode") {
            try {
                parse_mode(val);
            } catch (const DomainError& e) {
                throw ConfigError(e.what(), lineno);
            }
            c.mode = val;
        } else if (key == "path_cap") c.path_cap = std::uint64_t(integer(1, (1LL << 62)));
        else if (key == "workers") c.workers = int(integer(1, 1024));
        else if (key == "backend") {
            if (val != "thread" && val != "process")
                throw ConfigError("backend must be thread or process", lineno);
            c.backend = val;
        } else if (key == "output_dir") c.output_dir = val;
        else if (key == "deterministic") c.deterministic = to_bool(val, lineno, key);
        else if (key == "threads") c.threads = unsigned(integer(1, 1024));
    }

    for (const char* s : {"system", "bath", "propagation"})
        if (!sections.count(s)) throw ConfigError(std::string("missing section [") + s + "]");

    for (const auto& [key, line] : c.lines.at)
        if (key.rfind("rc_", 0) == 0) c.rc = true;
    const bool explicit_h = c.lines.at.count("hamiltonian") > 0;
    if (c.rc == explicit_h)
        throw ConfigError("[system] needs exactly one of hamiltonian or the rc_* model",
                          explicit_h ? c.lines.line("hamiltonian") : 0);
    if (c.rc) {
        if (c.rc_g.has_value() == c.rc_alpha.has_value())
            throw ConfigError("rc model needs exactly one of rc_g or rc_alpha",
                              c.lines.line(c.rc_g ? "rc_g" : "rc_alpha"));
        for (const char* k : {"coordinates", "rho0", "observable"})
            if (c.lines.at.count(k))
                throw ConfigError(std::string(k) + " cannot be combined with the rc model",
                                  c.lines.line(k));
    } else {
        const auto H = matrix_from_pairs(c.hamiltonian, c.lines.line("hamiltonian"), "hamiltonian");
        if (!c.lines.at.count("coordinates")) throw ConfigError("[system] needs coordinates");
        if (Eigen::Index(c.coordinates.size()) != H.rows())
            throw ConfigError("coordinates: expected one value per state",
                              c.lines.line("coordinates"));
        if (!c.rho0.empty() && matrix_from_pairs(c.rho0, c.lines.line("rho0"), "rho0").rows() != H.rows())
            throw ConfigError("rho0: dimension differs from the hamiltonian", c.lines.line("rho0"));
        if (!c.observable.empty() && Eigen::Index(c.observable.size()) != H.rows())
            throw ConfigError("observable: expected one value per state", c.lines.line("observable"));
    }
    if (c.variant == "tabulated" && c.file.empty())
        throw ConfigError("tabulated bath needs a file", c.lines.line("variant"));
    if (c.variant == "ohmic" && !c.coupling && !c.rc)
        throw ConfigError("ohmic bath needs a coupling", c.lines.line("variant"));
    parse_mask(c.mask, c.dk_max);  // validates
    return c;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string emit_config(const Config& c) {
    std::ostringstream os;
    os << "[system]\n";
    if (c.rc) {
        os << "rc_delta = " << fmt(c.rc_delta) << '\n' << "rc_omega = " << fmt(c.rc_omega) << '\n';
        if (c.rc_g) os << "rc_g = " << fmt(*c.rc_g) << '\n';
        if (c.rc_alpha) os << "rc_alpha = " << fmt(*c.rc_alpha) << '\n';
        os << "rc_kappa = " << fmt(c.rc_kappa) << '\n'
           << "rc_n_vib = " << c.rc_n_vib << '\n'
           << "rc_bias = " << fmt(c.rc_bias) << '\n'
           << "rc_initial = " << c.rc_initial << '\n';
    } else {
        os << "hamiltonian = " << fmt(c.hamiltonian) << '\n';
        os << "coordinates = " << fmt(c.coordinates) << '\n';
        if (!c.rho0.empty()) os << "rho0 = " << fmt(c.rho0) << '\n';
        if (!c.observable.empty()) os << "observable = " << fmt(c.observable) << '\n';
    }
    os << "\n[bath]\nvariant = " << c.variant << '\n';
    if (c.coupling) os << "coupling = " << fmt(*c.coupling) << '\n';
    os << "cutoff = " << fmt(c.cutoff) << '\n'
       << "alpha = " << fmt(c.alpha) << '\n'
       << "omega = " << fmt(c.omega) << '\n'
       << "kappa = " << fmt(c.kappa) << '\n';
    if (!c.file.empty()) os << "file = " << c.file << '\n';
    os << "temperature = " << fmt(c.temperature) << '\n';
    os << "\n[propagation]\n"
       << "dt = " << fmt(c.dt) << '\n'
       << "n_steps = " << c.n_steps << '\n'
       << "dk_max = " << c.dk_max << '\n'
       << "mask = " << c.mask << '\n'
       << "theta = " << fmt(c.theta) << '\n'
       << "mode = " << c.mode << '\n'
       << "path_cap = " << c.path_cap << '\n';
    os << "\n[run]\n"
       << "workers = " << c.workers << '\n'
       << "backend = " << c.backend << '\n'
       << "output_dir = " << c.output_dir << '\n'
       << "deterministic = " << (c.deterministic ? "true" : "false") << '\n'
       << "threads = " << c.threads << '\n';
    return os.str();
}

Assembled assemble(const Config& c, const std::filesystem::path& base_dir,
                   const std::optional<std::filesystem::path>& eta_cache) {
    Assembled a;
    if (c.variant == "ohmic")
        a.sd = Ohmic{c.coupling ? *c.coupling : kPi * c.rc_kappa, c.cutoff};
    else if (c.variant == "structured")
        a.sd = StructuredPeak{c.alpha, c.omega, c.kappa};
    else if (c.variant == "tabulated") {
        const std::filesystem::path p = c.file;
        try {
            a.sd = read_tabulated_csv(p.is_absolute() || base_dir.empty() ? p : base_dir / p);
        } catch (const Error& e) {
            throw ConfigError(e.what(), c.lines.line("file"));
        }
    } else
        a.sd = Ohmic{0.0, 1.0};

    RunSpec& s = a.spec;
    if (c.rc) {
        RCModelSpec rc;
        rc.delta = c.rc_delta;
        rc.omega = c.rc_omega;
        rc.g = c.rc_g ? *c.rc_g : map_structured_to_rc(*c.rc_alpha, c.rc_omega, c.rc_kappa);
        rc.n_vib = c.rc_n_vib;
        rc.bias = c.rc_bias;
        const RCModel model = build_reaction_coordinate_model(rc);
        s.system = make_system(model.H, model.q, a.sd, c.dt);
        s.rho0 = rc_initial_state(model, rc, c.rc_initial == "ground" ? 0.0 : c.temperature);
        s.observable = rc_sigma_z(rc);
        a.rc = rc;
    } else {
        const CMatrix H = matrix_from_pairs(c.hamiltonian, c.lines.line("hamiltonian"), "hamiltonian");
        try {
            s.system = make_system(H, c.coordinates, a.sd, c.dt);
        } catch (const DomainError& e) {
            throw ConfigError(e.what(), c.lines.line("hamiltonian"));
        }
        if (c.rho0.empty()) {
            s.rho0 = CMatrix::Zero(H.rows(), H.cols());
            s.rho0(0, 0) = 1.0;
        } else {
            s.rho0 = matrix_from_pairs(c.rho0, c.lines.line("rho0"), "rho0");
        }
        s.observable = c.observable;
    }
    if (s.system.M > 255) throw ConfigError("at most 255 system states are supported");

    s.eta = eta_cache ? cached_eta_table(a.sd, c.temperature, c.dt, c.dk_max, *eta_cache)
                      : compute_eta_table(a.sd, c.temperature, c.dt, c.dk_max);
    s.n_steps = c.n_steps;
    s.mask = parse_mask(c.mask, c.dk_max);
    s.theta = c.theta;
    s.mode = parse_mode(c.mode);
    s.path_cap = c.path_cap;
    s.exec.threads = c.threads;
    try {
        validate(s);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }

    a.distributed.workers = c.workers;
    a.distributed.backend = parse_backend(c.backend);
    return a;
}

}  // namespace quapi
