#include "quapi/bath.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "quadrature.hpp"

namespace quapi {

namespace {

constexpr double kCorrelationTol = 1e-9;
constexpr double kLambdaTol = 1e-11;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double sinc(double x) {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

// (x - sin x) / x^2
double sine_defect(double x) {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return x / 6.0 - x * x2 / 120.0 + x * x2 * x2 / 5040.0 - x * x2 * x2 * x2 / 362880.0;
    }
    return (x - std::sin(x)) / (x * x);
}

double coth_half(double omega, double temperature) {
    const double x = omega / (2.0 * temperature);
    if (x > 30.0) return 1.0;
    if (x < 1e-6) return 1.0 / x + x / 3.0;
    return 1.0 / std::tanh(x);
}

detail::PanelPlan plan_for(const SpectralDensity& sd, double time_scale) {
    detail::PanelPlan plan;
    plan.time_scale = time_scale;
    std::visit(Overloaded{
                   [&](const Ohmic& o) {
                       plan.cutoff = 50.0 * o.cutoff;
                       for (double f : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0})
                           plan.breakpoints.push_back(f * o.cutoff);
                   },
                   [&](const StructuredPeak& s) {
                       plan.cutoff = 20.0 * s.omega;
                       const double half_width = kPi * s.kappa * s.omega;
                       plan.breakpoints.push_back(s.omega);
                       for (double f : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
                           plan.breakpoints.push_back(s.omega - f * half_width);
                           plan.breakpoints.push_back(s.omega + f * half_width);
                       }
                       for (double f : {2.0, 5.0, 10.0, 50.0})
                           plan.breakpoints.push_back(f * s.omega);
                   },
                   [&](const Tabulated& t) {
                       plan.cutoff = t.omega.back();
                       plan.tail = false;
                       plan.breakpoints = t.omega;
                   },
               },
               sd);
    return plan;
}

template <class F, class... Tail>
double integrate_or_throw(F&& f, const SpectralDensity& sd, double time_scale, double tol,
                          const char* what, long lag, Tail&&... tail) {
    const auto plan = plan_for(sd, time_scale);
    const auto r = detail::integrate_half_line(f, plan, tol, tail...);
    if (!detail::converged(r, tol) || !std::isfinite(r.value)) {
        std::ostringstream msg;
        msg << what << ": quadrature did not converge (error " << r.error << ", L1 " << r.l1
            << ")";
        if (lag >= 0) msg << " at lag " << lag;
        throw IntegrationError(msg.str(), lag);
    }
    return r.value;
}

// Double window integral of C(t' - t'') for two disjoint windows of widths
// wi (later) and wj (earlier) whose centres are `separation` apart.
//
// Past the panel cutoff the window shape times cos(w s) is rewritten as
// four plain waves over w^2, which the Fourier rule handles.
Complex window_pair(const SpectralDensity& sd, double temperature, double wi, double wj,
                    double separation, long lag) {
    using detail::Wave;
    auto shape = [=](double w) { return wi * wj * sinc(0.5 * w * wi) * sinc(0.5 * w * wj); };
    const double scale = separation + 0.5 * (wi + wj);
    const double s = separation, dl = 0.5 * (wi - wj), sg = 0.5 * (wi + wj);
    auto thermal = [&](double w) { return evaluate_sd(sd, w) * coth_half(w, temperature) / (w * w); };
    auto plain = [&](double w) { return -evaluate_sd(sd, w) / (w * w); };
    const double re = integrate_or_throw(
        [&](double w) {
            if (w <= 0.0) return 0.0;
            return evaluate_sd(sd, w) * coth_half(w, temperature) * shape(w) *
                   std::cos(w * separation);
        },
        sd, scale, kCorrelationTol, "eta (real part)", lag, [&](double c) {
            return detail::wave_tail(thermal, c,
                                     {Wave{s + dl, 1.0, false}, Wave{s - dl, 1.0, false},
                                      Wave{s + sg, -1.0, false}, Wave{s - sg, -1.0, false}},
                                     kCorrelationTol);
        });
    const double im = integrate_or_throw(
        [&](double w) {
            if (w <= 0.0) return 0.0;
            return -evaluate_sd(sd, w) * shape(w) * std::sin(w * separation);
        },
        sd, scale, kCorrelationTol, "eta (imaginary part)", lag, [&](double c) {
            return detail::wave_tail(plain, c,
                                     {Wave{s + dl, 1.0, true}, Wave{s - dl, 1.0, true},
                                      Wave{s + sg, -1.0, true}, Wave{s - sg, -1.0, true}},
                                     kCorrelationTol);
        });
    return Complex(re, im) / kPi;
}

// Integral of C(t' - t'') over the triangle t'' < t' inside one window of
// width w.
Complex window_self(const SpectralDensity& sd, double temperature, double w) {
    using detail::Wave;
    // tails: (1 - cos xw) / x^2 and -w / x + sin(xw) / x^2
    auto thermal = [&](double x) { return evaluate_sd(sd, x) * coth_half(x, temperature) / (x * x); };
    auto linear = [&](double x) { return -evaluate_sd(sd, x) * w / x; };
    auto plain = [&](double x) { return evaluate_sd(sd, x) / (x * x); };
    const double re = integrate_or_throw(
        [&](double x) {
            if (x <= 0.0) return 0.0;
            const double s = sinc(0.5 * x * w);
            return evaluate_sd(sd, x) * coth_half(x, temperature) * 0.5 * w * w * s * s;
        },
        sd, w, kCorrelationTol, "eta self (real part)", 0, [&](double c) {
            return detail::wave_tail(thermal, c, {Wave{0.0, 1.0, false}, Wave{w, -1.0, false}},
                                     kCorrelationTol);
        });
    const double im = integrate_or_throw(
        [&](double x) {
            if (x <= 0.0) return 0.0;
            return -evaluate_sd(sd, x) * w * w * sine_defect(x * w);
        },
        sd, w, kCorrelationTol, "eta self (imaginary part)", 0, [&](double c) {
            auto r = detail::mapped_tail(linear, c, kCorrelationTol);
            const auto t = detail::wave_tail(plain, c, {Wave{w, 1.0, true}}, kCorrelationTol);
            r.value += t.value;
            r.error += t.error;
            r.l1 += t.l1;
            return r;
        });
    return Complex(re, im) / kPi;
}

class Fnv1a {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t k = 0; k < n; ++k) {
            h_ ^= p[k];
            h_ *= 0x100000001b3ULL;
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
        bytes(b, 8);
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// Little-endian primitive IO for the sidecar.
void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    os.write(b, 4);
}
void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    os.write(b, 8);
}
void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& is, int bytes = 8) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), bytes);
    if (!is) throw Error("eta sidecar: truncated file");
    std::uint64_t v = 0;
    for (int k = 0; k < bytes; ++k) v |= std::uint64_t(b[k]) << (8 * k);
    return v;
}
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

void validate(const SpectralDensity& sd) {
    std::visit(Overloaded{
                   [](const Ohmic& o) {
                       if (!(o.coupling >= 0.0) || !std::isfinite(o.coupling))
                           throw DomainError("ohmic: coupling must be finite and >= 0");
                       if (!(o.cutoff > 0.0) || !std::isfinite(o.cutoff))
                           throw DomainError("ohmic: cutoff must be finite and > 0");
                   },
                   [](const StructuredPeak& s) {
                       if (!(s.alpha >= 0.0) || !std::isfinite(s.alpha))
                           throw DomainError("structured: alpha must be finite and >= 0");
                       if (!(s.omega > 0.0) || !std::isfinite(s.omega))
                           throw DomainError("structured: omega must be finite and > 0");
                       if (!(s.kappa > 0.0) || !std::isfinite(s.kappa))
                           throw DomainError("structured: kappa must be finite and > 0");
                   },
                   [](const Tabulated& t) {
                       if (t.omega.size() != t.value.size() || t.omega.size() < 2)
                           throw DomainError("tabulated: need at least two (omega, J) points");
                       for (std::size_t k = 0; k < t.omega.size(); ++k) {
                           if (!std::isfinite(t.omega[k]) || !std::isfinite(t.value[k]))
                               throw DomainError("tabulated: non-finite entry");
                           if (t.omega[k] < 0.0 || t.value[k] < 0.0)
                               throw DomainError("tabulated: omega and J must be >= 0");
                           if (k > 0 && !(t.omega[k] > t.omega[k - 1]))
                               throw DomainError("tabulated: omega grid must be strictly increasing");
                       }
                   },
               },
               sd);
}

Tabulated read_tabulated_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open spectral density file " + path.string());
    Tabulated t;
    std::string line;
    std::getline(in, line);  // header
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double w = 0.0;
        double j = 0.0;
        if (!(row >> w >> j))
            throw Error(path.string() + ":" + std::to_string(lineno) + ": expected omega,J");
        t.omega.push_back(w);
        t.value.push_back(j);
    }
    validate(SpectralDensity{t});
    return t;
}

double evaluate_sd(const SpectralDensity& sd, double omega) {
    if (omega < 0.0 || std::isnan(omega)) throw DomainError("spectral density: omega must be >= 0");
    return std::visit(
        Overloaded{
            [&](const Ohmic& o) { return o.coupling / kPi * omega * std::exp(-omega / o.cutoff); },
            [&](const StructuredPeak& s) {
                const double w2 = s.omega * s.omega;
                const double detune = w2 - omega * omega;
                const double width = 2.0 * kPi * s.kappa * omega * s.omega;
                return 2.0 * s.alpha * omega * w2 * w2 / (detune * detune + width * width);
            },
            [&](const Tabulated& t) {
                if (omega < t.omega.front() || omega > t.omega.back()) return 0.0;
                const auto hi = std::upper_bound(t.omega.begin(), t.omega.end(), omega);
                if (hi == t.omega.end()) return t.value.back();
                const auto k = static_cast<std::size_t>(hi - t.omega.begin());
                const double f = (omega - t.omega[k - 1]) / (t.omega[k] - t.omega[k - 1]);
                return t.value[k - 1] + f * (t.value[k] - t.value[k - 1]);
            },
        },
        sd);
}

SpectralDensity scaled(const SpectralDensity& sd, double factor) {
    return std::visit(Overloaded{
                          [&](Ohmic o) -> SpectralDensity {
                              o.coupling *= factor;
                              return o;
                          },
                          [&](StructuredPeak s) -> SpectralDensity {
                              s.alpha *= factor;
                              return s;
                          },
                          [&](Tabulated t) -> SpectralDensity {
                              for (double& v : t.value) v *= factor;
                              return t;
                          },
                      },
                      sd);
}

double panel_cutoff(const SpectralDensity& sd) { return plan_for(sd, 0.0).cutoff; }

double reorganization_energy(const SpectralDensity& sd) {
    validate(sd);
    if (const auto* t = std::get_if<Tabulated>(&sd)) {
        if (t->omega.front() == 0.0 && t->value.front() > 0.0)
            throw IntegrationError("reorganization energy: J(0) > 0 makes J/omega divergent");
    }
    return integrate_or_throw(
        [&](double w) { return w > 0.0 ? evaluate_sd(sd, w) / w : 0.0; }, sd, 0.0, kLambdaTol,
        "reorganization energy", -1);
}

Complex bath_correlation(const SpectralDensity& sd, double temperature, double t) {
    if (!(temperature > 0.0)) throw DomainError("bath correlation: temperature must be > 0");
    if (t < 0.0) throw DomainError("bath correlation: t must be >= 0");
    // the slowly decaying tails of peaked densities go to a Fourier rule
    auto thermal = [&](double w) { return evaluate_sd(sd, w) * coth_half(w, temperature); };
    auto plain = [&](double w) { return evaluate_sd(sd, w); };
    const double re = integrate_or_throw(
        [&](double w) { return w > 0.0 ? thermal(w) * std::cos(w * t) : 0.0; }, sd, t,
        kCorrelationTol, "bath correlation (real part)", -1, [&](double c) {
            if (t == 0.0) return detail::mapped_tail(thermal, c, kCorrelationTol);
            return detail::fourier_tail(thermal, c, t, false, kCorrelationTol);
        });
    double im = 0.0;
    if (t > 0.0) {
        im = -integrate_or_throw(
            [&](double w) { return w > 0.0 ? plain(w) * std::sin(w * t) : 0.0; }, sd, t,
            kCorrelationTol, "bath correlation (imaginary part)", -1,
            [&](double c) { return detail::fourier_tail(plain, c, t, true, kCorrelationTol); });
    }
    return Complex(re, im) / kPi;
}

Complex EtaTable::coefficient(std::size_t i, std::size_t j,
                              std::optional<std::size_t> last) const {
    const std::size_t d = i - j;
    if (j > i || d >= static_cast<std::size_t>(dk_max)) return {};
    if (last && *last == 0) return {};
    const bool terminal_point = last && i == *last;
    if (d == 0) {
        if (i == 0) return onset[0] + kI * (counterterm * 0.5 * dt);
        if (terminal_point) return terminal[0] + kI * (counterterm * 0.5 * dt);
        return mid[0] + kI * (counterterm * dt);
    }
    if (j == 0) return terminal_point ? onset_terminal[d] : onset[d];
    return terminal_point ? terminal[d] : mid[d];
}

std::uint64_t eta_key_hash(const SpectralDensity& sd, double temperature, double dt,
                           int dk_max) {
    Fnv1a h;
    h.u64(sd.index());
    std::visit(Overloaded{
                   [&](const Ohmic& o) {
                       h.f64(o.coupling);
                       h.f64(o.cutoff);
                   },
                   [&](const StructuredPeak& s) {
                       h.f64(s.alpha);
                       h.f64(s.omega);
                       h.f64(s.kappa);
                   },
                   [&](const Tabulated& t) {
                       h.u64(t.omega.size());
                       for (std::size_t k = 0; k < t.omega.size(); ++k) {
                           h.f64(t.omega[k]);
                           h.f64(t.value[k]);
                       }
                   },
               },
               sd);
    h.f64(temperature);
    h.f64(dt);
    h.u64(static_cast<std::uint64_t>(dk_max));
    return h.value();
}

EtaTable compute_eta_table(const SpectralDensity& sd, double temperature, double dt,
                           int dk_max) {
    validate(sd);
    if (!(dt > 0.0)) throw DomainError("eta table: dt must be > 0");
    if (dk_max < 1) throw DomainError("eta table: dk_max must be >= 1");
    if (!(temperature > 0.0)) throw DomainError("eta table: temperature must be > 0");

    EtaTable eta;
    eta.dt = dt;
    eta.dk_max = dk_max;
    eta.temperature = temperature;
    eta.sd_hash = eta_key_hash(sd, temperature, dt, dk_max);
    const auto n = static_cast<std::size_t>(dk_max);
    eta.mid.assign(n, Complex{});
    eta.onset.assign(n, Complex{});
    eta.terminal.assign(n, Complex{});
    eta.onset_terminal.assign(n, Complex{});

    const bool silent = std::visit(
        Overloaded{[](const Ohmic& o) { return o.coupling == 0.0; },
                   [](const StructuredPeak& s) { return s.alpha == 0.0; },
                   [](const Tabulated& t) {
                       return std::all_of(t.value.begin(), t.value.end(),
                                          [](double v) { return v == 0.0; });
                   }},
        sd);
    if (silent) return eta;

    eta.counterterm = reorganization_energy(sd) / kPi;
    const double half = 0.5 * dt;
    eta.mid[0] = window_self(sd, temperature, dt);
    eta.onset[0] = window_self(sd, temperature, half);
    eta.terminal[0] = eta.onset[0];
    for (std::size_t d = 1; d < n; ++d) {
        const double lag = double(d) * dt;
        const auto l = static_cast<long>(d);
        eta.mid[d] = window_pair(sd, temperature, dt, dt, lag, l);
        eta.onset[d] = window_pair(sd, temperature, dt, half, lag - 0.25 * dt, l);
        // The terminal class has the same separation with the window widths
        // swapped; the integrand is symmetric in them.
        eta.terminal[d] = eta.onset[d];
        eta.onset_terminal[d] = window_pair(sd, temperature, half, half, lag - half, l);
    }
    return eta;
}

void write_eta_sidecar(const EtaTable& eta, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write eta sidecar " + path.string());
    os.write("ETA1", 4);
    put_u32(os, static_cast<std::uint32_t>(eta.dk_max));
    put_f64(os, eta.dt);
    put_f64(os, eta.temperature);
    put_u64(os, eta.sd_hash);
    for (const auto* cls : {&eta.mid, &eta.onset, &eta.terminal, &eta.onset_terminal}) {
        for (const Complex& c : *cls) {
            put_f64(os, c.real());
            put_f64(os, c.imag());
        }
    }
    put_f64(os, eta.counterterm);
    if (!os) throw Error("failed writing eta sidecar " + path.string());
}

EtaTable read_eta_sidecar(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open eta sidecar " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ETA1", 4) != 0)
        throw Error("eta sidecar " + path.string() + ": bad magic");
    EtaTable eta;
    eta.dk_max = static_cast<int>(get_u64(is, 4));
    eta.dt = get_f64(is);
    eta.temperature = get_f64(is);
    eta.sd_hash = get_u64(is);
    if (eta.dk_max < 1 || eta.dk_max > (1 << 24))
        throw Error("eta sidecar " + path.string() + ": implausible dk_max");
    for (auto* cls : {&eta.mid, &eta.onset, &eta.terminal, &eta.onset_terminal}) {
        cls->resize(static_cast<std::size_t>(eta.dk_max));
        for (Complex& c : *cls) {
            const double re = get_f64(is);
            const double im = get_f64(is);
            c = Complex(re, im);
        }
    }
    eta.counterterm = get_f64(is);
    return eta;
}

EtaTable cached_eta_table(const SpectralDensity& sd, double temperature, double dt, int dk_max,
                          const std::filesystem::path& cache_dir) {
    const auto key = eta_key_hash(sd, temperature, dt, dk_max);
    std::ostringstream name;
    name << std::hex << key << ".eta";
    const auto path = cache_dir / name.str();
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) {
        try {
            auto eta = read_eta_sidecar(path);
            if (eta.sd_hash == key && eta.dk_max == dk_max && eta.dt == dt &&
                eta.temperature == temperature)
                return eta;
        } catch (const Error&) {
            // stale or corrupt entry: recompute below
        }
    }
    auto eta = compute_eta_table(sd, temperature, dt, dk_max);
    std::filesystem::create_directories(cache_dir, ec);
    const auto tmp = path.string() + ".tmp";
    write_eta_sidecar(eta, tmp);
    std::filesystem::rename(tmp, path, ec);
    return eta;
}

Complex influence_increment(const EtaTable& eta, std::span<const double> q_fwd,
                            std::span<const double> q_bwd, std::size_t i,
                            std::optional<std::size_t> last) {
    const std::size_t len = q_fwd.size();
    if (len == 0 || q_bwd.size() != len || len > i + 1)
        throw DomainError("influence increment: window must hold 1..i+1 matching points");
    const double delta = q_fwd[len - 1] - q_bwd[len - 1];
    if (delta == 0.0) return 1.0;
    Complex acc{};
    for (std::size_t k = 0; k < len; ++k) {
        const std::size_t j = i + 1 - len + k;
        const Complex c = eta.coefficient(i, j, last);
        acc += c * q_fwd[k] - std::conj(c) * q_bwd[k];
    }
    return std::exp(-delta * acc);
}

int memory_length(const EtaTable& eta, double fraction) {
    if (eta.mid.empty()) return -1;
    const double ref = std::abs(eta.mid[0]);
    if (ref == 0.0) return -1;
    for (std::size_t d = 1; d < eta.mid.size(); ++d)
        if (std::abs(eta.mid[d]) < fraction * ref) return static_cast<int>(d);
    return -1;
}

}  // namespace quapi
