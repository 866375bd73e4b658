#include "quapi/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "quapi/simd.hpp"

namespace quapi {

const char* to_string(Mode mode) {
    switch (mode) {
        case Mode::Premerge: return "premerge";
        case Mode::PostmergeReference: return "postmerge_reference";
        case Mode::FullQuapi: return "full_quapi";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "premerge") return Mode::Premerge;
    if (s == "postmerge_reference" || s == "postmerge") return Mode::PostmergeReference;
    if (s == "full_quapi" || s == "full") return Mode::FullQuapi;
    throw DomainError("unknown mode '" + s + "'");
}

void validate(const RunSpec& spec) {
    const int M = spec.system.M;
    if (M < 1 || M > 255) throw DomainError("run spec: state count must be in [1, 255]");
    if (static_cast<int>(spec.system.q.size()) != M)
        throw DomainError("run spec: coordinate count differs from state count");
    if (spec.rho0.rows() != M || spec.rho0.cols() != M)
        throw DomainError("run spec: rho0 has the wrong dimension");
    if (spec.eta.dk_max < 1 || spec.eta.dk_max > kMaxMemory)
        throw DomainError("run spec: dk_max must be in [1, " + std::to_string(kMaxMemory) + "]");
    if (std::abs(spec.eta.dt - spec.system.dt) > 1e-14 * std::max(1.0, spec.eta.dt))
        throw DomainError("run spec: system and eta table use different time steps");
    if (spec.n_steps < 0) throw DomainError("run spec: n_steps must be >= 0");
    if (!(spec.theta >= 0.0)) throw DomainError("run spec: theta must be >= 0");
    validate_mask(spec.mask, spec.eta.dk_max);
    if (std::abs(spec.rho0.trace() - Complex(1.0)) > 1e-12)
        throw DomainError("run spec: rho0 must have unit trace");
    if ((spec.rho0 - spec.rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
        throw DomainError("run spec: rho0 must be Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (spec.rho0 + spec.rho0.adjoint()),
                                               Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw DomainError("run spec: rho0 must be positive semidefinite");
    if (!spec.observable.empty() && static_cast<int>(spec.observable.size()) != M)
        throw DomainError("run spec: observable has the wrong length");
}

int window_length(const RunSpec& spec, int t) { return std::min(t + 1, spec.eta.dk_max); }

OmegaStore initialize(const RunSpec& spec) {
    const int M = spec.system.M;
    const auto& q = spec.system.q;
    const Complex self = spec.eta.coefficient(0, 0, std::nullopt);
    OmegaStore store(M);
    for (int a = 0; a < M; ++a) {
        for (int b = 0; b < M; ++b) {
            const Complex r = spec.rho0(a, b);
            if (r == Complex{}) continue;
            Configuration c;
            c.length = 1;
            c.fwd[0] = static_cast<std::uint8_t>(a);
            c.bwd[0] = static_cast<std::uint8_t>(b);
            const double dq = q[a] - q[b];
            c.weight = dq == 0.0 ? r : r * std::exp(-dq * (self * q[a] - std::conj(self) * q[b]));
            c.sum = c.weight;
            store.push_back(c);
        }
    }
    if (store.empty()) throw DomainError("initialize: rho0 is identically zero");
    return store;
}

namespace {

// Successor generator shared by the materializing and the streaming forms of
// expand. Children come out in (input, a+, a-) order.
template <AmplitudeSource S>
class Expander {
public:
    Expander(const RunSpec& spec, int t)
        : spec_(spec), t_(t), M_(spec.system.M), q_(spec.system.q) {
        old_len_ = window_length(spec, t - 1);
        new_len_ = window_length(spec, t);
        drop_ = old_len_ + 1 - new_len_;
        hist_ = new_len_ - 1;
        for (int k = 0; k < hist_; ++k)
            row_[k] = spec.eta.coefficient(std::size_t(t), std::size_t(t - hist_ + k), std::nullopt);
        const Complex self = spec.eta.coefficient(std::size_t(t), std::size_t(t), std::nullopt);
        // exp(-dq (z + s q+ - s* q-)) = exp(-q+ z) exp(q- z) pair_(a+, a-)
        pair_.resize(std::size_t(M_) * M_);
        for (int ap = 0; ap < M_; ++ap)
            for (int am = 0; am < M_; ++am) {
                const double dq = q_[ap] - q_[am];
                pair_[ap * M_ + am] = std::exp(-dq * (self * q_[ap] - std::conj(self) * q_[am]));
            }
        fwd_amp_.resize(M_);
        bwd_amp_.resize(M_);
        ef_.resize(M_);
        eb_.resize(M_);
    }

    int hist() const { return hist_; }
    int new_len() const { return new_len_; }

    void check_capacity(std::size_t inputs) const {
        const std::uint64_t out = std::uint64_t(inputs) * std::uint64_t(M_) * M_;
        if (out > spec_.path_cap)
            throw NumericalError("step " + std::to_string(t_) + ": " + std::to_string(out) +
                                 " configurations exceed the path cap of " +
                                 std::to_string(spec_.path_cap));
    }

    /// Calls f(base, a+, a-, amplitude) for every successor of c. `base`
    /// carries the shifted history; slot hist() is left for the new point.
    template <class F>
    void children(const Configuration& c, F&& f) {
        if (c.length != old_len_)
            throw NumericalError("step " + std::to_string(t_) + ": configuration window length " +
                                 std::to_string(c.length) + " does not match step " +
                                 std::to_string(t_ - 1));
        std::array<double, kMaxMemory> qf{}, qb{};
        for (int k = 0; k < hist_; ++k) {
            qf[k] = q_[c.fwd[drop_ + k]];
            qb[k] = q_[c.bwd[drop_ + k]];
        }
        const auto sums = simd::contract_window(row_.data(), qf.data(), qb.data(), std::size_t(hist_));
        const int pf = c.newest_fwd();
        const int pb = c.newest_bwd();
        const Complex src = S == AmplitudeSource::AccumulatedSum ? c.sum : c.weight;
        const CMatrix& Uf = spec_.system.U_fwd;
        const CMatrix& Ub = spec_.system.U_bwd;
        for (int a = 0; a < M_; ++a) {
            fwd_amp_[a] = Uf(a, pf);
            bwd_amp_[a] = Ub(pb, a);
        }
        base_.length = static_cast<std::uint8_t>(new_len_);
        std::memcpy(base_.fwd.data(), c.fwd.data() + drop_, std::size_t(hist_));
        std::memcpy(base_.bwd.data(), c.bwd.data() + drop_, std::size_t(hist_));
        const Complex z = sums.fwd - sums.bwd;
        for (int a = 0; a < M_; ++a) {
            ef_[a] = std::exp(-q_[a] * z);
            eb_[a] = std::exp(q_[a] * z);
        }
        for (int ap = 0; ap < M_; ++ap) {
            const Complex lf = src * fwd_amp_[ap];
            const Complex lfe = lf * ef_[ap];
            for (int am = 0; am < M_; ++am) {
                Complex amp;
                if (q_[ap] == q_[am])
                    amp = lf * bwd_amp_[am];
                else
                    amp = (lfe * bwd_amp_[am]) * (eb_[am] * pair_[ap * M_ + am]);
                f(static_cast<const Configuration&>(base_), ap, am, amp);
            }
        }
    }

private:
    const RunSpec& spec_;
    int t_, M_;
    const std::vector<double>& q_;
    int old_len_ = 0, new_len_ = 0, drop_ = 0, hist_ = 0;
    std::array<Complex, kMaxMemory> row_{};
    std::vector<Complex> pair_, fwd_amp_, bwd_amp_, ef_, eb_;
    Configuration base_;
};

// Terminal-class correction applied when a density matrix is read out.
class Extractor {
public:
    Extractor(const RunSpec& spec, int t) : q_(spec.system.q) {
        len_ = window_length(spec, t);
        const auto tt = std::size_t(t);
        for (int k = 0; k < len_; ++k) {
            const std::size_t j = tt + 1 - std::size_t(len_) + std::size_t(k);
            delta_[k] = spec.eta.coefficient(tt, j, tt) - spec.eta.coefficient(tt, j, std::nullopt);
            any_ = any_ || delta_[k] != Complex{};
        }
    }

    // fwd/bwd hold the full window of length len_.
    Complex weighted(const std::uint8_t* fwd, const std::uint8_t* bwd, Complex sum) const {
        const int a = fwd[len_ - 1];
        const int b = bwd[len_ - 1];
        const double dq = q_[a] - q_[b];
        if (!any_ || dq == 0.0) return sum;
        std::array<double, kMaxMemory> qf{}, qb{};
        for (int k = 0; k < len_; ++k) {
            qf[k] = q_[fwd[k]];
            qb[k] = q_[bwd[k]];
        }
        const auto s = simd::contract_window(delta_.data(), qf.data(), qb.data(), std::size_t(len_));
        return sum * std::exp(-dq * (s.fwd - s.bwd));
    }

    int length() const { return len_; }

    /// Per-history factors for successors that share the first len - 1
    /// points: weighted() == sum * cf[a+] * cb[a-] * pair(a+, a-).
    void split(const std::uint8_t* fwd, const std::uint8_t* bwd, Complex* cf, Complex* cb) const {
        std::array<double, kMaxMemory> qf{}, qb{};
        const int hist = len_ - 1;
        for (int k = 0; k < hist; ++k) {
            qf[k] = q_[fwd[k]];
            qb[k] = q_[bwd[k]];
        }
        const auto s = simd::contract_window(delta_.data(), qf.data(), qb.data(), std::size_t(hist));
        const Complex w = s.fwd - s.bwd;
        for (std::size_t a = 0; a < q_.size(); ++a) {
            cf[a] = std::exp(-q_[a] * w);
            cb[a] = std::exp(q_[a] * w);
        }
    }

    bool trivial(int ap, int am) const { return !any_ || q_[ap] == q_[am]; }

    Complex pair(int ap, int am) const {
        const Complex d = delta_[len_ - 1];
        return std::exp(-(q_[ap] - q_[am]) * (d * q_[ap] - std::conj(d) * q_[am]));
    }

private:
    const std::vector<double>& q_;
    int len_ = 0;
    bool any_ = false;
    std::array<Complex, kMaxMemory> delta_{};
};

}  // namespace

template <AmplitudeSource S>
OmegaStore expand(const OmegaStore& store, const RunSpec& spec, int t) {
    Expander<S> ex(spec, t);
    ex.check_capacity(store.size());
    const int hist = ex.hist();
    OmegaStore out(spec.system.M);
    auto& items = out.configurations();
    items.resize(store.size() * std::size_t(spec.system.M) * std::size_t(spec.system.M));
    std::size_t w = 0;
    for (const Configuration& c : store.configurations()) {
        ex.children(c, [&](const Configuration& base, int ap, int am, Complex amp) {
            Configuration& n = items[w++];
            n = base;
            n.fwd[hist] = static_cast<std::uint8_t>(ap);
            n.bwd[hist] = static_cast<std::uint8_t>(am);
            n.weight = amp;
            n.sum = amp;
        });
    }
    return out;
}

template <AmplitudeSource S>
ExpansionScan scan_expansion(const OmegaStore& store, const RunSpec& spec, int t) {
    Expander<S> ex(spec, t);
    ex.check_capacity(store.size());
    const Extractor xt(spec, t);
    const int M = spec.system.M;
    ExpansionScan scan;
    scan.rho = CMatrix::Zero(M, M);
    std::vector<Complex> pair(std::size_t(M) * M), cf(M), cb(M);
    for (int ap = 0; ap < M; ++ap)
        for (int am = 0; am < M; ++am) pair[ap * M + am] = xt.pair(ap, am);
    for (const Configuration& c : store.configurations()) {
        ex.children(c, [&](const Configuration& base, int ap, int am, Complex amp) {
            if (ap == 0 && am == 0) xt.split(base.fwd.data(), base.bwd.data(), cf.data(), cb.data());
            if (xt.trivial(ap, am))
                scan.rho(ap, am) += amp;
            else
                scan.rho(ap, am) += (amp * cf[ap]) * (cb[am] * pair[ap * M + am]);
            scan.max_norm = std::max(scan.max_norm, amp.real() * amp.real() + amp.imag() * amp.imag());
            ++scan.count;
        });
    }
    return scan;
}

template <AmplitudeSource S>
OmegaStore expand_above(const OmegaStore& store, const RunSpec& spec, int t, double threshold_sq,
                        Complex* discarded) {
    Expander<S> ex(spec, t);
    ex.check_capacity(store.size());
    const int hist = ex.hist();
    OmegaStore out(spec.system.M);
    auto& items = out.configurations();
    Complex dropped{};
    for (const Configuration& c : store.configurations()) {
        ex.children(c, [&](const Configuration& base, int ap, int am, Complex amp) {
            if (std::norm(amp) < threshold_sq) {
                dropped += amp;
                return;
            }
            Configuration& n = items.emplace_back(base);
            n.fwd[hist] = static_cast<std::uint8_t>(ap);
            n.bwd[hist] = static_cast<std::uint8_t>(am);
            n.weight = amp;
            n.sum = amp;
        });
    }
    if (discarded) *discarded = dropped;
    return out;
}

CMatrix extract_density_matrix(const OmegaStore& store) {
    const int M = store.M();
    CMatrix rho = CMatrix::Zero(M, M);
    for (const auto& c : store.configurations()) rho(c.newest_fwd(), c.newest_bwd()) += c.sum;
    return rho;
}

CMatrix extract_density_matrix(const OmegaStore& store, const RunSpec& spec, int t) {
    const int M = spec.system.M;
    const Extractor xt(spec, t);
    CMatrix rho = CMatrix::Zero(M, M);
    for (const auto& c : store.configurations()) {
        if (c.length != xt.length())
            throw NumericalError("extract: configuration window does not match step " +
                                 std::to_string(t));
        rho(c.newest_fwd(), c.newest_bwd()) += xt.weighted(c.fwd.data(), c.bwd.data(), c.sum);
    }
    return rho;
}

template <AmplitudeSource S>
StepResult propagate_step(const OmegaStore& store, const RunSpec& spec, int t) {
    if (t < 1 || t > spec.n_steps)
        throw NumericalError("propagate_step: step " + std::to_string(t) + " outside 1.." +
                             std::to_string(spec.n_steps));
    StepResult r;
    switch (spec.mode) {
        case Mode::Premerge:
        case Mode::FullQuapi: {
            const bool full = spec.mode == Mode::FullQuapi;
            const Mask mask = full ? Mask::all(spec.dk_max()) : spec.mask;
            const OmegaStore merged = premerge(store, reduce_mask(mask), spec.exec);
            const double theta = full ? 0.0 : spec.theta;
            if (theta == 0.0 || !spec.exec.streaming) {
                r.store = expand<S>(merged, spec, t);
                r.rho = extract_density_matrix(r.store, spec, t);
                r.discarded = filter(r.store, theta);
            } else {
                const ExpansionScan scan = scan_expansion<S>(merged, spec, t);
                r.rho = scan.rho;
                r.store = expand_above<S>(merged, spec, t, theta * theta * scan.max_norm,
                                          &r.discarded);
            }
            break;
        }
        case Mode::PostmergeReference: {
            const OmegaStore expanded = expand<S>(store, spec, t);
            r.rho = extract_density_matrix(expanded, spec, t);
            r.store = premerge(expanded, spec.mask, spec.exec);
            r.store.make_sequential();
            r.discarded = filter(r.store, spec.theta);
            break;
        }
    }
    return r;
}

template <AmplitudeSource S>
Trajectory run(const RunSpec& spec) {
    validate(spec);
    Trajectory traj;
    OmegaStore store = initialize(spec);
    auto record = [&](int t, CMatrix rho, std::size_t n, Complex discarded) {
        traj.times.push_back(t * spec.dt());
        traj.trace_drift.push_back(1.0 - std::abs(rho.trace()));
        traj.rho.push_back(std::move(rho));
        traj.path_counts.push_back(n);
        traj.discarded.push_back(discarded);
    };
    record(0, extract_density_matrix(store, spec, 0), store.size(), {});
    for (int t = 1; t <= spec.n_steps; ++t) {
        auto step = propagate_step<S>(store, spec, t);
        store = std::move(step.store);
        record(t, std::move(step.rho), store.size(), step.discarded);
    }
    return traj;
}

template OmegaStore expand<AmplitudeSource::AccumulatedSum>(const OmegaStore&, const RunSpec&, int);
template OmegaStore expand<AmplitudeSource::Representative>(const OmegaStore&, const RunSpec&, int);
template ExpansionScan scan_expansion<AmplitudeSource::AccumulatedSum>(const OmegaStore&,
                                                                       const RunSpec&, int);
template ExpansionScan scan_expansion<AmplitudeSource::Representative>(const OmegaStore&,
                                                                       const RunSpec&, int);
template OmegaStore expand_above<AmplitudeSource::AccumulatedSum>(const OmegaStore&,
                                                                  const RunSpec&, int, double,
                                                                  Complex*);
template OmegaStore expand_above<AmplitudeSource::Representative>(const OmegaStore&,
                                                                  const RunSpec&, int, double,
                                                                  Complex*);
template StepResult propagate_step<AmplitudeSource::AccumulatedSum>(const OmegaStore&,
                                                                     const RunSpec&, int);
template StepResult propagate_step<AmplitudeSource::Representative>(const OmegaStore&,
                                                                     const RunSpec&, int);
template Trajectory run<AmplitudeSource::AccumulatedSum>(const RunSpec&);
template Trajectory run<AmplitudeSource::Representative>(const RunSpec&);

double expectation(const CMatrix& rho, const std::vector<double>& observable) {
    double v = 0.0;
    for (Eigen::Index k = 0; k < rho.rows(); ++k) v += observable[std::size_t(k)] * rho(k, k).real();
    return v;
}

std::vector<double> default_observable(int M) {
    std::vector<double> obs(std::size_t(M), -1.0);
    for (int k = 0; 2 * k < M; ++k) obs[std::size_t(k)] = 1.0;
    return obs;
}

std::vector<double> population_series(const Trajectory& traj, const RunSpec& spec) {
    const auto obs = spec.observable.empty() ? default_observable(spec.system.M) : spec.observable;
    std::vector<double> p;
    p.reserve(traj.rho.size());
    for (const auto& r : traj.rho) p.push_back(expectation(r, obs));
    return p;
}

std::vector<std::pair<double, double>> spectrum(std::span<const double> P, double dt, int oversample) {
    const std::size_t n = P.size();
    if (n < 2) throw DomainError("spectrum: need at least two samples");
    if (!(dt > 0.0)) throw DomainError("spectrum: dt must be > 0");
    if (oversample < 1) throw DomainError("spectrum: oversample must be >= 1");
    const std::size_t L = n * std::size_t(oversample);
    std::vector<double> table(L);
    for (std::size_t m = 0; m < L; ++m) table[m] = std::cos(2.0 * kPi * double(m) / double(L));
    std::vector<double> basis(n);
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k <= L / 2; ++k) {
        for (std::size_t m = 0; m < n; ++m) basis[m] = table[(k * m) % L];
        const double re = simd::dot(P.data(), basis.data(), n);
        out.emplace_back(2.0 * kPi * double(k) / (double(L) * dt), re / (2.0 * kPi * double(n)));
    }
    return out;
}

}  // namespace quapi
