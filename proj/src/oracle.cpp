#include "quapi/oracle.hpp"

#include <cmath>
#include <functional>

#include "quadrature.hpp"

namespace quapi {

CMatrix direct_path_sum(const SystemModel& system, const EtaTable& eta, const CMatrix& rho0,
                        int N, const OracleLimits& limits) {
    const int M = system.M;
    if (M > limits.max_states || N > limits.max_steps || N < 0)
        throw DomainError("direct_path_sum: M = " + std::to_string(M) + ", N = " +
                          std::to_string(N) + " outside the oracle limits");
    if (std::pow(double(M), 2.0 * N) > limits.max_paths)
        throw DomainError("direct_path_sum: M^(2N) exceeds the oracle path budget");
    if (rho0.rows() != M || rho0.cols() != M) throw DomainError("direct_path_sum: bad rho0");

    const auto& q = system.q;
    const auto last = std::size_t(N);
    std::vector<int> fwd(std::size_t(N) + 1), bwd(std::size_t(N) + 1);
    CMatrix rho = CMatrix::Zero(M, M);

    // Exponent of the influence functional accumulated row by row; `amp`
    // carries rho0 and the propagator factors.
    std::function<void(int, Complex, Complex)> walk = [&](int i, Complex amp, Complex phase) {
        Complex row{};
        for (int j = 0; j <= i; ++j) {
            const Complex c = eta.coefficient(std::size_t(i), std::size_t(j), last);
            row += c * q[fwd[j]] - std::conj(c) * q[bwd[j]];
        }
        phase += (q[fwd[i]] - q[bwd[i]]) * row;
        if (i == N) {
            rho(fwd[N], bwd[N]) += amp * std::exp(-phase);
            return;
        }
        for (int a = 0; a < M; ++a) {
            for (int b = 0; b < M; ++b) {
                const Complex step = system.U_fwd(a, fwd[i]) * system.U_bwd(bwd[i], b);
                if (step == Complex{}) continue;
                fwd[i + 1] = a;
                bwd[i + 1] = b;
                walk(i + 1, amp * step, phase);
            }
        }
    };

    for (int a = 0; a < M; ++a) {
        for (int b = 0; b < M; ++b) {
            if (rho0(a, b) == Complex{}) continue;
            fwd[0] = a;
            bwd[0] = b;
            walk(0, rho0(a, b), Complex{});
        }
    }
    return rho;
}

Complex analytic_dephasing(const SpectralDensity& sd, double temperature, double dq,
                           double omega01, double t) {
    if (!(temperature > 0.0)) throw DomainError("analytic_dephasing: temperature must be > 0");
    if (t < 0.0) throw DomainError("analytic_dephasing: t must be >= 0");
    const Complex free = std::exp(-kI * (omega01 * t));
    if (t == 0.0 || dq == 0.0) return free;

    detail::PanelPlan plan;
    plan.time_scale = t;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Ohmic>) {
                plan.cutoff = 50.0 * v.cutoff;
                plan.breakpoints = {v.cutoff, 5.0 * v.cutoff};
            } else if constexpr (std::is_same_v<T, StructuredPeak>) {
                plan.cutoff = 200.0 * v.omega;
                const double hw = kPi * v.kappa * v.omega;
                plan.breakpoints = {v.omega - 4 * hw, v.omega - hw, v.omega, v.omega + hw,
                                    v.omega + 4 * hw};
            } else {
                plan.cutoff = v.omega.back();
                plan.breakpoints = v.omega;
                plan.tail = false;
            }
        },
        sd);

    auto gamma_kernel = [&](double w) {
        if (w <= 0.0) return 0.0;
        const double x = 0.5 * w * t;
        const double s = std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        const double y = w / (2.0 * temperature);
        const double coth = y < 1e-6 ? 1.0 / y + y / 3.0 : (y > 30.0 ? 1.0 : 1.0 / std::tanh(y));
        return evaluate_sd(sd, w) * coth * 0.5 * t * t * s * s;
    };
    auto phi_kernel = [&](double w) {
        if (w <= 0.0) return 0.0;
        const double x = w * t;
        const double d = std::abs(x) < 1e-2
                             ? x / 6.0 - x * x * x / 120.0 + std::pow(x, 5) / 5040.0
                             : (x - std::sin(x)) / (x * x);
        return -evaluate_sd(sd, w) * t * t * d;
    };
    const double tol = 1e-9;
    const auto g = detail::integrate_half_line(gamma_kernel, plan, tol);
    const auto p = detail::integrate_half_line(phi_kernel, plan, tol);
    if (!detail::converged(g, tol) || !detail::converged(p, tol))
        throw IntegrationError("analytic_dephasing: quadrature did not converge");
    const double gamma = dq * dq * g.value / kPi;
    const double phi = dq * dq * p.value / kPi;
    return free * std::exp(Complex(-gamma, -phi));
}

}  // namespace quapi
