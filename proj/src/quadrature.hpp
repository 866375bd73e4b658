#pragma once

// Adaptive Gauss-Kronrod panels over [0, inf). Private to the library.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

namespace quapi::detail {

struct PanelPlan {
    double cutoff = 0.0;               // panels cover [0, cutoff]
    std::vector<double> breakpoints;   // extra panel edges inside (0, cutoff)
    double time_scale = 0.0;           // largest time argument of cos/sin
    bool tail = true;                  // add the mapped [cutoff, inf) piece
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    double l1 = 0.0;
};

inline std::vector<double> panel_edges(const PanelPlan& plan) {
    std::vector<double> edges{0.0, plan.cutoff};
    for (double b : plan.breakpoints)
        if (b > 0.0 && b < plan.cutoff) edges.push_back(b);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    // At most about one oscillation of cos(w * time_scale) per panel.
    double width = plan.cutoff / 32.0;
    if (plan.time_scale > 0.0) width = std::min(width, 2.0 * 3.14159265358979 / plan.time_scale);
    std::vector<double> out{edges.front()};
    for (std::size_t k = 1; k < edges.size(); ++k) {
        const double a = edges[k - 1];
        const double b = edges[k];
        const auto pieces = static_cast<std::size_t>(std::ceil((b - a) / width));
        for (std::size_t p = 1; p <= pieces; ++p)
            out.push_back(p == pieces ? b : a + (b - a) * double(p) / double(pieces));
    }
    return out;
}

// [c, inf) mapped onto (0, 1] by w = c / y. Fine for integrands that decay
// at least like 1/w^2 and do not oscillate quickly there.
template <class F>
QuadResult mapped_tail(F& f, double c, double rel_tol) {
    using boost::math::quadrature::gauss_kronrod;
    auto g = [&](double y) { return y > 0.0 ? f(c / y) * c / (y * y) : 0.0; };
    QuadResult r;
    r.value = gauss_kronrod<double, 61>::integrate(g, 0.0, 1.0, 15, rel_tol * 1e-2, &r.error, &r.l1);
    return r;
}

// int_c^inf g(w) cos(w t) dw, or sin with `sine`, for a smooth decaying g.
// Uses cos(t (c + u)) = cos(tc) cos(tu) - sin(tc) sin(tu) and Ooura's
// double-exponential rules on [0, inf).
template <class G>
QuadResult fourier_tail(G& g, double c, double t, bool sine, double rel_tol) {
    static thread_local boost::math::quadrature::ooura_fourier_cos<double> fc;
    static thread_local boost::math::quadrature::ooura_fourier_sin<double> fs;
    auto shifted = [&](double u) { return g(c + u); };
    const auto [ic, ec] = fc.integrate(shifted, t);
    const auto [is, es] = fs.integrate(shifted, t);
    const double cc = std::cos(c * t), sc = std::sin(c * t);
    QuadResult r;
    r.value = sine ? sc * ic + cc * is : cc * ic - sc * is;
    // both estimates are relative
    r.error = ec * std::abs(ic) + es * std::abs(is);
    auto magnitude = [&](double w) { return std::abs(g(w)); };
    r.l1 = mapped_tail(magnitude, c, rel_tol).value;
    return r;
}

// weight * cos(freq w), or sin with `sine`
struct Wave {
    double freq;
    double weight;
    bool sine;
};

// int_c^inf g(w) sum_k wave_k(w) dw, one Fourier rule per wave.
template <class G>
QuadResult wave_tail(G& g, double c, std::initializer_list<Wave> waves, double rel_tol) {
    QuadResult r;
    for (const Wave& w : waves) {
        if (w.freq == 0.0 && w.sine) continue;
        const QuadResult t = w.freq == 0.0 ? mapped_tail(g, c, rel_tol)
                                           : fourier_tail(g, c, w.freq, w.sine, rel_tol);
        r.value += w.weight * t.value;
        r.error += std::abs(w.weight) * t.error;
        r.l1 += std::abs(w.weight) * t.l1;
    }
    return r;
}

template <class F, class Tail>
QuadResult integrate_half_line(F&& f, const PanelPlan& plan, double rel_tol, Tail&& tail) {
    using boost::math::quadrature::gauss_kronrod;
    QuadResult r;
    const auto edges = panel_edges(plan);
    for (std::size_t k = 1; k < edges.size(); ++k) {
        double err = 0.0;
        double l1 = 0.0;
        r.value += gauss_kronrod<double, 61>::integrate(f, edges[k - 1], edges[k], 12,
                                                        rel_tol * 1e-2, &err, &l1);
        r.error += err;
        r.l1 += l1;
    }
    if (plan.tail) {
        const QuadResult t = tail(plan.cutoff);
        r.value += t.value;
        r.l1 += t.l1;
        // a tail far below the tolerance does not enter the error budget
        if (t.l1 > rel_tol * r.l1) r.error += t.error;
    }
    return r;
}

template <class F>
QuadResult integrate_half_line(F&& f, const PanelPlan& plan, double rel_tol) {
    return integrate_half_line(f, plan, rel_tol, [&](double c) { return mapped_tail(f, c, rel_tol); });
}

inline bool converged(const QuadResult& r, double rel_tol) {
    return r.error <= rel_tol * std::max(r.l1, std::numeric_limits<double>::min()) ||
           r.error < 1e-300;
}

}  // namespace quapi::detail
