#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "quapi/bath.hpp"
#include "support/oracles.hpp"

using namespace quapi;

namespace {

double rel(Complex a, Complex b) { return std::abs(a - b) / std::abs(b); }

Ohmic benchmark_bath() { return {1.0 / 16.0, 10.0}; }

std::function<Complex(double)> benchmark_correlation() {
    return [](double t) { return oracle::ohmic_correlation(1.0 / 16.0, 10.0, 0.2, t); };
}

}  // namespace

TEST_SUITE("bath") {

TEST_CASE("spectral densities") {
    CHECK(evaluate_sd(benchmark_bath(), 0.0) == 0.0);
    CHECK(evaluate_sd(benchmark_bath(), 3.0) == doctest::Approx(1.0 / 16.0 / M_PI * 3.0 * std::exp(-0.3)));

    const StructuredPeak peak{0.01, 2.0, 0.056};
    CHECK(evaluate_sd(peak, 2.0) ==
          doctest::Approx(0.01 * 2.0 / (2.0 * M_PI * M_PI * 0.056 * 0.056)).epsilon(1e-13));
    CHECK(evaluate_sd(peak, 0.0) == 0.0);
    CHECK_THROWS_AS(evaluate_sd(peak, -1e-3), DomainError);

    // Ohmic background: J(w)/w stays finite and positive as w -> 0
    const double slope_a = evaluate_sd(peak, 1e-4) / 1e-4;
    const double slope_b = evaluate_sd(peak, 1e-6) / 1e-6;
    CHECK(slope_a > 0.0);
    CHECK(slope_b == doctest::Approx(2.0 * 0.01).epsilon(1e-6));
    CHECK(slope_a == doctest::Approx(slope_b).epsilon(1e-6));
}

TEST_CASE("structured peak sits at the mode frequency") {
    const double kappa = 0.056, g = 0.18, Omega = 1.0;
    const StructuredPeak sd{8.0 * kappa * g * g / (Omega * Omega), Omega, kappa};
    double best = 0.0, arg = -1.0;
    int maxima = 0;
    double prev2 = -1.0, prev = -1.0;
    for (int k = 0; k <= 30000; ++k) {
        const double w = 3.0 * k / 30000.0;
        const double J = evaluate_sd(sd, w);
        if (J > best) best = J, arg = w;
        if (k >= 2 && prev > prev2 && prev > J) ++maxima;
        prev2 = prev;
        prev = J;
    }
    CHECK(maxima == 1);
    CHECK(arg >= 0.95);
    CHECK(arg <= 1.05);
}

TEST_CASE("tabulated densities") {
    const Tabulated tab{{0.0, 1.0, 3.0}, {0.0, 2.0, 1.0}};
    CHECK(evaluate_sd(tab, 0.5) == doctest::Approx(1.0));
    CHECK(evaluate_sd(tab, 2.0) == doctest::Approx(1.5));
    CHECK(evaluate_sd(tab, 3.5) == 0.0);
    CHECK_THROWS_AS(validate(Tabulated{{0.0, 2.0, 1.0}, {0.0, 1.0, 1.0}}), DomainError);
    CHECK_THROWS_AS(validate(Tabulated{{0.0, 1.0}, {0.0, -1.0}}), DomainError);

    const auto path = std::filesystem::temp_directory_path() / "quapi_tab_test.csv";
    {
        std::ofstream os(path);
        os << "omega,J\n0,0\n1,2\n3,1\n";
    }
    const Tabulated read = read_tabulated_csv(path);
    CHECK(read.omega == tab.omega);
    CHECK(read.value == tab.value);
    std::filesystem::remove(path);
}

TEST_CASE("reorganization energy") {
    CHECK(reorganization_energy(Ohmic{0.0, 5.0}) == 0.0);

    // gamma w_c / pi for the exponential cutoff
    const Ohmic cm{1.0 / 16.0, 2000.0};
    CHECK(reorganization_energy(cm) == doctest::Approx(2000.0 / 16.0 / M_PI).epsilon(1e-10));
    CHECK(reorganization_energy(cm) == doctest::Approx(39.7887).epsilon(1e-5));

    const StructuredPeak peak{0.01, 200.0, 0.056};
    const double ref = oracle::trapezoid_reorganization(peak, 2.0e5, 4000000);
    CHECK(std::abs(reorganization_energy(peak) - ref) / ref < 1e-8);

    // J(0) > 0 makes the integral diverge
    CHECK_THROWS_AS(reorganization_energy(Tabulated{{0.0, 1.0}, {1.0, 1.0}}), IntegrationError);
}

TEST_CASE("reorganization energy is linear in J") {
    const std::vector<SpectralDensity> cases{benchmark_bath(), StructuredPeak{0.02, 1.0, 0.056},
                                             Tabulated{{0.0, 0.5, 2.0}, {0.0, 1.0, 0.2}}};
    for (const auto& sd : cases)
        for (double a : {0.3, 2.0, 17.0}) {
            const double base = reorganization_energy(sd);
            CHECK(std::abs(reorganization_energy(scaled(sd, a)) - a * base) <= 1e-12 * a * base);
        }
}

TEST_CASE("bath correlation function") {
    CHECK(bath_correlation(Ohmic{0.0, 1.0}, 0.3, 1.2) == Complex{});
    CHECK_THROWS_AS(bath_correlation(benchmark_bath(), 0.0, 1.0), DomainError);

    const Complex c0 = bath_correlation(benchmark_bath(), 0.2, 0.0);
    CHECK(c0.imag() == 0.0);
    CHECK(c0.real() > 0.0);
    const Complex trap = oracle::trapezoid_correlation(benchmark_bath(), 0.2, 0.0, 500.0, 1000000);
    CHECK(std::abs(c0.real() - trap.real()) / trap.real() < 1e-7);

    for (double t : {0.0, 0.05, 0.3, 1.7, 6.0}) {
        const Complex ref = oracle::ohmic_correlation(1.0 / 16.0, 10.0, 0.2, t);
        CAPTURE(t);
        CHECK(rel(bath_correlation(benchmark_bath(), 0.2, t), ref) < 1e-9);
    }

    const StructuredPeak peak{0.02, 1.0, 0.056};
    CHECK(bath_correlation(peak, 1.0, 0.0).imag() == 0.0);
    for (double t : {0.0, 2.0, 9.0}) {
        const Complex ref = oracle::trapezoid_correlation(peak, 1.0, t, 3000.0, 6000000);
        CAPTURE(t);
        CHECK(rel(bath_correlation(peak, 1.0, t), ref) < 1e-6);
    }
}

TEST_CASE("eta table against windowed double integrals") {
    const double dt = 0.3;
    const EtaTable eta = compute_eta_table(benchmark_bath(), 0.2, dt, 6);
    const auto C = benchmark_correlation();
    const double h = 0.5 * dt;

    // self term of an interior point and of the first point
    CHECK(rel(eta.mid[0], oracle::window_integral(C, 0.0, dt, 0.0, dt, 128)) < 1e-8);
    CHECK(rel(eta.onset[0], oracle::window_integral(C, 0.0, h, 0.0, h, 128)) < 1e-8);
    for (int d : {1, 2, 5}) {
        CAPTURE(d);
        const double ti = d * dt;
        CHECK(rel(eta.mid[d], oracle::window_integral(C, ti - h, ti + h, -h, h, 256)) < 1e-8);
        CHECK(rel(eta.onset[d], oracle::window_integral(C, ti - h, ti + h, 0.0, h, 256)) < 1e-8);
        CHECK(rel(eta.terminal[d], oracle::window_integral(C, ti - h, ti, -h, h, 256)) < 1e-8);
        CHECK(rel(eta.onset_terminal[d], oracle::window_integral(C, ti - h, ti, 0.0, h, 256)) <
              1e-8);
    }
}

TEST_CASE("eta table invariants") {
    const EtaTable eta = compute_eta_table(benchmark_bath(), 0.2, 0.3, 5);
    for (std::size_t i = 1; i < 12; ++i) {
        CHECK(eta.coefficient(i, i, std::nullopt).real() > 0.0);
        for (std::size_t j = 1; j <= i; ++j) {
            CHECK(eta.coefficient(i, j, std::nullopt) == eta.coefficient(i + 1, j + 1, std::nullopt));
            CHECK(eta.coefficient(i, j, i + 3) == eta.coefficient(i + 1, j + 1, i + 4));
        }
        for (std::size_t j = 0; j + 5 <= i; ++j) {
            CHECK(eta.coefficient(i, j, std::nullopt) == Complex{});
            CHECK(eta.coefficient(i, j, i) == Complex{});
        }
    }
    CHECK(eta.coefficient(0, 0, std::nullopt).real() > 0.0);

    const EtaTable silent = compute_eta_table(Ohmic{0.0, 10.0}, 0.2, 0.3, 5);
    CHECK(silent.counterterm == 0.0);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j <= i; ++j) CHECK(silent.coefficient(i, j, 7) == Complex{});

    CHECK_THROWS_AS(compute_eta_table(benchmark_bath(), 0.2, 0.0, 5), DomainError);
    CHECK_THROWS_AS(compute_eta_table(benchmark_bath(), 0.2, 0.3, 0), DomainError);
}

TEST_CASE("influence increments multiply to the full double sum") {
    const EtaTable eta = compute_eta_table(benchmark_bath(), 0.2, 0.3, 8);
    const double q[2] = {0.5, -0.5};

    // every forward/backward pair of length <= 8, measured at the last point
    for (std::size_t L = 1; L <= 8; ++L) {
        double worst = 0.0;
        for (std::uint32_t bits = 0; bits < (1u << (2 * L)); ++bits) {
            std::vector<double> qf(L), qb(L);
            for (std::size_t k = 0; k < L; ++k) {
                qf[k] = q[(bits >> k) & 1u];
                qb[k] = q[(bits >> (L + k)) & 1u];
            }
            Complex product = 1.0;
            for (std::size_t i = 0; i < L; ++i)
                product *= influence_increment(eta, std::span(qf).first(i + 1),
                                               std::span(qb).first(i + 1), i, L - 1);
            const Complex ref = oracle::influence_double_sum(eta, qf, qb, L - 1);
            worst = std::max(worst, rel(product, ref));
        }
        CAPTURE(L);
        CHECK(worst < 1e-13);
    }

    std::vector<double> qf{0.5, -0.5, 0.5, 0.5}, qb{-0.5, -0.5, 0.5, 0.5};
    CHECK(influence_increment(eta, qf, qb, 3, std::nullopt) == Complex(1.0));

    const EtaTable zero = compute_eta_table(Ohmic{0.0, 1.0}, 0.2, 0.3, 8);
    qb[3] = -0.5;
    CHECK(influence_increment(zero, qf, qb, 3, 3) == Complex(1.0));
}

TEST_CASE("eta sidecar round trip and cache") {
    const EtaTable eta = compute_eta_table(StructuredPeak{0.02, 1.0, 0.056}, 1.0, 0.1, 7);
    const auto dir = std::filesystem::temp_directory_path() / "quapi_eta_cache_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_eta_sidecar(eta, dir / "x.eta");
    const EtaTable back = read_eta_sidecar(dir / "x.eta");
    CHECK(back.dk_max == eta.dk_max);
    CHECK(back.dt == eta.dt);
    CHECK(back.sd_hash == eta.sd_hash);
    CHECK(back.counterterm == eta.counterterm);
    CHECK(back.mid == eta.mid);
    CHECK(back.onset == eta.onset);
    CHECK(back.terminal == eta.terminal);
    CHECK(back.onset_terminal == eta.onset_terminal);

    std::ofstream(dir / "bad.eta") << "ETA0garbage";
    CHECK_THROWS(read_eta_sidecar(dir / "bad.eta"));

    const EtaTable first = cached_eta_table(benchmark_bath(), 0.2, 0.3, 4, dir);
    const EtaTable second = cached_eta_table(benchmark_bath(), 0.2, 0.3, 4, dir);
    CHECK(first.mid == second.mid);
    CHECK(eta_key_hash(benchmark_bath(), 0.2, 0.3, 4) != eta_key_hash(benchmark_bath(), 0.2, 0.3, 5));
    std::filesystem::remove_all(dir);
}

TEST_CASE("structured memory length") {
    // Resonance width 2 pi kappa Omega of 35 cm^-1 at Omega = 200 cm^-1, with
    // the mode frequency as the unit of energy and k_B T = 208.5 cm^-1.
    const double kappa = 35.0 / (2.0 * M_PI * 200.0);
    const double T = 208.5 / 200.0;
    const double dt = 0.228;
    const StructuredPeak sd{0.01, 1.0, kappa};
    const EtaTable eta = compute_eta_table(sd, T, dt, 300);
    const int L = memory_length(eta, 0.01);

    // eta_mid(d) = int_{-dt}^{dt} (dt - |u|) C(d dt + u) du by the trapezoid
    // rule on a dense frequency-domain C.
    auto mid = [&](int d) {
        const int n = 16;
        Complex s{};
        for (int k = -n; k <= n; ++k) {
            const double u = dt * k / n;
            const double w = (k == -n || k == n) ? 0.5 : 1.0;
            s += w * (dt - std::abs(u)) * oracle::trapezoid_correlation(sd, T, d * dt + u, 40.0, 200000);
        }
        return s * (dt / n);
    };
    const double ref0 = std::abs(eta.mid[0]);
    REQUIRE(L > 3);
    int expected = -1;
    for (int d = L - 3; d <= L + 3 && expected < 0; ++d)
        if (std::abs(mid(d)) < 0.01 * ref0) expected = d;
    CHECK(std::abs(L - expected) <= 1);
    CHECK(L >= 205);
    CHECK(L <= 251);
}

}  // TEST_SUITE
