#include "quapi/system.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace quapi {

namespace {

void require_hermitian(const CMatrix& H, double tol, const char* what) {
    if (H.rows() != H.cols()) throw DomainError(std::string(what) + ": matrix must be square");
    const double dev = (H - H.adjoint()).cwiseAbs().maxCoeff();
    if (!(dev <= tol))
        throw DomainError(std::string(what) + ": matrix is not Hermitian (deviation " +
                          std::to_string(dev) + ")");
}

Eigen::MatrixXd oscillator_x(int n) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k + 1 < n; ++k) x(k, k + 1) = x(k + 1, k) = std::sqrt(double(k + 1));
    return x;
}

}  // namespace

CMatrix build_renormalized_hamiltonian(const CMatrix& H, const std::vector<double>& q,
                                       const SpectralDensity& sd) {
    if (H.rows() != H.cols() || static_cast<std::size_t>(H.rows()) != q.size())
        throw DomainError("renormalized hamiltonian: dimension mismatch between H and q");
    const double c = reorganization_energy(sd) / kPi;
    CMatrix Ha = H;
    for (std::size_t k = 0; k < q.size(); ++k) Ha(Eigen::Index(k), Eigen::Index(k)) -= c * q[k] * q[k];
    return Ha;
}

Propagators short_time_propagators(const CMatrix& H_a, double dt) {
    if (!(dt > 0.0)) throw DomainError("propagators: dt must be > 0");
    require_hermitian(H_a, 1e-10, "propagators");
    const CMatrix herm = 0.5 * (H_a + H_a.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(herm);
    if (es.info() != Eigen::Success) throw NumericalError("propagators: eigensolver failed");
    const auto& V = es.eigenvectors();
    Eigen::VectorXcd phase(V.cols());
    for (Eigen::Index k = 0; k < V.cols(); ++k) phase(k) = std::exp(-kI * (es.eigenvalues()(k) * dt));
    Propagators p;
    p.fwd = V * phase.asDiagonal() * V.adjoint();
    p.bwd = p.fwd.adjoint();
    return p;
}

SystemModel make_system(const CMatrix& H, std::vector<double> q, const SpectralDensity& sd,
                        double dt) {
    require_hermitian(H, 1e-10, "system");
    for (double v : q)
        if (!std::isfinite(v)) throw DomainError("system: coordinates must be finite");
    SystemModel s;
    s.M = static_cast<int>(H.rows());
    s.H = H;
    s.H_a = build_renormalized_hamiltonian(H, q, sd);
    s.q = std::move(q);
    s.dt = dt;
    auto p = short_time_propagators(s.H_a, dt);
    s.U_fwd = std::move(p.fwd);
    s.U_bwd = std::move(p.bwd);
    return s;
}

RCModel build_reaction_coordinate_model(const RCModelSpec& spec) {
    if (spec.n_vib < 1) throw DomainError("rc model: n_vib must be >= 1");
    if (!(spec.delta > 0.0) || !(spec.omega > 0.0))
        throw DomainError("rc model: delta and omega must be > 0");
    const int n = spec.n_vib;
    const Eigen::MatrixXd x = oscillator_x(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x);
    Eigen::VectorXd xval = es.eigenvalues();
    Eigen::MatrixXd V = es.eigenvectors();

    // Number operator and X in the X eigenbasis.
    Eigen::MatrixXd number = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) number(k, k) = k;
    const Eigen::MatrixXd number_dvr = V.transpose() * number * V;

    const int dim = 2 * n;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    for (int s = 0; s < 2; ++s) {
        const double sz = s == 0 ? 1.0 : -1.0;
        for (int a = 0; a < n; ++a) {
            H(s * n + a, s * n + a) += 0.5 * spec.bias * sz + spec.g * sz * xval(a);
            for (int b = 0; b < n; ++b) H(s * n + a, s * n + b) += spec.omega * number_dvr(a, b);
            H(s * n + a, (1 - s) * n + a) += 0.5 * spec.delta;
        }
    }

    RCModel m;
    m.H = H.cast<Complex>();
    m.vib_rotation = V.cast<Complex>();
    m.q.resize(static_cast<std::size_t>(dim));
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < n; ++a) m.q[static_cast<std::size_t>(s * n + a)] = n == 1 ? 0.0 : xval(a);
    return m;
}

SystemModel make_rc_system(const RCModelSpec& spec, const SpectralDensity& residual, double dt) {
    auto m = build_reaction_coordinate_model(spec);
    return make_system(m.H, m.q, residual, dt);
}

std::vector<double> rc_sigma_z(const RCModelSpec& spec) {
    std::vector<double> obs(static_cast<std::size_t>(2 * spec.n_vib), -1.0);
    for (int a = 0; a < spec.n_vib; ++a) obs[static_cast<std::size_t>(a)] = 1.0;
    return obs;
}

CMatrix rc_initial_state(const RCModel& model, const RCModelSpec& spec, double temperature) {
    const int n = spec.n_vib;
    CMatrix vib = CMatrix::Zero(n, n);
    if (temperature > 0.0) {
        double z = 0.0;
        for (int k = 0; k < n; ++k) z += std::exp(-spec.omega * k / temperature);
        for (int k = 0; k < n; ++k) vib(k, k) = std::exp(-spec.omega * k / temperature) / z;
    } else {
        vib(0, 0) = 1.0;
    }
    const CMatrix vib_dvr = model.vib_rotation.adjoint() * vib * model.vib_rotation;
    CMatrix rho = CMatrix::Zero(2 * n, 2 * n);
    rho.topLeftCorner(n, n) = vib_dvr;
    return rho;
}

std::vector<double> rc_spectrum(const RCModelSpec& spec) {
    const auto m = build_reaction_coordinate_model(spec);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m.H, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

double map_structured_to_rc(double alpha, double omega, double kappa) {
    if (!(kappa > 0.0)) throw DomainError("rc mapping: kappa must be > 0");
    if (!(alpha >= 0.0)) throw DomainError("rc mapping: alpha must be >= 0");
    return omega * std::sqrt(alpha / (8.0 * kappa));
}

double map_rc_to_structured(double g, double omega, double kappa) {
    if (!(kappa > 0.0)) throw DomainError("rc mapping: kappa must be > 0");
    if (!(omega > 0.0)) throw DomainError("rc mapping: omega must be > 0");
    return 8.0 * kappa * g * g / (omega * omega);
}

}  // namespace quapi
