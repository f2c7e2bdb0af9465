#pragma once

#include <densenematic/dual.hpp>
#include <densenematic/linalg.hpp>
#include <densenematic/quadrature.hpp>
#include <densenematic/tensor3.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace densenematic {

/// Shared rule + solved dual state for one (Q, eta); the macroscopic energy
/// and its first derivatives all come from this pair.
class MacroContext {
  public:
    MacroContext(const TracelessSym3& q, double eta, QuadSpec spec = {},
                 const TracelessSym3* warm_lambda = nullptr)
        : rule_(checked(q, eta), eta, spec), state_(solve_lambda(rule_, q, warm_lambda)) {}

    const SupportRule& rule() const { return rule_; }
    const DualState& state() const { return state_; }

    /// J(Q, eta) = F(Q, Lambda(Q)).
    double value() const { return dot(state_.lambda, state_.q) - state_.log_z; }

    /// dJ/dQ = Lambda - (1/Z) int_E exp(Lambda p.p) (p x p - I/3) dp.
    TracelessSym3 grad() const {
        const Mat3 lm = state_.lambda.matrix();
        Mat3 mom{};
        const std::size_t n = rule_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 p = rule_.node(i);
            const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                             lm[2][2] * p[2] * p[2] +
                             2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                    lm[1][2] * p[1] * p[2]);
            const double nu = rule_.weight(i) * std::exp(e - state_.log_z);
            for (int a = 0; a < 3; ++a)
                for (int b = a; b < 3; ++b) mom[a][b] += nu * p[a] * p[b];
        }
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) mom[b][a] = mom[a][b];
        return state_.lambda - TracelessSym3::from_matrix(mom);
    }

    /// dJ/deta = int_E f_Q / (Qp.p - eta) dp = (1/Z) int_E exp(Lambda p.p) dp.
    /// The integrand cancellation makes this the indicator integral of the
    /// exponential tilt; it is strictly positive.
    double deta() const {
        const Mat3 lm = state_.lambda.matrix();
        double s = 0.0;
        const std::size_t n = rule_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 p = rule_.node(i);
            const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                             lm[2][2] * p[2] * p[2] +
                             2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                    lm[1][2] * p[1] * p[2]);
            s += rule_.weight(i) * std::exp(e - state_.log_z);
        }
        return s;
    }

  private:
    static const TracelessSym3& checked(const TracelessSym3& q, double eta) {
        require_in_domain(q, eta);
        return q;
    }

    SupportRule rule_;
    DualState state_;
};

inline double j_value(const TracelessSym3& q, double eta, QuadSpec spec = {}) {
    require_in_domain(q, eta);
    return MacroContext(q, eta, spec).value();
}

inline TracelessSym3 j_grad(const TracelessSym3& q, double eta, QuadSpec spec = {}) {
    require_in_domain(q, eta);
    return MacroContext(q, eta, spec).grad();
}

inline double j_deta(const TracelessSym3& q, double eta, QuadSpec spec = {}) {
    require_in_domain(q, eta);
    return MacroContext(q, eta, spec).deta();
}

struct ThermalEval {
    double value = 0.0;
    TracelessSym3 grad;
};

/// J_tau(Q) = J(Q) - |Q|^2 / (2 tau); gradient dJ/dQ - Q / tau.
inline ThermalEval j_thermal(const TracelessSym3& q, double eta, double tau, QuadSpec spec = {}) {
    if (!(tau > 0.0)) throw std::domain_error("j_thermal: tau must be positive");
    require_in_domain(q, eta);
    const MacroContext ctx(q, eta, spec);
    const double n2 = q.norm() * q.norm();
    return {ctx.value() - n2 / (2.0 * tau), ctx.grad() - (1.0 / tau) * q};
}

/// The (15/2)(1 + 2/(15 eta))^-2 threshold curve for the thermal model;
/// diverges at eta = -2/15.
inline double tau_critical(double eta) {
    if (!(eta < 0.0)) throw std::domain_error("tau_critical: requires eta < 0");
    const double r = 1.0 + 2.0 / (15.0 * eta);
    if (r == 0.0) return std::numeric_limits<double>::infinity();
    return 7.5 / (r * r);
}

/// Coefficient of the identity in d2J/dQ2 at Q = 0: (15/2)(1 + 2/(15 eta))^2.
inline double hessian_at_zero_coefficient(double eta) {
    const double r = 1.0 + 2.0 / (15.0 * eta);
    return 7.5 * r * r;
}

/// tau at which the smallest eigenvalue of the J_tau Hessian at Q = 0
/// changes sign: the reciprocal of the Hessian coefficient. Below it the
/// isotropic state is a local maximum of J_tau, above it a local minimum.
inline double isotropic_flip_tau(double eta) {
    if (!(eta < 0.0)) throw std::domain_error("isotropic_flip_tau: requires eta < 0");
    const double c = hessian_at_zero_coefficient(eta);
    if (c == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / c;
}

struct HessianAtZero {
    Mat5 matrix{};
    double analytic_coefficient = 0.0;
    double max_rel_diag_dev = 0.0; // FD diagonal against the analytic multiple
    double max_offdiag = 0.0;
};

/// Finite-difference Hessian of J at Q = 0 (second-order central differences
/// of the analytic gradient, h = 1e-3), compared against the analytic
/// isotropic multiple of the identity.
inline HessianAtZero hessian_at_zero(double eta, QuadSpec spec = {}) {
    if (!(eta < 0.0)) throw std::domain_error("hessian_at_zero: requires eta < 0");
    const double h = 1e-3;
    Mat5 hess{};
    for (int i = 0; i < 5; ++i) {
        std::array<double, 5> cp{}, cm{};
        cp[i] = h;
        cm[i] = -h;
        const auto gp = j_grad(TracelessSym3(cp), eta, spec).coords();
        const auto gm = j_grad(TracelessSym3(cm), eta, spec).coords();
        for (int j = 0; j < 5; ++j) hess[i][j] = (gp[j] - gm[j]) / (2.0 * h);
    }
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j)
            hess[i][j] = hess[j][i] = 0.5 * (hess[i][j] + hess[j][i]);

    HessianAtZero out;
    out.matrix = hess;
    out.analytic_coefficient = hessian_at_zero_coefficient(eta);
    const double denom = std::max(std::abs(out.analytic_coefficient), 1e-12);
    for (int i = 0; i < 5; ++i) {
        out.max_rel_diag_dev =
            std::max(out.max_rel_diag_dev, std::abs(hess[i][i] - out.analytic_coefficient) / denom);
        for (int j = i + 1; j < 5; ++j)
            out.max_offdiag = std::max(out.max_offdiag, std::abs(hess[i][j]));
    }
    return out;
}

/// Maximum-entropy potential psi_s(Q) = min { int f ln f : f has Q-tensor Q },
/// through its dual max_lambda lambda.Q - ln int exp(lambda p.p) dp. Same
/// Newton machinery as the energy dual but with unit weight; blows up as
/// v_min(Q) approaches -1/3.
inline double singular_potential(const TracelessSym3& q, QuadSpec spec = {}) {
    if (!(v_min(q) > -1.0 / 3.0 + 1e-12))
        throw std::domain_error("singular_potential: eigenvalue constraint violated");
    const EigenFrame f = eig(q);
    const SphereRule rule(spec);

    const std::size_t n = rule.size();
    std::vector<double> a2(n), b2(n), c2(n), w(n);
    const Vec3 e1 = {f.rotation[0][0], f.rotation[1][0], f.rotation[2][0]};
    const Vec3 e2 = {f.rotation[0][1], f.rotation[1][1], f.rotation[2][1]};
    const Vec3 e3 = {f.rotation[0][2], f.rotation[1][2], f.rotation[2][2]};
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = rule.node(i);
        const double d1 = dot(p, e1), d2 = dot(p, e2), d3 = dot(p, e3);
        a2[i] = d1 * d1;
        b2[i] = d2 * d2;
        c2[i] = d3 * d3;
        w[i] = rule.weight(i);
    }
    detail::DiagonalDual prob;
    prob.target = f.eigenvalues;
    prob.n = n;
    prob.a2 = a2.data();
    prob.b2 = b2.data();
    prob.c2 = c2.data();
    prob.w = w.data();
    const auto res = detail::maximize_diagonal_dual(prob);
    if (!res.converged) {
        DualState st;
        st.q = q;
        st.grad_norm = res.grad_norm;
        st.iterations = res.iterations;
        throw SolveFailure("singular_potential: dual maximisation stalled", st);
    }
    const double lq = res.l1 * f.eigenvalues[0] + res.l2 * f.eigenvalues[1] +
                      (-res.l1 - res.l2) * f.eigenvalues[2];
    return lq - res.log_z;
}

/// Dimensionless pressure P* = dJ/deta; satisfies
/// P* >= 1/(|Q|^2 - eta) >= 1/(2/3 - eta) with equality in the first bound
/// at Q = 0.
inline double pressure_dimensionless(const TracelessSym3& q, double eta, QuadSpec spec = {}) {
    return j_deta(q, eta, spec);
}

class SaturationError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Material constants of the excluded-volume + attraction model. The packing
/// parameter eta(rho) = 2(rho c - 1)/(3 rho d) increases with density; the
/// saturation density is where it reaches 2/3, beyond which no configuration
/// has finite energy.
struct MaterialParams {
    double c;    // excluded-volume constant (volume units)
    double d;    // shape-anisotropy constant (volume units)
    double a;    // attraction offset
    double b;    // attraction strength (> 0)
    double big_u; // interaction scale (> 0)
    double k_bt; // thermal energy

    MaterialParams(double c_, double d_, double a_, double b_, double u_, double kbt_)
        : c(c_), d(d_), a(a_), b(b_), big_u(u_), k_bt(kbt_) {
        if (!(c > 0.0) || !(d > 0.0))
            throw std::domain_error("MaterialParams: c and d must be positive");
        if (!(3.0 * c - 2.0 * d > 0.0))
            throw std::domain_error("MaterialParams: requires d/(3c - 2d) > 0");
        if (!(b > 0.0) || !(big_u > 0.0))
            throw std::domain_error("MaterialParams: b and U must be positive");
        if (!(k_bt > 0.0)) throw std::domain_error("MaterialParams: k_BT must be positive");
    }

    double eta_of_rho(double rho) const {
        if (!(rho > 0.0)) throw std::domain_error("eta_of_rho: rho must be positive");
        return 2.0 * (rho * c - 1.0) / (3.0 * rho * d);
    }

    double tau_of_rho(double rho) const {
        if (!(rho > 0.0)) throw std::domain_error("tau_of_rho: rho must be positive");
        return 2.0 * k_bt / (rho * b * big_u);
    }

    /// Density at which eta(rho) reaches 2/3; +inf when it never does.
    double rho_saturation() const {
        if (c <= d) return std::numeric_limits<double>::infinity();
        return 1.0 / (c - d);
    }
};

/// Physical-units pressure P = (3 k_BT / (2 rho d)) P*(Q, eta(rho)).
inline double eos_pressure(const MaterialParams& mp, double rho, const TracelessSym3& q,
                           QuadSpec spec = {}) {
    if (!(rho > 0.0)) throw std::domain_error("eos_pressure: rho must be positive");
    if (rho >= mp.rho_saturation())
        throw SaturationError("eos_pressure: rho at or beyond the saturation density");
    const double eta = mp.eta_of_rho(rho);
    require_in_domain(q, eta);
    return 3.0 * mp.k_bt / (2.0 * rho * mp.d) * pressure_dimensionless(q, eta, spec);
}

}  // namespace densenematic
