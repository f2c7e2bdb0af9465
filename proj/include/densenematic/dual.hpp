#pragma once

#include <densenematic/linalg.hpp>
#include <densenematic/quadrature.hpp>
#include <densenematic/tensor3.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace densenematic {

/// A solved dual problem for one (Q, eta): the multiplier Lambda shares the
/// eigenframe of Q, Z normalises the optimal density
/// f_Q(p) = (1/Z) exp(Lambda p.p) max(Qp.p - eta, 0), and grad_norm is the
/// Frobenius norm of the moment residual Q - <p x p - I/3>_{f_Q}.
struct DualState {
    TracelessSym3 q;
    double eta = 0.0;
    TracelessSym3 lambda;
    double z = 0.0;
    double log_z = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

class SolveFailure : public std::runtime_error {
  public:
    SolveFailure(const std::string& what, DualState last)
        : std::runtime_error(what), last_state(std::move(last)) {}
    DualState last_state;
};

namespace detail {

// Concave maximisation of t . l - ln sum_i w_i exp(l . s_i) over diagonal
// coordinates l = (l1, l2, -l1-l2), where s_i are squared frame components.
// Shared by the dual of J (weights carry the max(Qp.p-eta,0) factor) and by
// the max-entropy potential (unit weights).
struct DiagonalDual {
    std::array<double, 3> target{};
    std::size_t n = 0;
    const double* a2 = nullptr;
    const double* b2 = nullptr;
    const double* c2 = nullptr;
    const double* w = nullptr;

    struct Eval {
        double value = 0.0;
        double log_z = 0.0;
        std::array<double, 2> grad{};
        std::array<double, 3> hess_neg{};  // (H11, H12, H22) of -d2F/dl2
        std::array<double, 3> moments{};
        double full_grad_norm = 0.0;
    };

    Eval eval(double l1, double l2) const {
        const double l3 = -l1 - l2;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double e = l1 * a2[i] + l2 * b2[i] + l3 * c2[i];
            if (w[i] > 0.0 && e > m) m = e;
        }
        if (!std::isfinite(m)) m = 0.0;
        double s0 = 0, sa = 0, sb = 0, sc = 0;
        double saa = 0, sbb = 0, scc = 0, sab = 0, sac = 0, sbc = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = l1 * a2[i] + l2 * b2[i] + l3 * c2[i];
            const double nu = w[i] * std::exp(e - m);
            const double a = a2[i], b = b2[i], c = c2[i];
            s0 += nu;
            sa += nu * a;
            sb += nu * b;
            sc += nu * c;
            saa += nu * a * a;
            sbb += nu * b * b;
            scc += nu * c * c;
            sab += nu * a * b;
            sac += nu * a * c;
            sbc += nu * b * c;
        }
        Eval out;
        out.log_z = m + std::log(s0);
        out.value = l1 * target[0] + l2 * target[1] + l3 * target[2] - out.log_z;
        const double ma = sa / s0, mb = sb / s0, mc = sc / s0;
        out.moments = {ma, mb, mc};
        out.grad = {target[0] - target[2] - (ma - mc), target[1] - target[2] - (mb - mc)};
        out.hess_neg = {
            (saa - 2 * sac + scc) / s0 - (ma - mc) * (ma - mc),
            (sab - sac - sbc + scc) / s0 - (ma - mc) * (mb - mc),
            (sbb - 2 * sbc + scc) / s0 - (mb - mc) * (mb - mc),
        };
        double g2 = 0.0;
        const std::array<double, 3> mm = {ma, mb, mc};
        for (int i = 0; i < 3; ++i) {
            const double gi = target[i] - (mm[i] - 1.0 / 3.0);
            g2 += gi * gi;
        }
        out.full_grad_norm = std::sqrt(g2);
        return out;
    }
};

struct DiagonalDualResult {
    double l1 = 0.0, l2 = 0.0;
    double log_z = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::array<double, 3> moments{};
};

// Newton with Armijo backtracking on the concave objective; gradient
// tolerance in the full 5-dimensional Frobenius metric. Near the optimum
// the value improvements fall below floating-point resolution of F, so a
// step is also accepted when it shrinks the gradient norm; iteration
// continues past the reported tolerance down to the noise floor so that
// distinct starting points land on the same maximiser.
inline DiagonalDualResult maximize_diagonal_dual(const DiagonalDual& prob, double l1 = 0.0,
                                                 double l2 = 0.0, double tol = 1e-10,
                                                 int max_iter = 200) {
    constexpr double kTargetTol = 1e-12;
    DiagonalDualResult res;
    auto ev = prob.eval(l1, l2);
    int it = 0;
    for (; it < max_iter; ++it) {
        if (ev.full_grad_norm <= kTargetTol) break;
        const double h11 = ev.hess_neg[0], h12 = ev.hess_neg[1], h22 = ev.hess_neg[2];
        const double ridge = 1e-14 * (h11 + h22) + 1e-300;
        const double a = h11 + ridge, b = h12, c = h22 + ridge;
        const double det = a * c - b * b;
        double d1, d2;
        if (det > 0.0) {
            d1 = (c * ev.grad[0] - b * ev.grad[1]) / det;
            d2 = (a * ev.grad[1] - b * ev.grad[0]) / det;
        } else {
            d1 = ev.grad[0];
            d2 = ev.grad[1];
        }
        double slope = ev.grad[0] * d1 + ev.grad[1] * d2;
        if (slope <= 0.0) {  // fall back to steepest ascent
            d1 = ev.grad[0];
            d2 = ev.grad[1];
            slope = d1 * d1 + d2 * d2;
        }
        double t = 1.0;
        DiagonalDual::Eval trial = ev;
        bool accepted = false;
        const double noise = 1e-12 * (1.0 + std::abs(ev.value));
        for (int bt = 0; bt < 60; ++bt) {
            trial = prob.eval(l1 + t * d1, l2 + t * d2);
            const bool value_ok = trial.value >= ev.value + 1e-4 * t * slope - noise;
            const bool grad_ok =
                trial.full_grad_norm <= (1.0 - 0.5 * t) * ev.full_grad_norm + 1e-15;
            if (value_ok || grad_ok) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // at the floating-point noise floor
        l1 += t * d1;
        l2 += t * d2;
        ev = trial;
    }
    res.l1 = l1;
    res.l2 = l2;
    res.log_z = ev.log_z;
    res.grad_norm = ev.full_grad_norm;
    res.iterations = it;
    res.moments = ev.moments;
    res.converged = ev.full_grad_norm <= tol;
    return res;
}

inline TracelessSym3 diag_in_axes(const std::array<Vec3, 3>& axes,
                                  const std::array<double, 3>& d) {
    Mat3 m{};
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m[i][j] += d[k] * axes[k][i] * axes[k][j];
    return TracelessSym3::from_matrix(m);
}

}  // namespace detail

/// F(Q, lambda) = lambda . Q - ln int exp(lambda p.p) max(Qp.p - eta, 0) dp.
/// Concave in lambda for fixed Q.
inline double dual_objective(const SupportRule& rule, const TracelessSym3& q,
                             const TracelessSym3& lambda) {
    const Mat3 lm = lambda.matrix();
    double m = -std::numeric_limits<double>::infinity();
    const std::size_t n = rule.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = rule.node(i);
        const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                         lm[2][2] * p[2] * p[2] +
                         2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                lm[1][2] * p[1] * p[2]);
        if (e > m) m = e;
    }
    double s0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = rule.node(i);
        const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                         lm[2][2] * p[2] * p[2] +
                         2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                lm[1][2] * p[1] * p[2]);
        s0 += rule.weight(i) * rule.excess(i) * std::exp(e - m);
    }
    return dot(lambda, q) - (m + std::log(s0));
}

inline void require_in_domain(const TracelessSym3& q, double eta) {
    if (!in_domain_of_j(q, eta)) throw std::domain_error("(Q, eta) outside dom(J)");
}

inline double dual_objective(const TracelessSym3& q, const TracelessSym3& lambda, double eta,
                             QuadSpec spec = {}) {
    require_in_domain(q, eta);
    return dual_objective(SupportRule(q, eta, spec), q, lambda);
}

/// Gradient of F in lambda: Q - <p x p - I/3> under the lambda-tilted
/// density (1/Z) exp(lambda p.p) max(Qp.p - eta, 0).
inline TracelessSym3 dual_grad(const SupportRule& rule, const TracelessSym3& q,
                               const TracelessSym3& lambda) {
    const Mat3 lm = lambda.matrix();
    const std::size_t n = rule.size();
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = rule.node(i);
        const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                         lm[2][2] * p[2] * p[2] +
                         2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                lm[1][2] * p[1] * p[2]);
        if (e > m) m = e;
    }
    double s0 = 0.0;
    Mat3 mom{};
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = rule.node(i);
        const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                         lm[2][2] * p[2] * p[2] +
                         2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                lm[1][2] * p[1] * p[2]);
        const double nu = rule.weight(i) * rule.excess(i) * std::exp(e - m);
        s0 += nu;
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) mom[a][b] += nu * p[a] * p[b];
    }
    Mat3 avg{};
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) avg[a][b] = avg[b][a] = mom[a][b] / s0;
    return q - TracelessSym3::from_matrix(avg);
}

inline TracelessSym3 dual_grad(const TracelessSym3& q, const TracelessSym3& lambda, double eta,
                               QuadSpec spec = {}) {
    require_in_domain(q, eta);
    return dual_grad(SupportRule(q, eta, spec), q, lambda);
}

/// Covariance of p x p - I/3 under the lambda-tilted density, as a 5x5
/// operator in the orthonormal coordinates of the traceless subspace.
/// Strictly positive definite; the Hessian of F in lambda is its negative.
inline Mat5 dual_hess(const SupportRule& rule, const TracelessSym3& lambda) {
    const Mat3 lm = lambda.matrix();
    const std::size_t n = rule.size();
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = rule.node(i);
        const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                         lm[2][2] * p[2] * p[2] +
                         2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                lm[1][2] * p[1] * p[2]);
        if (e > m) m = e;
    }
    double s0 = 0.0;
    std::array<double, 5> first{};
    Mat5 second{};
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = rule.node(i);
        const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                         lm[2][2] * p[2] * p[2] +
                         2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                lm[1][2] * p[1] * p[2]);
        const double nu = rule.weight(i) * rule.excess(i) * std::exp(e - m);
        const auto t = second_moment_tensor(p).coords();
        s0 += nu;
        for (int a = 0; a < 5; ++a) {
            first[a] += nu * t[a];
            for (int b = a; b < 5; ++b) second[a][b] += nu * t[a] * t[b];
        }
    }
    Mat5 cov{};
    for (int a = 0; a < 5; ++a)
        for (int b = a; b < 5; ++b)
            cov[a][b] = cov[b][a] = second[a][b] / s0 - (first[a] / s0) * (first[b] / s0);
    return cov;
}

inline Mat5 dual_hess(const TracelessSym3& q, const TracelessSym3& lambda, double eta,
                      QuadSpec spec = {}) {
    require_in_domain(q, eta);
    return dual_hess(SupportRule(q, eta, spec), lambda);
}

/// Maximises F(Q, .) over the traceless subspace. The maximiser shares the
/// eigenframe of Q, so the search runs over the two diagonal coordinates of
/// that frame; the full 5-dimensional gradient norm is the convergence
/// metric (tolerance 1e-10).
inline DualState solve_lambda(const SupportRule& rule, const TracelessSym3& q,
                              const TracelessSym3* warm_lambda = nullptr) {
    detail::DiagonalDual prob;
    prob.target = rule.q_diag();
    prob.n = rule.size();
    prob.a2 = rule.frame_a2s().data();
    prob.b2 = rule.frame_b2s().data();
    prob.c2 = rule.frame_c2s().data();
    prob.w = rule.plus_weights().data();

    double l1 = 0.0, l2 = 0.0;
    if (warm_lambda) {
        const auto& ax = rule.axes();
        const Mat3 lm = warm_lambda->matrix();
        auto diag_of = [&](const Vec3& e) {
            return dot(e, matvec(lm, e));
        };
        l1 = diag_of(ax[0]);
        l2 = diag_of(ax[1]);
        const double l3 = diag_of(ax[2]);
        const double mean = (l1 + l2 + l3) / 3.0;
        l1 -= mean;
        l2 -= mean;
    }

    const auto res = detail::maximize_diagonal_dual(prob, l1, l2);
    DualState st;
    st.eta = rule.eta();
    st.lambda = detail::diag_in_axes(rule.axes(), {res.l1, res.l2, -res.l1 - res.l2});
    st.log_z = res.log_z;
    st.z = std::exp(res.log_z);
    st.grad_norm = res.grad_norm;
    st.iterations = res.iterations;
    st.converged = res.converged;
    st.q = q;
    if (!st.converged)
        throw SolveFailure("dual maximisation did not reach gradient tolerance", st);
    return st;
}

inline DualState solve_lambda(const TracelessSym3& q, double eta, QuadSpec spec = {},
                              const TracelessSym3* warm_lambda = nullptr) {
    require_in_domain(q, eta);
    return solve_lambda(SupportRule(q, eta, spec), q, warm_lambda);
}

/// f_Q(p) = (1/Z) exp(Lambda p.p) max(Qp.p - eta, 0).
inline double density_eval(const DualState& state, const Vec3& p) {
    const double c = state.q.quad_form(p) - state.eta;
    if (c <= 0.0) return 0.0;
    return std::exp(state.lambda.quad_form(p) - state.log_z) * c;
}

}  // namespace densenematic
