#pragma once

#include <densenematic/dual.hpp>
#include <densenematic/energy.hpp>
#include <densenematic/linalg.hpp>
#include <densenematic/quadrature.hpp>
#include <densenematic/tensor3.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace densenematic {

enum class Stability { minimum, saddle, maximum, degenerate };

inline const char* to_string(Stability s) {
    switch (s) {
        case Stability::minimum: return "min";
        case Stability::saddle: return "saddle";
        case Stability::maximum: return "max";
        case Stability::degenerate: return "degenerate";
    }
    return "?";
}

/// A critical point of J (or J_tau when tau is set).
struct CriticalPoint {
    TracelessSym3 q;
    TracelessSym3 lambda;
    double eta = 0.0;
    std::optional<double> tau;
    double energy = 0.0;
    double grad_norm = 0.0;
    std::array<double, 5> hessian_spectrum{};  // ascending
    Stability stability = Stability::degenerate;
};

struct StabilityReport {
    Stability stability = Stability::degenerate;
    std::array<double, 5> spectrum{};  // ascending
    int rotational_modes = 0;
};

struct ElResidual {
    double density_defect = 0.0;
    double q_moment_defect = 0.0;
    double lambda_moment_defect = 0.0;
};

// ---------------------------------------------------------------------------
// Euler-Lagrange residuals
// ---------------------------------------------------------------------------

/// The three defects of the Euler-Lagrange system at a solved dual state:
/// the density against its closed form (zero by construction), the Q-moment
/// equation, and the Lambda-moment equation (with the Q/tau term when the
/// thermal model is in force).
inline ElResidual el_residual(const DualState& state, std::optional<double> tau = {},
                              QuadSpec spec = {}) {
    ElResidual out;
    const SupportRule rule(state.q, state.eta, spec);

    for (std::size_t i = 0; i < rule.size(); i += 97) {
        const Vec3 p = rule.node(i);
        const double closed =
            std::exp(state.lambda.quad_form(p) - state.log_z) *
            std::max(state.q.quad_form(p) - state.eta, 0.0);
        out.density_defect = std::max(out.density_defect,
                                      std::abs(density_eval(state, p) - closed));
    }

    const Mat3 lm = state.lambda.matrix();
    Mat3 q_mom{}, l_mom{};
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const Vec3 p = rule.node(i);
        const double e = lm[0][0] * p[0] * p[0] + lm[1][1] * p[1] * p[1] +
                         lm[2][2] * p[2] * p[2] +
                         2.0 * (lm[0][1] * p[0] * p[1] + lm[0][2] * p[0] * p[2] +
                                lm[1][2] * p[1] * p[2]);
        const double tilt = std::exp(e - state.log_z);
        const double nu_q = rule.weight(i) * rule.excess(i) * tilt;  // f dp
        const double nu_l = rule.weight(i) * tilt;                   // f/(Qp.p-eta) dp
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) {
                q_mom[a][b] += nu_q * p[a] * p[b];
                l_mom[a][b] += nu_l * p[a] * p[b];
            }
    }
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
            q_mom[b][a] = q_mom[a][b];
            l_mom[b][a] = l_mom[a][b];
        }
    out.q_moment_defect = (state.q - TracelessSym3::from_matrix(q_mom)).norm();
    TracelessSym3 rhs = TracelessSym3::from_matrix(l_mom);
    if (tau) rhs += (1.0 / *tau) * state.q;
    out.lambda_moment_defect = (state.lambda - rhs).norm();
    return out;
}

// ---------------------------------------------------------------------------
// Stability classification
// ---------------------------------------------------------------------------

namespace detail {

inline TracelessSym3 full_gradient(const TracelessSym3& q, double eta,
                                   std::optional<double> tau, QuadSpec spec,
                                   const TracelessSym3* warm = nullptr) {
    const MacroContext ctx(q, eta, spec, warm);
    TracelessSym3 g = ctx.grad();
    if (tau) g -= (1.0 / *tau) * q;
    return g;
}

// Orthonormal basis of the rotation-orbit tangent space {[W, Q] : W skew},
// in 5-coordinates. Rank 0 for Q = 0, 2 for uniaxial Q, 3 for biaxial Q.
inline std::vector<std::array<double, 5>> orbit_tangent_basis(const TracelessSym3& q) {
    const Mat3 qm = q.matrix();
    std::vector<std::array<double, 5>> basis;
    const double scale = std::max(q.norm(), 1e-30);
    for (int k = 0; k < 3; ++k) {
        Mat3 w{};
        const int i = (k + 1) % 3, j = (k + 2) % 3;
        w[i][j] = 1.0;
        w[j][i] = -1.0;
        const Mat3 comm_m = [&] {
            Mat3 m{};
            for (int r = 0; r < 3; ++r)
                for (int s = 0; s < 3; ++s) {
                    double v = 0.0;
                    for (int t = 0; t < 3; ++t) v += w[r][t] * qm[t][s] - qm[r][t] * w[t][s];
                    m[r][s] = v;
                }
            return m;
        }();
        auto coords = TracelessSym3::from_matrix(comm_m).coords();
        // Gram-Schmidt against what we already have
        for (const auto& b : basis) {
            double pr = 0.0;
            for (int t = 0; t < 5; ++t) pr += coords[t] * b[t];
            for (int t = 0; t < 5; ++t) coords[t] -= pr * b[t];
        }
        double n = 0.0;
        for (int t = 0; t < 5; ++t) n += coords[t] * coords[t];
        n = std::sqrt(n);
        if (n > 1e-9 * scale) {
            for (int t = 0; t < 5; ++t) coords[t] /= n;
            basis.push_back(coords);
        }
    }
    return basis;
}

}  // namespace detail

/// Spectrum of the 5-D finite-difference Hessian of J (or J_tau) at a
/// critical point; eigenvalues whose eigenvectors lie in the tangent space
/// of the rotation orbit are frame modes and are excluded from the verdict.
/// Fourth-order differences of the analytic gradient keep the frame modes
/// resolvable at the 1e-6 threshold.
inline StabilityReport stability_classify(const TracelessSym3& q, double eta,
                                          std::optional<double> tau = {}, QuadSpec spec = {}) {
    require_in_domain(q, eta);
    double h = 2e-3;
    for (int shrink = 0; shrink < 12; ++shrink) {
        bool ok = true;
        for (int i = 0; i < 5 && ok; ++i)
            for (double o : {-2.0, -1.0, 1.0, 2.0}) {
                auto c = q.coords();
                c[i] += o * h;
                if (!in_domain_of_j(TracelessSym3(c), eta)) {
                    ok = false;
                    break;
                }
            }
        if (ok) break;
        h *= 0.5;
    }

    Mat5 hess{};
    const TracelessSym3 warm = detail::full_gradient(q, eta, tau, spec);  // prime the path
    (void)warm;
    for (int i = 0; i < 5; ++i) {
        std::array<std::array<double, 5>, 4> g;
        int gi = 0;
        for (double o : {-2.0, -1.0, 1.0, 2.0}) {
            auto c = q.coords();
            c[i] += o * h;
            g[gi++] = detail::full_gradient(TracelessSym3(c), eta, tau, spec).coords();
        }
        for (int j = 0; j < 5; ++j)
            hess[i][j] = (g[0][j] - 8.0 * g[1][j] + 8.0 * g[2][j] - g[3][j]) / (12.0 * h);
    }
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) hess[i][j] = hess[j][i] = 0.5 * (hess[i][j] + hess[j][i]);

    const auto es = sym_eigen<5>(hess);
    const auto tangent = detail::orbit_tangent_basis(q);

    StabilityReport rep;
    rep.spectrum = es.values;
    constexpr double kZeroTol = 1e-6;
    constexpr double kAngleTol = 1e-3;
    bool has_pos = false, has_neg = false, has_physical_zero = false;
    for (int k = 0; k < 5; ++k) {
        const double mu = es.values[k];
        if (std::abs(mu) <= kZeroTol) {
            // in the orbit tangent space?
            std::array<double, 5> res = es.vecs[k];
            for (const auto& b : tangent) {
                double pr = 0.0;
                for (int t = 0; t < 5; ++t) pr += res[t] * b[t];
                for (int t = 0; t < 5; ++t) res[t] -= pr * b[t];
            }
            double rn = 0.0;
            for (int t = 0; t < 5; ++t) rn += res[t] * res[t];
            if (std::sqrt(rn) <= kAngleTol) {
                ++rep.rotational_modes;
            } else {
                has_physical_zero = true;
            }
        } else if (mu > 0) {
            has_pos = true;
        } else {
            has_neg = true;
        }
    }
    if (has_physical_zero)
        rep.stability = Stability::degenerate;
    else if (has_pos && has_neg)
        rep.stability = Stability::saddle;
    else if (has_neg)
        rep.stability = Stability::maximum;
    else
        rep.stability = Stability::minimum;
    return rep;
}

// ---------------------------------------------------------------------------
// Biaxial critical point search (diagonal frame, 2 unknowns)
// ---------------------------------------------------------------------------

namespace detail {

inline TracelessSym3 from_diag_coords(double x, double y) {
    Mat3 m{};
    m[0][0] = x;
    m[1][1] = y;
    m[2][2] = -x - y;
    return TracelessSym3::from_matrix(m);
}

struct DiagResidual {
    double r1, r2;
    double norm() const { return std::sqrt(r1 * r1 + r2 * r2); }
};

inline DiagResidual diag_residual(double x, double y, double eta, std::optional<double> tau,
                                  QuadSpec spec) {
    const Mat3 g = full_gradient(from_diag_coords(x, y), eta, tau, spec).matrix();
    return {g[0][0] - g[2][2], g[1][1] - g[2][2]};
}

inline bool diag_in_domain(double x, double y, double eta) {
    return in_domain_of_j(from_diag_coords(x, y), eta);
}

}  // namespace detail

/// Newton search for a critical point of J (or J_tau) over the two diagonal
/// coordinates (q1, q2); the Jacobian is finite-differenced, steps are
/// halved until the iterate stays inside the open domain.
inline CriticalPoint find_critical_biaxial(double eta, std::array<double, 2> q_init,
                                           std::optional<double> tau = {}, QuadSpec spec = {}) {
    double x = q_init[0], y = q_init[1];
    if (!detail::diag_in_domain(x, y, eta))
        throw std::domain_error("find_critical_biaxial: initial point outside dom(J)");

    constexpr double kTol = 1e-9;
    auto res = detail::diag_residual(x, y, eta, tau, spec);
    bool converged = res.norm() <= kTol;
    for (int it = 0; it < 80 && !converged; ++it) {
        const double hj = 1e-6;
        const auto rxp = detail::diag_residual(x + hj, y, eta, tau, spec);
        const auto rxm = detail::diag_residual(x - hj, y, eta, tau, spec);
        const auto ryp = detail::diag_residual(x, y + hj, eta, tau, spec);
        const auto rym = detail::diag_residual(x, y - hj, eta, tau, spec);
        const double j11 = (rxp.r1 - rxm.r1) / (2 * hj), j12 = (ryp.r1 - rym.r1) / (2 * hj);
        const double j21 = (rxp.r2 - rxm.r2) / (2 * hj), j22 = (ryp.r2 - rym.r2) / (2 * hj);
        const double det = j11 * j22 - j12 * j21;
        double dx, dy;
        if (std::abs(det) > 1e-14) {
            dx = -(j22 * res.r1 - j12 * res.r2) / det;
            dy = -(j11 * res.r2 - j21 * res.r1) / det;
        } else {
            dx = -res.r1;
            dy = -res.r2;
        }
        double t = 1.0;
        for (int bt = 0; bt < 60 && !detail::diag_in_domain(x + t * dx, y + t * dy, eta); ++bt)
            t *= 0.5;
        detail::DiagResidual trial{};
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            trial = detail::diag_residual(x + t * dx, y + t * dy, eta, tau, spec);
            if (trial.norm() <= (1.0 - 0.25 * t) * res.norm() + 1e-14) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        x += t * dx;
        y += t * dy;
        res = trial;
        converged = res.norm() <= kTol;
    }

    const TracelessSym3 q = detail::from_diag_coords(x, y);
    const MacroContext ctx(q, eta, spec);
    CriticalPoint cp;
    cp.q = q;
    cp.lambda = ctx.state().lambda;
    cp.eta = eta;
    cp.tau = tau;
    cp.energy = ctx.value();
    if (tau) cp.energy -= q.norm() * q.norm() / (2.0 * *tau);
    TracelessSym3 g = ctx.grad();
    if (tau) g -= (1.0 / *tau) * q;
    cp.grad_norm = g.norm();
    if (!converged || cp.grad_norm > 1e-8) {
        DualState st = ctx.state();
        throw SolveFailure("find_critical_biaxial: residual stalled at " +
                               std::to_string(cp.grad_norm),
                           st);
    }
    const auto rep = stability_classify(q, eta, tau, spec);
    cp.hessian_spectrum = rep.spectrum;
    cp.stability = rep.stability;
    return cp;
}

// ---------------------------------------------------------------------------
// Global minimisation (deterministic multistart)
// ---------------------------------------------------------------------------

/// Least-energy critical point over a deterministic multistart: a 15x15 grid
/// on the diagonal-coordinate domain, uniaxial seeds just inside the
/// admissible S-interval, and the origin when admissible. Each start runs a
/// backtracking descent into its basin before the Newton polish, so the
/// result never exceeds any in-domain grid probe.
inline CriticalPoint global_minimize(double eta, std::optional<double> tau = {},
                                     QuadSpec spec = {}) {
    if (!(eta < 2.0 / 3.0))
        throw std::domain_error("global_minimize: no finite-energy states for eta >= 2/3");

    auto energy_of = [&](double x, double y) {
        const TracelessSym3 q = detail::from_diag_coords(x, y);
        const MacroContext ctx(q, eta, spec);
        double e = ctx.value();
        if (tau) e -= q.norm() * q.norm() / (2.0 * *tau);
        return e;
    };

    // probe grid
    struct Probe {
        double x, y, e;
    };
    std::vector<Probe> probes;
    for (int i = 0; i < 15; ++i) {
        for (int j = 0; j < 15; ++j) {
            const double x = -0.32 + (0.64 + 0.32) * i / 14.0;
            const double y = -0.32 + (0.64 + 0.32) * j / 14.0;
            if (!detail::diag_in_domain(x, y, eta)) continue;
            probes.push_back({x, y, energy_of(x, y)});
        }
    }
    // uniaxial seeds just inside the admissible interval, both signs
    std::vector<std::array<double, 2>> starts;
    const double s_edge = eta > 0.0 ? std::sqrt(1.5 * eta) : 0.0;
    for (double s : {s_edge + 0.02, s_edge + 0.15, 0.6, -(s_edge + 0.02), -(s_edge + 0.1), -0.4}) {
        if (s <= -0.5 || s >= 1.0) continue;
        const double x = 2.0 * s / 3.0, y = -s / 3.0;
        if (detail::diag_in_domain(x, y, eta)) starts.push_back({x, y});
    }
    if (detail::diag_in_domain(0.0, 0.0, eta)) starts.push_back({0.0, 0.0});
    // best probes seed further descents
    std::sort(probes.begin(), probes.end(), [](const Probe& a, const Probe& b) { return a.e < b.e; });
    for (std::size_t k = 0; k < probes.size() && k < 8; ++k)
        starts.push_back({probes[k].x, probes[k].y});

    auto descend = [&](double x, double y) {
        // backtracking gradient descent into the basin
        double e = energy_of(x, y);
        for (int it = 0; it < 120; ++it) {
            const auto r = detail::diag_residual(x, y, eta, tau, spec);
            if (r.norm() < 1e-4) break;
            double t = 0.25 / std::max(1.0, r.norm());
            bool moved = false;
            for (int bt = 0; bt < 50; ++bt) {
                const double nx = x - t * r.r1, ny = y - t * r.r2;
                if (detail::diag_in_domain(nx, ny, eta)) {
                    const double ne = energy_of(nx, ny);
                    if (ne < e - 1e-15) {
                        x = nx;
                        y = ny;
                        e = ne;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if (!moved) break;
        }
        return std::array<double, 2>{x, y};
    };

    std::optional<CriticalPoint> best;
    auto consider = [&](const CriticalPoint& cp) {
        if (!best || cp.energy < best->energy - 1e-14) best = cp;
    };
    for (const auto& st : starts) {
        try {
            const auto basin = descend(st[0], st[1]);
            const Mat3 qm = detail::from_diag_coords(basin[0], basin[1]).matrix();
            consider(find_critical_biaxial(eta, {qm[0][0], qm[1][1]}, tau, spec));
        } catch (const SolveFailure&) {
            // a start that stalls is simply dropped
        } catch (const std::domain_error&) {
        }
    }
    if (!best) throw std::runtime_error("global_minimize: no start converged");

    // the result must not exceed any probe; descend from offending probes
    for (int round = 0; round < 3; ++round) {
        const Probe* bad = nullptr;
        for (const auto& p : probes)
            if (p.e < best->energy - 1e-12) {
                bad = &p;
                break;
            }
        if (!bad) break;
        try {
            const auto basin = descend(bad->x, bad->y);
            consider(find_critical_biaxial(eta, {basin[0], basin[1]}, tau, spec));
        } catch (...) {
            break;
        }
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Uniaxial reduction
// ---------------------------------------------------------------------------

/// Output of the 1-D uniaxial solve at (S, eta): the energy J, the dual
/// multiplier l with Lambda = l (n x n - I/3), the normaliser, the
/// dimensionless pressure and the axis moments <x^2>, <x^4> of the optimal
/// density.
struct UniaxialResult {
    double s = 0.0;
    double eta = 0.0;
    double j = 0.0;
    double l = 0.0;
    double log_z = 0.0;
    double z = 0.0;
    double pstar = 0.0;
    double m2 = 0.0;
    double m4 = 0.0;
    double djds = 0.0;  // dJ/dS at (S, eta), from the gradient projection
    int iterations = 0;
    bool converged = false;
};

namespace detail {

// 1-D concave dual in the single multiplier l. The quadratic form of
// Q_S = S(n x n - I/3) along the axis is (2S/3) P2(x); the tilt is
// exp((2l/3) P2(x)).
class UniaxialDual {
  public:
    UniaxialDual(double s, double eta, int n_u) : s_(s), eta_(eta), rule_(s, eta, n_u) {
        const std::size_t n = rule_.size();
        p2_.resize(n);
        for (std::size_t i = 0; i < n; ++i) p2_[i] = legendre_p2(rule_.x(i));
    }

    struct Eval {
        double value, grad, hess_neg, log_z, mean_p2;
    };

    Eval eval(double l) const {
        const std::size_t n = rule_.size();
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double e = (2.0 * l / 3.0) * p2_[i];
            if (e > m) m = e;
        }
        if (!std::isfinite(m)) m = 0.0;
        double s0 = 0, s1 = 0, s2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double nu = rule_.weight(i) * rule_.excess(i) *
                              std::exp((2.0 * l / 3.0) * p2_[i] - m);
            s0 += nu;
            s1 += nu * p2_[i];
            s2 += nu * p2_[i] * p2_[i];
        }
        Eval ev;
        ev.log_z = std::log(kTwoPi) + m + std::log(s0);
        ev.value = (2.0 / 3.0) * l * s_ - ev.log_z;
        ev.mean_p2 = s1 / s0;
        ev.grad = (2.0 / 3.0) * (s_ - ev.mean_p2);
        ev.hess_neg = (4.0 / 9.0) * (s2 / s0 - ev.mean_p2 * ev.mean_p2);
        return ev;
    }

    // indicator-weighted sums for P* and dJ/dS, and plus-weighted axis moments
    void post(double l, double log_z, UniaxialResult& out) const {
        const std::size_t n = rule_.size();
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            m = std::max(m, (2.0 * l / 3.0) * p2_[i]);
        double plus0 = 0, ind0 = 0, ind1 = 0, x2 = 0, x4 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double tilt = std::exp((2.0 * l / 3.0) * p2_[i] - m);
            const double nu_plus = rule_.weight(i) * rule_.excess(i) * tilt;
            const double nu_ind = rule_.weight(i) * tilt;
            const double xx = rule_.x(i) * rule_.x(i);
            plus0 += nu_plus;
            ind0 += nu_ind;
            ind1 += nu_ind * p2_[i];
            x2 += nu_plus * xx;
            x4 += nu_plus * xx * xx;
        }
        out.pstar = ind0 / plus0;
        out.djds = (2.0 / 3.0) * (l - ind1 / plus0);
        out.m2 = x2 / plus0;
        out.m4 = x4 / plus0;
        (void)log_z;
    }

  private:
    double s_, eta_;
    LineSupportRule rule_;
    std::vector<double> p2_;
};

}  // namespace detail

/// J restricted to uniaxial tensors, through the 1-D reduction. Matches
/// j_value(uniaxial(S, e1), eta) to quadrature accuracy; l is the axis
/// multiplier of the dual maximiser.
inline UniaxialResult uniaxial_j(double s, double eta, int n_u = 64) {
    if (!(s > -0.5 && s < 1.0))
        throw std::domain_error("uniaxial_j: S outside (-1/2, 1)");
    if (!((2.0 / 3.0) * s * s > eta))
        throw std::domain_error("uniaxial_j: |Q_S|^2 <= eta");

    const detail::UniaxialDual prob(s, eta, n_u);
    double l = 0.0;
    auto ev = prob.eval(l);
    int it = 0;
    const double kGradScale = std::sqrt(2.0 / 3.0);  // |Q - moment| = kGradScale*|S - <P2>|
    for (; it < 200; ++it) {
        if (kGradScale * std::abs(s - ev.mean_p2) <= 1e-12) break;
        double d = ev.hess_neg > 0 ? ev.grad / ev.hess_neg : ev.grad;
        double t = 1.0;
        auto trial = ev;
        bool accepted = false;
        const double noise = 1e-12 * (1.0 + std::abs(ev.value));
        for (int bt = 0; bt < 60; ++bt) {
            trial = prob.eval(l + t * d);
            const bool value_ok = trial.value >= ev.value + 1e-4 * t * ev.grad * d - noise;
            const bool grad_ok = std::abs(trial.grad) <= (1.0 - 0.5 * t) * std::abs(ev.grad) + 1e-16;
            if (value_ok || grad_ok) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        l += t * d;
        ev = trial;
    }

    UniaxialResult out;
    out.s = s;
    out.eta = eta;
    out.l = l;
    out.log_z = ev.log_z;
    out.z = std::exp(ev.log_z);
    out.j = ev.value;
    out.iterations = it;
    out.converged = kGradScale * std::abs(s - ev.mean_p2) <= 1e-10;
    prob.post(l, ev.log_z, out);
    if (!out.converged) {
        DualState st;
        st.q = uniaxial(s, {1, 0, 0});
        st.eta = eta;
        st.grad_norm = kGradScale * std::abs(s - ev.mean_p2);
        throw SolveFailure("uniaxial_j: dual maximisation stalled", st);
    }
    return out;
}

/// DualState view of a uniaxial solve (axis e1), for residual checks.
inline DualState to_dual_state(const UniaxialResult& r) {
    DualState st;
    st.q = uniaxial(r.s, {1, 0, 0});
    st.eta = r.eta;
    st.lambda = uniaxial(r.l, {1, 0, 0});
    st.z = r.z;
    st.log_z = r.log_z;
    st.grad_norm = 0.0;
    st.converged = r.converged;
    return st;
}

// ---------------------------------------------------------------------------
// Branches
// ---------------------------------------------------------------------------

enum class BranchKind { isotropic, prolate, oblate, unstable_near_zero };

inline const char* to_string(BranchKind k) {
    switch (k) {
        case BranchKind::isotropic: return "isotropic";
        case BranchKind::prolate: return "prolate";
        case BranchKind::oblate: return "oblate";
        case BranchKind::unstable_near_zero: return "unstable_near_zero";
    }
    return "?";
}

struct BranchRecord {
    double eta = 0.0;
    double s = 0.0;
    double l = 0.0;
    double j = 0.0;
    Stability stability = Stability::degenerate;
    double pstar = 0.0;
    double m2 = 0.0;
};

struct BranchGap {
    double eta = 0.0;
    std::string reason;
};

struct Branch {
    BranchKind kind = BranchKind::isotropic;
    std::vector<BranchRecord> records;  // sorted by eta (then S)
    std::vector<BranchGap> gaps;
};

namespace detail {

inline double uniaxial_djds(double s, double eta, int n_u) { return uniaxial_j(s, eta, n_u).djds; }

// 1-D restricted stability from the second derivative of S -> J(S).
inline Stability uniaxial_stability(double s, double eta, int n_u) {
    const double h = 1e-4;
    const double d2 = (uniaxial_djds(s + h, eta, n_u) - uniaxial_djds(s - h, eta, n_u)) / (2 * h);
    if (std::abs(d2) <= 1e-6) return Stability::degenerate;
    return d2 > 0 ? Stability::minimum : Stability::maximum;
}

// Root of dJ/dS in (lo, hi) given a sign change; bisection (deterministic).
inline double bisect_djds(double lo, double hi, double flo, double eta, int n_u) {
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo < 1e-13) return mid;
        const double fm = uniaxial_djds(mid, eta, n_u);
        if (std::abs(fm) < 1e-13) return mid;
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

struct ScanHit {
    double s = 0.0;
    bool found = false;
};

// First sign change of dJ/dS along the traversal from lo to hi (either
// direction). A root is a restricted minimum when the derivative rises
// through zero with increasing S, which flips when traversing downward.
inline ScanHit scan_for_root(double lo, double hi, int samples, bool want_min, double eta,
                             int n_u) {
    ScanHit hit;
    const bool increasing = hi > lo;
    double prev_s = lo;
    double prev_d = 0.0;
    bool have_prev = false;
    try {
        prev_d = uniaxial_djds(lo, eta, n_u);
        have_prev = true;
    } catch (const SolveFailure&) {
    }
    for (int i = 1; i <= samples; ++i) {
        const double s = lo + (hi - lo) * i / samples;
        double d;
        try {
            d = uniaxial_djds(s, eta, n_u);
        } catch (const SolveFailure&) {
            have_prev = false;
            continue;
        }
        if (have_prev) {
            const bool crossing = (prev_d < 0 && d >= 0) || (prev_d > 0 && d <= 0);
            if (crossing) {
                const bool rises_with_s = increasing ? (prev_d < 0) : (prev_d > 0);
                if (rises_with_s == want_min) {
                    hit.s = increasing ? bisect_djds(prev_s, s, prev_d, eta, n_u)
                                       : bisect_djds(s, prev_s, d, eta, n_u);
                    hit.found = true;
                    return hit;
                }
            }
        }
        prev_s = s;
        prev_d = d;
        have_prev = true;
    }
    return hit;
}

}  // namespace detail

/// Trace one family of uniaxial critical points over an eta grid. Roots of
/// dJ/dS are located by scan + bisection on the analytic derivative
/// projection, warm-started from the previous grid point; grid points where
/// the bracket fails become gap entries.
inline Branch trace_branch(BranchKind kind, const std::vector<double>& eta_grid, int n_u = 64) {
    Branch br;
    br.kind = kind;
    std::optional<double> warm;

    auto push_record = [&](double eta, double s) {
        const auto r = uniaxial_j(s, eta, n_u);
        BranchRecord rec;
        rec.eta = eta;
        rec.s = s;
        rec.l = r.l;
        rec.j = r.j;
        rec.pstar = r.pstar;
        rec.m2 = r.m2;
        rec.stability = detail::uniaxial_stability(s, eta, n_u);
        br.records.push_back(rec);
    };

    for (const double eta : eta_grid) {
        switch (kind) {
            case BranchKind::isotropic: {
                if (eta >= 0.0) {
                    br.gaps.push_back({eta, "isotropic state inadmissible for eta >= 0"});
                    break;
                }
                const auto r = uniaxial_j(0.0, eta, n_u);
                BranchRecord rec;
                rec.eta = eta;
                rec.s = 0.0;
                rec.l = r.l;
                rec.j = r.j;
                rec.pstar = r.pstar;
                rec.m2 = r.m2;
                rec.stability = detail::uniaxial_stability(0.0, eta, n_u);
                br.records.push_back(rec);
                break;
            }
            case BranchKind::prolate: {
                if (eta < 0.0 || eta >= 2.0 / 3.0) {
                    br.gaps.push_back({eta, "prolate branch traced on 0 <= eta < 2/3"});
                    break;
                }
                const double lo0 = std::sqrt(1.5 * eta);
                const double lo = lo0 + std::max(1e-4, 1e-3 * (1.0 - lo0));
                const double hi = 1.0 - 1e-3;
                detail::ScanHit hit;
                if (warm && *warm > lo && *warm < hi) {
                    const double wlo = std::max(lo, *warm - 0.05), whi = std::min(hi, *warm + 0.05);
                    hit = detail::scan_for_root(wlo, whi, 10, true, eta, n_u);
                }
                if (!hit.found) hit = detail::scan_for_root(lo, hi, 64, true, eta, n_u);
                if (!hit.found) {
                    br.gaps.push_back({eta, "no bracket for dJ/dS = 0 in the prolate interval"});
                    warm.reset();
                    break;
                }
                warm = hit.s;
                push_record(eta, hit.s);
                break;
            }
            case BranchKind::oblate: {
                if (eta < 0.0 || eta >= 1.0 / 6.0) {
                    br.gaps.push_back({eta, "oblate branch traced on 0 <= eta < 1/6"});
                    break;
                }
                const double hi0 = -std::sqrt(1.5 * eta);
                const double hi = hi0 - std::max(1e-4, 1e-3 * (hi0 + 0.5));
                const double lo = -0.5 + 1e-3;
                detail::ScanHit hit;
                if (warm && *warm > lo && *warm < hi) {
                    const double wlo = std::max(lo, *warm - 0.05), whi = std::min(hi, *warm + 0.05);
                    hit = detail::scan_for_root(wlo, whi, 10, true, eta, n_u);
                }
                if (!hit.found) hit = detail::scan_for_root(lo, hi, 64, true, eta, n_u);
                if (!hit.found) {
                    br.gaps.push_back({eta, "no bracket for dJ/dS = 0 in the oblate interval"});
                    warm.reset();
                    break;
                }
                warm = hit.s;
                push_record(eta, hit.s);
                break;
            }
            case BranchKind::unstable_near_zero: {
                if (eta >= 0.0) {
                    br.gaps.push_back({eta, "unstable branch exists only for eta < 0"});
                    break;
                }
                // barrier maxima on both sides of the isotropic state
                const auto hit_p = detail::scan_for_root(1e-3, 0.95, 160, false, eta, n_u);
                const auto hit_o = detail::scan_for_root(-1e-3, -0.48, 160, false, eta, n_u);
                if (!hit_p.found && !hit_o.found) {
                    br.gaps.push_back({eta, "no uniaxial barrier maxima at this eta"});
                    break;
                }
                if (hit_o.found) push_record(eta, hit_o.s);
                if (hit_p.found) push_record(eta, hit_p.s);
                if (!hit_o.found || !hit_p.found)
                    br.gaps.push_back({eta, "barrier maximum found on one side only"});
                break;
            }
        }
    }
    std::sort(br.records.begin(), br.records.end(), [](const BranchRecord& a, const BranchRecord& b) {
        return a.eta < b.eta || (a.eta == b.eta && a.s < b.s);
    });
    return br;
}

/// Smallest |eta| below which the near-zero unstable pair no longer exists
/// (the barrier maxima merge with the prolate/oblate minima and vanish).
/// Located by bisection on existence; the model only guarantees existence on
/// a one-sided neighbourhood of zero, so the value is measured, not given.
inline double unstable_branch_onset(int n_u = 64, double eta_floor = -0.5, double tol = 1e-4) {
    auto exists = [&](double eta) {
        return detail::scan_for_root(1e-3, 0.95, 160, false, eta, n_u).found &&
               detail::scan_for_root(-1e-3, -0.48, 160, false, eta, n_u).found;
    };
    double hi = -1e-3;  // exists near zero
    if (!exists(hi)) return hi;
    double lo = eta_floor;
    if (exists(lo)) return lo;  // onset below the floor; report the floor
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (exists(mid) ? hi : lo) = mid;
    }
    return hi;
}

// ---------------------------------------------------------------------------
// Saturation diagnostics
// ---------------------------------------------------------------------------

struct MomentRow {
    double eta = 0.0;
    double s = 0.0;
    double m2 = 0.0;  // <(p.e)^2>
    double m4 = 0.0;  // <(p.e)^4>
};

/// Axis moments of the optimal density along a traced branch. Prolate
/// branches drive both moments to 1 (alignment onto +-e); oblate branches
/// drive <(p.e)^2> to 0 (concentration on the equator).
inline std::vector<MomentRow> saturation_diagnostics(const Branch& branch, int n_u = 64) {
    std::vector<MomentRow> rows;
    rows.reserve(branch.records.size());
    for (const auto& rec : branch.records) {
        const auto r = uniaxial_j(rec.s, rec.eta, n_u);
        rows.push_back({rec.eta, rec.s, r.m2, r.m4});
    }
    return rows;
}

}  // namespace densenematic
