#pragma once

#include <densenematic/tensor3.hpp>

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace densenematic {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kFourPi = 4.0 * std::numbers::pi;

struct QuadSpec {
    int n_u = 64;    // Gauss-Legendre count per smooth polar subinterval
    int n_phi = 128; // azimuthal count

    QuadSpec halved() const { return {std::max(2, n_u / 2), std::max(4, n_phi / 2)}; }
    QuadSpec scaled(int k) const { return {n_u * k, n_phi * k}; }
};

namespace detail {

struct GLRule {
    std::vector<double> x, w;  // on [-1, 1]
};

// Nodes by Newton iteration on the Legendre recurrence; cached per order.
inline const GLRule& gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: order must be positive");
    static std::map<int, GLRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    GLRule rule;
    rule.x.resize(n);
    rule.w.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.x[i] = -x;
        rule.x[n - 1 - i] = x;
        rule.w[i] = rule.w[n - 1 - i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
    return cache.emplace(n, std::move(rule)).first->second;
}

// Subintervals of [-1,1] where (a_minus_eta) + den*u^2 > 0. Panels narrower
// than kEdgeTol are dropped (their integrand carries a vanishing factor).
constexpr double kEdgeTol = 1e-8;

struct PanelSet {
    std::array<std::pair<double, double>, 2> iv{};
    int count = 0;

    void add(double lo, double hi) {
        if (hi - lo < kEdgeTol) return;
        iv[count++] = {lo, hi};
    }
};

inline PanelSet positive_panels(double a_minus_eta, double den) {
    PanelSet out;
    if (std::abs(den) < 1e-14 * std::max(1.0, std::abs(a_minus_eta))) {
        if (a_minus_eta > 0.0) out.add(-1.0, 1.0);
        return out;
    }
    if (den > 0.0) {
        if (a_minus_eta >= 0.0) {
            out.add(-1.0, 1.0);
        } else {
            const double t = -a_minus_eta / den;
            if (t < 1.0) {
                const double s = std::sqrt(t);
                out.add(-1.0, -s);
                out.add(s, 1.0);
            }
            // t >= 1: negative on the whole slice
        }
    } else {
        if (a_minus_eta <= 0.0) return out;
        const double t = a_minus_eta / (-den);
        if (t >= 1.0) {
            out.add(-1.0, 1.0);
        } else {
            const double s = std::sqrt(t);
            out.add(-s, s);
        }
    }
    return out;
}

}  // namespace detail

/// Gauss-Legendre rule on [a, b]; exact for polynomials of degree <= 2n-1.
struct IntervalRule {
    std::vector<double> nodes, weights;
    double a = -1.0, b = 1.0;
    int n = 0;

    IntervalRule() = default;
    IntervalRule(double lo, double hi, int count) : a(lo), b(hi), n(count) {
        const auto& gl = detail::gauss_legendre(count);
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        nodes.resize(count);
        weights.resize(count);
        for (int i = 0; i < count; ++i) {
            nodes[i] = mid + half * gl.x[i];
            weights[i] = half * gl.w[i];
        }
    }

    template <class F>
    auto integrate(F&& f) const {
        using R = decltype(f(0.0));
        R acc{};
        for (int i = 0; i < n; ++i) acc += weights[i] * f(nodes[i]);
        return acc;
    }
};

/// Product rule on the unit sphere: Gauss-Legendre in u = cos(theta) times a
/// uniform periodic rule in azimuth. Spectrally accurate for smooth
/// integrands; weights sum to 4*pi.
class SphereRule {
  public:
    explicit SphereRule(QuadSpec spec = {}) : spec_(spec) {
        const auto& gl = detail::gauss_legendre(spec.n_u);
        const double dphi = kTwoPi / spec.n_phi;
        nodes_.reserve(static_cast<std::size_t>(spec.n_u) * spec.n_phi);
        weights_.reserve(nodes_.capacity());
        for (int k = 0; k < spec.n_phi; ++k) {
            const double phi = dphi * k;
            const double cp = std::cos(phi), sp = std::sin(phi);
            for (int i = 0; i < spec.n_u; ++i) {
                const double u = gl.x[i];
                const double su = std::sqrt(std::max(0.0, 1.0 - u * u));
                nodes_.push_back({su * cp, su * sp, u});
                weights_.push_back(gl.w[i] * dphi);
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }
    const Vec3& node(std::size_t i) const { return nodes_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }
    const QuadSpec& spec() const { return spec_; }

    template <class F>
    auto integrate(F&& f) const {
        using R = decltype(f(nodes_[0]));
        R acc{};
        for (std::size_t i = 0; i < nodes_.size(); ++i) acc += weights_[i] * f(nodes_[i]);
        return acc;
    }

  private:
    QuadSpec spec_;
    std::vector<Vec3> nodes_;
    std::vector<double> weights_;
};

/// Quadrature rule restricted to the support set E_Q = {p : Qp.p > eta},
/// built in the eigenframe of Q. Writing the quadratic form at azimuth phi as
/// Qp.p = a(phi) + (q3 - a(phi)) u^2 with a(phi) = q1 cos^2 + q2 sin^2, the
/// polar integral is split analytically at u = +-sqrt((eta-a)/(q3-a)) so each
/// panel is smooth. The polar axis is chosen so that eta never crosses the
/// range of a(phi); the per-azimuth split location is then a smooth function
/// of phi and the periodic azimuthal rule keeps its spectral accuracy.
class SupportRule {
  public:
    SupportRule(const TracelessSym3& q, double eta, QuadSpec spec = {})
        : eta_(eta), spec_(spec) {
        const EigenFrame f = eig(q);
        const auto& v = f.eigenvalues;
        auto col = [&f](int j) -> Vec3 {
            return {f.rotation[0][j], f.rotation[1][j], f.rotation[2][j]};
        };
        // Equatorial pair must not straddle eta; cyclic choices keep the
        // frame right-handed.
        if (eta >= v[1]) {
            axes_ = {col(1), col(2), col(0)};
            q_diag_ = {v[1], v[2], v[0]};
        } else {
            axes_ = {col(0), col(1), col(2)};
            q_diag_ = {v[0], v[1], v[2]};
        }

        const auto& gl = detail::gauss_legendre(spec.n_u);
        const double dphi = kTwoPi / spec.n_phi;
        const std::size_t guess = static_cast<std::size_t>(spec.n_u) * spec.n_phi;
        px_.reserve(guess); py_.reserve(guess); pz_.reserve(guess);
        w_.reserve(guess); c_.reserve(guess); wc_.reserve(guess);
        pa2_.reserve(guess); pb2_.reserve(guess); pc2_.reserve(guess);

        for (int k = 0; k < spec.n_phi; ++k) {
            const double phi = dphi * k;
            const double cp = std::cos(phi), sp = std::sin(phi);
            const double a = q_diag_[0] * cp * cp + q_diag_[1] * sp * sp;
            const double den = q_diag_[2] - a;
            const auto panels = detail::positive_panels(a - eta, den);
            for (int pi = 0; pi < panels.count; ++pi) {
                const auto [lo, hi] = panels.iv[pi];
                const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
                for (int i = 0; i < spec.n_u; ++i) {
                    const double u = mid + half * gl.x[i];
                    const double wq = half * gl.w[i] * dphi;
                    const double su = std::sqrt(std::max(0.0, 1.0 - u * u));
                    const double f1 = su * cp, f2 = su * sp;
                    px_.push_back(axes_[0][0] * f1 + axes_[1][0] * f2 + axes_[2][0] * u);
                    py_.push_back(axes_[0][1] * f1 + axes_[1][1] * f2 + axes_[2][1] * u);
                    pz_.push_back(axes_[0][2] * f1 + axes_[1][2] * f2 + axes_[2][2] * u);
                    const double cc = std::max(0.0, (a - eta) + den * u * u);
                    w_.push_back(wq);
                    c_.push_back(cc);
                    wc_.push_back(wq * cc);
                    pa2_.push_back(f1 * f1);
                    pb2_.push_back(f2 * f2);
                    pc2_.push_back(u * u);
                }
            }
        }
    }

    std::size_t size() const { return w_.size(); }
    double eta() const { return eta_; }
    const QuadSpec& spec() const { return spec_; }

    Vec3 node(std::size_t i) const { return {px_[i], py_[i], pz_[i]}; }
    double weight(std::size_t i) const { return w_[i]; }
    /// Qp.p - eta at the node (nonnegative on the stored panels).
    double excess(std::size_t i) const { return c_[i]; }

    /// Squared components of the node in the internal frame (equatorial
    /// pair, then polar); used by the diagonal-frame dual solver.
    double frame_a2(std::size_t i) const { return pa2_[i]; }
    double frame_b2(std::size_t i) const { return pb2_[i]; }
    double frame_c2(std::size_t i) const { return pc2_[i]; }
    const std::array<Vec3, 3>& axes() const { return axes_; }
    const std::array<double, 3>& q_diag() const { return q_diag_; }

    // direct array views for solver loops
    const std::vector<double>& frame_a2s() const { return pa2_; }
    const std::vector<double>& frame_b2s() const { return pb2_; }
    const std::vector<double>& frame_c2s() const { return pc2_; }
    const std::vector<double>& plus_weights() const { return wc_; }

    /// Integral of g(p) * max(Qp.p - eta, 0) over the sphere.
    template <class G>
    auto integrate_plus(G&& g) const {
        using R = decltype(g(Vec3{}));
        R acc{};
        for (std::size_t i = 0; i < size(); ++i) acc += (w_[i] * c_[i]) * g(node(i));
        return acc;
    }

    /// Integral of g(p) over E_Q.
    template <class G>
    auto integrate_indicator(G&& g) const {
        using R = decltype(g(Vec3{}));
        R acc{};
        for (std::size_t i = 0; i < size(); ++i) acc += w_[i] * g(node(i));
        return acc;
    }

  private:
    double eta_;
    QuadSpec spec_;
    std::array<Vec3, 3> axes_;     // internal frame axes in world coordinates
    std::array<double, 3> q_diag_; // eigenvalues carried by those axes
    std::vector<double> px_, py_, pz_, w_, c_, wc_, pa2_, pb2_, pc2_;
};

/// Value plus a two-grid discrepancy estimate (result at the requested
/// resolution against a halved rule).
struct IntegralResult {
    double value = 0.0;
    double error_estimate = 0.0;
};

template <class G>
IntegralResult integrate_plus(const TracelessSym3& q, double eta, G&& g, QuadSpec spec = {}) {
    const SupportRule fine(q, eta, spec);
    const SupportRule coarse(q, eta, spec.halved());
    const double v = fine.integrate_plus(g);
    return {v, std::abs(v - coarse.integrate_plus(g))};
}

template <class G>
IntegralResult integrate_indicator(const TracelessSym3& q, double eta, G&& g, QuadSpec spec = {}) {
    const SupportRule fine(q, eta, spec);
    const SupportRule coarse(q, eta, spec.halved());
    const double v = fine.integrate_indicator(g);
    return {v, std::abs(v - coarse.integrate_indicator(g))};
}

/// Tensor-valued variants (componentwise application of the scalar rule).
template <class G>
TracelessSym3 integrate_plus_tensor(const TracelessSym3& q, double eta, G&& g, QuadSpec spec = {}) {
    return SupportRule(q, eta, spec).integrate_plus(g);
}

template <class G>
TracelessSym3 integrate_indicator_tensor(const TracelessSym3& q, double eta, G&& g,
                                         QuadSpec spec = {}) {
    return SupportRule(q, eta, spec).integrate_indicator(g);
}

inline TracelessSym3 second_moment_tensor(const Vec3& p) {
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = p[i] * p[j] - (i == j ? 1.0 / 3.0 : 0.0);
    return TracelessSym3::from_matrix(m);
}

/// (1/4pi) int (p.Ap) (p x p - I/3) dp, evaluated by quadrature. Equals
/// (2/15) A for traceless symmetric A.
inline TracelessSym3 fourth_moment_map(const TracelessSym3& a, QuadSpec spec = {}) {
    const SphereRule rule(spec);
    const Mat3 am = a.matrix();
    TracelessSym3 acc{};
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const Vec3& p = rule.node(i);
        const double pap = am[0][0] * p[0] * p[0] + am[1][1] * p[1] * p[1] +
                           am[2][2] * p[2] * p[2] +
                           2.0 * (am[0][1] * p[0] * p[1] + am[0][2] * p[0] * p[2] +
                                  am[1][2] * p[1] * p[2]);
        acc += (rule.weight(i) * pap) * second_moment_tensor(p);
    }
    return (1.0 / kFourPi) * acc;
}

/// 1-D rule for axially symmetric integrands: panels of [-1,1] on which
/// S((p.n)^2 - 1/3) - eta, i.e. (2S/3) P2(x) - eta, keeps one sign. The
/// sphere integral of an axisymmetric g is 2*pi times the line integral.
class LineSupportRule {
  public:
    LineSupportRule(double s, double eta, int n_u = 64) : s_(s), eta_(eta) {
        // quadratic in x: (a - eta) + den x^2 with a = -S/3, den = S
        const auto panels = detail::positive_panels(-s / 3.0 - eta, s);
        const auto& gl = detail::gauss_legendre(n_u);
        for (int pi = 0; pi < panels.count; ++pi) {
            const auto [lo, hi] = panels.iv[pi];
            const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
            for (int i = 0; i < n_u; ++i) {
                const double x = mid + half * gl.x[i];
                x_.push_back(x);
                w_.push_back(half * gl.w[i]);
                c_.push_back(std::max(0.0, s * (x * x - 1.0 / 3.0) - eta));
            }
        }
    }

    std::size_t size() const { return x_.size(); }
    double x(std::size_t i) const { return x_[i]; }
    double weight(std::size_t i) const { return w_[i]; }
    double excess(std::size_t i) const { return c_[i]; }

  private:
    double s_, eta_;
    std::vector<double> x_, w_, c_;
};

inline double legendre_p2(double x) { return 0.5 * (3.0 * x * x - 1.0); }

}  // namespace densenematic
