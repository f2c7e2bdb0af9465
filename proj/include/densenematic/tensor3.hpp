#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace densenematic {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return {a[0] / n, a[1] / n, a[2] / n};
}

inline Mat3 mat3_identity() {
    return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 3; ++j) r[i][j] += a[i][k] * b[k][j];
    return r;
}

inline Mat3 transposed(const Mat3& a) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = a[j][i];
    return r;
}

inline Vec3 matvec(const Mat3& a, const Vec3& x) {
    Vec3 r{};
    for (int i = 0; i < 3; ++i) r[i] = a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2];
    return r;
}

inline double det3(const Mat3& a) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
           a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

/// A symmetric traceless 3x3 tensor stored as 5 coordinates in an
/// orthonormal basis of the traceless-symmetric subspace, so that the
/// Frobenius inner product is the plain dot product of coordinates and
/// the trace is zero by construction.
class TracelessSym3 {
  public:
    TracelessSym3() : c_{} {}
    explicit TracelessSym3(const std::array<double, 5>& coords) : c_(coords) {}

    /// Projects the symmetric part of m onto the traceless subspace.
    static TracelessSym3 from_matrix(const Mat3& m) {
        const double m01 = 0.5 * (m[0][1] + m[1][0]);
        const double m02 = 0.5 * (m[0][2] + m[2][0]);
        const double m12 = 0.5 * (m[1][2] + m[2][1]);
        TracelessSym3 q;
        q.c_[0] = (2.0 * m[2][2] - m[0][0] - m[1][1]) / kSqrt6;
        q.c_[1] = (m[0][0] - m[1][1]) / kSqrt2;
        q.c_[2] = kSqrt2 * m01;
        q.c_[3] = kSqrt2 * m02;
        q.c_[4] = kSqrt2 * m12;
        return q;
    }

    const std::array<double, 5>& coords() const { return c_; }

    Mat3 matrix() const {
        Mat3 m{};
        const double d0 = c_[0] / kSqrt6;
        m[0][0] = -d0 + c_[1] / kSqrt2;
        m[1][1] = -d0 - c_[1] / kSqrt2;
        m[2][2] = 2.0 * d0;
        m[0][1] = m[1][0] = c_[2] / kSqrt2;
        m[0][2] = m[2][0] = c_[3] / kSqrt2;
        m[1][2] = m[2][1] = c_[4] / kSqrt2;
        return m;
    }

    /// p . Q p for a (not necessarily unit) vector p.
    double quad_form(const Vec3& p) const {
        const Mat3 m = matrix();
        return m[0][0] * p[0] * p[0] + m[1][1] * p[1] * p[1] + m[2][2] * p[2] * p[2] +
               2.0 * (m[0][1] * p[0] * p[1] + m[0][2] * p[0] * p[2] + m[1][2] * p[1] * p[2]);
    }

    double norm() const {
        return std::sqrt(c_[0] * c_[0] + c_[1] * c_[1] + c_[2] * c_[2] + c_[3] * c_[3] +
                         c_[4] * c_[4]);
    }

    TracelessSym3& operator+=(const TracelessSym3& o) {
        for (int i = 0; i < 5; ++i) c_[i] += o.c_[i];
        return *this;
    }
    TracelessSym3& operator-=(const TracelessSym3& o) {
        for (int i = 0; i < 5; ++i) c_[i] -= o.c_[i];
        return *this;
    }
    TracelessSym3& operator*=(double s) {
        for (int i = 0; i < 5; ++i) c_[i] *= s;
        return *this;
    }

    friend TracelessSym3 operator+(TracelessSym3 a, const TracelessSym3& b) { return a += b; }
    friend TracelessSym3 operator-(TracelessSym3 a, const TracelessSym3& b) { return a -= b; }
    friend TracelessSym3 operator*(double s, TracelessSym3 a) { return a *= s; }
    friend TracelessSym3 operator*(TracelessSym3 a, double s) { return a *= s; }
    friend TracelessSym3 operator-(TracelessSym3 a) { return a *= -1.0; }

    friend double dot(const TracelessSym3& a, const TracelessSym3& b) {
        double s = 0.0;
        for (int i = 0; i < 5; ++i) s += a.c_[i] * b.c_[i];
        return s;
    }

  private:
    static constexpr double kSqrt2 = 1.4142135623730950488;
    static constexpr double kSqrt6 = 2.4494897427831780982;
    std::array<double, 5> c_;
};

/// Q = S (n x n - I/3). S may lie outside (-1/2, 1); admissibility is a
/// separate check.
inline TracelessSym3 uniaxial(double s, const Vec3& n) {
    const double nn = dot(n, n);
    if (std::abs(nn - 1.0) > 1e-12) throw std::invalid_argument("uniaxial: n must be a unit vector");
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = s * (n[i] * n[j] - (i == j ? 1.0 / 3.0 : 0.0));
    return TracelessSym3::from_matrix(m);
}

/// Eigenvalues sorted descending; columns of rotation are the matching
/// eigenvectors, det(rotation) = +1.
struct EigenFrame {
    std::array<double, 3> eigenvalues;
    Mat3 rotation;
};

namespace detail {

// Analytic eigenvalues of a symmetric traceless 3x3 matrix (trigonometric
// form of the characteristic cubic). Returned descending.
inline std::array<double, 3> eigenvalues_analytic(const Mat3& m) {
    const double p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    const double p2 =
        m[0][0] * m[0][0] + m[1][1] * m[1][1] + m[2][2] * m[2][2] + 2.0 * p1;
    if (p2 < 1e-300) return {0.0, 0.0, 0.0};
    const double p = std::sqrt(p2 / 6.0);
    double r = det3(m) / (2.0 * p * p * p);
    r = std::min(1.0, std::max(-1.0, r));
    const double phi = std::acos(r) / 3.0;
    const double v1 = 2.0 * p * std::cos(phi);
    const double v3 = 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    return {v1, -v1 - v3, v3};
}

// Cyclic Jacobi diagonalization; robust for (nearly) degenerate spectra.
inline void jacobi3(Mat3 a, std::array<double, 3>& vals, Mat3& vecs) {
    vecs = mat3_identity();
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-300) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                Mat3 r = mat3_identity();
                r[p][p] = c;
                r[q][q] = c;
                r[p][q] = s;
                r[q][p] = -s;
                a = matmul(transposed(r), matmul(a, r));
                a[p][q] = a[q][p] = 0.0;
                vecs = matmul(vecs, r);
            }
        }
        if (off < 1e-15) break;
    }
    vals = {a[0][0], a[1][1], a[2][2]};
}

}  // namespace detail

inline EigenFrame eig(const TracelessSym3& q) {
    const Mat3 m = q.matrix();
    std::array<double, 3> vals = detail::eigenvalues_analytic(m);
    const double scale = std::max({std::abs(vals[0]), std::abs(vals[2]), 1e-30});

    Mat3 r;
    const double gap = std::min(vals[0] - vals[1], vals[1] - vals[2]);
    if (scale < 1e-14) {
        return {{0.0, 0.0, 0.0}, mat3_identity()};
    }
    if (gap < 1e-4 * scale) {
        // Near-degenerate: Jacobi resolves the frame to machine precision.
        detail::jacobi3(m, vals, r);
        // sort descending, keeping columns attached
        std::array<int, 3> idx = {0, 1, 2};
        for (int i = 0; i < 2; ++i)
            for (int j = i + 1; j < 3; ++j)
                if (vals[idx[j]] > vals[idx[i]]) std::swap(idx[i], idx[j]);
        Mat3 rs{};
        std::array<double, 3> vs{};
        for (int k = 0; k < 3; ++k) {
            vs[k] = vals[idx[k]];
            for (int i = 0; i < 3; ++i) rs[i][k] = r[i][idx[k]];
        }
        vals = vs;
        r = rs;
    } else {
        // Well separated: eigenvector of v is spanned by the columns of
        // (M - v_a I)(M - v_b I) (Cayley-Hamilton).
        auto eigvec = [&m](double va, double vb) {
            Mat3 a = m, b = m;
            for (int i = 0; i < 3; ++i) {
                a[i][i] -= va;
                b[i][i] -= vb;
            }
            const Mat3 prod = matmul(a, b);
            Vec3 best{};
            double bn = -1.0;
            for (int j = 0; j < 3; ++j) {
                const Vec3 col = {prod[0][j], prod[1][j], prod[2][j]};
                const double n = dot(col, col);
                if (n > bn) {
                    bn = n;
                    best = col;
                }
            }
            return normalized(best);
        };
        const Vec3 e1 = eigvec(vals[1], vals[2]);
        Vec3 e3 = eigvec(vals[0], vals[1]);
        // re-orthogonalize against e1 before completing the frame
        const double pr = dot(e3, e1);
        e3 = normalized({e3[0] - pr * e1[0], e3[1] - pr * e1[1], e3[2] - pr * e1[2]});
        const Vec3 e2 = cross(e3, e1);
        for (int i = 0; i < 3; ++i) {
            r[i][0] = e1[i];
            r[i][1] = e2[i];
            r[i][2] = e3[i];
        }
    }

    if (det3(r) < 0.0) {
        for (int i = 0; i < 3; ++i) r[i][2] = -r[i][2];
    }
    // exact tracelessness of the reported spectrum
    const double mean = (vals[0] + vals[1] + vals[2]) / 3.0;
    return {{vals[0] - mean, vals[1] - mean, vals[2] - mean}, r};
}

inline double v_min(const TracelessSym3& q) {
    return detail::eigenvalues_analytic(q.matrix())[2];
}

/// dom(J) membership: v_min(Q) > -1/3 and |Q|^2 > eta, both strict.
/// A point exactly on the eigenvalue wall counts as outside; a 1e-12
/// exclusion band makes that stable under rounding.
inline bool in_domain_of_j(const TracelessSym3& q, double eta) {
    const double n = q.norm();
    if (!(n * n > eta)) return false;
    return v_min(q) > -1.0 / 3.0 + 1e-12;
}

inline TracelessSym3 rotated(const TracelessSym3& q, const Mat3& r) {
    return TracelessSym3::from_matrix(matmul(r, matmul(q.matrix(), transposed(r))));
}

}  // namespace densenematic
