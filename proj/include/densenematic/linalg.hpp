#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace densenematic {

template <std::size_t N>
using SymMat = std::array<std::array<double, N>, N>;

using Mat5 = SymMat<5>;

template <std::size_t N>
struct SymEigen {
    std::array<double, N> values;              // ascending
    std::array<std::array<double, N>, N> vecs; // vecs[k] is the k-th eigenvector
};

/// Cyclic Jacobi for small symmetric matrices.
template <std::size_t N>
SymEigen<N> sym_eigen(SymMat<N> a) {
    std::array<std::array<double, N>, N> v{};
    for (std::size_t i = 0; i < N; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < N; ++p)
            for (std::size_t q = p + 1; q < N; ++q) off += std::abs(a[p][q]);
        if (off < 1e-15) break;
        for (std::size_t p = 0; p + 1 < N; ++p) {
            for (std::size_t q = p + 1; q < N; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < N; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < N; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < N; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    SymEigen<N> out{};
    std::array<std::size_t, N> idx{};
    for (std::size_t i = 0; i < N; ++i) idx[i] = i;
    for (std::size_t i = 0; i + 1 < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j)
            if (a[idx[j]][idx[j]] < a[idx[i]][idx[i]]) std::swap(idx[i], idx[j]);
    for (std::size_t k = 0; k < N; ++k) {
        out.values[k] = a[idx[k]][idx[k]];
        for (std::size_t i = 0; i < N; ++i) out.vecs[k][i] = v[i][idx[k]];
    }
    return out;
}

}  // namespace densenematic
