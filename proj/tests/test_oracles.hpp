// Test-only reference computations. Each one takes a different route from
// the library code it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dano/statevector.hpp"

namespace dano::testing {

/// Marginal by explicit projector sums: p_m = <psi| P_m |psi>, where P_m is
/// the diagonal 0/1 matrix of basis states whose window bits read m.
template <class T> std::vector<double> projector_marginal(std::span<const T> amps, int n, const QubitWindow &w) {
    const std::size_t K = w.local_dim();
    std::vector<double> p(K, 0.0);
    for (std::size_t m = 0; m < K; ++m) {
        std::vector<double> diag(amps.size(), 0.0);
        for (std::size_t i = 0; i < amps.size(); ++i) {
            bool match = true;
            for (int t = 0; t < w.width(); ++t) {
                const int bit_i = static_cast<int>((i >> (n - w[static_cast<std::size_t>(t)])) & 1);
                const int bit_m = static_cast<int>((m >> (w.width() - 1 - t)) & 1);
                match = match && bit_i == bit_m;
            }
            diag[i] = match ? 1.0 : 0.0;
        }
        for (std::size_t i = 0; i < amps.size(); ++i) p[m] += diag[i] * std::norm(std::complex<double>(amps[i]));
    }
    return p;
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations,
/// ascending, with eigenvectors as columns of `vectors`.
inline Eigen::VectorXd jacobi_eigen(Eigen::MatrixXd a, Eigen::MatrixXd *vectors = nullptr) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<std::pair<double, Eigen::Index>> order;
    for (Eigen::Index i = 0; i < n; ++i) order.emplace_back(a(i, i), i);
    std::sort(order.begin(), order.end());
    Eigen::VectorXd vals(n);
    Eigen::MatrixXd vecs(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        vals(i) = order[static_cast<std::size_t>(i)].first;
        vecs.col(i) = v.col(order[static_cast<std::size_t>(i)].second);
    }
    if (vectors) *vectors = vecs;
    return vals;
}

/// Central difference of f at params[i].
inline double central_difference(const std::function<double(const std::vector<double> &)> &f, std::vector<double> params, std::size_t i,
                                 double h = 1e-4) {
    const double x = params[i];
    params[i] = x + h;
    const double up = f(params);
    params[i] = x - h;
    const double down = f(params);
    return (up - down) / (2 * h);
}

/// Matrix of a state-vector operation, column b = op(|b>).
template <class Op> Eigen::MatrixXcd operation_matrix(int n, Op &&op) {
    const std::size_t dim = std::size_t{1} << n;
    Eigen::MatrixXcd g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t b = 0; b < dim; ++b) {
        std::vector<cplx> e(dim, 0.0);
        e[b] = 1.0;
        auto s = StateVector::from_amplitudes(n, e);
        op(s);
        for (std::size_t i = 0; i < dim; ++i) g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = s[i];
    }
    return g;
}

} // namespace dano::testing
