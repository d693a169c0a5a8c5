#pragma once

#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dano/model.hpp"

namespace dano {

/// Haar-like random pure state: normalized complex Gaussian amplitudes.
template <class Rng> StateVector random_state(int n, Rng &rng) {
    std::normal_distribution<double> g;
    std::vector<cplx> a(std::size_t{1} << n);
    double norm = 0.0;
    for (auto &v : a) {
        v = cplx(g(rng), g(rng));
        norm += std::norm(v);
    }
    for (auto &v : a) v /= std::sqrt(norm);
    return StateVector::from_amplitudes(n, std::move(a));
}

template <class Rng> Eigen::MatrixXcd random_gaussian_matrix(Eigen::Index d, Rng &rng) {
    std::normal_distribution<double> g;
    Eigen::MatrixXcd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = cplx(g(rng), g(rng));
    return m;
}

/// Haar unitary: Q from the QR factorization of a complex Gaussian matrix,
/// with the phases of R's diagonal moved into Q.
template <class Rng> Eigen::MatrixXcd random_unitary(Eigen::Index d, Rng &rng) {
    const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(random_gaussian_matrix(d, rng));
    Eigen::MatrixXcd q = qr.householderQ();
    const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < d; ++i) {
        const cplx ph = r(i, i) / std::abs(r(i, i));
        q.col(i) *= ph;
    }
    return q;
}

template <class Rng> Eigen::MatrixXcd random_hermitian(Eigen::Index d, Rng &rng) {
    const auto a = random_gaussian_matrix(d, rng);
    return (a + a.adjoint()) / 2.0;
}

template <class Rng> std::vector<double> random_vector(std::size_t len, double lo, double hi, Rng &rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(len);
    for (auto &x : v) x = u(rng);
    return v;
}

/// Random packed Hermitian on window w.
template <class Rng> DenseObservable random_dense_observable(const QubitWindow &w, Rng &rng) {
    const std::size_t K = w.local_dim();
    return {random_vector(K, -2.0, 2.0, rng), random_vector(K * (K - 1) / 2, -1.0, 1.0, rng),
            random_vector(K * (K - 1) / 2, -1.0, 1.0, rng), w};
}

} // namespace dano
