/**
 * @file
 * Brute-force dense-matrix references. Everything here builds explicit
 * 2^n x 2^n matrices with Kronecker products, so it is capped at small n and
 * never used for training.
 */
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "dano/model.hpp"

namespace dano {

using DenseMatrix = Eigen::MatrixXcd;

inline constexpr int oracle_max_qubits = 10;

namespace oracle {

inline void check_capacity(int n) {
    if (n < 1 || n > oracle_max_qubits)
        throw CapacityError("dense oracle supports 1.." + std::to_string(oracle_max_qubits) + " qubits, got " + std::to_string(n));
}

inline DenseMatrix identity(Eigen::Index d) { return DenseMatrix::Identity(d, d); }

inline DenseMatrix hadamard() {
    const double r = 1.0 / std::sqrt(2.0);
    DenseMatrix h(2, 2);
    h << r, r, r, -r;
    return h;
}

inline DenseMatrix ry(double phi) {
    DenseMatrix m(2, 2);
    m << std::cos(phi / 2), -std::sin(phi / 2), std::sin(phi / 2), std::cos(phi / 2);
    return m;
}

/// I (x) ... (x) g (x) ... (x) I with g on qubit q (qubit 1 leftmost).
inline DenseMatrix on_qubit(const DenseMatrix &g, int q, int n) {
    const DenseMatrix left = identity(Eigen::Index{1} << (q - 1));
    const DenseMatrix right = identity(Eigen::Index{1} << (n - q));
    return Eigen::kroneckerProduct(Eigen::kroneckerProduct(left, g).eval(), right).eval();
}

/// |0><0|_c (x) I + |1><1|_c (x) X_t
inline DenseMatrix cnot(int c, int t, int n) {
    DenseMatrix p0 = DenseMatrix::Zero(2, 2), p1 = DenseMatrix::Zero(2, 2), x(2, 2);
    p0(0, 0) = 1;
    p1(1, 1) = 1;
    x << 0, 1, 1, 0;
    return on_qubit(p0, c, n) + on_qubit(p1, c, n) * on_qubit(x, t, n);
}

/// g_1 (x) g_2 (x) ... (x) g_n
inline DenseMatrix tensor_all(const std::vector<DenseMatrix> &gates) {
    DenseMatrix m = identity(1);
    for (const auto &g : gates) m = Eigen::kroneckerProduct(m, g).eval();
    return m;
}

/// Matrix of the qubit permutation sending the qubit at position order[t]
/// (1-based) to position t+1: |b_{order[0]} b_{order[1]} ...> <- |b_1 ... b_n>.
inline DenseMatrix qubit_permutation(const std::vector<int> &order, int n) {
    const Eigen::Index dim = Eigen::Index{1} << n;
    DenseMatrix p = DenseMatrix::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        Eigen::Index j = 0;
        for (int t = 0; t < n; ++t) {
            const int bit = (i >> (n - order[static_cast<std::size_t>(t)])) & 1;
            j |= Eigen::Index{bit} << (n - 1 - t);
        }
        p(j, i) = 1;
    }
    return p;
}

} // namespace oracle

/// U(theta) V(x) as an explicit matrix.
inline DenseMatrix dense_circuit_matrix(std::span<const double> x, const CircuitParams &p, const ModelConfig &cfg) {
    const int n = cfg.qubits;
    oracle::check_capacity(n);
    if (static_cast<int>(x.size()) != n) throw ShapeError("oracle: input length != n");
    p.check_shape(cfg.layers, n);
    std::vector<DenseMatrix> hs(static_cast<std::size_t>(n), oracle::hadamard()), rs;
    for (int j = 0; j < n; ++j) rs.push_back(oracle::ry(x[static_cast<std::size_t>(j)]));
    DenseMatrix m = oracle::tensor_all(rs) * oracle::tensor_all(hs);
    DenseMatrix entangle = oracle::identity(Eigen::Index{1} << n);
    for (auto [c, t] : brickwork_pairs(n)) entangle = oracle::cnot(c, t, n) * entangle;
    for (int l = 0; l < cfg.layers; ++l) {
        std::vector<DenseMatrix> layer;
        for (int j = 0; j < n; ++j) layer.push_back(oracle::ry(p.at(l, j)));
        m = oracle::tensor_all(layer) * entangle * m;
    }
    return m;
}

inline double max_abs(const DenseMatrix &m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// <0| M^dag H M |0> with M = U(theta) V(x), evaluated literally.
inline double dense_expectation(std::span<const double> x, const CircuitParams &p, const DenseMatrix &h, const ModelConfig &cfg) {
    const Eigen::Index dim = Eigen::Index{1} << cfg.qubits;
    if (h.rows() != dim || h.cols() != dim) throw ShapeError("oracle: observable is not 2^n x 2^n");
    if (max_abs(h - h.adjoint()) > 1e-10) throw ValidationError("oracle: observable is not Hermitian");
    const DenseMatrix m = dense_circuit_matrix(x, p, cfg);
    const Eigen::VectorXcd psi = m.col(0);
    const cplx v = psi.dot(h * psi); // conjugates psi
    if (std::abs(v.imag()) > 1e-10) throw NumericalError("oracle: expectation has imaginary residue " + std::to_string(v.imag()));
    return v.real();
}

/// H~ acting on window w of n qubits, identity elsewhere. Increasing
/// contiguous windows are the literal I (x) H~ (x) I; any other window is that
/// product on reordered qubits, conjugated by the qubit permutation.
inline DenseMatrix embed_klocal(const DenseMatrix &h, const QubitWindow &w, int n) {
    oracle::check_capacity(n);
    w.check_fits(n);
    const auto k = w.width();
    if (h.rows() != (Eigen::Index{1} << k) || h.cols() != h.rows()) throw ShapeError("embed_klocal: matrix is not 2^k x 2^k");
    bool contiguous = true;
    for (int t = 1; t < k; ++t) contiguous = contiguous && w[static_cast<std::size_t>(t)] == w[0] + t;
    if (contiguous) {
        const DenseMatrix left = oracle::identity(Eigen::Index{1} << (w[0] - 1));
        const DenseMatrix right = oracle::identity(Eigen::Index{1} << (n - w[0] - k + 1));
        return Eigen::kroneckerProduct(Eigen::kroneckerProduct(left, h).eval(), right).eval();
    }
    // Window qubits first (in window order), the rest after in increasing order.
    std::vector<int> order = w.qubits();
    for (int q = 1; q <= n; ++q)
        if (std::ranges::find(order, q) == order.end()) order.push_back(q);
    const DenseMatrix p = oracle::qubit_permutation(order, n);
    const DenseMatrix front = Eigen::kroneckerProduct(h, oracle::identity(Eigen::Index{1} << (n - k))).eval();
    return p.adjoint() * front * p;
}

inline DenseMatrix embed_diagonal(const DiagonalObservable &o, int n) {
    DenseMatrix d = DenseMatrix::Zero(static_cast<Eigen::Index>(o.eigenvalues.size()), static_cast<Eigen::Index>(o.eigenvalues.size()));
    for (std::size_t m = 0; m < o.eigenvalues.size(); ++m) d(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)) = o.eigenvalues[m];
    return embed_klocal(d, o.window, n);
}

inline DenseMatrix embed_dense(const DenseObservable &o, int n) { return embed_klocal(unpack_hermitian(o), o.window, n); }

/// Largest singular value by block power iteration on M^dag M with a
/// Rayleigh-Ritz step on the block, so near-degenerate top singular values
/// do not stall it. Stops when the top Ritz residual ||A v - r v|| falls
/// below 1e-10 r.
inline double spectral_norm(const DenseMatrix &m, int max_iterations = 10000) {
    if (!m.allFinite()) throw ValidationError("spectral_norm: non-finite entries");
    if (m.size() == 0 || max_abs(m) == 0.0) return 0.0;
    const DenseMatrix a = m.adjoint() * m;
    const Eigen::Index d = a.cols(), b = std::min<Eigen::Index>(d, 6);
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> g;
    DenseMatrix q(d, b);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < b; ++j) q(i, j) = cplx(g(rng), g(rng));
    double residual = INFINITY, r = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        q = Eigen::HouseholderQR<DenseMatrix>(q).householderQ() * DenseMatrix::Identity(d, b);
        const DenseMatrix aq = a * q;
        const Eigen::SelfAdjointEigenSolver<DenseMatrix> ritz(q.adjoint() * aq);
        r = ritz.eigenvalues()(b - 1);
        if (r <= 0.0) return 0.0;
        const Eigen::VectorXcd y = ritz.eigenvectors().col(b - 1);
        residual = (aq * y - r * (q * y)).norm();
        if (residual <= 1e-10 * r) return std::sqrt(r);
        q = aq * ritz.eigenvectors();
    }
    throw NumericalError("spectral_norm: no convergence after " + std::to_string(max_iterations) + " iterations, residual " + std::to_string(residual));
}

struct BoundCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

/// lhs = ||U^dag L U - V^dag L V||, rhs = 2 ||L|| ||U - V||.
inline BoundCheck check_hermitian_bound(const DenseMatrix &u, const DenseMatrix &v, const std::vector<double> &lambda) {
    const Eigen::Index d = static_cast<Eigen::Index>(lambda.size());
    if (u.rows() != d || u.cols() != d || v.rows() != d || v.cols() != d) throw ShapeError("bound check: dimension mismatch");
    const DenseMatrix I = oracle::identity(d);
    if (max_abs(u.adjoint() * u - I) > 1e-10) throw ValidationError("bound check: U is not unitary");
    if (max_abs(v.adjoint() * v - I) > 1e-10) throw ValidationError("bound check: V is not unitary");
    DenseMatrix l = DenseMatrix::Zero(d, d);
    double lnorm = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        l(i, i) = lambda[static_cast<std::size_t>(i)];
        lnorm = std::max(lnorm, std::abs(lambda[static_cast<std::size_t>(i)]));
    }
    BoundCheck b;
    b.lhs = spectral_norm(u.adjoint() * l * u - v.adjoint() * l * v);
    b.rhs = 2.0 * lnorm * spectral_norm(u - v);
    b.holds = b.lhs <= b.rhs + 1e-9;
    return b;
}

/// Every output z_j evaluated through dense_expectation.
inline std::vector<double> oracle_forward(std::span<const double> x, const CircuitParams &p, const Observables &obs, const ModelConfig &cfg) {
    cfg.validate();
    std::vector<double> z;
    const int n = cfg.qubits;
    for (int j = 0; j < cfg.windows; ++j) {
        DenseMatrix h;
        if (cfg.mode == Mode::ano) {
            h = embed_dense(obs.dense[static_cast<std::size_t>(j)], n);
        } else if (cfg.mode == Mode::vqc) {
            h = embed_diagonal({{1.0, -1.0}, QubitWindow::cyclic(n, 1, j + 1)}, n);
        } else {
            h = embed_diagonal(obs.diagonal[static_cast<std::size_t>(j)], n);
        }
        z.push_back(dense_expectation(x, p, h, cfg));
    }
    return z;
}

} // namespace dano
