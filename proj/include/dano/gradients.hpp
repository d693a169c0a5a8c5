/**
 * @file
 * Derivatives of the output vector z.
 *
 * z_j is linear in its observable, so observable gradients are read off the
 * window marginal (diagonal) or reduced density matrix (dense). Circuit
 * angles have two routes with the same contract: the two-point shift rule
 * (reference, 2 L n forward passes) and an adjoint sweep (one backward sweep
 * per output).
 */
#pragma once

#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "dano/engine.hpp"
#include "dano/readout.hpp"

namespace dano {

/// dz_j / dtheta_i laid out [layer][wire][output].
struct ThetaJacobian {
    int layers = 0;
    int qubits = 0;
    int outputs = 0;
    std::vector<double> values;

    ThetaJacobian() = default;
    ThetaJacobian(int l, int n, int m)
        : layers(l), qubits(n), outputs(m),
          values(static_cast<std::size_t>(l) * static_cast<std::size_t>(n) * static_cast<std::size_t>(m), 0.0) {}

    double &at(int l, int j, int o) { return values[index(l, j, o)]; }
    double at(int l, int j, int o) const { return values[index(l, j, o)]; }

private:
    std::size_t index(int l, int j, int o) const {
        return (static_cast<std::size_t>(l) * static_cast<std::size_t>(qubits) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(outputs) +
               static_cast<std::size_t>(o);
    }
};

struct GradientBundle {
    ThetaJacobian d_theta;
    std::vector<std::vector<double>> d_lambda;                ///< m x 2^k (vqc/dano)
    std::optional<std::vector<std::vector<double>>> d_dense; ///< m x K^2 (ano)
};

/// dz/dlambda for a diagonal observable on window w: the window marginal.
template <Amplitude T> std::vector<double> grad_lambda(const BasicStateVector<T> &s, const QubitWindow &w) {
    return marginal_probabilities(s, w);
}

/// Gradient of tr(rho_w H~) in packed order (c_ii, a_ij, b_ij):
/// dz/dc_ii = rho_ii, dz/da_ij = 2 Re rho_ij, dz/db_ij = 2 Im rho_ij.
inline std::vector<double> packed_gradient_from_rdm(const Eigen::MatrixXcd &rho) {
    const auto K = rho.rows();
    const std::size_t k = static_cast<std::size_t>(K);
    const std::size_t upper = k * (k - 1) / 2;
    std::vector<double> g(k + 2 * upper);
    std::size_t t = 0;
    for (Eigen::Index i = 0; i < K; ++i) {
        g[static_cast<std::size_t>(i)] = rho(i, i).real();
        for (Eigen::Index j = i + 1; j < K; ++j, ++t) {
            g[k + t] = 2.0 * rho(i, j).real();
            g[k + upper + t] = 2.0 * rho(i, j).imag();
        }
    }
    return g;
}

template <Amplitude T>
std::vector<double> grad_dense_observable(const BasicStateVector<T> &s, const QubitWindow &w) {
    return packed_gradient_from_rdm(reduced_density_matrix(s, w));
}

namespace detail {

template <Amplitude T>
ThetaJacobian shift_jacobian(std::span<const double> x, const CircuitParams &p, const Observables &obs,
                             const ModelConfig &cfg) {
    ThetaJacobian jac(cfg.layers, cfg.qubits, cfg.windows);
    CircuitParams shifted = p;
    constexpr double shift = std::numbers::pi / 2;
    for (int l = 0; l < cfg.layers; ++l) {
        for (int j = 0; j < cfg.qubits; ++j) {
            const double orig = p.at(l, j);
            shifted.at(l, j) = orig + shift;
            const auto plus = forward<T>(x, shifted, obs, cfg);
            shifted.at(l, j) = orig - shift;
            const auto minus = forward<T>(x, shifted, obs, cfg);
            shifted.at(l, j) = orig;
            for (int o = 0; o < cfg.windows; ++o)
                jac.at(l, j, o) = 0.5 * (plus[static_cast<std::size_t>(o)] - minus[static_cast<std::size_t>(o)]);
        }
    }
    return jac;
}

template <Amplitude T>
ThetaJacobian adjoint_jacobian(std::span<const double> x, const CircuitParams &p, const Observables &obs,
                               const ModelConfig &cfg) {
    const Readout readout(cfg);
    readout.check(obs);
    CircuitEngine<T> engine(cfg.qubits, cfg.layers);
    engine.run(x, p);
    ThetaJacobian jac(cfg.layers, cfg.qubits, cfg.windows);
    std::vector<double> weights(static_cast<std::size_t>(cfg.windows), 0.0);
    std::vector<T> cot;
    std::vector<double> dtheta(p.theta.size());
    for (int o = 0; o < cfg.windows; ++o) {
        std::ranges::fill(weights, 0.0);
        weights[static_cast<std::size_t>(o)] = 1.0;
        readout.cotangent<T>(engine.state(), obs, weights, cot);
        engine.template backprop<T>(cot, p, dtheta);
        for (int l = 0; l < cfg.layers; ++l)
            for (int j = 0; j < cfg.qubits; ++j)
                jac.at(l, j, o) = dtheta[static_cast<std::size_t>(l) * static_cast<std::size_t>(cfg.qubits) + static_cast<std::size_t>(j)];
    }
    return jac;
}

} // namespace detail

/// dz_j/dtheta_i = [z_j(theta_i + pi/2) - z_j(theta_i - pi/2)] / 2. Exact
/// because every trainable gate is Ry with generator eigenvalues +-1/2.
inline ThetaJacobian grad_theta_parameter_shift(std::span<const double> x, const CircuitParams &p,
                                                const Observables &obs, const ModelConfig &cfg) {
    cfg.validate();
    if (cfg.mode == Mode::ano) return detail::shift_jacobian<cplx>(x, p, obs, cfg);
    return detail::shift_jacobian<double>(x, p, obs, cfg);
}

/// Same values as grad_theta_parameter_shift via one reverse sweep per output.
inline ThetaJacobian grad_theta_adjoint(std::span<const double> x, const CircuitParams &p, const Observables &obs,
                                        const ModelConfig &cfg) {
    cfg.validate();
    if (cfg.mode == Mode::ano) return detail::adjoint_jacobian<cplx>(x, p, obs, cfg);
    return detail::adjoint_jacobian<double>(x, p, obs, cfg);
}

/// Every derivative of z for one input.
inline GradientBundle gradient_bundle(std::span<const double> x, const CircuitParams &p, const Observables &obs,
                                      const ModelConfig &cfg) {
    GradientBundle b;
    b.d_theta = grad_theta_adjoint(x, p, obs, cfg);
    if (cfg.mode == Mode::ano) {
        auto s = variational_layers(encode<cplx>(x, cfg.qubits), p);
        std::vector<std::vector<double>> dense;
        for (const auto &o : obs.dense) dense.push_back(grad_dense_observable(s, o.window));
        b.d_dense = std::move(dense);
    } else {
        auto s = variational_layers(encode<double>(x, cfg.qubits), p);
        for (const auto &w : sliding_windows(cfg.qubits, cfg.locality, cfg.windows)) b.d_lambda.push_back(grad_lambda(s, w));
    }
    return b;
}

} // namespace dano
