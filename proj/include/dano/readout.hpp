#pragma once

#include <span>
#include <vector>

#include "dano/model.hpp"

namespace dano {

/// Scratch produced by Readout::measure and consumed by the gradient code.
struct MeasurementCache {
    std::vector<double> probs;                  ///< |amp|^2, diagonal modes only
    std::vector<std::vector<double>> marginals; ///< per output, diagonal modes
    std::vector<Eigen::MatrixXcd> rdms;         ///< per output, ano mode
};

/// Window bookkeeping for the m sliding observables of one model shape.
class Readout {
public:
    explicit Readout(const ModelConfig &cfg) : cfg_(cfg) {
        cfg.validate();
        windows_ = sliding_windows(cfg.qubits, cfg.locality, cfg.windows);
        indexers_.reserve(windows_.size());
        for (const auto &w : windows_) indexers_.emplace_back(cfg.qubits, w);
    }

    const ModelConfig &config() const { return cfg_; }
    const std::vector<QubitWindow> &windows() const { return windows_; }
    const WindowIndexer &indexer(std::size_t j) const { return indexers_[j]; }

    /// Eigenvalues of diagonal output j (fixed Pauli-Z in vqc mode).
    std::span<const double> eigenvalues(const Observables &obs, std::size_t j) const {
        static const std::vector<double> pauli_z{1.0, -1.0};
        if (cfg_.mode == Mode::vqc) return pauli_z;
        return obs.diagonal[j].eigenvalues;
    }

    void check(const Observables &obs) const {
        const auto m = static_cast<std::size_t>(cfg_.windows);
        if (cfg_.mode == Mode::dano) {
            if (obs.diagonal.size() != m) throw ShapeError("dano readout needs " + std::to_string(m) + " observables");
            for (const auto &o : obs.diagonal)
                if (o.eigenvalues.size() != cfg_.local_dim()) throw ShapeError("eigenvalue count != 2^k");
        } else if (cfg_.mode == Mode::ano) {
            if (obs.dense.size() != m) throw ShapeError("ano readout needs " + std::to_string(m) + " observables");
            const std::size_t K = cfg_.local_dim();
            for (const auto &o : obs.dense)
                if (o.diag.size() != K || o.upper_re.size() != K * (K - 1) / 2 || o.upper_im.size() != K * (K - 1) / 2)
                    throw ShapeError("packed Hermitian size does not match k");
        }
    }

    /// Writes z_j for j < count. O(2^n) per diagonal output, O(2^(n+k)) per
    /// dense output.
    template <Amplitude T>
    void measure(std::span<const T> amps, const Observables &obs, std::size_t count, std::span<double> z,
                 MeasurementCache &cache) const {
        if (cfg_.mode == Mode::ano) {
            cache.rdms.resize(count);
            for (std::size_t j = 0; j < count; ++j) {
                cache.rdms[j] = rdm_of(amps, j);
                z[j] = trace_product_real(cache.rdms[j], unpack_hermitian(obs.dense[j]));
            }
            return;
        }
        cache.probs.resize(amps.size());
        for (std::size_t i = 0; i < amps.size(); ++i) cache.probs[i] = detail::abs2(amps[i]);
        cache.marginals.resize(count);
        for (std::size_t j = 0; j < count; ++j) {
            auto &p = cache.marginals[j];
            p.resize(indexers_[j].local_dim());
            accumulate_marginals_from_probs(cache.probs, indexers_[j], p);
            const auto lam = eigenvalues(obs, j);
            double acc = 0.0;
            for (std::size_t m = 0; m < p.size(); ++m) acc += lam[m] * p[m];
            z[j] = acc;
        }
    }

    /// cot = sum_{j < g.size()} g_j O_j |psi>.
    template <Amplitude T>
    void cotangent(std::span<const T> amps, const Observables &obs, std::span<const double> g, std::vector<T> &cot) const {
        cot.assign(amps.size(), T{0});
        if (cfg_.mode == Mode::ano) {
            if constexpr (std::same_as<T, cplx>) {
                for (std::size_t j = 0; j < g.size(); ++j) {
                    if (g[j] == 0.0) continue;
                    const auto hv = apply_window_matrix<T>(amps, cfg_.qubits, windows_[j], unpack_hermitian(obs.dense[j]));
                    for (std::size_t i = 0; i < cot.size(); ++i) cot[i] += g[j] * hv[i];
                }
                return;
            } else {
                throw ValidationError("dense observables need a complex statevector");
            }
        }
        // Diagonal: cot_i = (sum_j g_j lambda_j[local_j(i)]) psi_i
        std::vector<double> diag(amps.size(), 0.0);
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (g[j] == 0.0) continue;
            const auto lam = eigenvalues(obs, j);
            indexers_[j].for_each_run(diag.size(), [&](std::size_t m, std::size_t b, std::size_t len) {
                const double v = g[j] * lam[m];
                for (std::size_t i = b; i < b + len; ++i) diag[i] += v;
            });
        }
        for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = diag[i] * amps[i];
    }

    template <Amplitude T> Eigen::MatrixXcd rdm_of(std::span<const T> amps, std::size_t j) const {
        return window_rdm<T>(amps, indexers_[j]);
    }

private:
    ModelConfig cfg_;
    std::vector<QubitWindow> windows_;
    std::vector<WindowIndexer> indexers_;
};

} // namespace dano
