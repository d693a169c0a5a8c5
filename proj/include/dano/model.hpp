/**
 * @file
 * Encoding circuit, brickwork ansatz, observable families and the reference
 * forward pass z = (z_1, ..., z_m).
 *
 * Everything here is the gate-by-gate reference path. The fused kernels used
 * for training live in engine.hpp and are checked against these functions.
 */
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dano/statevector.hpp"

namespace dano {

enum class Mode { vqc, dano, ano };

inline std::string_view to_string(Mode m) {
    switch (m) {
    case Mode::vqc: return "vqc";
    case Mode::dano: return "dano";
    case Mode::ano: return "ano";
    }
    return "?";
}

inline Mode parse_mode(std::string_view s) {
    if (s == "vqc") return Mode::vqc;
    if (s == "dano") return Mode::dano;
    if (s == "ano") return Mode::ano;
    throw ValidationError("unknown mode '" + std::string(s) + "' (expected vqc|dano|ano)");
}

struct ModelConfig {
    int qubits = 4;
    int locality = 1; ///< k
    int layers = 1;   ///< L
    Mode mode = Mode::dano;
    int windows = 4;  ///< m, number of sliding observables
    int classes = 2;  ///< C, leading outputs used as logits

    /// Every violated invariant, not just the first.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (qubits < 1 || qubits > max_qubits)
            out.push_back("qubits=" + std::to_string(qubits) + " outside 1.." + std::to_string(max_qubits));
        if (locality < 1 || locality > qubits)
            out.push_back("k=" + std::to_string(locality) + " must satisfy 1 <= k <= n=" + std::to_string(qubits));
        if (layers < 0) out.push_back("layers=" + std::to_string(layers) + " must be >= 0");
        if (windows < 1 || windows > qubits)
            out.push_back("windows=" + std::to_string(windows) + " must satisfy 1 <= m <= n=" + std::to_string(qubits));
        if (classes < 1 || classes > windows)
            out.push_back("classes=" + std::to_string(classes) + " must satisfy 1 <= C <= m=" + std::to_string(windows));
        if (mode == Mode::vqc && locality != 1)
            out.push_back("mode=vqc requires k=1 (fixed Pauli-Z readout), got k=" + std::to_string(locality));
        return out;
    }

    void validate() const {
        const auto p = problems();
        if (p.empty()) return;
        std::string msg = "invalid model config:";
        for (const auto &s : p) msg += "\n  - " + s;
        throw ValidationError(msg);
    }

    std::size_t local_dim() const { return std::size_t{1} << locality; }

    friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

/// theta[l][j] for layer l in [0, L) and wire j in [0, n), stored layer-major.
struct CircuitParams {
    int layers = 0;
    int qubits = 0;
    std::vector<double> theta;

    CircuitParams() = default;
    CircuitParams(int l, int n) : layers(l), qubits(n), theta(static_cast<std::size_t>(l) * static_cast<std::size_t>(n), 0.0) {}
    CircuitParams(int l, int n, std::vector<double> values) : layers(l), qubits(n), theta(std::move(values)) {
        check_shape(l, n);
    }

    double &at(int l, int j) { return theta[static_cast<std::size_t>(l) * static_cast<std::size_t>(qubits) + static_cast<std::size_t>(j)]; }
    double at(int l, int j) const { return theta[static_cast<std::size_t>(l) * static_cast<std::size_t>(qubits) + static_cast<std::size_t>(j)]; }

    void check_shape(int l, int n) const {
        if (layers != l || qubits != n || theta.size() != static_cast<std::size_t>(l) * static_cast<std::size_t>(n))
            throw ShapeError("circuit params shaped (" + std::to_string(layers) + "," + std::to_string(qubits) +
                             ") with " + std::to_string(theta.size()) + " values, expected (" + std::to_string(l) +
                             "," + std::to_string(n) + ")");
        for (double t : theta)
            if (!std::isfinite(t)) throw ValidationError("non-finite circuit angle");
    }
};

struct DiagonalObservable {
    std::vector<double> eigenvalues;
    QubitWindow window;
};

/// Packed k-local Hermitian: diag = c_ii, upper_re/upper_im = a_ij/b_ij for
/// i < j in row-major order of the strict upper triangle.
struct DenseObservable {
    std::vector<double> diag;
    std::vector<double> upper_re;
    std::vector<double> upper_im;
    QubitWindow window;

    std::size_t dim() const { return diag.size(); }
    std::size_t packed_size() const { return diag.size() + upper_re.size() + upper_im.size(); }
};

/// The readout attached to a model: diagonal observables for vqc/dano, packed
/// Hermitian ones for ano. Only the list matching the mode is consulted.
struct Observables {
    std::vector<DiagonalObservable> diagonal;
    std::vector<DenseObservable> dense;
};

/// Cyclic windows Q_j = (j, ..., j+k-1) mod n for j = 1..m.
inline std::vector<QubitWindow> sliding_windows(int n, int k, int m) {
    if (k > n || k < 1)
        throw ValidationError("locality k=" + std::to_string(k) + " must satisfy 1 <= k <= n=" + std::to_string(n));
    if (m < 0 || m > n)
        throw ValidationError("window count m=" + std::to_string(m) + " must satisfy m <= n=" + std::to_string(n));
    std::vector<QubitWindow> w;
    w.reserve(static_cast<std::size_t>(m));
    for (int j = 1; j <= m; ++j) w.push_back(QubitWindow::cyclic(n, k, j));
    return w;
}

/// Spectrum of Z^{(x)k} in window-local order: (-1)^popcount(m).
inline std::vector<double> parity_eigenvalues(int k) {
    std::vector<double> lam(std::size_t{1} << k);
    for (std::size_t m = 0; m < lam.size(); ++m) lam[m] = (std::popcount(m) % 2) ? -1.0 : 1.0;
    return lam;
}

/// Initial readout for cfg: Pauli-Z per wire (vqc), parity eigenvalues (dano),
/// or the dense matrix Z^{(x)k} (ano).
inline Observables initial_observables(const ModelConfig &cfg) {
    cfg.validate();
    Observables obs;
    const auto windows = sliding_windows(cfg.qubits, cfg.locality, cfg.windows);
    const auto parity = parity_eigenvalues(cfg.locality);
    for (const auto &w : windows) {
        if (cfg.mode == Mode::ano) {
            const std::size_t K = cfg.local_dim();
            obs.dense.push_back({parity, std::vector<double>(K * (K - 1) / 2, 0.0),
                                 std::vector<double>(K * (K - 1) / 2, 0.0), w});
        } else {
            obs.diagonal.push_back({parity, w});
        }
    }
    return obs;
}

/// Hermitian matrix from the packed upper triangle; exact by construction.
inline Eigen::MatrixXcd unpack_hermitian(const DenseObservable &o) {
    const std::size_t K = o.diag.size();
    const std::size_t upper = K * (K - 1) / 2;
    if (o.upper_re.size() != upper || o.upper_im.size() != upper)
        throw ShapeError("packed Hermitian with K=" + std::to_string(K) + " needs " + std::to_string(upper) +
                         " upper entries, got re=" + std::to_string(o.upper_re.size()) +
                         " im=" + std::to_string(o.upper_im.size()));
    const auto k = static_cast<Eigen::Index>(K);
    Eigen::MatrixXcd m(k, k);
    std::size_t t = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        m(i, i) = cplx(o.diag[static_cast<std::size_t>(i)], 0.0);
        for (Eigen::Index j = i + 1; j < k; ++j, ++t) {
            m(i, j) = cplx(o.upper_re[t], o.upper_im[t]);
            m(j, i) = std::conj(m(i, j));
        }
    }
    return m;
}

/// (H^{(x)n} then Ry(x_j) on each wire) applied to |0...0>.
template <Amplitude T = cplx> BasicStateVector<T> encode(std::span<const double> x, int n) {
    if (static_cast<int>(x.size()) != n)
        throw ShapeError("input has " + std::to_string(x.size()) + " features, model has " + std::to_string(n) + " qubits");
    BasicStateVector<T> s(n);
    for (int q = 1; q <= n; ++q) s.hadamard(q);
    for (int q = 1; q <= n; ++q) s.ry(q, x[static_cast<std::size_t>(q - 1)]);
    return s;
}

template <Amplitude T = cplx> BasicStateVector<T> encode(std::span<const double> x) {
    return encode<T>(x, static_cast<int>(x.size()));
}

/// CNOT pairs of one brickwork entangling block: (1,2),(3,4),... then
/// (2,3),(4,5),..., no wrap-around.
inline std::vector<std::pair<int, int>> brickwork_pairs(int n) {
    std::vector<std::pair<int, int>> p;
    for (int a = 1; a + 1 <= n; a += 2) p.emplace_back(a, a + 1);
    for (int a = 2; a + 1 <= n; a += 2) p.emplace_back(a, a + 1);
    return p;
}

template <Amplitude T>
[[nodiscard]] BasicStateVector<T> variational_layers(BasicStateVector<T> s, const CircuitParams &p) {
    const int n = s.num_qubits();
    p.check_shape(p.layers, n);
    const auto pairs = brickwork_pairs(n);
    for (int l = 0; l < p.layers; ++l) {
        for (auto [c, t] : pairs) s.cnot(c, t);
        for (int j = 0; j < n; ++j) s.ry(j + 1, p.at(l, j));
    }
    return s;
}

template <Amplitude T>
double expect_diagonal(const BasicStateVector<T> &s, const DiagonalObservable &o) {
    if (o.eigenvalues.size() != o.window.local_dim())
        throw ShapeError("observable has " + std::to_string(o.eigenvalues.size()) + " eigenvalues, window " +
                         o.window.to_string() + " needs " + std::to_string(o.window.local_dim()));
    const auto p = marginal_probabilities(s, o.window);
    double z = 0.0;
    for (std::size_t m = 0; m < p.size(); ++m) z += o.eigenvalues[m] * p[m];
    return z;
}

/// tr(rho_w H~) from the window reduced density matrix.
inline double trace_product_real(const Eigen::MatrixXcd &rho, const Eigen::MatrixXcd &h) {
    // tr(rho h) = sum_ab rho_ab h_ba
    cplx acc{};
    for (Eigen::Index a = 0; a < rho.rows(); ++a)
        for (Eigen::Index b = 0; b < rho.cols(); ++b) acc += rho(a, b) * h(b, a);
    if (std::abs(acc.imag()) > 1e-10 * std::max(1.0, std::abs(acc.real())))
        throw NumericalError("tr(rho H) has imaginary residue " + std::to_string(acc.imag()));
    return acc.real();
}

template <Amplitude T>
double expect_dense(const BasicStateVector<T> &s, const DenseObservable &o) {
    if (o.diag.size() != o.window.local_dim())
        throw ShapeError("dense observable has K=" + std::to_string(o.diag.size()) + ", window " +
                         o.window.to_string() + " needs " + std::to_string(o.window.local_dim()));
    return trace_product_real(reduced_density_matrix(s, o.window), unpack_hermitian(o));
}

/// Output vector of the measurement stage on an already-prepared state.
template <Amplitude T>
std::vector<double> measure(const BasicStateVector<T> &s, const Observables &obs, const ModelConfig &cfg) {
    std::vector<double> z(static_cast<std::size_t>(cfg.windows));
    if (cfg.mode == Mode::ano) {
        if (obs.dense.size() != z.size())
            throw ShapeError("ano readout needs " + std::to_string(z.size()) + " observables, got " + std::to_string(obs.dense.size()));
        for (std::size_t j = 0; j < z.size(); ++j) {
            if (obs.dense[j].window.width() != cfg.locality) throw ShapeError("observable window width != k");
            z[j] = expect_dense(s, obs.dense[j]);
        }
        return z;
    }
    if (cfg.mode == Mode::vqc) {
        // Fixed Pauli-Z on each wire, through the same diagonal path as dano.
        const auto windows = sliding_windows(cfg.qubits, 1, cfg.windows);
        for (std::size_t j = 0; j < z.size(); ++j) z[j] = expect_diagonal(s, DiagonalObservable{{1.0, -1.0}, windows[j]});
        return z;
    }
    if (obs.diagonal.size() != z.size())
        throw ShapeError("dano readout needs " + std::to_string(z.size()) + " observables, got " + std::to_string(obs.diagonal.size()));
    for (std::size_t j = 0; j < z.size(); ++j) {
        if (obs.diagonal[j].window.width() != cfg.locality) throw ShapeError("observable window width != k");
        z[j] = expect_diagonal(s, obs.diagonal[j]);
    }
    return z;
}

/// Reference forward pass: z_j = <psi| O_j |psi>, psi = U(theta) V(x) |0>.
template <Amplitude T = cplx>
std::vector<double> forward(std::span<const double> x, const CircuitParams &p, const Observables &obs,
                            const ModelConfig &cfg) {
    cfg.validate();
    p.check_shape(cfg.layers, cfg.qubits);
    auto s = variational_layers(encode<T>(x, cfg.qubits), p);
    return measure(s, obs, cfg);
}

struct ParamCount {
    long long circuit = 0;
    long long observable = 0;
    long long total = 0;
};

/// circuit = L n; observable = m 2^k (dano), m 4^k (ano), 0 (vqc).
inline ParamCount count_params(const ModelConfig &cfg) {
    ParamCount c;
    c.circuit = static_cast<long long>(cfg.layers) * cfg.qubits;
    const long long K = 1LL << cfg.locality;
    switch (cfg.mode) {
    case Mode::vqc: c.observable = 0; break;
    case Mode::dano: c.observable = cfg.windows * K; break;
    case Mode::ano: c.observable = cfg.windows * K * K; break;
    }
    c.total = c.circuit + c.observable;
    return c;
}

} // namespace dano
