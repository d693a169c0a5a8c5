/**
 * @file
 * Dense statevector, gate kernels, marginals and reduced density matrices.
 *
 * Basis convention: qubit 1 is the most significant bit of the basis index,
 * so |q1 q2 ... qn> is stored at q1*2^(n-1) + ... + qn. Qubit q therefore
 * lives at bit position n - q.
 */
#pragma once

#include <bit>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dano/error.hpp"

namespace dano {

inline constexpr int max_qubits = 24;

using cplx = std::complex<double>;

/// Amplitude types the simulator is instantiated for. All gates in the model
/// family ({H, Ry, CNOT}) are real, so a real statevector is exact whenever the
/// observable is diagonal.
template <class T>
concept Amplitude = std::same_as<T, double> || std::same_as<T, cplx>;

namespace detail {

inline double abs2(double a) { return a * a; }
inline double abs2(const cplx &a) { return std::norm(a); }

inline double conj_of(double a) { return a; }
inline cplx conj_of(const cplx &a) { return std::conj(a); }

/// Re(conj(a) * b)
inline double re_dot(double a, double b) { return a * b; }
inline double re_dot(const cplx &a, const cplx &b) {
    return a.real() * b.real() + a.imag() * b.imag();
}

inline std::string qubit_range_message(int q, int n) {
    return "qubit index " + std::to_string(q) + " outside 1.." + std::to_string(n);
}

inline void check_qubit(int q, int n) {
    if (q < 1 || q > n) throw IndexError(qubit_range_message(q, n));
}

} // namespace detail

/// Ordered list of k distinct 1-based qubit indices. The first entry is the
/// most significant bit of the window-local index.
class QubitWindow {
public:
    QubitWindow() = default;

    explicit QubitWindow(std::vector<int> qubits) : qubits_(std::move(qubits)) {
        if (qubits_.empty()) throw ValidationError("qubit window must not be empty");
        auto sorted = qubits_;
        std::ranges::sort(sorted);
        if (std::ranges::adjacent_find(sorted) != sorted.end())
            throw ValidationError("qubit window entries must be distinct");
        if (sorted.front() < 1)
            throw IndexError("qubit window entry " + std::to_string(sorted.front()) + " < 1");
    }

    /// Window j (1-based) of width k on n qubits: (j, j+1, ..., j+k-1) mod n.
    static QubitWindow cyclic(int n, int k, int j) {
        if (k < 1 || k > n)
            throw ValidationError("window width " + std::to_string(k) + " not in 1.." +
                                  std::to_string(n));
        if (j < 1 || j > n) throw IndexError(detail::qubit_range_message(j, n));
        std::vector<int> q(static_cast<std::size_t>(k));
        for (int t = 0; t < k; ++t) q[static_cast<std::size_t>(t)] = (j - 1 + t) % n + 1;
        return QubitWindow(std::move(q));
    }

    int width() const { return static_cast<int>(qubits_.size()); }
    std::size_t local_dim() const { return std::size_t{1} << qubits_.size(); }
    const std::vector<int> &qubits() const { return qubits_; }
    int operator[](std::size_t t) const { return qubits_[t]; }

    void check_fits(int n) const {
        if (qubits_.empty()) throw IndexError("empty qubit window");
        for (int q : qubits_)
            if (q > n) throw IndexError("window " + to_string() + ": " + detail::qubit_range_message(q, n));
    }

    std::string to_string() const {
        std::string s = "(";
        for (std::size_t t = 0; t < qubits_.size(); ++t) {
            if (t) s += ",";
            s += std::to_string(qubits_[t]);
        }
        return s + ")";
    }

    friend bool operator==(const QubitWindow &, const QubitWindow &) = default;

private:
    std::vector<int> qubits_;
};

/// Maps full basis indices to window-local indices and back.
///
/// local_index(i) uses one 256-entry table per byte of i, so a marginal is a
/// single linear sweep with ceil(n/8) lookups per amplitude independent of k.
class WindowIndexer {
public:
    WindowIndexer(int n, const QubitWindow &w) : n_(n), k_(w.width()) {
        w.check_fits(n);
        const std::size_t full_mask = (std::size_t{1} << n) - 1;
        std::size_t win_mask = 0;
        offsets_.assign(w.local_dim(), 0);
        for (int t = 0; t < k_; ++t) {
            const std::size_t full_bit = std::size_t{1} << (n - w[static_cast<std::size_t>(t)]);
            const std::size_t local_bit = std::size_t{1} << (k_ - 1 - t);
            win_mask |= full_bit;
            for (std::size_t m = 0; m < offsets_.size(); ++m)
                if (m & local_bit) offsets_[m] |= full_bit;
        }
        rest_mask_ = full_mask & ~win_mask;
        low_bit_ = std::countr_zero(win_mask);
        // Increasing adjacent qubits: local index is a shifted bit field.
        contiguous_ = true;
        for (std::size_t b = 1; b < offsets_.size(); b <<= 1)
            contiguous_ = contiguous_ && offsets_[b] == b << low_bit_;

        chunks_ = (n + 7) / 8;
        tables_.assign(static_cast<std::size_t>(chunks_) * 256, 0);
        for (int t = 0; t < k_; ++t) {
            const int pos = n - w[static_cast<std::size_t>(t)];
            const auto local_bit = static_cast<std::uint32_t>(1u << (k_ - 1 - t));
            const int chunk = pos / 8;
            const int bit = pos % 8;
            for (std::size_t b = 0; b < 256; ++b)
                if (b & (std::size_t{1} << bit)) tables_[static_cast<std::size_t>(chunk) * 256 + b] |= local_bit;
        }
    }

    int num_qubits() const { return n_; }
    int width() const { return k_; }
    std::size_t local_dim() const { return offsets_.size(); }

    std::size_t local_index(std::size_t i) const {
        if (contiguous_) return (i >> low_bit_) & (offsets_.size() - 1);
        std::uint32_t m = 0;
        for (int c = 0; c < chunks_; ++c)
            m |= tables_[static_cast<std::size_t>(c) * 256 + ((i >> (8 * c)) & 0xffu)];
        return m;
    }

    /// Calls f(m, begin, len) over the full index range in runs of equal
    /// local index m. Runs are 2^(lowest window bit) long.
    template <class F> void for_each_run(std::size_t dim, F &&f) const {
        const std::size_t run = std::size_t{1} << low_bit_;
        for (std::size_t i = 0; i < dim; i += run) f(local_index(i), i, run);
    }

    /// Full-index bits contributed by window-local value m.
    std::size_t offset(std::size_t m) const { return offsets_[m]; }
    std::size_t rest_mask() const { return rest_mask_; }

    /// Calls f(r) for every assignment r of the bits outside the window, in
    /// increasing order.
    template <class F> void for_each_rest(F &&f) const {
        std::size_t r = 0;
        do {
            f(r);
            r = (r - rest_mask_) & rest_mask_;
        } while (r != 0);
    }

private:
    int n_;
    int k_;
    int chunks_ = 0;
    int low_bit_ = 0;
    bool contiguous_ = false;
    std::size_t rest_mask_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> tables_;
};

/// 2^n amplitudes of an n-qubit pure state.
template <Amplitude T = cplx> class BasicStateVector {
public:
    using value_type = T;

    /// |0...0> on n qubits.
    explicit BasicStateVector(int n) : n_(n) {
        if (n < 1 || n > max_qubits)
            throw CapacityError("qubit count " + std::to_string(n) + " outside 1.." +
                                std::to_string(max_qubits) + " (max_qubits cap)");
        amps_.assign(std::size_t{1} << n, T{0});
        amps_[0] = T{1};
    }

    /// Adopts amplitudes that must already be normalized within 1e-10.
    static BasicStateVector from_amplitudes(int n, std::vector<T> amps) {
        BasicStateVector s(n);
        if (amps.size() != s.amps_.size())
            throw ShapeError("expected " + std::to_string(s.amps_.size()) + " amplitudes, got " +
                             std::to_string(amps.size()));
        s.amps_ = std::move(amps);
        const double nrm = s.norm();
        if (!(std::abs(nrm - 1.0) <= 1e-10))
            throw ValidationError("amplitudes not normalized (norm " + std::to_string(nrm) + ")");
        return s;
    }

    int num_qubits() const { return n_; }
    std::size_t dim() const { return amps_.size(); }
    std::span<const T> amplitudes() const { return amps_; }
    const T &operator[](std::size_t i) const { return amps_[i]; }

    /// Raw access for fused kernels; callers must keep the state normalized.
    std::span<T> raw() { return amps_; }

    double norm() const {
        double acc = 0.0;
        for (const auto &a : amps_) acc += detail::abs2(a);
        return std::sqrt(acc);
    }

    void hadamard(int q) {
        detail::check_qubit(q, n_);
        const double h = std::numbers::sqrt2 / 2.0;
        pair_apply(q, [h](T &a, T &b) {
            const T x = a, y = b;
            a = h * (x + y);
            b = h * (x - y);
        });
    }

    /// Ry(phi) = [[cos phi/2, -sin phi/2], [sin phi/2, cos phi/2]].
    void ry(int q, double angle) {
        detail::check_qubit(q, n_);
        if (!std::isfinite(angle)) throw ValidationError("non-finite rotation angle");
        const double c = std::cos(angle / 2), s = std::sin(angle / 2);
        pair_apply(q, [c, s](T &a, T &b) {
            const T x = a, y = b;
            a = c * x - s * y;
            b = s * x + c * y;
        });
    }

    void cnot(int control, int target) {
        detail::check_qubit(control, n_);
        detail::check_qubit(target, n_);
        if (control == target) throw ValidationError("CNOT control and target coincide");
        const std::size_t cm = std::size_t{1} << (n_ - control);
        const std::size_t tm = std::size_t{1} << (n_ - target);
        for (std::size_t i = 0; i < amps_.size(); ++i)
            if ((i & cm) && !(i & tm)) std::swap(amps_[i], amps_[i | tm]);
    }

private:
    // Visits each (bit=0, bit=1) amplitude pair of qubit q once.
    template <class F> void pair_apply(int q, F &&f) {
        const std::size_t stride = std::size_t{1} << (n_ - q);
        const std::size_t dim = amps_.size();
        T *x = amps_.data();
        for (std::size_t hi = 0; hi < dim; hi += 2 * stride)
            for (std::size_t lo = hi; lo < hi + stride; ++lo) f(x[lo], x[lo + stride]);
    }

    int n_;
    std::vector<T> amps_;
};

using StateVector = BasicStateVector<cplx>;
using RealStateVector = BasicStateVector<double>;

inline StateVector new_zero_state(int n) { return StateVector(n); }

template <Amplitude T>
[[nodiscard]] BasicStateVector<T> apply_hadamard(BasicStateVector<T> s, int q) {
    s.hadamard(q);
    return s;
}

template <Amplitude T>
[[nodiscard]] BasicStateVector<T> apply_ry(BasicStateVector<T> s, int q, double angle) {
    s.ry(q, angle);
    return s;
}

template <Amplitude T>
[[nodiscard]] BasicStateVector<T> apply_cnot(BasicStateVector<T> s, int control, int target) {
    s.cnot(control, target);
    return s;
}

/// Probability of each window-local outcome, accumulated in one pass.
template <Amplitude T>
void accumulate_marginals(std::span<const T> amps, const WindowIndexer &idx, std::span<double> out) {
    std::ranges::fill(out, 0.0);
    idx.for_each_run(amps.size(), [&](std::size_t m, std::size_t b, std::size_t len) {
        double acc = 0.0;
        for (std::size_t i = b; i < b + len; ++i) acc += detail::abs2(amps[i]);
        out[m] += acc;
    });
}

/// Same as accumulate_marginals but from precomputed |amp|^2.
inline void accumulate_marginals_from_probs(std::span<const double> probs, const WindowIndexer &idx,
                                            std::span<double> out) {
    std::ranges::fill(out, 0.0);
    idx.for_each_run(probs.size(), [&](std::size_t m, std::size_t b, std::size_t len) {
        double acc = 0.0;
        for (std::size_t i = b; i < b + len; ++i) acc += probs[i];
        out[m] += acc;
    });
}

template <Amplitude T>
std::vector<double> marginal_probabilities(const BasicStateVector<T> &s, const QubitWindow &w) {
    const WindowIndexer idx(s.num_qubits(), w);
    std::vector<double> p(idx.local_dim());
    accumulate_marginals<T>(s.amplitudes(), idx, p);
    return p;
}

/// Partial trace of raw amplitudes over the bits outside idx's window.
template <Amplitude T> Eigen::MatrixXcd window_rdm(std::span<const T> amps, const WindowIndexer &idx) {
    const auto K = static_cast<Eigen::Index>(idx.local_dim());
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(K, K);
    std::vector<cplx> v(static_cast<std::size_t>(K));
    idx.for_each_rest([&](std::size_t r) {
        for (Eigen::Index m = 0; m < K; ++m) v[static_cast<std::size_t>(m)] = cplx(amps[idx.offset(static_cast<std::size_t>(m)) | r]);
        for (Eigen::Index a = 0; a < K; ++a) {
            const cplx va = v[static_cast<std::size_t>(a)];
            if (va == cplx{}) continue;
            for (Eigen::Index b = 0; b <= a; ++b) rho(a, b) += va * std::conj(v[static_cast<std::size_t>(b)]);
        }
    });
    for (Eigen::Index a = 0; a < K; ++a) {
        rho(a, a) = cplx(rho(a, a).real(), 0.0);
        for (Eigen::Index b = 0; b < a; ++b) rho(b, a) = std::conj(rho(a, b));
    }
    return rho;
}

/// Partial trace over the qubits outside w; cost O(2^(n+k)).
template <Amplitude T>
Eigen::MatrixXcd reduced_density_matrix(const BasicStateVector<T> &s, const QubitWindow &w) {
    return window_rdm<T>(s.amplitudes(), WindowIndexer(s.num_qubits(), w));
}

/// Applies a K x K matrix to the window qubits (identity elsewhere). The
/// result need not be normalized, so raw amplitudes are returned.
template <Amplitude T>
std::vector<cplx> apply_window_matrix(std::span<const T> amps, int n, const QubitWindow &w,
                                      const Eigen::MatrixXcd &m) {
    const WindowIndexer idx(n, w);
    const auto K = static_cast<Eigen::Index>(idx.local_dim());
    if (m.rows() != K || m.cols() != K)
        throw ShapeError("window matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", window needs " + std::to_string(K));
    std::vector<cplx> out(amps.size());
    Eigen::VectorXcd v(K);
    idx.for_each_rest([&](std::size_t r) {
        for (Eigen::Index a = 0; a < K; ++a) v(a) = cplx(amps[idx.offset(static_cast<std::size_t>(a)) | r]);
        const Eigen::VectorXcd mv = m * v;
        for (Eigen::Index a = 0; a < K; ++a) out[idx.offset(static_cast<std::size_t>(a)) | r] = mv(a);
    });
    return out;
}

} // namespace dano
