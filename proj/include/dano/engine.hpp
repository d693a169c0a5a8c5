/**
 * @file
 * Fused simulation kernels for the training hot path.
 *
 * The brickwork CNOT block is a fixed permutation of basis indices, so one
 * entangling block costs a single gather instead of n-1 swaps. A layer of Ry
 * rotations is one pass per wire. The adjoint sweep reads each theta
 * derivative of a layer off the current states, because d/dtheta_j of the
 * layer equals (-i Y_j / 2) times the layer and the rotations commute, then
 * un-rotates that wire in the same pass.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "dano/model.hpp"

namespace dano {

namespace detail {

/// Ry on bit t: pairs (i, i + 2^t) inside runs of 2^(t+1). c, s are the
/// cosine and sine of the half angle.
template <Amplitude T> void ry_bit(std::span<T> x, int t, double c, double s) {
    const std::size_t stride = std::size_t{1} << t;
    T *d = x.data();
    for (std::size_t hi = 0; hi < x.size(); hi += 2 * stride)
        for (std::size_t l = hi; l < hi + stride; ++l) {
            const T a = d[l], b = d[l + stride];
            d[l] = c * a - s * b;
            d[l + stride] = s * a + c * b;
        }
}

/// Ry on bits 0 and 1 together; their strides are too short to vectorize
/// one at a time.
template <Amplitude T> void ry_low_pair(std::span<T> x, double c0, double s0, double c1, double s1) {
    T *d = x.data();
    for (std::size_t i = 0; i < x.size(); i += 4) {
        const T a0 = d[i], a1 = d[i + 1], a2 = d[i + 2], a3 = d[i + 3];
        const T b0 = c0 * a0 - s0 * a1, b1 = s0 * a0 + c0 * a1;
        const T b2 = c0 * a2 - s0 * a3, b3 = s0 * a2 + c0 * a3;
        d[i] = c1 * b0 - s1 * b2;
        d[i + 2] = s1 * b0 + c1 * b2;
        d[i + 1] = c1 * b1 - s1 * b3;
        d[i + 3] = s1 * b1 + c1 * b3;
    }
}

/// One adjoint step for bit t: returns 2 Re <lam| (-i Y_t / 2) |psi> and then
/// un-rotates both states by the same Ry. c, s belong to the forward angle.
template <Amplitude T> double adjoint_ry_bit(std::span<T> psi, std::span<T> lam, int t, double c, double s) {
    const std::size_t stride = std::size_t{1} << t;
    T *p = psi.data();
    T *q = lam.data();
    double g = 0.0;
    for (std::size_t hi = 0; hi < psi.size(); hi += 2 * stride)
        for (std::size_t l = hi; l < hi + stride; ++l) {
            const T pa = p[l], pb = p[l + stride];
            const T qa = q[l], qb = q[l + stride];
            g += re_dot(qb, pa) - re_dot(qa, pb);
            p[l] = c * pa + s * pb;
            p[l + stride] = c * pb - s * pa;
            q[l] = c * qa + s * qb;
            q[l + stride] = c * qb - s * qa;
        }
    return g;
}

} // namespace detail

/// Applies Ry(angles[j]) on every wire j+1. Wires act on distinct bits and
/// commute, so the order of the passes is free.
template <Amplitude T> void apply_ry_layer(std::span<T> x, int n, std::span<const double> angles) {
    auto half = [&](int bit) { return angles[static_cast<std::size_t>(n - bit - 1)] / 2; };
    int bit = 0;
    if (n >= 2) {
        detail::ry_low_pair<T>(x, std::cos(half(0)), std::sin(half(0)), std::cos(half(1)), std::sin(half(1)));
        bit = 2;
    }
    for (; bit < n; ++bit) detail::ry_bit<T>(x, bit, std::cos(half(bit)), std::sin(half(bit)));
}

/// The brickwork CNOT block as a basis permutation: |i> -> |image[i]>.
class BrickworkPermutation {
public:
    explicit BrickworkPermutation(int n) : n_(n) {
        if (n < 1 || n > max_qubits) throw CapacityError("qubit count outside 1.." + std::to_string(max_qubits));
        const auto pairs = brickwork_pairs(n);
        image_.resize(std::size_t{1} << n);
        for (std::size_t i = 0; i < image_.size(); ++i) {
            std::size_t b = i;
            for (auto [c, t] : pairs)
                if (b & (std::size_t{1} << (n - c))) b ^= std::size_t{1} << (n - t);
            image_[i] = static_cast<std::uint32_t>(b);
        }
    }

    int num_qubits() const { return n_; }

    template <Amplitude T> void apply(std::span<const T> in, std::span<T> out) const {
        for (std::size_t i = 0; i < image_.size(); ++i) out[image_[i]] = in[i];
    }

    template <Amplitude T> void apply_inverse(std::span<const T> in, std::span<T> out) const {
        for (std::size_t i = 0; i < image_.size(); ++i) out[i] = in[image_[i]];
    }

private:
    int n_;
    std::vector<std::uint32_t> image_;
};

/// Ry(x_j) H |0> on every wire written directly as a product state.
template <Amplitude T> void encode_product(std::span<const double> x, std::span<T> out) {
    const std::size_t n = x.size();
    if (out.size() != (std::size_t{1} << n)) throw ShapeError("encode_product: output size mismatch");
    const double r = std::numbers::sqrt2 / 2.0;
    out[0] = T{1};
    std::size_t len = 1;
    for (std::size_t q = 0; q < n; ++q) {
        const double c = std::cos(x[q] / 2), s = std::sin(x[q] / 2);
        const double v0 = r * (c - s), v1 = r * (s + c);
        // qubit q+1 becomes the next lower bit: new[2i + b] = old[i] * v_b
        for (std::size_t i = len; i-- > 0;) {
            const T a = out[i];
            out[2 * i] = a * v0;
            out[2 * i + 1] = a * v1;
        }
        len *= 2;
    }
}

/// Per-thread simulation workspace for one model shape.
///
/// run() prepares U(theta) V(x) |0>; backprop() takes the cotangent state
/// O|psi> for a Hermitian O and returns d<psi|O|psi>/dtheta.
template <Amplitude T> class CircuitEngine {
public:
    CircuitEngine(int n, int layers)
        : n_(n), layers_(layers), perm_(n), psi_(std::size_t{1} << n), work_(psi_.size()),
          lam_(psi_.size()), lam_work_(psi_.size()) {}

    int num_qubits() const { return n_; }
    int layers() const { return layers_; }

    void run(std::span<const double> x, const CircuitParams &p) {
        if (static_cast<int>(x.size()) != n_)
            throw ShapeError("input has " + std::to_string(x.size()) + " features, engine has " + std::to_string(n_) + " qubits");
        p.check_shape(layers_, n_);
        encode_product<T>(x, psi_);
        for (int l = 0; l < layers_; ++l) {
            perm_.apply<T>(psi_, work_);
            psi_.swap(work_);
            apply_ry_layer<T>(psi_, n_, layer_angles(p, l));
        }
    }

    std::span<const T> state() const { return psi_; }

    /// dtheta[l*n + j] = d<psi|O|psi>/dtheta_j^(l) given cotangent = O|psi>.
    /// Leaves the forward state intact.
    template <Amplitude C>
    void backprop(std::span<const C> cotangent, const CircuitParams &p, std::span<double> dtheta) {
        static_assert(std::same_as<C, T> || std::same_as<C, double>, "cotangent must be T or real");
        if (cotangent.size() != psi_.size() || dtheta.size() != p.theta.size())
            throw ShapeError("backprop: size mismatch");
        work_state_ = psi_;
        for (std::size_t i = 0; i < lam_.size(); ++i) lam_[i] = T(cotangent[i]);
        for (int l = layers_ - 1; l >= 0; --l) {
            const auto angles = layer_angles(p, l);
            for (int bit = 0; bit < n_; ++bit) {
                const auto wire = static_cast<std::size_t>(n_ - bit - 1);
                const double half = angles[wire] / 2;
                dtheta[static_cast<std::size_t>(l) * static_cast<std::size_t>(n_) + wire] =
                    detail::adjoint_ry_bit<T>(work_state_, lam_, bit, std::cos(half), std::sin(half));
            }
            if (l == 0) break; // the encoding has no trainable angles
            perm_.apply_inverse<T>(work_state_, work_);
            work_state_.swap(work_);
            perm_.apply_inverse<T>(lam_, lam_work_);
            lam_.swap(lam_work_);
        }
    }

private:
    static std::span<const double> layer_angles(const CircuitParams &p, int l) {
        return std::span<const double>(p.theta).subspan(static_cast<std::size_t>(l) * static_cast<std::size_t>(p.qubits),
                                                        static_cast<std::size_t>(p.qubits));
    }

    int n_;
    int layers_;
    BrickworkPermutation perm_;
    std::vector<T> psi_;
    std::vector<T> work_;
    std::vector<T> lam_;
    std::vector<T> lam_work_;
    std::vector<T> work_state_;
};

} // namespace dano
