#include <gtest/gtest.h>

#include <chrono>
#include <numbers>
#include <random>

#include "dano/gradients.hpp"
#include "dano/random.hpp"
#include "test_oracles.hpp"

using namespace dano;
using dano::testing::central_difference;

namespace {

constexpr double pi = std::numbers::pi;

struct Instance {
    ModelConfig cfg;
    std::vector<double> x;
    CircuitParams p;
    Observables obs;
};

Instance random_instance(int n, int k, int layers, Mode mode, std::mt19937_64 &rng) {
    Instance in;
    in.cfg = {n, mode == Mode::vqc ? 1 : k, layers, mode, n, 1};
    in.x = random_vector(static_cast<std::size_t>(n), -pi, pi, rng);
    in.p = CircuitParams(layers, n, random_vector(static_cast<std::size_t>(layers * n), -pi, pi, rng));
    in.obs = initial_observables(in.cfg);
    for (auto &o : in.obs.diagonal) o.eigenvalues = random_vector(o.eigenvalues.size(), -2, 2, rng);
    for (auto &o : in.obs.dense) o = random_dense_observable(o.window, rng);
    return in;
}

/// Relative error with an absolute floor near zero (1e-5 relative or 1e-8 absolute).
bool fd_close(double analytic, double fd) { return std::abs(analytic - fd) <= std::max(1e-5 * std::abs(fd), 1e-8); }

} // namespace

TEST(GradLambda, ZeroState) {
    for (int k = 1; k <= 3; ++k) {
        const auto g = grad_lambda(new_zero_state(4), QubitWindow::cyclic(4, k, 3));
        for (std::size_t m = 0; m < g.size(); ++m) EXPECT_EQ(g[m], m == 0 ? 1.0 : 0.0);
    }
}

TEST(GradLambda, UniformSuperposition) {
    StateVector s(5);
    for (int q = 1; q <= 5; ++q) s.hadamard(q);
    const auto g = grad_lambda(s, QubitWindow::cyclic(5, 3, 4));
    for (double v : g) EXPECT_NEAR(v, 0.125, 1e-15);
}

TEST(GradLambda, FiniteDifference) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
        const int n = 2 + t % 5;
        const auto s = random_state(n, rng);
        const auto w = QubitWindow::cyclic(n, 1 + t % n, 1 + t % n);
        const auto lam = random_vector(w.local_dim(), -2, 2, rng);
        const auto g = grad_lambda(s, w);
        double sum = 0.0;
        for (std::size_t m = 0; m < lam.size(); ++m) {
            const double fd = central_difference([&](const std::vector<double> &l) { return expect_diagonal(s, {l, w}); }, lam, m);
            EXPECT_NEAR(g[m], fd, 1e-8);
            EXPECT_GE(g[m], 0.0);
            sum += g[m];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(ParameterShift, ConstantObservableGivesZero) {
    std::mt19937_64 rng(2);
    auto in = random_instance(4, 2, 2, Mode::dano, rng);
    for (auto &o : in.obs.diagonal) std::ranges::fill(o.eigenvalues, 0.7);
    const auto j = grad_theta_parameter_shift(in.x, in.p, in.obs, in.cfg);
    for (double v : j.values) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(ParameterShift, SingleQubitClosedForm) {
    // z(theta) = <Z> of Ry(theta) H |0> = -sin(theta), so dz/dtheta(0) = -1.
    const ModelConfig cfg{1, 1, 1, Mode::dano, 1, 1};
    const Observables obs{{{{1.0, -1.0}, QubitWindow({1})}}, {}};
    const std::vector<double> x{0.0};
    const auto j = grad_theta_parameter_shift(x, CircuitParams(1, 1, {0.0}), obs, cfg);
    EXPECT_NEAR(j.at(0, 0, 0), -1.0, 1e-14);
    for (double theta : {0.3, -1.2, 2.9}) {
        EXPECT_NEAR(forward(x, CircuitParams(1, 1, {theta}), obs, cfg)[0], -std::sin(theta), 1e-14);
        EXPECT_NEAR(grad_theta_parameter_shift(x, CircuitParams(1, 1, {theta}), obs, cfg).at(0, 0, 0), -std::cos(theta), 1e-14);
    }
}

TEST(ParameterShift, FiniteDifference20Configs) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const int n = 2 + t % 4;
        const auto in = random_instance(n, 1 + t % n, 1 + t % 3, static_cast<Mode>(t % 3), rng);
        const auto j = grad_theta_parameter_shift(in.x, in.p, in.obs, in.cfg);
        for (int l = 0; l < in.cfg.layers; ++l)
            for (int q = 0; q < n; ++q)
                for (int o = 0; o < in.cfg.windows; ++o) {
                    const auto idx = static_cast<std::size_t>(l * n + q);
                    const double fd = central_difference(
                        [&](const std::vector<double> &th) {
                            return forward(in.x, CircuitParams(in.cfg.layers, n, th), in.obs, in.cfg)[static_cast<std::size_t>(o)];
                        },
                        in.p.theta, idx);
                    EXPECT_TRUE(fd_close(j.at(l, q, o), fd)) << j.at(l, q, o) << " vs " << fd;
                }
    }
}

TEST(Adjoint, MatchesParameterShift50) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + t % 7;
        const auto in = random_instance(n, 1 + t % n, t % 4, static_cast<Mode>(t % 3), rng);
        const auto a = grad_theta_adjoint(in.x, in.p, in.obs, in.cfg);
        const auto s = grad_theta_parameter_shift(in.x, in.p, in.obs, in.cfg);
        ASSERT_EQ(a.values.size(), s.values.size());
        for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], s.values[i], 1e-9);
    }
}

TEST(Adjoint, ZeroObservable) {
    std::mt19937_64 rng(5);
    auto in = random_instance(5, 3, 3, Mode::dano, rng);
    for (auto &o : in.obs.diagonal) std::ranges::fill(o.eigenvalues, 0.0);
    for (double v : grad_theta_adjoint(in.x, in.p, in.obs, in.cfg).values) EXPECT_EQ(v, 0.0);
}

TEST(Adjoint, FasterThanParameterShiftAtTwelveQubits) {
    std::mt19937_64 rng(6);
    const auto in = random_instance(12, 4, 6, Mode::dano, rng);
    auto time = [&](auto f) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    const double adj = time([&] { (void)grad_theta_adjoint(in.x, in.p, in.obs, in.cfg); });
    const double shift = time([&] { (void)grad_theta_parameter_shift(in.x, in.p, in.obs, in.cfg); });
    EXPECT_GT(shift / adj, 2.0) << "adjoint " << adj << " s, shift " << shift << " s";
}

TEST(DenseGradient, PureZeroWindow) {
    const auto g = grad_dense_observable(new_zero_state(3), QubitWindow({2, 3}));
    ASSERT_EQ(g.size(), 16u);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], i == 0 ? 1.0 : 0.0);
}

TEST(DenseGradient, FiniteDifference) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 20; ++t) {
        const int n = 2 + t % 4;
        const auto w = QubitWindow::cyclic(n, 1 + t % std::min(n, 3), 1 + t % n);
        const auto s = random_state(n, rng);
        const auto o = random_dense_observable(w, rng);
        const std::size_t K = w.local_dim(), u = K * (K - 1) / 2;
        std::vector<double> packed = o.diag;
        packed.insert(packed.end(), o.upper_re.begin(), o.upper_re.end());
        packed.insert(packed.end(), o.upper_im.begin(), o.upper_im.end());
        auto z = [&](const std::vector<double> &v) {
            return expect_dense(s, DenseObservable{{v.begin(), v.begin() + static_cast<std::ptrdiff_t>(K)},
                                                   {v.begin() + static_cast<std::ptrdiff_t>(K), v.begin() + static_cast<std::ptrdiff_t>(K + u)},
                                                   {v.begin() + static_cast<std::ptrdiff_t>(K + u), v.end()},
                                                   w});
        };
        const auto g = grad_dense_observable(s, w);
        for (std::size_t i = 0; i < packed.size(); ++i) EXPECT_NEAR(g[i], central_difference(z, packed, i), 1e-8);
    }
}

TEST(DenseGradient, RealStateHasNoImaginaryComponents) {
    std::mt19937_64 rng(8);
    const auto x = random_vector(4, -pi, pi, rng);
    const auto s = variational_layers(encode<cplx>(x, 4), CircuitParams(2, 4, random_vector(8, -pi, pi, rng)));
    const auto g = grad_dense_observable(s, QubitWindow({4, 1}));
    for (std::size_t i = 4 + 6; i < g.size(); ++i) EXPECT_NEAR(g[i], 0.0, 1e-15);
}

TEST(Bundle, ShapesPerMode) {
    std::mt19937_64 rng(9);
    for (Mode mode : {Mode::vqc, Mode::dano, Mode::ano}) {
        const auto in = random_instance(4, 2, 2, mode, rng);
        const auto b = gradient_bundle(in.x, in.p, in.obs, in.cfg);
        EXPECT_EQ(b.d_theta.values.size(), 2u * 4u * 4u);
        if (mode == Mode::ano) {
            ASSERT_TRUE(b.d_dense.has_value());
            EXPECT_EQ(b.d_dense->size(), 4u);
            EXPECT_EQ(b.d_dense->front().size(), 16u);
        } else {
            EXPECT_EQ(b.d_lambda.size(), 4u);
            EXPECT_EQ(b.d_lambda.front().size(), mode == Mode::vqc ? 2u : 4u);
        }
    }
}

TEST(Properties, AllGradientsAgainstFiniteDifferences) {
    // n in {2, 4, 6}: theta gradient via adjoint, lambda gradient via marginals,
    // both checked against differences of the full forward pass.
    std::mt19937_64 rng(10);
    for (int n : {2, 4, 6})
        for (int t = 0; t < 4; ++t) {
            const auto in = random_instance(n, 1 + t % n, 2, Mode::dano, rng);
            const auto adj = grad_theta_adjoint(in.x, in.p, in.obs, in.cfg);
            for (int l = 0; l < 2; ++l)
                for (int q = 0; q < n; ++q) {
                    const double fd = central_difference(
                        [&](const std::vector<double> &th) { return forward(in.x, CircuitParams(2, n, th), in.obs, in.cfg)[0]; }, in.p.theta,
                        static_cast<std::size_t>(l * n + q));
                    EXPECT_TRUE(fd_close(adj.at(l, q, 0), fd));
                }
            const auto s = variational_layers(encode<cplx>(in.x, n), in.p);
            const auto g = grad_lambda(s, in.obs.diagonal[0].window);
            for (std::size_t m = 0; m < g.size(); ++m) {
                auto obs = in.obs;
                const double fd = central_difference(
                    [&](const std::vector<double> &lam) {
                        obs.diagonal[0].eigenvalues = lam;
                        return forward(in.x, in.p, obs, in.cfg)[0];
                    },
                    in.obs.diagonal[0].eigenvalues, m);
                EXPECT_TRUE(fd_close(g[m], fd));
            }
        }
}
