/**
 * @file
 * Self-check suites behind the `verify` command. Each suite reports the
 * number of cases, the worst error seen and the tolerance it was held to.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "dano/gradients.hpp"
#include "dano/oracle.hpp"
#include "dano/random.hpp"
#include "dano/training.hpp"

namespace dano {

struct SuiteResult {
    std::string suite;
    int cases = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct VerifyOptions {
    std::uint64_t seed = 1;
    int oracle_instances = 100; ///< per n in 2..6
    int bound_trials = 1000;
    int rayleigh_trials = 1000;
    bool inject_fault = false; ///< flips the sign of simulator outputs in the oracle suite
};

namespace verify_detail {

struct Tracker {
    SuiteResult r;
    Tracker(std::string name, double tol) { r.suite = std::move(name), r.tolerance = tol; }
    void add(double err) {
        ++r.cases;
        if (!(err <= r.max_error)) r.max_error = std::isnan(err) ? INFINITY : err;
    }
    SuiteResult done() {
        r.passed = r.cases > 0 && r.max_error <= r.tolerance;
        return r;
    }
};

/// Random model instance on n qubits: mode cycles vqc/dano/ano, k random.
template <class Rng> ModelConfig random_config(int n, int i, Rng &rng) {
    ModelConfig cfg;
    cfg.qubits = n;
    cfg.layers = 1 + i % 3;
    cfg.mode = static_cast<Mode>(i % 3);
    cfg.locality = cfg.mode == Mode::vqc ? 1 : 1 + static_cast<int>(rng() % static_cast<unsigned>(n));
    cfg.windows = n;
    cfg.classes = 1;
    return cfg;
}

template <class Rng> Observables random_observables(const ModelConfig &cfg, Rng &rng) {
    auto obs = initial_observables(cfg);
    for (auto &o : obs.diagonal) o.eigenvalues = random_vector(o.eigenvalues.size(), -2.0, 2.0, rng);
    for (auto &o : obs.dense) o = random_dense_observable(o.window, rng);
    return obs;
}

template <class Rng> CircuitParams random_circuit(const ModelConfig &cfg, Rng &rng) {
    return CircuitParams(cfg.layers, cfg.qubits, random_vector(static_cast<std::size_t>(cfg.layers * cfg.qubits), -std::numbers::pi, std::numbers::pi, rng));
}

} // namespace verify_detail

inline SuiteResult verify_oracle_equivalence(const VerifyOptions &opt) {
    verify_detail::Tracker t("oracle-equivalence", 1e-10);
    std::mt19937_64 rng(opt.seed);
    for (int n = 2; n <= 6; ++n)
        for (int i = 0; i < opt.oracle_instances; ++i) {
            const auto cfg = verify_detail::random_config(n, i, rng);
            const auto x = random_vector(static_cast<std::size_t>(n), -std::numbers::pi, std::numbers::pi, rng);
            const auto p = verify_detail::random_circuit(cfg, rng);
            const auto obs = verify_detail::random_observables(cfg, rng);
            auto z = forward<cplx>(x, p, obs, cfg);
            if (opt.inject_fault)
                for (double &v : z) v = -v;
            const auto zo = oracle_forward(x, p, obs, cfg);
            double err = 0.0;
            for (std::size_t j = 0; j < z.size(); ++j) err = std::max(err, std::abs(z[j] - zo[j]));
            t.add(err);
        }
    return t.done();
}

/// Fused engine + readout against the gate-by-gate reference.
inline SuiteResult verify_engine_parity(const VerifyOptions &opt) {
    verify_detail::Tracker t("engine-parity", 1e-12);
    std::mt19937_64 rng(opt.seed + 1);
    for (int n = 1; n <= 10; ++n)
        for (int i = 0; i < 12; ++i) {
            auto cfg = verify_detail::random_config(n, i, rng);
            const auto x = random_vector(static_cast<std::size_t>(n), -std::numbers::pi, std::numbers::pi, rng);
            const auto p = verify_detail::random_circuit(cfg, rng);
            const auto obs = verify_detail::random_observables(cfg, rng);
            const auto ref = forward<cplx>(x, p, obs, cfg);
            const Readout readout(cfg);
            std::vector<double> z(ref.size());
            MeasurementCache cache;
            if (cfg.mode == Mode::ano) {
                CircuitEngine<cplx> e(n, cfg.layers);
                e.run(x, p);
                readout.measure<cplx>(e.state(), obs, z.size(), z, cache);
            } else {
                CircuitEngine<double> e(n, cfg.layers);
                e.run(x, p);
                readout.measure<double>(e.state(), obs, z.size(), z, cache);
            }
            double err = 0.0;
            for (std::size_t j = 0; j < z.size(); ++j) err = std::max(err, std::abs(z[j] - ref[j]));
            t.add(err);
        }
    return t.done();
}

inline SuiteResult verify_adjoint_vs_shift(const VerifyOptions &opt) {
    verify_detail::Tracker t("adjoint-vs-parameter-shift", 1e-9);
    std::mt19937_64 rng(opt.seed + 2);
    for (int i = 0; i < 50; ++i) {
        const int n = 2 + i % 5;
        const auto cfg = verify_detail::random_config(n, i, rng);
        const auto x = random_vector(static_cast<std::size_t>(n), -std::numbers::pi, std::numbers::pi, rng);
        const auto p = verify_detail::random_circuit(cfg, rng);
        const auto obs = verify_detail::random_observables(cfg, rng);
        const auto a = grad_theta_adjoint(x, p, obs, cfg);
        const auto s = grad_theta_parameter_shift(x, p, obs, cfg);
        double err = 0.0;
        for (std::size_t k = 0; k < a.values.size(); ++k) err = std::max(err, std::abs(a.values[k] - s.values[k]));
        t.add(err);
    }
    return t.done();
}

/// dz/dlambda from the simulator against projector expectations on the oracle.
inline SuiteResult verify_lambda_gradient(const VerifyOptions &opt) {
    verify_detail::Tracker t("lambda-gradient-vs-projectors", 1e-12);
    std::mt19937_64 rng(opt.seed + 3);
    for (int i = 0; i < 30; ++i) {
        const int n = 2 + i % 4;
        ModelConfig cfg{n, 1 + i % n, 1 + i % 2, Mode::dano, n, 1};
        const auto x = random_vector(static_cast<std::size_t>(n), -std::numbers::pi, std::numbers::pi, rng);
        const auto p = verify_detail::random_circuit(cfg, rng);
        const auto s = variational_layers(encode<cplx>(x, n), p);
        const DenseMatrix u = dense_circuit_matrix(x, p, cfg);
        const Eigen::VectorXcd psi = u.col(0);
        double err = 0.0;
        for (const auto &w : sliding_windows(n, cfg.locality, n)) {
            const auto g = grad_lambda(s, w);
            for (std::size_t m = 0; m < g.size(); ++m) {
                DenseMatrix proj = DenseMatrix::Zero(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
                proj(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)) = 1.0;
                const double pm = psi.dot(embed_klocal(proj, w, n) * psi).real();
                err = std::max(err, std::abs(g[m] - pm));
            }
        }
        t.add(err);
    }
    return t.done();
}

/// End-to-end loss gradient against central differences (h = 1e-4). The
/// error is |a - f| / max(|f|, 1e-3): relative above 1e-3, absolute x 1e3
/// below, so a 1e-5 tolerance means 1e-5 relative or 1e-8 absolute.
inline SuiteResult verify_loss_gradient(const VerifyOptions &opt) {
    verify_detail::Tracker t("loss-gradient-vs-finite-difference", 1e-5);
    std::mt19937_64 rng(opt.seed + 4);
    const Mode modes[] = {Mode::vqc, Mode::dano, Mode::ano};
    for (int i = 0; i < 6; ++i) {
        ModelConfig cfg{4, modes[i % 3] == Mode::vqc ? 1 : 2, 2, modes[i % 3], 4, 3};
        auto ts = init_train_state(cfg, opt.seed + static_cast<std::uint64_t>(i), i < 3 ? Loss::cross_entropy : Loss::mse);
        for (std::size_t k = ts.layout().theta; k < ts.params.size(); ++k) ts.params[k] += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        LabeledSet set{4, {}, {}};
        for (int r = 0; r < 3; ++r) set.push(random_vector(4, -std::numbers::pi, std::numbers::pi, rng), r % 3);
        const std::vector<std::size_t> rows{0, 1, 2};
        std::vector<double> g;
        loss_and_gradient(ts, set, rows, g);
        std::vector<double> scratch;
        const double h = 1e-4;
        for (std::size_t k = 0; k < ts.params.size(); ++k) {
            auto plus = ts, minus = ts;
            plus.params[k] += h;
            minus.params[k] -= h;
            const double f = (loss_and_gradient(plus, set, rows, scratch) - loss_and_gradient(minus, set, rows, scratch)) / (2 * h);
            t.add(std::abs(g[k] - f) / std::max(std::abs(f), 1e-3));
        }
    }
    return t.done();
}

inline SuiteResult verify_vqc_subset(const VerifyOptions &opt) {
    verify_detail::Tracker t("vqc-subset-identity", 1e-14);
    std::mt19937_64 rng(opt.seed + 5);
    for (int i = 0; i < 60; ++i) {
        const int n = 1 + i % 8;
        ModelConfig vqc{n, 1, 1 + i % 3, Mode::vqc, n, 1};
        ModelConfig dano = vqc;
        dano.mode = Mode::dano;
        const auto x = random_vector(static_cast<std::size_t>(n), -std::numbers::pi, std::numbers::pi, rng);
        const auto p = verify_detail::random_circuit(vqc, rng);
        const auto a = forward<double>(x, p, initial_observables(vqc), vqc);
        const auto b = forward<double>(x, p, initial_observables(dano), dano);
        double err = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) err = std::max(err, std::abs(a[j] - b[j]));
        t.add(err);
    }
    return t.done();
}

inline SuiteResult verify_param_counts(const VerifyOptions &) {
    verify_detail::Tracker t("parameter-counts", 0.0);
    struct Row { Mode mode; int k; long long total; long long observable; };
    const Row rows[] = {{Mode::vqc, 1, 96, 0},        {Mode::dano, 2, 160, 64},      {Mode::dano, 4, 352, 256},
                        {Mode::dano, 6, 1120, 1024},  {Mode::dano, 8, 4192, 4096},   {Mode::dano, 10, 16480, 16384},
                        {Mode::ano, 2, 352, 256},     {Mode::ano, 4, 4192, 4096},    {Mode::ano, 6, 65632, 65536},
                        {Mode::ano, 8, 1048672, 1048576}};
    for (const auto &r : rows) {
        const auto c = count_params({16, r.k, 6, r.mode, 16, 10});
        t.add(static_cast<double>(std::abs(c.total - r.total) + std::abs(c.observable - r.observable) + std::abs(c.circuit - 96)));
    }
    return t.done();
}

/// ||U^dag L U - V^dag L V|| <= 2 ||L|| ||U - V||. Half the trials use V close
/// to U, where the bound is tight in first order.
inline SuiteResult verify_hermitian_bound(const VerifyOptions &opt) {
    verify_detail::Tracker t("hermitian-perturbation-bound", 1e-9);
    std::mt19937_64 rng(opt.seed + 6);
    for (int i = 0; i < opt.bound_trials; ++i) {
        const Eigen::Index d = 2 + i % 15;
        const auto u = random_unitary(d, rng);
        DenseMatrix v;
        if (i % 2) {
            v = random_unitary(d, rng);
        } else {
            const double eps = std::pow(10.0, -1.0 - static_cast<double>(i % 7));
            const Eigen::SelfAdjointEigenSolver<DenseMatrix> es(random_hermitian(d, rng));
            const Eigen::VectorXcd phase = (cplx(0, eps) * es.eigenvalues().cast<cplx>()).array().exp();
            v = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint() * u;
        }
        const auto b = check_hermitian_bound(u, v, random_vector(static_cast<std::size_t>(d), -3.0, 3.0, rng));
        t.add(std::max(0.0, b.lhs - b.rhs));
    }
    return t.done();
}

inline SuiteResult verify_rayleigh(const VerifyOptions &opt) {
    verify_detail::Tracker t("rayleigh-bound", 1e-12);
    std::mt19937_64 rng(opt.seed + 7);
    for (int i = 0; i < opt.rayleigh_trials; ++i) {
        const int n = 1 + i % 6;
        const int k = 1 + static_cast<int>(rng() % static_cast<unsigned>(n));
        const auto s = random_state(n, rng);
        const DiagonalObservable o{random_vector(std::size_t{1} << k, -5.0, 5.0, rng), QubitWindow::cyclic(n, k, 1 + static_cast<int>(rng() % static_cast<unsigned>(n)))};
        const double z = expect_diagonal(s, o);
        const auto [lo, hi] = std::ranges::minmax(o.eigenvalues);
        t.add(std::max({0.0, lo - z, z - hi}));
    }
    return t.done();
}

inline SuiteResult verify_marginal_consistency(const VerifyOptions &opt) {
    verify_detail::Tracker t("marginal-vs-rdm-diagonal", 1e-12);
    std::mt19937_64 rng(opt.seed + 8);
    for (int i = 0; i < 50; ++i) {
        const int n = 1 + i % 7;
        const auto s = random_state(n, rng);
        for (int k = 1; k <= n; ++k) {
            const auto w = QubitWindow::cyclic(n, k, 1 + i % n);
            const auto p = marginal_probabilities(s, w);
            const auto rho = reduced_density_matrix(s, w);
            double err = 0.0;
            for (std::size_t m = 0; m < p.size(); ++m) err = std::max(err, std::abs(p[m] - rho(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)).real()));
            t.add(err);
        }
    }
    return t.done();
}

inline SuiteResult verify_norm_conservation(const VerifyOptions &opt) {
    verify_detail::Tracker t("norm-conservation", 1e-12);
    std::mt19937_64 rng(opt.seed + 9);
    for (int i = 0; i < 40; ++i) {
        const int n = 1 + i % 10;
        StateVector s(n);
        std::uniform_int_distribution<int> q(1, n), g(0, 2);
        std::uniform_real_distribution<double> a(-10, 10);
        for (int step = 0; step < 200; ++step) {
            const int kind = g(rng);
            const int q1 = q(rng);
            if (kind == 0) s.hadamard(q1);
            else if (kind == 1) s.ry(q1, a(rng));
            else if (n > 1) {
                int q2 = q(rng);
                while (q2 == q1) q2 = q(rng);
                s.cnot(q1, q2);
            }
        }
        t.add(std::abs(s.norm() - 1.0));
    }
    return t.done();
}

/// embed_klocal(diag(lambda)) has spectrum lambda with multiplicity 2^(n-k).
inline SuiteResult verify_klocal_spectrum(const VerifyOptions &opt) {
    verify_detail::Tracker t("klocal-embedding-spectrum", 1e-10);
    std::mt19937_64 rng(opt.seed + 10);
    for (int n = 1; n <= 6; ++n)
        for (int k = 1; k <= n; ++k) {
            const DiagonalObservable o{random_vector(std::size_t{1} << k, -2.0, 2.0, rng), QubitWindow::cyclic(n, k, n)};
            const Eigen::SelfAdjointEigenSolver<DenseMatrix> es(embed_diagonal(o, n));
            std::vector<double> want;
            for (double l : o.eigenvalues) want.insert(want.end(), std::size_t{1} << (n - k), l);
            std::ranges::sort(want);
            double err = 0.0;
            for (std::size_t m = 0; m < want.size(); ++m) err = std::max(err, std::abs(es.eigenvalues()(static_cast<Eigen::Index>(m)) - want[m]));
            t.add(err);
        }
    return t.done();
}

inline std::vector<SuiteResult> run_verify(const VerifyOptions &opt) {
    return {verify_oracle_equivalence(opt), verify_engine_parity(opt),   verify_adjoint_vs_shift(opt),
            verify_lambda_gradient(opt),    verify_loss_gradient(opt),   verify_vqc_subset(opt),
            verify_param_counts(opt),       verify_hermitian_bound(opt), verify_rayleigh(opt),
            verify_marginal_consistency(opt), verify_norm_conservation(opt), verify_klocal_spectrum(opt)};
}

inline nlohmann::json verify_report(const std::vector<SuiteResult> &results) {
    nlohmann::json j;
    j["suites"] = nlohmann::json::array();
    bool all = true;
    for (const auto &r : results) {
        j["suites"].push_back({{"suite", r.suite}, {"cases", r.cases}, {"max_error", r.max_error}, {"tolerance", r.tolerance},
                               {"verdict", r.passed ? "pass" : "fail"}});
        all = all && r.passed;
    }
    j["passed"] = all;
    return j;
}

} // namespace dano
