/**
 * @file
 * Losses, Adam, the epoch loop, evaluation, checkpoints and the rescue
 * protocol.
 *
 * Parameters live in one flat vector: the L*n circuit angles first, then the
 * observable parameters window by window (2^k eigenvalues for dano, the K^2
 * packed Hermitian entries for ano, nothing for vqc). Per-sample gradients are
 * computed concurrently but always summed in sample order, so results do not
 * depend on the thread count.
 */
#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dano/data.hpp"
#include "dano/engine.hpp"
#include "dano/gradients.hpp"
#include "dano/parallel.hpp"
#include "dano/readout.hpp"

namespace dano {

// ---------------------------------------------------------------- losses

enum class Loss { cross_entropy, mse };

inline std::string_view to_string(Loss l) { return l == Loss::mse ? "mse" : "ce"; }

inline Loss parse_loss(std::string_view s) {
    if (s == "ce" || s == "cross_entropy") return Loss::cross_entropy;
    if (s == "mse") return Loss::mse;
    throw ValidationError("unknown loss '" + std::string(s) + "' (expected ce|mse)");
}

struct CrossEntropy {
    double loss = 0.0;
    std::vector<double> grad; ///< softmax - one_hot
};

/// Max-subtracted softmax cross entropy of one sample.
inline CrossEntropy softmax_cross_entropy(std::span<const double> logits, int label) {
    if (logits.size() < 2) throw ValidationError("cross entropy needs at least 2 classes");
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw ValidationError("label " + std::to_string(label) + " outside 0.." + std::to_string(logits.size() - 1));
    const double mx = *std::ranges::max_element(logits);
    CrossEntropy out;
    out.grad.resize(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out.grad[c] = std::exp(logits[c] - mx);
        sum += out.grad[c];
    }
    for (double &g : out.grad) g /= sum;
    out.loss = std::log(sum) - (logits[static_cast<std::size_t>(label)] - mx);
    out.grad[static_cast<std::size_t>(label)] -= 1.0;
    return out;
}

/// (1/|D|) sum_i ||z_i - y_i||^2
inline double mse_loss(const std::vector<std::vector<double>> &z, const std::vector<std::vector<double>> &y) {
    if (z.size() != y.size() || z.empty()) throw ShapeError("mse_loss: batch sizes differ or are empty");
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i].size() != y[i].size()) throw ShapeError("mse_loss: output and target lengths differ");
        for (std::size_t c = 0; c < z[i].size(); ++c) total += (z[i][c] - y[i][c]) * (z[i][c] - y[i][c]);
    }
    return total / static_cast<double>(z.size());
}

/// dL/dz_i = 2 (z_i - y_i) / |D|
inline std::vector<std::vector<double>> mse_gradient(const std::vector<std::vector<double>> &z, const std::vector<std::vector<double>> &y) {
    if (z.size() != y.size() || z.empty()) throw ShapeError("mse_gradient: batch sizes differ or are empty");
    auto g = z;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i].size() != y[i].size()) throw ShapeError("mse_gradient: output and target lengths differ");
        for (std::size_t c = 0; c < z[i].size(); ++c) g[i][c] = 2.0 * (z[i][c] - y[i][c]) / static_cast<double>(z.size());
    }
    return g;
}

// ---------------------------------------------------------------- state

struct Hyperparams {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch = 32;
    int epochs = 50; ///< train until this epoch number
    Loss loss = Loss::cross_entropy;
    int threads = 1;
};

/// Offsets of the blocks inside the flat parameter vector.
struct ParamLayout {
    std::size_t theta = 0;      ///< L*n circuit angles at offset 0
    std::size_t per_window = 0; ///< observable parameters per window
    std::size_t windows = 0;

    static ParamLayout of(const ModelConfig &cfg) {
        ParamLayout l;
        l.theta = static_cast<std::size_t>(cfg.layers) * static_cast<std::size_t>(cfg.qubits);
        l.windows = static_cast<std::size_t>(cfg.windows);
        const std::size_t K = cfg.local_dim();
        l.per_window = cfg.mode == Mode::vqc ? 0 : cfg.mode == Mode::dano ? K : K * K;
        return l;
    }
    std::size_t observable(std::size_t j) const { return theta + j * per_window; }
    std::size_t total() const { return theta + windows * per_window; }
};

struct TrainState {
    ModelConfig cfg;
    Loss loss = Loss::cross_entropy;
    std::vector<double> params;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::vector<std::uint8_t> frozen; ///< 1 = never updated
    long long step = 0;               ///< Adam step count
    int epoch = 0;                    ///< completed epochs
    std::uint64_t seed = 0;
    std::string run_id;

    ParamLayout layout() const { return ParamLayout::of(cfg); }

    void check() const {
        cfg.validate();
        const auto P = layout().total();
        if (params.size() != P || adam_m.size() != P || adam_v.size() != P || frozen.size() != P)
            throw ShapeError("train state arrays do not match the parameter layout (" + std::to_string(P) + " entries)");
    }

    CircuitParams circuit() const {
        return CircuitParams(cfg.layers, cfg.qubits, std::vector<double>(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(layout().theta)));
    }

    Observables observables() const {
        const auto lay = layout();
        const auto windows = sliding_windows(cfg.qubits, cfg.locality, cfg.windows);
        Observables obs;
        const std::size_t K = cfg.local_dim();
        for (std::size_t j = 0; j < windows.size(); ++j) {
            const auto *p = params.data() + lay.observable(j);
            if (cfg.mode == Mode::dano) {
                obs.diagonal.push_back({std::vector<double>(p, p + K), windows[j]});
            } else if (cfg.mode == Mode::ano) {
                const std::size_t u = K * (K - 1) / 2;
                obs.dense.push_back({std::vector<double>(p, p + K), std::vector<double>(p + K, p + K + u),
                                     std::vector<double>(p + K + u, p + K + 2 * u), windows[j]});
            }
        }
        return obs;
    }

    bool theta_frozen() const {
        return std::all_of(frozen.begin(), frozen.begin() + static_cast<std::ptrdiff_t>(layout().theta), [](auto f) { return f != 0; });
    }
};

/// theta ~ U(-pi, pi) from the seed; observables at their parity start.
inline TrainState init_train_state(const ModelConfig &cfg, std::uint64_t seed, Loss loss = Loss::cross_entropy) {
    cfg.validate();
    TrainState ts;
    ts.cfg = cfg;
    ts.loss = loss;
    ts.seed = seed;
    const auto lay = ts.layout();
    ts.params.assign(lay.total(), 0.0);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x7468u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    for (std::size_t i = 0; i < lay.theta; ++i) ts.params[i] = angle(rng);
    const auto obs = initial_observables(cfg);
    for (std::size_t j = 0; j < lay.windows; ++j) {
        double *p = ts.params.data() + lay.observable(j);
        if (cfg.mode == Mode::dano) {
            std::ranges::copy(obs.diagonal[j].eigenvalues, p);
        } else if (cfg.mode == Mode::ano) {
            const auto &d = obs.dense[j];
            p = std::ranges::copy(d.diag, p).out;
            p = std::ranges::copy(d.upper_re, p).out;
            std::ranges::copy(d.upper_im, p);
        }
    }
    ts.adam_m.assign(lay.total(), 0.0);
    ts.adam_v.assign(lay.total(), 0.0);
    ts.frozen.assign(lay.total(), 0);
    return ts;
}

/// Bias-corrected Adam. Frozen entries (parameters and moments) are skipped.
inline void adam_step(TrainState &ts, std::span<const double> grads, const Hyperparams &hp) {
    if (grads.size() != ts.params.size() || ts.adam_m.size() != ts.params.size() || ts.adam_v.size() != ts.params.size() ||
        ts.frozen.size() != ts.params.size())
        throw ShapeError("adam_step: gradient has " + std::to_string(grads.size()) + " entries, state has " + std::to_string(ts.params.size()));
    ++ts.step;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(ts.step));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(ts.step));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (ts.frozen[i]) continue;
        const double g = grads[i];
        ts.adam_m[i] = hp.beta1 * ts.adam_m[i] + (1.0 - hp.beta1) * g;
        ts.adam_v[i] = hp.beta2 * ts.adam_v[i] + (1.0 - hp.beta2) * g * g;
        ts.params[i] -= hp.lr * (ts.adam_m[i] / c1) / (std::sqrt(ts.adam_v[i] / c2) + hp.eps);
    }
}

// ---------------------------------------------------------------- runner

/// Index of the largest logit; ties go to the lowest index.
inline int argmax(std::span<const double> z) {
    return static_cast<int>(std::ranges::max_element(z) - z.begin());
}

/// Window marginals of every sample for a frozen circuit, C windows each.
struct MarginalTable {
    std::size_t stride = 0; ///< C * 2^k per sample
    std::vector<double> values;
    std::span<const double> sample(std::size_t i) const { return std::span<const double>(values).subspan(i * stride, stride); }
};

namespace detail {

/// Loss and output gradient of one sample. dz is scaled by `scale`.
inline double loss_and_dz(std::span<const double> z, int label, Loss loss, double scale, std::span<double> dz) {
    double value = 0.0;
    if (loss == Loss::cross_entropy) {
        const auto ce = softmax_cross_entropy(z, label);
        value = ce.loss;
        for (std::size_t c = 0; c < z.size(); ++c) dz[c] = scale * ce.grad[c];
    } else {
        if (label < 0 || static_cast<std::size_t>(label) >= z.size()) throw ValidationError("label outside the class range");
        for (std::size_t c = 0; c < z.size(); ++c) {
            const double d = z[c] - (static_cast<int>(c) == label ? 1.0 : 0.0);
            value += d * d;
            dz[c] = scale * 2.0 * d;
        }
    }
    return value;
}

/// Forward and gradient evaluation for one parameter snapshot, with one
/// simulation workspace per pool worker.
template <Amplitude T> class Runner {
public:
    Runner(const ModelConfig &cfg, const WorkerPool &pool) : cfg_(cfg), readout_(cfg) {
        if (cfg.mode == Mode::ano && !std::same_as<T, cplx>) throw ValidationError("dense observables need a complex statevector");
        for (int w = 0; w < pool.size(); ++w) work_.emplace_back(cfg);
    }

    void load(const TrainState &ts) {
        circuit_ = ts.circuit();
        obs_ = ts.observables();
        readout_.check(obs_);
        need_theta_ = !ts.theta_frozen();
    }

    std::size_t classes() const { return static_cast<std::size_t>(cfg_.classes); }

    /// z_0..z_{C-1} for one input.
    void logits(std::span<const double> x, int w, std::span<double> z, const MarginalTable *table = nullptr, std::size_t row = 0) {
        auto &ws = work_[static_cast<std::size_t>(w)];
        if (table) {
            from_marginals(table->sample(row), z);
            return;
        }
        ws.engine.run(x, circuit_);
        readout_.measure<T>(ws.engine.state(), obs_, classes(), z, ws.cache);
    }

    /// Marginals of the first C windows (diagonal modes).
    void marginals(std::span<const double> x, int w, std::span<double> out) {
        auto &ws = work_[static_cast<std::size_t>(w)];
        ws.engine.run(x, circuit_);
        readout_.measure<T>(ws.engine.state(), obs_, classes(), ws.z, ws.cache);
        double *dst = out.data();
        for (const auto &m : ws.cache.marginals) dst = std::ranges::copy(m, dst).out;
    }

    /// Loss of one sample; writes the full parameter gradient of scale * loss
    /// into g (every entry is overwritten).
    double sample_gradient(std::span<const double> x, int label, Loss loss, double scale, int w, std::span<double> g, bool &correct,
                           const MarginalTable *table = nullptr, std::size_t row = 0) {
        auto &ws = work_[static_cast<std::size_t>(w)];
        std::ranges::fill(g, 0.0);
        const auto lay = ParamLayout::of(cfg_);
        const std::size_t C = classes();
        if (table) {
            from_marginals(table->sample(row), ws.z);
        } else {
            ws.engine.run(x, circuit_);
            readout_.measure<T>(ws.engine.state(), obs_, C, ws.z, ws.cache);
        }
        const double value = loss_and_dz(ws.z, label, loss, scale, ws.dz);
        correct = argmax(ws.z) == label;

        if (cfg_.mode == Mode::dano) {
            const std::size_t K = cfg_.local_dim();
            for (std::size_t j = 0; j < C; ++j) {
                const double *p = table ? table->sample(row).data() + j * K : ws.cache.marginals[j].data();
                double *out = g.data() + lay.observable(j);
                for (std::size_t m = 0; m < K; ++m) out[m] = ws.dz[j] * p[m];
            }
        } else if (cfg_.mode == Mode::ano) {
            for (std::size_t j = 0; j < C; ++j) {
                const auto packed = packed_gradient_from_rdm(ws.cache.rdms[j]);
                double *out = g.data() + lay.observable(j);
                for (std::size_t t = 0; t < packed.size(); ++t) out[t] = ws.dz[j] * packed[t];
            }
        }
        if (need_theta_) {
            if (table) throw ValidationError("cached marginals require a frozen circuit");
            readout_.cotangent<T>(ws.engine.state(), obs_, ws.dz, ws.cot);
            ws.engine.template backprop<T>(ws.cot, circuit_, ws.dtheta);
            std::ranges::copy(ws.dtheta, g.begin());
        }
        return value;
    }

private:
    void from_marginals(std::span<const double> p, std::span<double> z) const {
        const std::size_t K = cfg_.local_dim();
        for (std::size_t j = 0; j < classes(); ++j) {
            const auto lam = readout_.eigenvalues(obs_, j);
            double acc = 0.0;
            for (std::size_t m = 0; m < K; ++m) acc += lam[m] * p[j * K + m];
            z[j] = acc;
        }
    }

    struct Workspace {
        CircuitEngine<T> engine;
        MeasurementCache cache;
        std::vector<T> cot;
        std::vector<double> dtheta, z, dz;
        explicit Workspace(const ModelConfig &cfg)
            : engine(cfg.qubits, cfg.layers), dtheta(static_cast<std::size_t>(cfg.layers) * static_cast<std::size_t>(cfg.qubits)),
              z(static_cast<std::size_t>(cfg.classes)), dz(static_cast<std::size_t>(cfg.classes)) {}
    };

    ModelConfig cfg_;
    Readout readout_;
    std::vector<Workspace> work_;
    CircuitParams circuit_;
    Observables obs_;
    bool need_theta_ = true;
};

inline void check_dataset(const ModelConfig &cfg, const LabeledSet &set, const char *name) {
    if (!set.empty() && set.dim != cfg.qubits)
        throw ShapeError(std::string(name) + " rows have " + std::to_string(set.dim) + " features, model has " + std::to_string(cfg.qubits) + " qubits");
    for (int y : set.labels)
        if (y < 0 || y >= cfg.classes) throw ValidationError(std::string(name) + " label " + std::to_string(y) + " outside 0.." + std::to_string(cfg.classes - 1));
    for (double v : set.features)
        if (!(std::abs(v) <= std::numbers::pi + 1e-9)) throw ValidationError(std::string(name) + " feature outside [-pi, pi]");
}

template <Amplitude T> MarginalTable marginal_table(Runner<T> &runner, WorkerPool &pool, const ModelConfig &cfg, const LabeledSet &set) {
    MarginalTable t;
    t.stride = static_cast<std::size_t>(cfg.classes) * cfg.local_dim();
    t.values.resize(t.stride * set.size());
    pool.run(set.size(), [&](std::size_t i, int w) {
        runner.marginals(set.row(i), w, std::span<double>(t.values).subspan(i * t.stride, t.stride));
    });
    return t;
}

template <Amplitude T> double accuracy(Runner<T> &runner, WorkerPool &pool, const LabeledSet &set, const MarginalTable *table = nullptr) {
    if (set.empty()) throw ValidationError("cannot evaluate an empty dataset");
    std::vector<char> hit(set.size());
    std::vector<std::vector<double>> z(static_cast<std::size_t>(pool.size()), std::vector<double>(runner.classes()));
    pool.run(set.size(), [&](std::size_t i, int w) {
        auto &zw = z[static_cast<std::size_t>(w)];
        runner.logits(set.row(i), w, zw, table, i);
        hit[i] = argmax(zw) == set.labels[i];
    });
    return static_cast<double>(std::ranges::count(hit, 1)) / static_cast<double>(set.size());
}

template <class F> decltype(auto) with_amplitude(Mode mode, F &&f) {
    if (mode == Mode::ano) return f(cplx{});
    return f(double{});
}

} // namespace detail

/// Mean loss over `rows` of `set` and its gradient with respect to every
/// parameter (frozen ones included; adam_step ignores them).
inline double loss_and_gradient(const TrainState &ts, const LabeledSet &set, std::span<const std::size_t> rows, std::vector<double> &grad,
                                int threads = 1, std::size_t *correct = nullptr) {
    ts.check();
    if (rows.empty()) throw ValidationError("empty batch");
    WorkerPool pool(threads);
    return detail::with_amplitude(ts.cfg.mode, [&](auto tag) {
        using T = decltype(tag);
        detail::Runner<T> runner(ts.cfg, pool);
        runner.load(ts);
        const std::size_t P = ts.params.size();
        const std::size_t W = static_cast<std::size_t>(pool.size());
        std::vector<double> buf(W * P), losses(rows.size());
        std::vector<char> hit(rows.size());
        grad.assign(P, 0.0);
        const double scale = 1.0 / static_cast<double>(rows.size());
        for (std::size_t s = 0; s < rows.size(); s += W) {
            const std::size_t wave = std::min(W, rows.size() - s);
            pool.run(wave, [&](std::size_t i, int w) {
                bool ok = false;
                losses[s + i] = runner.sample_gradient(set.row(rows[s + i]), set.labels[rows[s + i]], ts.loss, scale, w,
                                                       std::span<double>(buf).subspan(i * P, P), ok);
                hit[s + i] = ok;
            });
            for (std::size_t i = 0; i < wave; ++i)
                for (std::size_t p = 0; p < P; ++p) grad[p] += buf[i * P + p];
        }
        if (correct) *correct = static_cast<std::size_t>(std::ranges::count(hit, 1));
        double total = 0.0;
        for (double l : losses) total += l;
        return total / static_cast<double>(rows.size());
    });
}

/// Fraction of rows whose argmax over the first C outputs equals the label.
inline double evaluate(const TrainState &ts, const LabeledSet &set, int threads = 1) {
    ts.check();
    if (set.empty()) throw ValidationError("cannot evaluate an empty dataset");
    detail::check_dataset(ts.cfg, set, "evaluation");
    WorkerPool pool(threads);
    return detail::with_amplitude(ts.cfg.mode, [&](auto tag) {
        detail::Runner<decltype(tag)> runner(ts.cfg, pool);
        runner.load(ts);
        return detail::accuracy(runner, pool, set);
    });
}

struct Metrics {
    int epoch = 0;
    double train_loss = 0.0; ///< mean per-sample loss over the epoch's mini-batches
    double train_accuracy = 0.0;
    double val_accuracy = std::numeric_limits<double>::quiet_NaN(); ///< NaN without a validation split
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const TrainState &, const Metrics &)>;

/// Mini-batch Adam from ts.epoch + 1 through hp.epochs. Each epoch visits the
/// training rows in a fresh permutation drawn from (seed, epoch). When every
/// circuit angle is frozen and the readout is diagonal, window marginals are
/// computed once and reused.
inline std::vector<Metrics> train(TrainState &ts, const TrainData &data, const Hyperparams &hp, const EpochCallback &on_epoch = {}) {
    ts.check();
    if (data.train.empty()) throw ValidationError("training set is empty");
    if (data.test.empty()) throw ValidationError("test set is empty");
    if (hp.batch < 1) throw ValidationError("batch size must be >= 1");
    detail::check_dataset(ts.cfg, data.train, "train");
    detail::check_dataset(ts.cfg, data.val, "val");
    detail::check_dataset(ts.cfg, data.test, "test");

    WorkerPool pool(hp.threads);
    const auto start = std::chrono::steady_clock::now();
    std::vector<Metrics> history;
    detail::with_amplitude(ts.cfg.mode, [&](auto tag) {
        using T = decltype(tag);
        detail::Runner<T> runner(ts.cfg, pool);
        runner.load(ts);
        const bool cached = ts.theta_frozen() && ts.cfg.mode != Mode::ano;
        MarginalTable tr, va, te;
        if (cached) {
            tr = detail::marginal_table(runner, pool, ts.cfg, data.train);
            if (!data.val.empty()) va = detail::marginal_table(runner, pool, ts.cfg, data.val);
            te = detail::marginal_table(runner, pool, ts.cfg, data.test);
        }
        const std::size_t N = data.train.size();
        const std::size_t P = ts.params.size();
        const std::size_t W = static_cast<std::size_t>(pool.size());
        std::vector<std::size_t> order(N);
        std::vector<double> buf(W * P), grad(P), losses(W);
        std::vector<char> hits(W);

        for (int epoch = ts.epoch + 1; epoch <= hp.epochs; ++epoch) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::seed_seq seq{static_cast<std::uint32_t>(ts.seed), static_cast<std::uint32_t>(ts.seed >> 32), static_cast<std::uint32_t>(epoch)};
            std::mt19937_64 rng(seq);
            std::shuffle(order.begin(), order.end(), rng);

            double loss_sum = 0.0;
            std::size_t correct = 0;
            for (std::size_t b = 0; b < N; b += static_cast<std::size_t>(hp.batch)) {
                const std::size_t bs = std::min(static_cast<std::size_t>(hp.batch), N - b);
                const double scale = 1.0 / static_cast<double>(bs);
                runner.load(ts);
                std::ranges::fill(grad, 0.0);
                for (std::size_t s = 0; s < bs; s += W) {
                    const std::size_t wave = std::min(W, bs - s);
                    pool.run(wave, [&](std::size_t i, int w) {
                        const std::size_t row = order[b + s + i];
                        bool ok = false;
                        losses[i] = runner.sample_gradient(data.train.row(row), data.train.labels[row], ts.loss, scale, w,
                                                           std::span<double>(buf).subspan(i * P, P), ok, cached ? &tr : nullptr, row);
                        hits[i] = ok;
                    });
                    for (std::size_t i = 0; i < wave; ++i) {
                        for (std::size_t p = 0; p < P; ++p) grad[p] += buf[i * P + p];
                        loss_sum += losses[i];
                        correct += hits[i] ? 1 : 0;
                    }
                }
                adam_step(ts, grad, hp);
            }
            ts.epoch = epoch;
            runner.load(ts);
            Metrics m;
            m.epoch = epoch;
            m.train_loss = loss_sum / static_cast<double>(N);
            m.train_accuracy = static_cast<double>(correct) / static_cast<double>(N);
            if (!data.val.empty()) m.val_accuracy = detail::accuracy(runner, pool, data.val, cached ? &va : nullptr);
            m.test_accuracy = detail::accuracy(runner, pool, data.test, cached ? &te : nullptr);
            m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            history.push_back(m);
            if (on_epoch) on_epoch(ts, m);
        }
        return 0;
    });
    return history;
}

// ---------------------------------------------------------------- rescue

/// Branch state for the rescue protocol: the VQC angles are kept and frozen,
/// a k-local diagonal readout starts at the parity eigenvalues, and the
/// optimizer restarts from zero moments.
inline TrainState rescue_state(const TrainState &vqc, int k) {
    vqc.check();
    if (vqc.cfg.mode != Mode::vqc) throw ValidationError("rescue needs a vqc checkpoint, got mode=" + std::string(to_string(vqc.cfg.mode)));
    ModelConfig cfg = vqc.cfg;
    cfg.mode = Mode::dano;
    cfg.locality = k;
    auto ts = init_train_state(cfg, vqc.seed, vqc.loss);
    const auto n_theta = ts.layout().theta;
    std::copy_n(vqc.params.begin(), n_theta, ts.params.begin());
    std::fill_n(ts.frozen.begin(), n_theta, std::uint8_t{1});
    ts.epoch = vqc.epoch;
    ts.run_id = vqc.run_id + "-rescue-k" + std::to_string(k);
    return ts;
}

struct RescueResult {
    TrainState state;
    std::vector<Metrics> history;
    double frozen_test_accuracy = 0.0; ///< the VQC checkpoint itself
    double frozen_val_accuracy = std::numeric_limits<double>::quiet_NaN();
    double switch_test_accuracy = 0.0; ///< branch model before its first update
};

/// Continues a VQC checkpoint taken at `switch_epoch` as a frozen-circuit
/// DANO branch until hp.epochs.
inline RescueResult rescue(const TrainState &checkpoint, int k, const TrainData &data, const Hyperparams &hp, int switch_epoch,
                           const EpochCallback &on_epoch = {}) {
    if (checkpoint.cfg.mode != Mode::vqc)
        throw ValidationError("rescue needs a vqc checkpoint, got mode=" + std::string(to_string(checkpoint.cfg.mode)));
    if (checkpoint.epoch != switch_epoch)
        throw ValidationError("checkpoint is from epoch " + std::to_string(checkpoint.epoch) + ", switch epoch is " + std::to_string(switch_epoch));
    if (hp.epochs <= switch_epoch)
        throw ValidationError("total epochs " + std::to_string(hp.epochs) + " must exceed the switch epoch " + std::to_string(switch_epoch));
    RescueResult r;
    r.state = rescue_state(checkpoint, k);
    r.frozen_test_accuracy = evaluate(checkpoint, data.test, hp.threads);
    if (!data.val.empty()) r.frozen_val_accuracy = evaluate(checkpoint, data.val, hp.threads);
    r.switch_test_accuracy = evaluate(r.state, data.test, hp.threads);
    r.history = train(r.state, data, hp, on_epoch);
    return r;
}

// ---------------------------------------------------------------- files

inline constexpr std::string_view checkpoint_magic = "dano-checkpoint 1";

/// Text checkpoint: `key value` header lines, then the parameter vector, the
/// two Adam moments (one %.17g value per line each) and the frozen mask as a
/// 0/1 string, closed by `end`.
inline std::string format_checkpoint(const TrainState &ts) {
    ts.check();
    std::string s(checkpoint_magic);
    auto kv = [&](std::string_view k, const std::string &v) { s += "\n" + std::string(k) + " " + v; };
    kv("run_id", ts.run_id.empty() ? "-" : ts.run_id);
    kv("mode", std::string(to_string(ts.cfg.mode)));
    kv("qubits", std::to_string(ts.cfg.qubits));
    kv("locality", std::to_string(ts.cfg.locality));
    kv("layers", std::to_string(ts.cfg.layers));
    kv("windows", std::to_string(ts.cfg.windows));
    kv("classes", std::to_string(ts.cfg.classes));
    kv("loss", std::string(to_string(ts.loss)));
    kv("seed", std::to_string(ts.seed));
    kv("epoch", std::to_string(ts.epoch));
    kv("step", std::to_string(ts.step));
    char buf[32];
    auto block = [&](std::string_view name, const std::vector<double> &v) {
        kv(name, std::to_string(v.size()));
        for (double x : v) {
            std::snprintf(buf, sizeof buf, "\n%.17g", x);
            s += buf;
        }
    };
    block("params", ts.params);
    block("adam_m", ts.adam_m);
    block("adam_v", ts.adam_v);
    kv("frozen", std::to_string(ts.frozen.size()));
    s += "\n";
    for (auto f : ts.frozen) s += f ? '1' : '0';
    s += "\nend\n";
    return s;
}

inline TrainState parse_checkpoint(std::string_view text) {
    std::size_t at = 0;
    auto line = [&]() -> std::string_view {
        if (at >= text.size()) throw FormatError("checkpoint ends early", static_cast<long long>(at));
        const auto end = text.find('\n', at);
        const auto l = text.substr(at, end == std::string_view::npos ? std::string_view::npos : end - at);
        at = end == std::string_view::npos ? text.size() : end + 1;
        return l;
    };
    auto field = [&](std::string_view key) {
        const auto start = at;
        const auto l = line();
        if (l.size() <= key.size() || l.substr(0, key.size()) != key || l[key.size()] != ' ')
            throw FormatError("checkpoint: expected field '" + std::string(key) + "'", static_cast<long long>(start));
        return std::string(l.substr(key.size() + 1));
    };
    auto integer = [&](std::string_view key) {
        const auto start = at;
        const auto v = field(key);
        long long x = 0;
        if (std::from_chars(v.data(), v.data() + v.size(), x).ec != std::errc{})
            throw FormatError("checkpoint: bad integer for '" + std::string(key) + "'", static_cast<long long>(start));
        return x;
    };
    if (line() != checkpoint_magic) throw FormatError("not a checkpoint (bad magic line)", 0);
    TrainState ts;
    ts.run_id = field("run_id");
    if (ts.run_id == "-") ts.run_id.clear();
    ts.cfg.mode = parse_mode(field("mode"));
    ts.cfg.qubits = static_cast<int>(integer("qubits"));
    ts.cfg.locality = static_cast<int>(integer("locality"));
    ts.cfg.layers = static_cast<int>(integer("layers"));
    ts.cfg.windows = static_cast<int>(integer("windows"));
    ts.cfg.classes = static_cast<int>(integer("classes"));
    ts.loss = parse_loss(field("loss"));
    {
        const auto start = at;
        const auto v = field("seed");
        if (std::from_chars(v.data(), v.data() + v.size(), ts.seed).ec != std::errc{}) throw FormatError("checkpoint: bad seed", static_cast<long long>(start));
    }
    ts.epoch = static_cast<int>(integer("epoch"));
    ts.step = integer("step");
    auto block = [&](std::string_view name, std::vector<double> &v) {
        const auto n = integer(name);
        if (n < 0) throw FormatError("checkpoint: negative count", static_cast<long long>(at));
        v.resize(static_cast<std::size_t>(n));
        for (auto &x : v) {
            const auto start = at;
            const auto l = line();
            if (std::from_chars(l.data(), l.data() + l.size(), x).ec != std::errc{})
                throw FormatError("checkpoint: bad value in '" + std::string(name) + "'", static_cast<long long>(start));
        }
    };
    block("params", ts.params);
    block("adam_m", ts.adam_m);
    block("adam_v", ts.adam_v);
    const auto nf = integer("frozen");
    const auto mask_at = at;
    const auto mask = line();
    if (static_cast<long long>(mask.size()) != nf) throw FormatError("checkpoint: frozen mask length mismatch", static_cast<long long>(mask_at));
    for (char c : mask) {
        if (c != '0' && c != '1') throw FormatError("checkpoint: frozen mask must be 0/1", static_cast<long long>(mask_at));
        ts.frozen.push_back(c == '1');
    }
    if (line() != "end") throw FormatError("checkpoint: missing end marker", static_cast<long long>(at));
    try {
        ts.check();
    } catch (const Error &e) {
        throw FormatError(std::string("checkpoint: ") + e.what(), 0);
    }
    return ts;
}

inline void write_checkpoint(const std::filesystem::path &path, const TrainState &ts) { detail::write_file(path, format_checkpoint(ts)); }

inline TrainState read_checkpoint(const std::filesystem::path &path) {
    const auto bytes = detail::read_file(path);
    try {
        return parse_checkpoint(std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size()));
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.message(), e.offset());
    }
}

inline constexpr std::string_view metrics_csv_header = "epoch,train_loss,train_acc,val_acc,test_acc,wall_seconds";

/// One CSV row (no newline). val_acc is empty when there is no validation split.
inline std::string format_metrics_row(const Metrics &m) {
    char buf[160];
    char val[32] = "";
    if (!std::isnan(m.val_accuracy)) std::snprintf(val, sizeof val, "%.10g", m.val_accuracy);
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.10g,%s,%.10g,%.3f", m.epoch, m.train_loss, m.train_accuracy, val, m.test_accuracy, m.wall_seconds);
    return buf;
}

} // namespace dano
