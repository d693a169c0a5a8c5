/**
 * @file
 * Measurement-stage timing: all m window outputs on a random state, diagonal
 * (marginals) versus dense (reduced density matrices), over an (n, k) grid.
 */
#pragma once

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "dano/random.hpp"
#include "dano/readout.hpp"

namespace dano {

struct BenchOptions {
    std::vector<int> qubits{12};
    std::vector<int> localities{2, 4, 6, 8};
    int reps = 5;
    std::uint64_t seed = 0;
};

struct BenchCell {
    int n = 0;
    int k = 0;
    int m = 0;
    int reps = 0;
    double dano_seconds = 0.0; ///< mean per full measurement
    double ano_seconds = 0.0;
    long long dano_flops = 0;  ///< n 2^n
    long long ano_flops = 0;   ///< n 2^(n+k)

    double ratio() const { return ano_seconds / dano_seconds; }
};

inline long long dano_flop_count(int n) { return static_cast<long long>(n) << n; }
inline long long ano_flop_count(int n, int k) { return static_cast<long long>(n) << (n + k); }

/// Mean wall time of measuring m = n windows in each mode, same random state
/// (complex amplitudes for both), one warm-up call first.
inline BenchCell bench_cell(int n, int k, int reps, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto s = random_state(n, rng);
    BenchCell cell{n, k, n, reps, 0, 0, dano_flop_count(n), ano_flop_count(n, k)};
    auto time_mode = [&](Mode mode) {
        const ModelConfig cfg{n, k, 1, mode, n, 1};
        const Readout readout(cfg);
        Observables obs;
        for (const auto &w : readout.windows()) {
            if (mode == Mode::ano) obs.dense.push_back(random_dense_observable(w, rng));
            else obs.diagonal.push_back({random_vector(w.local_dim(), -1.0, 1.0, rng), w});
        }
        MeasurementCache cache;
        std::vector<double> z(static_cast<std::size_t>(n));
        readout.measure<cplx>(s.amplitudes(), obs, z.size(), z, cache);
        const auto t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) readout.measure<cplx>(s.amplitudes(), obs, z.size(), z, cache);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
    };
    cell.dano_seconds = time_mode(Mode::dano);
    cell.ano_seconds = time_mode(Mode::ano);
    return cell;
}

inline std::vector<BenchCell> run_bench(const BenchOptions &opt) {
    std::vector<BenchCell> cells;
    for (int n : opt.qubits)
        for (int k : opt.localities) {
            if (k > n) continue;
            cells.push_back(bench_cell(n, k, opt.reps, opt.seed + static_cast<std::uint64_t>(n * 64 + k)));
        }
    return cells;
}

inline std::string bench_csv(const std::vector<BenchCell> &cells) {
    std::string out = "n,k,m,reps,dano_seconds,ano_seconds,ano_over_dano,dano_flops,ano_flops\n";
    char buf[256];
    for (const auto &c : cells) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.6e,%.6e,%.4f,%lld,%lld\n", c.n, c.k, c.m, c.reps, c.dano_seconds, c.ano_seconds, c.ratio(),
                      c.dano_flops, c.ano_flops);
        out += buf;
    }
    return out;
}

} // namespace dano
