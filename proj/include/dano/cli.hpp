/**
 * @file
 * Command implementations behind the `dano` executable. Argument parsing lives
 * in tools/dano.cpp; everything here takes already-parsed values so the
 * commands can be driven from tests as well.
 */
#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "dano/bench.hpp"
#include "dano/data.hpp"
#include "dano/training.hpp"
#include "dano/verify.hpp"

namespace dano::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- digests

inline std::string hex(std::span<const unsigned char> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (unsigned char b : bytes) {
        s += digits[b >> 4];
        s += digits[b & 15];
    }
    return s;
}

/// SHA-1 of "blob <size>\0" + content, i.e. what `git hash-object` prints.
inline std::string git_blob_sha1(std::string_view content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 && EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 digest failed");
    return hex(std::span<const unsigned char>(md, len));
}

inline std::string file_digest(const fs::path &path) {
    const auto bytes = dano::detail::read_file(path);
    return git_blob_sha1(std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size()));
}

/// Digest of the circuit angles of a state, one %.17g value per line.
inline std::string theta_digest(const TrainState &ts) {
    std::string s;
    char buf[32];
    for (std::size_t i = 0; i < ts.layout().theta; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g\n", ts.params[i]);
        s += buf;
    }
    return git_blob_sha1(s);
}

// ---------------------------------------------------------------- config

/// Everything a train/rescue/eval run needs. Loaded from defaults, then a
/// key=value config file, then command-line overrides.
struct RunConfig {
    std::string mode = "dano";
    int k = 4;
    int qubits = 16;
    int layers = 6;
    int windows = 0; ///< 0: one window per qubit
    int classes = 0; ///< 0: taken from the dataset
    std::uint64_t seed = 0;
    int epochs = 30;
    double lr = 0.01;
    int batch = 32;
    std::string loss = "ce";
    int threads = 1;
    std::string data;
    std::size_t train_limit = 0; ///< 0: all rows
    std::size_t val_limit = 0;
    std::size_t test_limit = 0;
    std::string out;
    int switch_epoch = 30;
    std::string checkpoint;
};

/// Keys in the order config.txt lists them. `out` and `threads` are left out
/// of the run identity since neither changes the results.
inline const std::vector<std::string> &config_keys() {
    static const std::vector<std::string> keys{"mode",  "k",    "qubits",  "layers", "windows",     "classes",   "seed",
                                               "epochs", "lr",  "batch",   "loss",   "data",        "train_limit", "val_limit",
                                               "test_limit", "switch_epoch", "checkpoint", "threads", "out"};
    return keys;
}

namespace detail {

template <class T> bool parse_number(const std::string &v, T &out) {
    const char *end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    return ec == std::errc{} && p == end;
}

} // namespace detail

/// Sets one key; appends a message to `problems` instead of throwing.
inline void set_config_value(RunConfig &rc, const std::string &key, const std::string &value, std::vector<std::string> &problems) {
    auto num = [&](auto &field) {
        if (!detail::parse_number(value, field)) problems.push_back(key + "=" + value + " is not a valid number");
    };
    if (key == "mode") rc.mode = value;
    else if (key == "k") num(rc.k);
    else if (key == "qubits") num(rc.qubits);
    else if (key == "layers") num(rc.layers);
    else if (key == "windows") num(rc.windows);
    else if (key == "classes") num(rc.classes);
    else if (key == "seed") num(rc.seed);
    else if (key == "epochs") num(rc.epochs);
    else if (key == "lr") num(rc.lr);
    else if (key == "batch") num(rc.batch);
    else if (key == "loss") rc.loss = value;
    else if (key == "threads") num(rc.threads);
    else if (key == "data") rc.data = value;
    else if (key == "train_limit") num(rc.train_limit);
    else if (key == "val_limit") num(rc.val_limit);
    else if (key == "test_limit") num(rc.test_limit);
    else if (key == "out") rc.out = value;
    else if (key == "switch_epoch") num(rc.switch_epoch);
    else if (key == "checkpoint") rc.checkpoint = value;
    else problems.push_back("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig &rc, const std::string &key) {
    char buf[64];
    if (key == "mode") return rc.mode;
    if (key == "k") return std::to_string(rc.k);
    if (key == "qubits") return std::to_string(rc.qubits);
    if (key == "layers") return std::to_string(rc.layers);
    if (key == "windows") return std::to_string(rc.windows);
    if (key == "classes") return std::to_string(rc.classes);
    if (key == "seed") return std::to_string(rc.seed);
    if (key == "epochs") return std::to_string(rc.epochs);
    if (key == "lr") {
        std::snprintf(buf, sizeof buf, "%.17g", rc.lr);
        return buf;
    }
    if (key == "batch") return std::to_string(rc.batch);
    if (key == "loss") return rc.loss;
    if (key == "threads") return std::to_string(rc.threads);
    if (key == "data") return rc.data;
    if (key == "train_limit") return std::to_string(rc.train_limit);
    if (key == "val_limit") return std::to_string(rc.val_limit);
    if (key == "test_limit") return std::to_string(rc.test_limit);
    if (key == "out") return rc.out;
    if (key == "switch_epoch") return std::to_string(rc.switch_epoch);
    if (key == "checkpoint") return rc.checkpoint;
    throw ValidationError("unknown config key '" + key + "'");
}

/// Flat `key = value` lines; blank lines and `#` comments are ignored.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    std::size_t lineno = 0;
    while (!text.empty()) {
        ++lineno;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw FormatError("config line " + std::to_string(lineno) + " has no '='");
        out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

/// Defaults, then `config_path` (if any), then `overrides` in order. All bad
/// keys and values are reported together.
inline RunConfig load_run_config(const std::string &config_path, const std::vector<std::pair<std::string, std::string>> &overrides) {
    RunConfig rc;
    std::vector<std::string> problems;
    if (!config_path.empty()) {
        const auto bytes = dano::detail::read_file(config_path);
        for (const auto &[k, v] : parse_key_values(std::string_view(reinterpret_cast<const char *>(bytes.data()), bytes.size())))
            set_config_value(rc, k, v, problems);
    }
    for (const auto &[k, v] : overrides) set_config_value(rc, k, v, problems);
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto &p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
    return rc;
}

/// Every violated constraint of a run configuration.
inline std::vector<std::string> run_problems(const RunConfig &rc) {
    std::vector<std::string> p;
    if (rc.mode != "vqc" && rc.mode != "dano" && rc.mode != "ano") p.push_back("mode=" + rc.mode + " (expected vqc|dano|ano)");
    if (rc.loss != "ce" && rc.loss != "mse") p.push_back("loss=" + rc.loss + " (expected ce|mse)");
    if (rc.epochs < 1) p.push_back("epochs=" + std::to_string(rc.epochs) + " must be >= 1");
    if (rc.batch < 1) p.push_back("batch=" + std::to_string(rc.batch) + " must be >= 1");
    if (!(rc.lr > 0.0) || !std::isfinite(rc.lr)) p.push_back("lr must be a positive finite number");
    if (rc.threads < 1) p.push_back("threads=" + std::to_string(rc.threads) + " must be >= 1");
    if (rc.data.empty()) p.push_back("data is required (a feature cache from prep-data)");
    if (rc.out.empty()) p.push_back("out is required (the run directory)");
    return p;
}

inline void throw_if_problems(const std::vector<std::string> &p, const std::string &what) {
    if (p.empty()) return;
    std::string msg = "invalid " + what + ":";
    for (const auto &s : p) msg += "\n  - " + s;
    throw ValidationError(msg);
}

/// Model shape for a run on `fs`. The dataset decides n unless it is set,
/// and the class count unless it is set.
inline ModelConfig model_config(const RunConfig &rc, const FeatureSet &data) {
    ModelConfig cfg;
    cfg.mode = parse_mode(rc.mode);
    cfg.qubits = rc.qubits;
    cfg.locality = cfg.mode == Mode::vqc ? 1 : rc.k;
    cfg.layers = rc.layers;
    cfg.windows = rc.windows > 0 ? rc.windows : rc.qubits;
    cfg.classes = rc.classes > 0 ? rc.classes : data.classes;
    std::vector<std::string> p = cfg.problems();
    if (data.dim != cfg.qubits)
        p.push_back("dataset has " + std::to_string(data.dim) + " features but qubits=" + std::to_string(cfg.qubits));
    throw_if_problems(p, "model configuration");
    return cfg;
}

inline Hyperparams hyperparams(const RunConfig &rc) {
    Hyperparams hp;
    hp.lr = rc.lr;
    hp.batch = rc.batch;
    hp.epochs = rc.epochs;
    hp.loss = parse_loss(rc.loss);
    hp.threads = rc.threads;
    return hp;
}

struct LoadedData {
    FeatureSet features;
    TrainData splits;
    std::string digest; ///< of the feature cache file
};

inline LoadedData load_data(const RunConfig &rc) {
    LoadedData d;
    d.features = read_feature_cache(rc.data);
    d.digest = file_digest(rc.data);
    d.splits = d.features.train_data();
    d.splits.train = d.splits.train.head(rc.train_limit);
    d.splits.val = d.splits.val.head(rc.val_limit);
    d.splits.test = d.splits.test.head(rc.test_limit);
    return d;
}

/// Resolved config as key=value text, in config_keys() order.
inline std::string format_run_config(const RunConfig &rc, bool with_runtime_keys = true) {
    std::string s;
    for (const auto &k : config_keys()) {
        if (!with_runtime_keys && (k == "out" || k == "threads")) continue;
        s += k + "=" + get_config_value(rc, k) + "\n";
    }
    return s;
}

/// Stable id from the result-affecting configuration and the data digest.
inline std::string make_run_id(const RunConfig &rc, const std::string &data_digest, std::string_view prefix) {
    const auto d = git_blob_sha1(format_run_config(rc, false) + "data_sha1=" + data_digest + "\n");
    return std::string(prefix) + "-" + d.substr(0, 12);
}

// ---------------------------------------------------------------- run dirs

inline std::string epoch_checkpoint_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch-%03d.ckpt", epoch);
    return buf;
}

inline void write_text(const fs::path &path, const std::string &text) { dano::detail::write_file(path, text); }

/// Creates the run directory and writes config.txt and inputs.txt.
inline void open_run_dir(const RunConfig &rc, const LoadedData &data, const TrainState &ts, const std::vector<std::pair<std::string, std::string>> &extra_inputs) {
    const fs::path out(rc.out);
    fs::create_directories(out / "checkpoints");
    const auto pc = count_params(ts.cfg);
    std::string cfg = "# dano run configuration\n" + format_run_config(rc);
    cfg += "run_id=" + ts.run_id + "\n";
    cfg += "resolved_windows=" + std::to_string(ts.cfg.windows) + "\n";
    cfg += "resolved_classes=" + std::to_string(ts.cfg.classes) + "\n";
    cfg += "params_circuit=" + std::to_string(pc.circuit) + "\n";
    cfg += "params_observable=" + std::to_string(pc.observable) + "\n";
    cfg += "params_total=" + std::to_string(pc.total) + "\n";
    write_text(out / "config.txt", cfg);

    std::string inputs = "data=" + rc.data + "\n" + "data_sha1=" + data.digest + "\n";
    inputs += "train_rows=" + std::to_string(data.splits.train.size()) + "\n";
    inputs += "val_rows=" + std::to_string(data.splits.val.size()) + "\n";
    inputs += "test_rows=" + std::to_string(data.splits.test.size()) + "\n";
    for (const auto &[k, v] : data.features.meta) inputs += "data." + k + "=" + v + "\n";
    for (const auto &[k, v] : extra_inputs) inputs += k + "=" + v + "\n";
    write_text(out / "inputs.txt", inputs);
}

/// Streams metrics rows and keeps per-epoch and best checkpoints.
class RunRecorder {
public:
    RunRecorder(const fs::path &out, const std::string &header) : out_(out), csv_(out / "metrics.csv", std::ios::binary | std::ios::trunc) {
        if (!csv_) throw std::runtime_error("cannot write " + (out / "metrics.csv").string());
        csv_ << header << "\n";
        csv_.flush();
    }

    void record(const TrainState &ts, const Metrics &m, const std::string &suffix = {}) {
        csv_ << format_metrics_row(m) << suffix << "\n";
        csv_.flush();
        write_checkpoint(out_ / "checkpoints" / epoch_checkpoint_name(m.epoch), ts);
        // Model selection uses validation accuracy when there is a validation split.
        const double score = std::isnan(m.val_accuracy) ? m.test_accuracy : m.val_accuracy;
        if (!best_ || score > best_score_) {
            best_ = m.epoch;
            best_score_ = score;
            write_checkpoint(out_ / "best.ckpt", ts);
        }
    }

    std::optional<int> best_epoch() const { return best_; }

private:
    fs::path out_;
    std::ofstream csv_;
    std::optional<int> best_;
    double best_score_ = 0.0;
};

// ---------------------------------------------------------------- commands

struct TrainOutcome {
    std::string run_id;
    std::vector<Metrics> history;
    fs::path run_dir;
};

/// Fresh run (or continuation of `checkpoint`) into rc.out.
inline TrainOutcome cmd_train(const RunConfig &rc, std::ostream &log) {
    throw_if_problems(run_problems(rc), "train configuration");
    const auto data = load_data(rc);
    const auto cfg = model_config(rc, data.features);
    TrainState ts;
    std::vector<std::pair<std::string, std::string>> extra;
    if (!rc.checkpoint.empty()) {
        ts = read_checkpoint(rc.checkpoint);
        if (!(ts.cfg == cfg)) throw ValidationError("checkpoint model shape does not match the configuration");
        extra.emplace_back("checkpoint_sha1", file_digest(rc.checkpoint));
    } else {
        ts = init_train_state(cfg, rc.seed, parse_loss(rc.loss));
        ts.run_id = make_run_id(rc, data.digest, rc.mode);
    }
    open_run_dir(rc, data, ts, extra);
    RunRecorder rec(rc.out, std::string(metrics_csv_header));
    log << "run " << ts.run_id << ": " << to_string(cfg.mode) << " k=" << cfg.locality << " n=" << cfg.qubits << " L=" << cfg.layers
        << " params=" << count_params(cfg).total << " train=" << data.splits.train.size() << " test=" << data.splits.test.size() << "\n";
    TrainOutcome o{ts.run_id, {}, rc.out};
    o.history = train(ts, data.splits, hyperparams(rc), [&](const TrainState &s, const Metrics &m) {
        rec.record(s, m);
        log << format_metrics_row(m) << "\n" << std::flush;
    });
    return o;
}

inline constexpr std::string_view rescue_csv_extra = ",branch_id,parent_run,switch_epoch,theta_digest";

struct RescueOutcome {
    RescueResult result;
    std::string branch_id;
    fs::path run_dir;
};

/// DANO branch from a VQC checkpoint: circuit frozen, k-local diagonal
/// readout trained from the switch epoch to rc.epochs.
inline RescueOutcome cmd_rescue(const RunConfig &rc, std::ostream &log) {
    auto p = run_problems(rc);
    if (rc.checkpoint.empty()) p.push_back("checkpoint is required (a vqc checkpoint at the switch epoch)");
    if (rc.k < 1 || rc.k > rc.qubits) p.push_back("k=" + std::to_string(rc.k) + " must satisfy 1 <= k <= qubits");
    throw_if_problems(p, "rescue configuration");
    const auto data = load_data(rc);
    const auto parent = read_checkpoint(rc.checkpoint);
    if (parent.cfg.qubits != data.features.dim) throw ValidationError("checkpoint qubit count does not match the dataset");
    const auto hp = hyperparams(rc);

    RescueOutcome o;
    o.run_dir = rc.out;
    const auto branch = rescue_state(parent, rc.k);
    o.branch_id = branch.run_id;
    const auto digest = theta_digest(parent);
    open_run_dir(rc, data, branch,
                 {{"checkpoint_sha1", file_digest(rc.checkpoint)}, {"parent_run", parent.run_id}, {"theta_sha1", digest}});
    RunRecorder rec(rc.out, std::string(metrics_csv_header) + std::string(rescue_csv_extra));
    const std::string suffix = "," + o.branch_id + "," + parent.run_id + "," + std::to_string(rc.switch_epoch) + "," + digest.substr(0, 12);
    log << "rescue " << o.branch_id << " from " << parent.run_id << " at epoch " << rc.switch_epoch << " with k=" << rc.k << "\n";
    o.result = rescue(parent, rc.k, data.splits, hp, rc.switch_epoch, [&](const TrainState &s, const Metrics &m) {
        if (theta_digest(s) != digest) throw NumericalError("frozen circuit angles changed during rescue");
        rec.record(s, m, suffix);
        log << format_metrics_row(m) << suffix << "\n" << std::flush;
    });

    const auto &h = o.result.history;
    char buf[512], frozen_val[32] = "";
    if (!std::isnan(o.result.frozen_val_accuracy)) std::snprintf(frozen_val, sizeof frozen_val, "%.10g", o.result.frozen_val_accuracy);
    double best = 0.0;
    for (const auto &m : h) best = std::max(best, m.test_accuracy);
    std::snprintf(buf, sizeof buf,
                  "branch_id=%s\nparent_run=%s\nswitch_epoch=%d\nk=%d\nfrozen_test_acc=%.10g\nfrozen_val_acc=%s\n"
                  "switch_test_acc=%.10g\nfinal_test_acc=%.10g\nbest_test_acc=%.10g\nfinal_gain_pp=%.10g\n",
                  o.branch_id.c_str(), parent.run_id.c_str(), rc.switch_epoch, rc.k, o.result.frozen_test_accuracy, frozen_val,
                  o.result.switch_test_accuracy, h.back().test_accuracy, best, 100.0 * (h.back().test_accuracy - o.result.frozen_test_accuracy));
    write_text(fs::path(rc.out) / "rescue.txt", buf);
    return o;
}

/// Accuracy of a checkpoint on one split of a feature cache.
inline double cmd_eval(const std::string &checkpoint, const std::string &data_path, Split split, std::size_t limit, int threads) {
    const auto ts = read_checkpoint(checkpoint);
    const auto fsd = read_feature_cache(data_path);
    const auto set = fsd.subset(split).head(limit);
    return evaluate(ts, set, threads);
}

inline int cmd_verify(const VerifyOptions &opt, const std::string &out, std::ostream &log) {
    const auto results = run_verify(opt);
    const auto report = verify_report(results);
    for (const auto &r : results) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-40s %s cases=%d max_error=%.3e tol=%.1e\n", r.suite.c_str(), r.passed ? "PASS" : "FAIL", r.cases,
                      r.max_error, r.tolerance);
        log << buf;
    }
    if (!out.empty()) write_text(out, report.dump(2) + "\n");
    return report["passed"].get<bool>() ? 0 : 1;
}

inline void cmd_bench(const BenchOptions &opt, const std::string &out, std::ostream &log) {
    const auto csv = bench_csv(run_bench(opt));
    if (!out.empty()) write_text(out, csv);
    log << csv;
}

} // namespace dano::cli
