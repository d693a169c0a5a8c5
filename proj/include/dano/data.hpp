/**
 * @file
 * Dataset ingestion and feature pipelines: IDX digits with average pooling,
 * PGM face images with PCA, per-feature rescaling to angles, splits, and the
 * cached feature file.
 */
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dano/error.hpp"

namespace dano {

enum class Split : std::uint8_t { train, val, test };

inline std::string_view to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split tag '" + std::string(s) + "'");
}

/// Row-major feature rows with labels.
struct LabeledSet {
    int dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    }
    void push(std::span<const double> x, int label) {
        if (static_cast<int>(x.size()) != dim) throw ShapeError("row has " + std::to_string(x.size()) + " features, set has " + std::to_string(dim));
        features.insert(features.end(), x.begin(), x.end());
        labels.push_back(label);
    }
    /// The first `count` rows (all rows when count is 0 or larger than size()).
    LabeledSet head(std::size_t count) const {
        if (count == 0 || count >= size()) return *this;
        LabeledSet out{dim, {}, {}};
        for (std::size_t i = 0; i < count; ++i) out.push(row(i), labels[i]);
        return out;
    }
};

struct TrainData {
    LabeledSet train;
    LabeledSet val; ///< may be empty
    LabeledSet test;
};

/// Encoded dataset with a split tag per row and free-form pipeline metadata.
struct FeatureSet {
    int dim = 0;
    int classes = 0;
    std::vector<double> features;
    std::vector<int> labels;
    std::vector<Split> split;
    std::map<std::string, std::string> meta;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    }

    LabeledSet subset(Split s) const {
        LabeledSet out{dim, {}, {}};
        for (std::size_t i = 0; i < size(); ++i)
            if (split[i] == s) out.push(row(i), labels[i]);
        return out;
    }

    TrainData train_data() const { return {subset(Split::train), subset(Split::val), subset(Split::test)}; }
};

// ---------------------------------------------------------------- IDX

struct IdxImages {
    int count = 0;
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> pixels; ///< count * rows * cols, row-major per image

    std::span<const std::uint8_t> image(std::size_t i) const {
        const std::size_t sz = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        return std::span<const std::uint8_t>(pixels).subspan(i * sz, sz);
    }
};

struct IdxDataset {
    IdxImages images;
    std::vector<int> labels;
};

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at, const char *what) {
    if (at + 4 > b.size()) throw FormatError(std::string("truncated IDX header: missing ") + what, static_cast<long long>(b.size()));
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path &path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

} // namespace detail

inline IdxImages parse_idx_images(std::span<const std::uint8_t> b) {
    const auto magic = detail::read_be32(b, 0, "magic");
    if (magic != idx_images_magic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "bad IDX image magic 0x%08x (expected 0x%08x)", magic, idx_images_magic);
        throw FormatError(buf, 0);
    }
    IdxImages img;
    img.count = static_cast<int>(detail::read_be32(b, 4, "image count"));
    img.rows = static_cast<int>(detail::read_be32(b, 8, "row count"));
    img.cols = static_cast<int>(detail::read_be32(b, 12, "column count"));
    const std::size_t need = std::size_t(img.count) * std::size_t(img.rows) * std::size_t(img.cols);
    if (b.size() < 16 + need)
        throw FormatError("truncated IDX image body: need " + std::to_string(need) + " pixel bytes, have " + std::to_string(b.size() - 16),
                          static_cast<long long>(b.size()));
    img.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(need));
    return img;
}

inline std::vector<int> parse_idx_labels(std::span<const std::uint8_t> b) {
    const auto magic = detail::read_be32(b, 0, "magic");
    if (magic != idx_labels_magic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "bad IDX label magic 0x%08x (expected 0x%08x)", magic, idx_labels_magic);
        throw FormatError(buf, 0);
    }
    const std::size_t n = detail::read_be32(b, 4, "label count");
    if (b.size() < 8 + n)
        throw FormatError("truncated IDX label body: need " + std::to_string(n) + " bytes, have " + std::to_string(b.size() - 8),
                          static_cast<long long>(b.size()));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = b[8 + i];
        if (labels[i] > 9)
            throw ValidationError("label " + std::to_string(labels[i]) + " > 9 at byte offset " + std::to_string(8 + i));
    }
    return labels;
}

inline IdxDataset load_idx(const std::filesystem::path &images_path, const std::filesystem::path &labels_path) {
    IdxDataset d;
    try {
        d.images = parse_idx_images(detail::read_file(images_path));
    } catch (const FormatError &e) {
        throw FormatError(images_path.string() + ": " + e.message(), e.offset());
    }
    try {
        d.labels = parse_idx_labels(detail::read_file(labels_path));
    } catch (const FormatError &e) {
        throw FormatError(labels_path.string() + ": " + e.message(), e.offset());
    }
    if (static_cast<std::size_t>(d.images.count) != d.labels.size())
        throw FormatError("image count " + std::to_string(d.images.count) + " != label count " + std::to_string(d.labels.size()), 4);
    return d;
}

/// Mean of each factor x factor block, divided by 255. Output is
/// (rows/factor) x (cols/factor), row-major.
inline std::vector<double> avg_pool(std::span<const std::uint8_t> image, int rows, int cols, int factor) {
    if (factor < 1 || rows % factor || cols % factor)
        throw ValidationError("image " + std::to_string(rows) + "x" + std::to_string(cols) + " not divisible by pooling factor " +
                              std::to_string(factor));
    if (image.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) throw ShapeError("image size mismatch");
    const int orows = rows / factor, ocols = cols / factor;
    std::vector<double> out(static_cast<std::size_t>(orows) * static_cast<std::size_t>(ocols));
    for (int r = 0; r < orows; ++r)
        for (int c = 0; c < ocols; ++c) {
            unsigned sum = 0;
            for (int i = 0; i < factor; ++i)
                for (int j = 0; j < factor; ++j)
                    sum += image[static_cast<std::size_t>((r * factor + i) * cols + c * factor + j)];
            out[static_cast<std::size_t>(r * ocols + c)] = static_cast<double>(sum) / (255.0 * factor * factor);
        }
    return out;
}

// ---------------------------------------------------------------- rescale

/// Maps each feature's training-split [min, max] affinely onto [lo, hi].
/// Rows of other splits use the same map and are clamped. A constant training
/// feature maps to 0 and is reported in the returned warnings.
inline std::vector<std::string> rescale_to_angles(std::vector<double> &features, int dim, std::span<const Split> split,
                                                  double lo = -std::numbers::pi, double hi = std::numbers::pi) {
    const std::size_t d = static_cast<std::size_t>(dim);
    if (d == 0 || features.size() != split.size() * d) throw ShapeError("rescale: feature matrix does not match split tags");
    for (double v : features)
        if (!std::isfinite(v)) throw ValidationError("rescale: non-finite feature");
    std::vector<double> mn(d, INFINITY), mx(d, -INFINITY);
    bool any_train = false;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] != Split::train) continue;
        any_train = true;
        for (std::size_t f = 0; f < d; ++f) {
            mn[f] = std::min(mn[f], features[i * d + f]);
            mx[f] = std::max(mx[f], features[i * d + f]);
        }
    }
    if (!any_train) throw ValidationError("rescale: no training rows");
    std::vector<std::string> warnings;
    for (std::size_t f = 0; f < d; ++f)
        if (mn[f] == mx[f]) warnings.push_back("feature " + std::to_string(f) + " is constant on the training split; mapped to 0");
    for (std::size_t i = 0; i < split.size(); ++i)
        for (std::size_t f = 0; f < d; ++f) {
            double &v = features[i * d + f];
            if (mn[f] == mx[f]) {
                v = 0.0;
                continue;
            }
            v = lo + (v - mn[f]) * (hi - lo) / (mx[f] - mn[f]);
            v = std::clamp(v, lo, hi);
        }
    return warnings;
}

// ---------------------------------------------------------------- PCA

struct PcaModel {
    Eigen::VectorXd mean;       ///< D
    Eigen::VectorXd scale;      ///< D, standard deviation with floor
    Eigen::MatrixXd components; ///< d x D, orthonormal rows
    Eigen::VectorXd variance;   ///< d, variance of the standardized data along each component
    Eigen::VectorXd explained;  ///< d, fraction of total standardized variance
};

inline constexpr double pca_sigma_floor = 1e-8;

/// Standardize, then take the top-d principal directions from the N x N Gram
/// matrix: if G v = s v then X^T v / sqrt(s) is a unit eigenvector of X^T X
/// with the same eigenvalue. Variances use N - 1. Each component is signed so
/// that its largest-magnitude entry is positive.
inline PcaModel pca_fit(const Eigen::MatrixXd &X, int d) {
    const Eigen::Index N = X.rows(), D = X.cols();
    if (d < 1 || d > D) throw ValidationError("pca: d=" + std::to_string(d) + " must be in 1.." + std::to_string(D));
    if (N < d) throw ValidationError("pca: " + std::to_string(N) + " samples < d=" + std::to_string(d));
    if (N < 2) throw ValidationError("pca: need at least 2 samples");
    PcaModel m;
    m.mean = X.colwise().mean().transpose();
    Eigen::MatrixXd Z = X.rowwise() - m.mean.transpose();
    m.scale = (Z.colwise().squaredNorm().transpose() / static_cast<double>(N - 1)).cwiseSqrt();
    m.scale = m.scale.cwiseMax(pca_sigma_floor);
    Z = Z.array().rowwise() / m.scale.transpose().array();

    const Eigen::MatrixXd G = Z * Z.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success) throw NumericalError("pca: Gram eigendecomposition failed");
    const double total = G.trace();
    m.components.resize(d, D);
    m.variance.resize(d);
    m.explained.resize(d);
    for (int i = 0; i < d; ++i) {
        const Eigen::Index col = N - 1 - i; // eigenvalues ascend
        const double s = es.eigenvalues()(col);
        if (!(s > 1e-12 * std::max(1.0, total)))
            throw NumericalError("pca: standardized data has rank below d=" + std::to_string(d));
        Eigen::VectorXd u = Z.transpose() * es.eigenvectors().col(col);
        u /= u.norm();
        Eigen::Index at;
        u.cwiseAbs().maxCoeff(&at);
        if (u(at) < 0) u = -u;
        m.components.row(i) = u.transpose();
        m.variance(i) = s / static_cast<double>(N - 1);
        m.explained(i) = total > 0 ? s / total : 0.0;
    }
    return m;
}

/// Rows of X (N x D) to rows of scores (N x d).
inline Eigen::MatrixXd pca_transform(const PcaModel &m, const Eigen::MatrixXd &X) {
    if (X.cols() != m.mean.size()) throw ShapeError("pca_transform: " + std::to_string(X.cols()) + " columns, model has " + std::to_string(m.mean.size()));
    const Eigen::MatrixXd Z = (X.rowwise() - m.mean.transpose()).array().rowwise() / m.scale.transpose().array();
    return Z * m.components.transpose();
}

/// Rows of scores (N x d) back to the input space (N x D).
inline Eigen::MatrixXd pca_inverse(const PcaModel &m, const Eigen::MatrixXd &S) {
    if (S.cols() != m.components.rows()) throw ShapeError("pca_inverse: " + std::to_string(S.cols()) + " columns, model has d=" + std::to_string(m.components.rows()));
    Eigen::MatrixXd X = (S * m.components).array().rowwise() * m.scale.transpose().array();
    return X.rowwise() + m.mean.transpose();
}

// ---------------------------------------------------------------- splits

/// Per-class proportional split. Split totals are the largest-remainder
/// rounding of N * fractions; per-class counts are floors plus single extra
/// slots (by descending remainder, then augmenting paths), so every class lands within one
/// sample of its proportional share. Rows inside a class are shuffled with
/// the seed before being assigned in split order.
inline std::vector<Split> stratified_split(std::span<const int> labels, std::span<const double> fractions, std::uint64_t seed) {
    const std::size_t S = fractions.size();
    if (S == 0 || S > 3) throw ValidationError("stratified_split: expected 1 to 3 fractions (train, val, test)");
    double fsum = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0)) throw ValidationError("stratified_split: negative fraction");
        fsum += f;
    }
    if (std::abs(fsum - 1.0) > 1e-9) throw ValidationError("stratified_split: fractions sum to " + std::to_string(fsum) + ", not 1");
    const std::size_t N = labels.size();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < N; ++i) by_class[labels[i]].push_back(i);
    const auto active = static_cast<std::size_t>(std::ranges::count_if(fractions, [](double f) { return f > 0; }));
    for (const auto &[c, rows] : by_class)
        if (rows.size() < active)
            throw ValidationError("stratified_split: class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                                  " samples, fewer than the " + std::to_string(active) + " splits");

    auto largest_remainder = [](double total, std::span<const double> f) {
        std::vector<std::size_t> out(f.size());
        std::vector<std::pair<double, std::size_t>> rem;
        std::size_t used = 0;
        for (std::size_t s = 0; s < f.size(); ++s) {
            const double exact = total * f[s];
            out[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            used += out[s];
            rem.emplace_back(exact - static_cast<double>(out[s]), s);
        }
        std::ranges::stable_sort(rem, [](auto a, auto b) { return a.first > b.first; });
        for (std::size_t r = 0; used < static_cast<std::size_t>(std::llround(total)); ++r, ++used) ++out[rem[r % rem.size()].second];
        return out;
    };
    const auto totals = largest_remainder(static_cast<double>(N), fractions);

    // Per-class floors, then extras by remainder under both totals.
    std::vector<std::vector<std::size_t>> alloc;
    std::vector<std::size_t> left, deficit(totals);
    struct Slot { double rem; std::size_t c, s; };
    std::vector<Slot> slots;
    std::size_t ci = 0;
    for (const auto &[c, rows] : by_class) {
        std::vector<std::size_t> a(S);
        std::size_t used = 0;
        for (std::size_t s = 0; s < S; ++s) {
            const double exact = static_cast<double>(rows.size()) * fractions[s];
            a[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            used += a[s];
            deficit[s] -= a[s];
            if (fractions[s] > 0) slots.push_back({exact - static_cast<double>(a[s]), ci, s});
        }
        left.push_back(rows.size() - used);
        alloc.push_back(std::move(a));
        ++ci;
    }
    std::ranges::stable_sort(slots, [](const Slot &a, const Slot &b) { return a.rem > b.rem; });
    const std::size_t C = alloc.size();
    std::vector<std::vector<std::uint8_t>> extra(C, std::vector<std::uint8_t>(S, 0)), open(C, std::vector<std::uint8_t>(S, 0));
    for (const auto &sl : slots) open[sl.c][sl.s] = 1;
    // Greedy by remainder, at most one extra per (class, split).
    for (const auto &sl : slots)
        if (left[sl.c] > 0 && deficit[sl.s] > 0) {
            extra[sl.c][sl.s] = 1;
            --left[sl.c];
            --deficit[sl.s];
        }
    // Whatever the greedy pass could not place is routed along augmenting
    // paths (class -> split with a free slot, split -> class that already
    // holds an extra there), which keeps every cell at floor or floor + 1.
    auto augment = [&](std::size_t from) {
        std::vector<long> prev_split(S, -1), prev_class(C, -1);
        std::vector<std::uint8_t> seen_c(C, 0), seen_s(S, 0);
        std::vector<std::size_t> queue{from};
        seen_c[from] = 1;
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const std::size_t c = queue[q];
            for (std::size_t sp = 0; sp < S; ++sp) {
                if (seen_s[sp] || !open[c][sp] || extra[c][sp]) continue;
                seen_s[sp] = 1;
                prev_split[sp] = static_cast<long>(c);
                if (deficit[sp] > 0) {
                    for (std::size_t t = sp;;) {
                        const auto pc = static_cast<std::size_t>(prev_split[t]);
                        extra[pc][t] = 1;
                        if (pc == from) break;
                        const auto back = static_cast<std::size_t>(prev_class[pc]);
                        extra[pc][back] = 0;
                        t = back;
                    }
                    --deficit[sp];
                    --left[from];
                    return true;
                }
                for (std::size_t c2 = 0; c2 < C; ++c2)
                    if (!seen_c[c2] && extra[c2][sp]) {
                        seen_c[c2] = 1;
                        prev_class[c2] = static_cast<long>(sp);
                        queue.push_back(c2);
                    }
            }
        }
        return false;
    };
    for (std::size_t c = 0; c < C; ++c)
        while (left[c] > 0 && augment(c)) {
        }
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t sp = 0; sp < S; ++sp) alloc[c][sp] += extra[c][sp];
    // Last resort for inconsistent totals: fill by remainder without the cap.
    for (const auto &sl : slots)
        while (left[sl.c] > 0 && deficit[sl.s] > 0) {
            ++alloc[sl.c][sl.s];
            --left[sl.c];
            --deficit[sl.s];
        }

    std::vector<Split> tags(N, Split::train);
    std::mt19937_64 rng(seed);
    ci = 0;
    for (auto &[c, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        std::size_t at = 0;
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t t = 0; t < alloc[ci][s]; ++t) tags[rows[at++]] = static_cast<Split>(s);
        ++ci;
    }
    return tags;
}

/// Seeded random split: `train_count` rows train, the rest test.
inline std::vector<Split> random_split(std::size_t n, std::size_t train_count, std::uint64_t seed) {
    if (train_count > n) throw ValidationError("random_split: train count " + std::to_string(train_count) + " > " + std::to_string(n) + " rows");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Split> tags(n, Split::test);
    for (std::size_t i = 0; i < train_count; ++i) tags[order[i]] = Split::train;
    return tags;
}

// ---------------------------------------------------------------- PGM

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; ///< row-major
};

/// Binary P5 with maxval <= 255; '#' comments in the header are skipped.
inline GrayImage parse_pgm(std::span<const std::uint8_t> b) {
    std::size_t at = 0;
    if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw FormatError("not a binary PGM (magic must be P5)", 0);
    at = 2;
    auto skip_space = [&] {
        while (at < b.size()) {
            if (b[at] == '#') {
                while (at < b.size() && b[at] != '\n') ++at;
            } else if (std::isspace(b[at])) {
                ++at;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char *what) {
        skip_space();
        const std::size_t start = at;
        long long v = 0;
        while (at < b.size() && std::isdigit(b[at])) {
            v = v * 10 + (b[at] - '0');
            if (v > 1 << 24) throw FormatError(std::string("PGM ") + what + " too large", static_cast<long long>(start));
            ++at;
        }
        if (at == start) throw FormatError(std::string("PGM header: expected ") + what, static_cast<long long>(at));
        return static_cast<int>(v);
    };
    GrayImage img;
    img.width = read_int("width");
    img.height = read_int("height");
    const int maxval = read_int("maxval");
    if (maxval < 1 || maxval > 255)
        throw FormatError("unsupported PGM maxval " + std::to_string(maxval) + " (only 8-bit images are supported)", static_cast<long long>(at));
    if (at >= b.size() || !std::isspace(b[at])) throw FormatError("PGM header must end with one whitespace byte", static_cast<long long>(at));
    ++at;
    const std::size_t need = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
    if (b.size() - at < need)
        throw FormatError("short PGM body: need " + std::to_string(need) + " bytes, have " + std::to_string(b.size() - at), static_cast<long long>(b.size()));
    img.pixels.assign(b.begin() + static_cast<std::ptrdiff_t>(at), b.begin() + static_cast<std::ptrdiff_t>(at + need));
    return img;
}

inline GrayImage load_pgm(const std::filesystem::path &path) {
    try {
        return parse_pgm(detail::read_file(path));
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.message(), e.offset());
    }
}

inline void write_pgm(const std::filesystem::path &path, const GrayImage &img) {
    if (img.pixels.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height)) throw ShapeError("write_pgm: pixel count mismatch");
    std::string s = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    s.append(img.pixels.begin(), img.pixels.end());
    detail::write_file(path, s);
}

// ---------------------------------------------------------------- Yale names

/// Fields of a cropped Extended Yale B file name such as
/// yaleB11_P00A+025E+10.pgm or yaleB11_P00_Ambient.pgm.
struct YaleName {
    int subject = 0;
    int pose = 0;
    bool ambient = false;
    int azimuth = 0;
    int elevation = 0;
};

inline std::optional<YaleName> parse_yale_name(const std::string &filename) {
    static const std::regex re(R"(yaleB(\d+)_P(\d+)(?:A([+-]\d+)E([+-]\d+)|_Ambient)\.pgm)");
    std::smatch m;
    if (!std::regex_match(filename, m, re)) return std::nullopt;
    YaleName y;
    y.subject = std::stoi(m[1]);
    y.pose = std::stoi(m[2]);
    y.ambient = !m[3].matched;
    if (!y.ambient) {
        y.azimuth = std::stoi(m[3]);
        y.elevation = std::stoi(m[4]);
    }
    return y;
}

/// Non-ambient capture with |azimuth| < 25 degrees.
inline bool easy_lighting(const YaleName &y) { return !y.ambient && std::abs(y.azimuth) < 25; }

// ---------------------------------------------------------------- pipelines

struct MnistOptions {
    int pool = 7;
    std::size_t train_count = 9000;
    std::size_t limit = 10000; ///< rows taken from the front of the IDX files
    std::uint64_t seed = 0;
};

/// Pooled digits rescaled to [0, pi], randomly split train/test.
inline FeatureSet prepare_mnist(const IdxDataset &idx, const MnistOptions &opt) {
    const std::size_t n = std::min<std::size_t>(opt.limit, static_cast<std::size_t>(idx.images.count));
    FeatureSet fs;
    fs.classes = 10;
    fs.labels.assign(idx.labels.begin(), idx.labels.begin() + static_cast<std::ptrdiff_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto pooled = avg_pool(idx.images.image(i), idx.images.rows, idx.images.cols, opt.pool);
        fs.dim = static_cast<int>(pooled.size());
        fs.features.insert(fs.features.end(), pooled.begin(), pooled.end());
    }
    fs.split = random_split(n, std::min(opt.train_count, n), opt.seed);
    const auto warnings = rescale_to_angles(fs.features, fs.dim, fs.split, 0.0, std::numbers::pi);
    fs.meta["dataset"] = "mnist";
    fs.meta["pooling"] = "average " + std::to_string(opt.pool) + "x" + std::to_string(opt.pool) + ", /255";
    fs.meta["scaling"] = "per-feature train min/max -> [0, pi], clamped";
    fs.meta["split"] = "random " + std::to_string(std::min(opt.train_count, n)) + "/" + std::to_string(n - std::min(opt.train_count, n));
    fs.meta["split_seed"] = std::to_string(opt.seed);
    for (std::size_t w = 0; w < warnings.size(); ++w) fs.meta["warning." + std::to_string(w)] = warnings[w];
    return fs;
}

struct YaleOptions {
    int subjects = 10;
    int components = 16;
    std::vector<double> fractions{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
};

/// Face images found under `dir` (Yale naming), easy-lighting filter, seeded
/// choice of `subjects` identities, stratified split, PCA fit on the training
/// rows, rescale to [-pi, pi].
inline FeatureSet prepare_yale(const std::filesystem::path &dir, const YaleOptions &opt, PcaModel *pca_out = nullptr) {
    std::map<int, std::vector<std::filesystem::path>> by_subject;
    for (const auto &e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto y = parse_yale_name(e.path().filename().string());
        if (y && easy_lighting(*y)) by_subject[y->subject].push_back(e.path());
    }
    if (static_cast<int>(by_subject.size()) < opt.subjects)
        throw ValidationError("found " + std::to_string(by_subject.size()) + " subjects with easy-lighting images under " + dir.string() +
                              ", need " + std::to_string(opt.subjects));
    std::vector<int> ids;
    for (const auto &[s, files] : by_subject) ids.push_back(s);
    std::mt19937_64 rng(opt.seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(static_cast<std::size_t>(opt.subjects));
    std::ranges::sort(ids);

    std::vector<std::filesystem::path> files;
    std::vector<int> labels;
    for (std::size_t c = 0; c < ids.size(); ++c) {
        auto f = by_subject[ids[c]];
        std::ranges::sort(f);
        for (const auto &p : f) {
            files.push_back(p);
            labels.push_back(static_cast<int>(c));
        }
    }
    // Cache rows in a seeded random order so that taking the first rows of a
    // split gives a class mix rather than the first subjects.
    {
        std::vector<std::size_t> perm(files.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::filesystem::path> f2;
        std::vector<int> l2;
        for (auto i : perm) {
            f2.push_back(files[i]);
            l2.push_back(labels[i]);
        }
        files = std::move(f2);
        labels = std::move(l2);
    }
    const auto first = load_pgm(files.front());
    Eigen::MatrixXd X(static_cast<Eigen::Index>(files.size()), static_cast<Eigen::Index>(first.pixels.size()));
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto img = i == 0 ? first : load_pgm(files[i]);
        if (img.width != first.width || img.height != first.height)
            throw ShapeError(files[i].string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) + ", expected " +
                             std::to_string(first.width) + "x" + std::to_string(first.height));
        for (std::size_t p = 0; p < img.pixels.size(); ++p) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = img.pixels[p];
    }

    FeatureSet fs;
    fs.classes = opt.subjects;
    fs.labels = labels;
    fs.split = stratified_split(labels, opt.fractions, opt.seed);
    std::vector<Eigen::Index> train_rows;
    for (std::size_t i = 0; i < fs.split.size(); ++i)
        if (fs.split[i] == Split::train) train_rows.push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd Xtrain = X(train_rows, Eigen::all);
    const auto pca = pca_fit(Xtrain, opt.components);
    const Eigen::MatrixXd S = pca_transform(pca, X);
    fs.dim = opt.components;
    fs.features.resize(static_cast<std::size_t>(S.size()));
    for (Eigen::Index i = 0; i < S.rows(); ++i)
        for (Eigen::Index f = 0; f < S.cols(); ++f) fs.features[static_cast<std::size_t>(i * S.cols() + f)] = S(i, f);
    const auto warnings = rescale_to_angles(fs.features, fs.dim, fs.split);

    std::ostringstream subj, ratio;
    for (std::size_t c = 0; c < ids.size(); ++c) subj << (c ? "," : "") << ids[c];
    ratio.precision(6);
    for (Eigen::Index i = 0; i < pca.explained.size(); ++i) ratio << (i ? "," : "") << pca.explained(i);
    fs.meta["dataset"] = "yale";
    fs.meta["image_size"] = std::to_string(first.width) + "x" + std::to_string(first.height);
    fs.meta["filter"] = "non-ambient, |azimuth| < 25";
    fs.meta["subjects"] = subj.str();
    fs.meta["pca"] = "standardized (sigma floor 1e-8), Gram eigendecomposition, fit on train split, d=" + std::to_string(opt.components);
    fs.meta["pca_explained_ratio"] = ratio.str();
    fs.meta["scaling"] = "per-feature train min/max -> [-pi, pi], clamped";
    fs.meta["split_seed"] = std::to_string(opt.seed);
    for (std::size_t w = 0; w < warnings.size(); ++w) fs.meta["warning." + std::to_string(w)] = warnings[w];
    if (pca_out) *pca_out = pca;
    return fs;
}

struct SynthFaceOptions {
    int subjects = 10;
    int width = 42;  ///< real crops are 168 wide
    int height = 48; ///< and 192 tall
    std::uint64_t seed = 0;
};

/// Writes face-like images named with the Yale convention: per subject a
/// fixed random blob template lit from each (azimuth, elevation) of a small
/// grid, plus one ambient capture. Returns the number of files written.
inline int write_synthetic_faces(const std::filesystem::path &dir, const SynthFaceOptions &opt) {
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 6.0);
    // 9 easy azimuths x 22 elevations = 198 kept images per subject, plus
    // hard-lit and ambient captures the filter must drop.
    const int easy_az[] = {-20, -15, -10, -5, 0, 5, 10, 15, 20};
    const int hard_az[] = {-110, -50, 25, 50};
    int written = 0;
    for (int s = 0; s < opt.subjects; ++s) {
        struct Blob { double x, y, r, a; };
        std::vector<Blob> blobs;
        for (int b = 0; b < 8; ++b)
            blobs.push_back({unit(rng), unit(rng), 0.08 + 0.2 * unit(rng), 40 + 120 * unit(rng)});
        auto render = [&](double ax, double ey, double ambient) {
            GrayImage img{opt.width, opt.height, std::vector<std::uint8_t>(static_cast<std::size_t>(opt.width * opt.height))};
            const double lx = std::sin(ax * std::numbers::pi / 180), ly = std::sin(ey * std::numbers::pi / 180);
            for (int r = 0; r < opt.height; ++r)
                for (int c = 0; c < opt.width; ++c) {
                    const double u = (c + 0.5) / opt.width, v = (r + 0.5) / opt.height;
                    double val = 30;
                    for (const auto &b : blobs) val += b.a * std::exp(-((u - b.x) * (u - b.x) + (v - b.y) * (v - b.y)) / (b.r * b.r));
                    val *= ambient + (1 - ambient) * (1 + 0.8 * lx * (u - 0.5) * 2 + 0.5 * ly * (v - 0.5) * 2);
                    val += noise(rng);
                    img.pixels[static_cast<std::size_t>(r * opt.width + c)] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
                }
            return img;
        };
        char name[96];
        auto emit = [&](int a, int e) {
            std::snprintf(name, sizeof name, "yaleB%02d_P00A%+04dE%+03d.pgm", s + 11, a, e);
            write_pgm(dir / name, render(a, e, 0.0));
            ++written;
        };
        for (int a : easy_az)
            for (int e = -40; e <= 65; e += 5) emit(a, e);
        for (int a : hard_az) emit(a, 0);
        std::snprintf(name, sizeof name, "yaleB%02d_P00_Ambient.pgm", s + 11);
        write_pgm(dir / name, render(0, 0, 0.3));
        ++written;
    }
    return written;
}

// ---------------------------------------------------------------- cache file

inline constexpr std::string_view feature_cache_magic = "dano-features 1";

/// Text cache: magic line, `rows`, `dim`, `classes`, then one line per row:
/// `split label f_1 ... f_dim` with 17 significant digits. Metadata goes to a
/// `<path>.meta` sidecar of key=value lines.
inline void write_feature_cache(const std::filesystem::path &path, const FeatureSet &fs) {
    std::string out;
    out += feature_cache_magic;
    out += "\nrows " + std::to_string(fs.size()) + "\ndim " + std::to_string(fs.dim) + "\nclasses " + std::to_string(fs.classes) + "\n";
    char buf[32];
    for (std::size_t i = 0; i < fs.size(); ++i) {
        out += to_string(fs.split[i]);
        out += ' ';
        out += std::to_string(fs.labels[i]);
        for (double v : fs.row(i)) {
            std::snprintf(buf, sizeof buf, " %.17g", v);
            out += buf;
        }
        out += '\n';
    }
    detail::write_file(path, out);
    std::string meta;
    for (const auto &[k, v] : fs.meta) meta += k + "=" + v + "\n";
    detail::write_file(path.string() + ".meta", meta);
}

inline FeatureSet read_feature_cache(const std::filesystem::path &path) {
    const auto bytes = detail::read_file(path);
    const std::string_view text(reinterpret_cast<const char *>(bytes.data()), bytes.size());
    std::size_t at = 0;
    auto line = [&]() -> std::string_view {
        if (at >= text.size()) throw FormatError(path.string() + ": unexpected end of feature cache", static_cast<long long>(at));
        const auto end = text.find('\n', at);
        const auto l = text.substr(at, end == std::string_view::npos ? std::string_view::npos : end - at);
        at = end == std::string_view::npos ? text.size() : end + 1;
        return l;
    };
    auto header = [&](std::string_view key) {
        const auto start = at;
        const auto l = line();
        long long v = -1;
        if (l.substr(0, key.size()) != key || l.size() <= key.size() + 1 ||
            std::from_chars(l.data() + key.size() + 1, l.data() + l.size(), v).ec != std::errc{} || v < 0)
            throw FormatError(path.string() + ": expected '" + std::string(key) + " <count>'", static_cast<long long>(start));
        return static_cast<std::size_t>(v);
    };
    if (line() != feature_cache_magic) throw FormatError(path.string() + ": not a feature cache (bad magic line)", 0);
    FeatureSet fs;
    const auto rows = header("rows");
    fs.dim = static_cast<int>(header("dim"));
    fs.classes = static_cast<int>(header("classes"));
    fs.features.reserve(rows * static_cast<std::size_t>(fs.dim));
    for (std::size_t i = 0; i < rows; ++i) {
        const auto start = at;
        const auto l = line();
        const char *p = l.data(), *end = l.data() + l.size();
        auto token = [&]() {
            while (p < end && *p == ' ') ++p;
            const char *b = p;
            while (p < end && *p != ' ') ++p;
            return std::string_view(b, static_cast<std::size_t>(p - b));
        };
        try {
            fs.split.push_back(parse_split(token()));
        } catch (const ValidationError &e) {
            throw FormatError(path.string() + ": " + e.what(), static_cast<long long>(start));
        }
        int label = -1;
        const auto lt = token();
        if (std::from_chars(lt.data(), lt.data() + lt.size(), label).ec != std::errc{} || label < 0 || label >= fs.classes)
            throw FormatError(path.string() + ": bad label on row " + std::to_string(i), static_cast<long long>(start));
        fs.labels.push_back(label);
        for (int f = 0; f < fs.dim; ++f) {
            const auto t = token();
            double v;
            if (t.empty() || std::from_chars(t.data(), t.data() + t.size(), v).ec != std::errc{})
                throw FormatError(path.string() + ": bad feature value on row " + std::to_string(i), static_cast<long long>(start));
            fs.features.push_back(v);
        }
    }
    std::ifstream meta(path.string() + ".meta");
    for (std::string l; std::getline(meta, l);) {
        const auto eq = l.find('=');
        if (eq != std::string::npos) fs.meta[l.substr(0, eq)] = l.substr(eq + 1);
    }
    return fs;
}

} // namespace dano
