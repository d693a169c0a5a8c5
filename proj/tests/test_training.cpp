#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <numbers>
#include <random>

#include "dano/data.hpp"
#include "dano/random.hpp"
#include "dano/training.hpp"
#include "test_oracles.hpp"

using namespace dano;

namespace {

constexpr double pi = std::numbers::pi;

/// Random angles with labels from a fixed random linear rule.
LabeledSet toy_set(int n, int classes, std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    LabeledSet s{n, {}, {}};
    const auto w = random_vector(static_cast<std::size_t>(n * classes), -1, 1, rng);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto x = random_vector(static_cast<std::size_t>(n), -pi, pi, rng);
        int best = 0;
        double bv = -1e300;
        for (int c = 0; c < classes; ++c) {
            double v = 0;
            for (int j = 0; j < n; ++j) v += w[static_cast<std::size_t>(c * n + j)] * std::cos(x[static_cast<std::size_t>(j)]);
            if (v > bv) bv = v, best = c;
        }
        s.push(x, best);
    }
    return s;
}

TrainData toy_data(int n, int classes, std::uint64_t seed) {
    return {toy_set(n, classes, 40, seed), toy_set(n, classes, 10, seed + 100), toy_set(n, classes, 20, seed + 200)};
}

std::filesystem::path temp_dir(const std::string &name) {
    auto d = std::filesystem::temp_directory_path() / ("dano-test-" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

} // namespace

TEST(Mse, ZeroWhenEqual) { EXPECT_EQ(mse_loss({{0.3, -0.2}}, {{0.3, -0.2}}), 0.0); }
TEST(Mse, UnitError) { EXPECT_EQ(mse_loss({{1.0, 0.0}}, {{0.0, 0.0}}), 1.0); }
TEST(Mse, GradientFiniteDifference) {
    std::mt19937_64 rng(1);
    std::vector<std::vector<double>> z, y;
    for (int i = 0; i < 3; ++i) {
        z.push_back(random_vector(4, -1, 1, rng));
        y.push_back(random_vector(4, -1, 1, rng));
    }
    const auto g = mse_gradient(z, y);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 4; ++c) {
            const double fd = dano::testing::central_difference(
                [&](const std::vector<double> &row) {
                    auto zz = z;
                    zz[i] = row;
                    return mse_loss(zz, y);
                },
                z[i], c);
            EXPECT_NEAR(g[i][c], fd, 1e-8);
        }
}
TEST(Mse, LengthMismatch) { EXPECT_THROW(mse_loss({{1.0}}, {{1.0, 2.0}}), ShapeError); }

TEST(CrossEntropy, UniformLogits) { EXPECT_NEAR(softmax_cross_entropy(std::vector<double>(10, 0.3), 4).loss, std::log(10.0), 1e-12); }
TEST(CrossEntropy, LargeLogitsStable) {
    const auto ce = softmax_cross_entropy(std::vector<double>{1000.0, 0.0}, 0);
    EXPECT_TRUE(std::isfinite(ce.loss));
    EXPECT_NEAR(ce.loss, 0.0, 1e-12);
    EXPECT_TRUE(std::isfinite(ce.grad[0]) && std::isfinite(ce.grad[1]));
}
TEST(CrossEntropy, GradientSumsToZeroAndMatchesFd) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto z = random_vector(10, -3, 3, rng);
        const int label = t % 10;
        const auto ce = softmax_cross_entropy(z, label);
        double sum = 0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            sum += ce.grad[c];
            const double fd = dano::testing::central_difference([&](const std::vector<double> &v) { return softmax_cross_entropy(v, label).loss; }, z, c);
            EXPECT_NEAR(ce.grad[c], fd, 1e-8);
        }
        EXPECT_NEAR(sum, 0.0, 1e-12);
    }
}
TEST(CrossEntropy, LabelOutOfRange) {
    EXPECT_THROW(softmax_cross_entropy(std::vector<double>{0, 0}, 2), ValidationError);
    EXPECT_THROW(softmax_cross_entropy(std::vector<double>{0}, 0), ValidationError);
}

TEST(Adam, ZeroGradientLeavesParams) {
    auto ts = init_train_state({4, 2, 1, Mode::dano, 4, 2}, 1);
    const auto before = ts.params;
    adam_step(ts, std::vector<double>(ts.params.size(), 0.0), Hyperparams{});
    EXPECT_EQ(ts.params, before);
}

TEST(Adam, FirstStepHandValue) {
    // m = 0.1, v = 0.001, bias-corrected to 1 and 1: delta = -lr * 1 / (1 + eps).
    auto ts = init_train_state({1, 1, 1, Mode::vqc, 1, 1}, 1);
    ASSERT_EQ(ts.params.size(), 1u);
    const double p0 = ts.params[0];
    Hyperparams hp;
    hp.lr = 0.1;
    adam_step(ts, std::vector<double>{1.0}, hp);
    EXPECT_NEAR(ts.params[0] - p0, -0.1 / (1.0 + 1e-8), 1e-15);
    EXPECT_NEAR(ts.params[0] - p0, -0.1, 1e-8);
}

TEST(Adam, FrozenUnchanged) {
    auto ts = init_train_state({4, 2, 1, Mode::dano, 4, 2}, 1);
    ts.frozen[0] = 1;
    const double p0 = ts.params[0];
    adam_step(ts, std::vector<double>(ts.params.size(), 5.0), Hyperparams{});
    EXPECT_EQ(ts.params[0], p0);
    EXPECT_NE(ts.params[1], init_train_state({4, 2, 1, Mode::dano, 4, 2}, 1).params[1]);
}

TEST(Adam, ShapeMismatch) {
    auto ts = init_train_state({4, 2, 1, Mode::dano, 4, 2}, 1);
    EXPECT_THROW(adam_step(ts, std::vector<double>(3, 0.0), Hyperparams{}), ShapeError);
}

TEST(Init, ThetaRangeAndParityStart) {
    const auto ts = init_train_state({6, 3, 2, Mode::dano, 6, 3}, 42);
    const auto lay = ts.layout();
    for (std::size_t i = 0; i < lay.theta; ++i) {
        EXPECT_GE(ts.params[i], -pi);
        EXPECT_LT(ts.params[i], pi);
    }
    const auto parity = parity_eigenvalues(3);
    for (std::size_t j = 0; j < lay.windows; ++j)
        for (std::size_t m = 0; m < 8; ++m) EXPECT_EQ(ts.params[lay.observable(j) + m], parity[m]);
    EXPECT_EQ(ts.params, init_train_state({6, 3, 2, Mode::dano, 6, 3}, 42).params);
    EXPECT_NE(ts.params, init_train_state({6, 3, 2, Mode::dano, 6, 3}, 43).params);
}

TEST(Train, VqcSmokeLossDoesNotIncrease) {
    const auto data = toy_data(4, 2, 3);
    auto ts = init_train_state({4, 1, 2, Mode::vqc, 4, 2}, 7);
    std::vector<std::size_t> all(data.train.size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> g;
    const double before = loss_and_gradient(ts, data.train, all, g);
    Hyperparams hp;
    hp.epochs = 1;
    hp.lr = 0.05;
    hp.batch = 10;
    train(ts, data, hp);
    EXPECT_LE(loss_and_gradient(ts, data.train, all, g), before);
}

TEST(Train, DeterministicAcrossRunsAndThreads) {
    const auto data = toy_data(5, 3, 4);
    Hyperparams hp;
    hp.epochs = 3;
    hp.batch = 7;
    for (Mode mode : {Mode::vqc, Mode::dano, Mode::ano}) {
        const ModelConfig cfg{5, mode == Mode::vqc ? 1 : 2, 2, mode, 5, 3};
        std::vector<std::string> rows[3];
        std::vector<double> finals[3];
        for (int r = 0; r < 3; ++r) {
            auto ts = init_train_state(cfg, 9);
            hp.threads = r == 2 ? 3 : 1;
            for (auto &m : train(ts, data, hp)) {
                m.wall_seconds = 0;
                rows[r].push_back(format_metrics_row(m));
            }
            finals[r] = ts.params;
        }
        EXPECT_EQ(rows[0], rows[1]);
        EXPECT_EQ(rows[0], rows[2]);
        EXPECT_EQ(finals[0], finals[2]);
    }
}

TEST(Train, FrozenThetaChangesOnlyLambda) {
    const auto data = toy_data(4, 2, 5);
    auto ts = init_train_state({4, 2, 2, Mode::dano, 4, 2}, 3);
    const auto lay = ts.layout();
    std::fill_n(ts.frozen.begin(), lay.theta, std::uint8_t{1});
    const auto before = ts.params;
    Hyperparams hp;
    hp.epochs = 2;
    train(ts, data, hp);
    for (std::size_t i = 0; i < lay.theta; ++i) EXPECT_EQ(ts.params[i], before[i]);
    bool lambda_moved = false;
    for (std::size_t i = lay.theta; i < ts.params.size(); ++i) lambda_moved = lambda_moved || ts.params[i] != before[i];
    EXPECT_TRUE(lambda_moved);
}

TEST(Train, CachedMarginalsMatchDirectGradient) {
    // Frozen circuit triggers the cached-marginal path; an unfrozen copy with
    // lr 0 on theta cannot be expressed, so compare one epoch of each path
    // through the full-batch gradient instead.
    const auto data = toy_data(4, 3, 6);
    auto ts = init_train_state({4, 2, 2, Mode::dano, 4, 3}, 4);
    std::fill_n(ts.frozen.begin(), ts.layout().theta, std::uint8_t{1});
    auto direct = ts;
    Hyperparams hp;
    hp.epochs = 2;
    hp.batch = 40;
    train(ts, data, hp);
    // Same updates by hand on the uncached route.
    std::vector<std::size_t> order(data.train.size());
    for (int epoch = 1; epoch <= 2; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> g;
        loss_and_gradient(direct, data.train, order, g);
        adam_step(direct, g, hp);
    }
    for (std::size_t i = 0; i < ts.params.size(); ++i) EXPECT_NEAR(ts.params[i], direct.params[i], 1e-12);
}

TEST(Train, EmptyDatasetRejected) {
    auto ts = init_train_state({4, 2, 1, Mode::dano, 4, 2}, 1);
    TrainData d{{4, {}, {}}, {4, {}, {}}, toy_set(4, 2, 3, 1)};
    EXPECT_THROW(train(ts, d, Hyperparams{}), ValidationError);
}

TEST(Train, NoValidationLeavesValEmpty) {
    auto data = toy_data(4, 2, 8);
    data.val = LabeledSet{4, {}, {}};
    auto ts = init_train_state({4, 1, 1, Mode::vqc, 4, 2}, 1);
    Hyperparams hp;
    hp.epochs = 1;
    const auto h = train(ts, data, hp);
    ASSERT_EQ(h.size(), 1u);
    EXPECT_TRUE(std::isnan(h[0].val_accuracy));
    EXPECT_NE(format_metrics_row(h[0]).find(",,"), std::string::npos);
}

TEST(Evaluate, SingleSampleHandChecked) {
    // No variational layers and x = -pi/2 leave the register in |000>:
    // Ry(-pi/2) H |0> = |0>. With window 1 reading +1 and window 2 reading -1
    // on |0...>, the prediction is class 0.
    auto ts = init_train_state({3, 1, 0, Mode::dano, 3, 2}, 1);
    ts.params = {1, -1, -1, 1, 1, -1};
    LabeledSet s{3, {}, {}};
    s.push(std::vector<double>{-pi / 2, -pi / 2, -pi / 2}, 0);
    EXPECT_EQ(evaluate(ts, s), 1.0);
    s.labels[0] = 1;
    EXPECT_EQ(evaluate(ts, s), 0.0);
}

TEST(Evaluate, BoundedAndConstantPredictor) {
    // Every output is exactly zero (all eigenvalues zero), so argmax is class 0
    // and balanced 10-class data scores exactly 0.1.
    auto ts = init_train_state({10, 1, 1, Mode::dano, 10, 10}, 2);
    for (std::size_t i = ts.layout().theta; i < ts.params.size(); ++i) ts.params[i] = 0.0;
    LabeledSet s{10, {}, {}};
    std::mt19937_64 rng(3);
    for (int r = 0; r < 50; ++r) s.push(random_vector(10, -pi, pi, rng), r % 10);
    EXPECT_EQ(evaluate(ts, s), 0.1);
    auto shuffled = s;
    std::ranges::reverse(shuffled.labels);
    const double a = evaluate(ts, shuffled);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    EXPECT_THROW(evaluate(ts, LabeledSet{10, {}, {}}), ValidationError);
}

TEST(Rescue, KOneReproducesVqcAtSwitch) {
    const auto data = toy_data(4, 2, 9);
    auto vqc = init_train_state({4, 1, 2, Mode::vqc, 4, 2}, 5);
    Hyperparams hp;
    hp.epochs = 2;
    train(vqc, data, hp);
    hp.epochs = 4;
    const auto r = rescue(vqc, 1, data, hp, 2);
    EXPECT_EQ(r.switch_test_accuracy, r.frozen_test_accuracy);
    EXPECT_EQ(r.history.size(), 2u);
    EXPECT_EQ(r.history.front().epoch, 3);
    for (std::size_t i = 0; i < r.state.layout().theta; ++i) EXPECT_EQ(r.state.params[i], vqc.params[i]);
}

TEST(Rescue, WrongModeOrEpoch) {
    const auto data = toy_data(4, 2, 10);
    auto dano = init_train_state({4, 2, 1, Mode::dano, 4, 2}, 1);
    Hyperparams hp;
    hp.epochs = 3;
    EXPECT_THROW(rescue(dano, 2, data, hp, 0), ValidationError);
    auto vqc = init_train_state({4, 1, 1, Mode::vqc, 4, 2}, 1);
    EXPECT_THROW(rescue(vqc, 2, data, hp, 1), ValidationError);
    hp.epochs = 0;
    EXPECT_THROW(rescue(vqc, 2, data, hp, 0), ValidationError);
}

TEST(Rescue, SyntheticFacesDirectional) {
    // Desk-scale face data: a VQC is trained, frozen, and given a k=8
    // diagonal readout for 20 epochs; the branch must not end below the
    // frozen model.
    const auto dir = temp_dir("faces");
    write_synthetic_faces(dir, SynthFaceOptions{});
    const auto fs = prepare_yale(dir, YaleOptions{});
    ASSERT_EQ(fs.size(), 1980u);
    const auto data = fs.train_data();
    auto vqc = init_train_state({16, 1, 6, Mode::vqc, 16, 10}, 1);
    Hyperparams hp;
    hp.epochs = 3;
    train(vqc, data, hp);
    hp.epochs = 23;
    const auto r = rescue(vqc, 8, data, hp, 3);
    ASSERT_EQ(r.history.size(), 20u);
    EXPECT_GE(r.history.back().test_accuracy, r.frozen_test_accuracy);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RoundTripBitExact) {
    for (Mode mode : {Mode::vqc, Mode::dano, Mode::ano}) {
        auto ts = init_train_state({5, mode == Mode::vqc ? 1 : 2, 2, mode, 4, 3}, 77, mode == Mode::ano ? Loss::mse : Loss::cross_entropy);
        std::mt19937_64 rng(1);
        for (auto &v : ts.adam_m) v = std::normal_distribution<double>()(rng) * 1e-7;
        for (auto &v : ts.adam_v) v = std::abs(std::normal_distribution<double>()(rng)) * 1e-300;
        ts.frozen[1] = 1;
        ts.step = 123;
        ts.epoch = 9;
        ts.run_id = "unit-run";
        const auto back = parse_checkpoint(format_checkpoint(ts));
        EXPECT_EQ(back.cfg, ts.cfg);
        EXPECT_EQ(back.loss, ts.loss);
        EXPECT_EQ(back.params, ts.params);
        EXPECT_EQ(back.adam_m, ts.adam_m);
        EXPECT_EQ(back.adam_v, ts.adam_v);
        EXPECT_EQ(back.frozen, ts.frozen);
        EXPECT_EQ(back.step, ts.step);
        EXPECT_EQ(back.epoch, ts.epoch);
        EXPECT_EQ(back.seed, ts.seed);
        EXPECT_EQ(back.run_id, ts.run_id);
        EXPECT_EQ(format_checkpoint(back), format_checkpoint(ts));
    }
}

TEST(Checkpoint, MalformedInputs) {
    const auto good = format_checkpoint(init_train_state({3, 2, 1, Mode::dano, 3, 2}, 1));
    EXPECT_THROW(parse_checkpoint("not a checkpoint"), FormatError);
    EXPECT_THROW(parse_checkpoint(good.substr(0, good.size() / 2)), FormatError);
    auto bad = good;
    bad.replace(bad.find("mode dano"), 9, "mode xyzw");
    EXPECT_ANY_THROW(parse_checkpoint(bad));
}

TEST(Metrics, RowFormat) {
    Metrics m;
    m.epoch = 3;
    m.train_loss = 0.5;
    m.train_accuracy = 0.25;
    m.val_accuracy = 0.75;
    m.test_accuracy = 0.125;
    m.wall_seconds = 1.23456;
    EXPECT_EQ(format_metrics_row(m), "3,0.5,0.25,0.75,0.125,1.235");
    EXPECT_EQ(std::string(metrics_csv_header), "epoch,train_loss,train_acc,val_acc,test_acc,wall_seconds");
}
