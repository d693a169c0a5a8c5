// dano command-line entry point: argument parsing only, see dano/cli.hpp.

#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "dano/cli.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Flags that map onto RunConfig keys. Unset flags stay empty and are skipped.
struct RunFlags {
    std::string config;
    std::map<std::string, std::string> values;

    void attach(CLI::App *app, const std::vector<std::pair<std::string, std::string>> &flags) {
        app->add_option("--config", config, "key=value configuration file")->check(CLI::ExistingFile);
        for (const auto &[key, help] : flags) {
            std::string flag = "--" + key;
            for (auto &c : flag)
                if (c == '_') c = '-';
            app->add_option(flag, values[key], help);
        }
    }

    dano::cli::RunConfig resolve() const {
        Overrides o;
        for (const auto &[k, v] : values)
            if (!v.empty()) o.emplace_back(k, v);
        return dano::cli::load_run_config(config, o);
    }
};

const std::vector<std::pair<std::string, std::string>> common_flags{
    {"mode", "vqc | dano | ano"},
    {"k", "observable locality"},
    {"qubits", "number of qubits n (must equal the feature count)"},
    {"layers", "ansatz layers L"},
    {"windows", "number of sliding observables m (default n)"},
    {"classes", "number of logits C (default: from the data)"},
    {"seed", "initialization and shuffling seed"},
    {"epochs", "train through this epoch number"},
    {"lr", "Adam learning rate"},
    {"batch", "mini-batch size"},
    {"loss", "ce | mse"},
    {"threads", "worker threads (results do not depend on it)"},
    {"data", "feature cache written by prep-data"},
    {"train_limit", "use only the first N training rows (0 = all)"},
    {"val_limit", "use only the first N validation rows (0 = all)"},
    {"test_limit", "use only the first N test rows (0 = all)"},
    {"out", "run directory"},
    {"switch_epoch", "epoch of the vqc checkpoint a rescue branch starts from"},
    {"checkpoint", "checkpoint to resume (train) or branch from (rescue)"},
};

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"dano: diagonal adaptive observables on a statevector simulator"};
    app.require_subcommand(1);

    // prep-data
    auto *prep = app.add_subcommand("prep-data", "encode a dataset into a feature cache");
    std::string dataset, images, labels, source, prep_out;
    std::uint64_t prep_seed = 0;
    dano::MnistOptions mnist;
    dano::YaleOptions yale;
    prep->add_option("dataset", dataset, "mnist | yale")->required()->check(CLI::IsMember({"mnist", "yale"}));
    prep->add_option("--images", images, "MNIST IDX image file");
    prep->add_option("--labels", labels, "MNIST IDX label file");
    prep->add_option("--source", source, "directory with the face images (yale)");
    prep->add_option("--out", prep_out, "output feature cache")->required();
    prep->add_option("--seed", prep_seed, "split seed");
    prep->add_option("--pool", mnist.pool, "MNIST pooling factor");
    prep->add_option("--train-count", mnist.train_count, "MNIST training rows");
    prep->add_option("--limit", mnist.limit, "MNIST rows read from the files");
    prep->add_option("--subjects", yale.subjects, "number of face identities");
    prep->add_option("--components", yale.components, "PCA components");

    // synth-faces
    auto *synth = app.add_subcommand("synth-faces", "write a synthetic face set with Yale-style file names");
    dano::SynthFaceOptions faces;
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--subjects", faces.subjects, "number of identities");
    synth->add_option("--seed", faces.seed, "generator seed");

    // train / rescue
    auto *train = app.add_subcommand("train", "train a model and write a run directory");
    RunFlags train_flags;
    train_flags.attach(train, common_flags);
    auto *rescue = app.add_subcommand("rescue", "branch a vqc checkpoint into a frozen-circuit dano model");
    RunFlags rescue_flags;
    rescue_flags.attach(rescue, common_flags);

    // eval
    auto *eval = app.add_subcommand("eval", "accuracy of a checkpoint on one split");
    std::string eval_ckpt, eval_data, eval_split = "test";
    std::size_t eval_limit = 0;
    int eval_threads = 1;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "feature cache")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", eval_split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--limit", eval_limit, "first N rows of the split (0 = all)");
    eval->add_option("--threads", eval_threads, "worker threads");

    // verify
    auto *verify = app.add_subcommand("verify", "run the self-check suites");
    dano::VerifyOptions vopt;
    std::string verify_out;
    verify->add_option("--seed", vopt.seed, "random seed");
    verify->add_option("--out", verify_out, "JSON report path");
    verify->add_flag("--inject-fault", vopt.inject_fault, "corrupt simulator outputs to show the check fails");

    // bench
    auto *bench = app.add_subcommand("bench", "measurement-stage timing grid");
    dano::BenchOptions bopt;
    std::string bench_out;
    bench->add_option("--qubits", bopt.qubits, "qubit counts")->delimiter(',');
    bench->add_option("--k", bopt.localities, "localities")->delimiter(',');
    bench->add_option("--reps", bopt.reps, "timed repetitions per cell");
    bench->add_option("--seed", bopt.seed, "random seed");
    bench->add_option("--out", bench_out, "CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*prep) {
            dano::FeatureSet fs;
            if (dataset == "mnist") {
                if (images.empty() || labels.empty()) throw dano::ValidationError("prep-data mnist needs --images and --labels");
                mnist.seed = prep_seed;
                fs = dano::prepare_mnist(dano::load_idx(images, labels), mnist);
            } else {
                if (source.empty()) throw dano::ValidationError("prep-data yale needs --source");
                yale.seed = prep_seed;
                fs = dano::prepare_yale(source, yale);
            }
            dano::write_feature_cache(prep_out, fs);
            std::cout << "wrote " << fs.size() << " rows x " << fs.dim << " features to " << prep_out << "\n";
            for (const auto &[k, v] : fs.meta) std::cout << "  " << k << ": " << v << "\n";
        } else if (*synth) {
            const int n = dano::write_synthetic_faces(synth_out, faces);
            std::cout << "wrote " << n << " images to " << synth_out << "\n";
        } else if (*train) {
            dano::cli::cmd_train(train_flags.resolve(), std::cout);
        } else if (*rescue) {
            auto rc = rescue_flags.resolve();
            if (rescue_flags.values["mode"].empty()) rc.mode = "dano";
            dano::cli::cmd_rescue(rc, std::cout);
        } else if (*eval) {
            const double acc = dano::cli::cmd_eval(eval_ckpt, eval_data, dano::parse_split(eval_split), eval_limit, eval_threads);
            std::cout << "accuracy=" << acc << " split=" << eval_split << "\n";
        } else if (*verify) {
            return dano::cli::cmd_verify(vopt, verify_out, std::cout);
        } else if (*bench) {
            dano::cli::cmd_bench(bopt, bench_out, std::cout);
        }
    } catch (const dano::Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
