// Command-line experiment runner: train / iplt / traditional / eval /
// report subcommands plus a synth-idx helper for generating local IDX
// datasets. Every error path exits nonzero with one machine-parseable line.

#include <CLI11.hpp>

#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "iplt/checkpoint.hpp"
#include "iplt/config.hpp"
#include "iplt/dataset.hpp"
#include "iplt/metrics.hpp"
#include "iplt/model.hpp"
#include "iplt/runner.hpp"

namespace {

using namespace iplt;

struct Flags {
    std::optional<std::string> config_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> preset;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<double> lr;
    std::optional<double> momentum;
    std::optional<double> weight_decay;
    std::optional<int> eval_every;
    std::optional<int> k;
    std::optional<std::string> ratios;
    std::optional<std::string> mode;
    std::optional<double> norm_p;
    std::optional<int> min_filters;
    std::optional<int> pretrain_epochs;
    std::optional<int> retrain_epochs;
    std::optional<std::string> train_images;
    std::optional<std::string> train_labels;
    std::optional<std::string> test_images;
    std::optional<std::string> test_labels;
    std::optional<std::int64_t> subset;
    std::optional<std::int64_t> test_subset;
    std::optional<std::string> out_dir;
    bool paper_mnist = false;
};

void add_common_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_file, "key=value config file (flags override it)");
    cmd->add_option("--seed", f.seed, "RNG seed");
    cmd->add_option("--preset", f.preset, "model preset: mnist-cnn | toy-cnn");
    cmd->add_option("--epochs", f.epochs, "total training epochs");
    cmd->add_option("--batch-size", f.batch_size, "minibatch size");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--momentum", f.momentum, "SGD momentum");
    cmd->add_option("--weight-decay", f.weight_decay, "L2 weight decay");
    cmd->add_option("--eval-every", f.eval_every, "test-set evaluation period in epochs");
    cmd->add_option("--train-images", f.train_images, "IDX train images path");
    cmd->add_option("--train-labels", f.train_labels, "IDX train labels path");
    cmd->add_option("--test-images", f.test_images, "IDX test images path");
    cmd->add_option("--test-labels", f.test_labels, "IDX test labels path");
    cmd->add_option("--subset", f.subset, "use only the first N training samples");
    cmd->add_option("--test-subset", f.test_subset, "use only the first N test samples");
    cmd->add_option("--out", f.out_dir, "output directory");
}

void add_schedule_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--k", f.k, "epochs between prune events");
    cmd->add_option("--ratios", f.ratios, "cumulative prune ratios, e.g. 0.1,0.2,0.3 or 10%,20%");
    cmd->add_option("--mode", f.mode, "comparison mode: global | intra-layer");
    cmd->add_option("--norm-p", f.norm_p, "p of the filter importance norm");
    cmd->add_option("--min-filters", f.min_filters,
                    "guard: keep at least N filters per layer (0 = off, collapse raises an error)");
}

RunConfig build_config(const Flags& f) {
    RunConfig cfg;
    if (f.config_file) {
        apply_config_entries(cfg, parse_config_file(*f.config_file));
    }
    if (f.paper_mnist) {
        if (!f.k) cfg.k = 2;
        if (!f.ratios) cfg.ratios = ratio_ladder(0.7);
        if (!f.mode) cfg.mode = "global";
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.preset) cfg.preset = *f.preset;
    if (f.epochs) cfg.epochs = *f.epochs;
    if (f.batch_size) cfg.batch_size = *f.batch_size;
    if (f.lr) cfg.lr = *f.lr;
    if (f.momentum) cfg.momentum = *f.momentum;
    if (f.weight_decay) cfg.weight_decay = *f.weight_decay;
    if (f.eval_every) cfg.eval_every = *f.eval_every;
    if (f.k) cfg.k = *f.k;
    if (f.ratios) cfg.ratios = parse_ratio_list(*f.ratios);
    if (f.mode) cfg.mode = *f.mode;
    if (f.norm_p) cfg.norm_p = *f.norm_p;
    if (f.min_filters) cfg.min_filters = *f.min_filters;
    if (f.pretrain_epochs) cfg.pretrain_epochs = *f.pretrain_epochs;
    if (f.retrain_epochs) cfg.retrain_epochs = *f.retrain_epochs;
    if (f.train_images) cfg.train_images = *f.train_images;
    if (f.train_labels) cfg.train_labels = *f.train_labels;
    if (f.test_images) cfg.test_images = *f.test_images;
    if (f.test_labels) cfg.test_labels = *f.test_labels;
    if (f.subset) cfg.subset = *f.subset;
    if (f.test_subset) cfg.test_subset = *f.test_subset;
    if (f.out_dir) cfg.out_dir = *f.out_dir;
    cfg.validate();
    return cfg;
}

int run_flow(const Flags& flags, const std::string& flow) {
    RunConfig cfg = build_config(flags);
    ModelGraph start = make_preset(cfg.preset, cfg.seed);
    const Dataset train = load_train_dataset(cfg);
    const Dataset test = load_test_dataset(cfg);

    RunResult result;
    if (flow == "train") {
        cfg.ratios.clear();
        result = train_run(start, train, test, cfg);
    } else if (flow == "iplt") {
        result = iplt_run(start, train, test, cfg);
    } else {
        result = traditional_run(start, train, test, cfg);
    }
    write_run_outputs(result, start, cfg);

    const PruneReport report = make_report(start, result.model);
    std::printf("%s finished: epochs=%lld fpr=%.6f ppr=%.6f test_acc=%.6f train_macs=%llu\n",
                flow.c_str(), static_cast<long long>(result.model.epoch), report.fpr_all,
                report.ppr_all, result.final_test_acc,
                static_cast<unsigned long long>(result.total_train_macs));
    std::printf("outputs written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int run_eval(const Flags& flags, const std::string& checkpoint) {
    RunConfig cfg = build_config(flags);
    ModelGraph model = load_checkpoint(checkpoint);
    Dataset test = load_test_dataset(cfg);
    const double acc = evaluate_accuracy(model, test.images, test.labels);
    std::printf("checkpoint=%s samples=%lld accuracy=%.6f\n", checkpoint.c_str(),
                static_cast<long long>(test.size()), acc);
    return 0;
}

std::optional<ComparisonRow> read_summary_row(const std::filesystem::path& dir) {
    std::ifstream in(dir / "summary.csv");
    if (!in) return std::nullopt;
    std::string header, line;
    if (!std::getline(in, header) || !std::getline(in, line)) return std::nullopt;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) fields.push_back(item);
    if (fields.size() < 7) return std::nullopt;
    ComparisonRow row;
    row.label = dir.filename().string();
    row.fpr_all = std::stod(fields[4]);
    row.accuracy = std::stod(fields[6]);
    return row;
}

int run_report(const std::string& checkpoint, const std::string& baseline,
               const std::string& runs, const std::string& out_text, const std::string& out_csv) {
    std::string text;
    if (!checkpoint.empty()) {
        const ModelGraph after = load_checkpoint(checkpoint);
        PruneReport report;
        if (!baseline.empty()) {
            const ModelGraph before = load_checkpoint(baseline);
            report = make_report(before, after);
        } else {
            report = make_report(after);
        }
        text = render_report_text(report);
        if (!out_csv.empty()) {
            std::ofstream out(out_csv, std::ios::trunc);
            out << render_report_csv(report);
        }
    }
    if (!runs.empty()) {
        std::vector<ComparisonRow> rows;
        std::stringstream ss(runs);
        std::string dir;
        while (std::getline(ss, dir, ',')) {
            if (dir.empty()) continue;
            auto row = read_summary_row(dir);
            if (!row) {
                throw ConfigError("no readable summary.csv under '" + dir + "'");
            }
            rows.push_back(*row);
        }
        text += render_comparison_text(rows);
    }
    if (text.empty()) {
        throw ConfigError("report needs --checkpoint and/or --runs");
    }
    std::fputs(text.c_str(), stdout);
    if (!out_text.empty()) {
        std::ofstream out(out_text, std::ios::trunc);
        out << text;
    }
    return 0;
}

int run_synth(const std::string& out_dir, const std::string& kind, std::uint64_t seed,
              std::int64_t train_samples, std::int64_t test_samples) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    Dataset train, test;
    if (kind == "digits") {
        train = make_digits({seed * 2 + 1, train_samples, 28, 28});
        test = make_digits({seed * 2 + 2, test_samples, 28, 28});
    } else if (kind == "blobs") {
        SyntheticSpec spec;
        spec.seed = seed * 2 + 1;
        spec.samples = train_samples;
        train = make_synthetic(spec);
        spec.seed = seed * 2 + 2;
        spec.samples = test_samples;
        test = make_synthetic(spec);
    } else {
        throw ConfigError("unknown synth kind '" + kind + "' (expected digits or blobs)");
    }
    write_idx_images(dir / "train-images-idx3-ubyte", train.images);
    write_idx_labels(dir / "train-labels-idx1-ubyte", train.labels);
    write_idx_images(dir / "t10k-images-idx3-ubyte", test.images);
    write_idx_labels(dir / "t10k-labels-idx1-ubyte", test.labels);
    std::printf("wrote %lld train and %lld test samples to %s\n",
                static_cast<long long>(train.size()), static_cast<long long>(test.size()),
                out_dir.c_str());
    return 0;
}

int fail(const char* code, const std::string& msg) {
    std::fprintf(stderr, "error: %s: %s\n", code, msg.c_str());
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Large tensors churn through the allocator every step; keep the
    // arena instead of handing pages back to the kernel each batch.
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    CLI::App app{"iplt - incremental filter pruning for small CNNs"};
    app.require_subcommand(1);

    Flags flags;

    auto* train_cmd = app.add_subcommand("train", "train a baseline model (no pruning)");
    add_common_flags(train_cmd, flags);

    auto* iplt_cmd = app.add_subcommand("iplt", "prune incrementally while training, then rebuild");
    add_common_flags(iplt_cmd, flags);
    add_schedule_flags(iplt_cmd, flags);
    iplt_cmd->add_flag("--paper-mnist", flags.paper_mnist,
                       "use the k=2, 10%..70% global schedule");

    auto* trad_cmd = app.add_subcommand("traditional", "pretrain, then iteratively prune+retrain");
    add_common_flags(trad_cmd, flags);
    add_schedule_flags(trad_cmd, flags);
    trad_cmd->add_option("--pretrain-epochs", flags.pretrain_epochs, "epochs before first pruning");
    trad_cmd->add_option("--retrain-epochs", flags.retrain_epochs, "epochs after each prune step");

    std::string checkpoint, baseline, runs, out_text, out_csv;
    auto* eval_cmd = app.add_subcommand("eval", "test-set accuracy of a checkpoint");
    add_common_flags(eval_cmd, flags);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();

    auto* report_cmd = app.add_subcommand("report", "render pruning reports and comparisons");
    report_cmd->add_option("--checkpoint", checkpoint, "pruned/masked checkpoint");
    report_cmd->add_option("--baseline", baseline, "unpruned reference checkpoint");
    report_cmd->add_option("--runs", runs, "comma-separated run directories to compare");
    report_cmd->add_option("--out", out_text, "write the text report here");
    report_cmd->add_option("--csv", out_csv, "write the CSV report here");

    std::string synth_dir = "data/synth", synth_kind = "digits";
    std::uint64_t synth_seed = 7;
    std::int64_t synth_train = 10000, synth_test = 2000;
    auto* synth_cmd = app.add_subcommand("synth-idx", "write a synthetic dataset as IDX files");
    synth_cmd->add_option("--out-dir", synth_dir, "directory for the IDX files");
    synth_cmd->add_option("--kind", synth_kind, "digits | blobs");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--train-samples", synth_train, "training sample count");
    synth_cmd->add_option("--test-samples", synth_test, "test sample count");

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return run_flow(flags, "train");
        if (iplt_cmd->parsed()) return run_flow(flags, "iplt");
        if (trad_cmd->parsed()) return run_flow(flags, "traditional");
        if (eval_cmd->parsed()) return run_eval(flags, checkpoint);
        if (report_cmd->parsed()) return run_report(checkpoint, baseline, runs, out_text, out_csv);
        if (synth_cmd->parsed())
            return run_synth(synth_dir, synth_kind, synth_seed, synth_train, synth_test);
        return fail("USAGE", "no subcommand given");
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::ostringstream msg;
        msg << e.what();
        std::fprintf(stderr, "error: USAGE: %s\n", msg.str().c_str());
        return 1;
    } catch (const ConfigError& e) {
        return fail("CONFIG", e.what());
    } catch (const DataError& e) {
        return fail("DATA", e.what());
    } catch (const CheckpointError& e) {
        return fail("CHECKPOINT", e.what());
    } catch (const LayerCollapseError& e) {
        return fail("LAYER_COLLAPSE", e.what());
    } catch (const ShapeError& e) {
        return fail("SHAPE", e.what());
    } catch (const Error& e) {
        return fail("RUNTIME", e.what());
    } catch (const std::exception& e) {
        return fail("INTERNAL", e.what());
    }
}
