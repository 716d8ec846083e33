#include "iplt/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "iplt/checkpoint.hpp"

namespace iplt {

namespace {

// Training cost convention: one forward pass of MACs plus two for the
// backward pass (input and weight gradients).
constexpr std::uint64_t kTrainMacFactor = 3;

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt_norm(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string run_log_header() {
    return "epoch,event_type,layer,filter,norm,fpr_all,ppr_all,train_loss,test_acc";
}

std::string format_log_row(const LogRow& row) {
    std::ostringstream out;
    out << row.epoch << ',' << row.event_type << ',';
    if (row.layer) out << *row.layer;
    out << ',';
    if (row.filter) out << *row.filter;
    out << ',';
    if (row.norm) out << fmt_norm(*row.norm);
    out << ',';
    if (row.fpr_all) out << fmt6(*row.fpr_all);
    out << ',';
    if (row.ppr_all) out << fmt6(*row.ppr_all);
    out << ',';
    if (row.train_loss) out << fmt6(*row.train_loss);
    out << ',';
    if (row.test_acc) out << fmt6(*row.test_acc);
    return out.str();
}

namespace {

class Runner {
public:
    Runner(ModelGraph model, const Dataset& train, const Dataset& test, const RunConfig& config)
        : model_(std::move(model)),
          train_(train),
          test_(test),
          config_(config),
          start_filters_(model_.total_filters()),
          start_params_(count_parameters(model_).total) {
        state_.reset(model_);
        sample_size_ = train_.images.size() / train_.images.dim(0);
    }

    ModelGraph& model() { return model_; }

    double current_fpr() const {
        if (start_filters_ == 0) return 0.0;
        return static_cast<double>(start_filters_ - model_.alive_filters()) /
               static_cast<double>(start_filters_);
    }

    double current_ppr() const {
        if (start_params_ == 0) return 0.0;
        return 1.0 - static_cast<double>(compute_ppr(model_).total_after) /
                         static_cast<double>(start_params_);
    }

    double lr_for_epoch(std::int64_t epoch, int total_epochs) const {
        double lr = config_.lr;
        for (double frac : config_.lr_decay_at) {
            const auto milestone = static_cast<std::int64_t>(
                std::llround(frac * static_cast<double>(total_epochs)));
            if (epoch > milestone) lr *= config_.lr_decay_factor;
        }
        return lr;
    }

    // One pass over the training set; returns the mean sample loss.
    double train_one_epoch(int total_epochs) {
        const std::int64_t n = train_.size();
        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        model_.rng.shuffle(order);

        SgdConfig sgd;
        sgd.lr = lr_for_epoch(model_.epoch + 1, total_epochs);
        sgd.momentum = config_.momentum;
        sgd.weight_decay = config_.weight_decay;

        const std::uint64_t macs_per_sample =
            static_cast<std::uint64_t>(compute_flops(model_, false).total_macs);

        double loss_sum = 0.0;
        const int bs = config_.batch_size;
        for (std::int64_t begin = 0; begin < n; begin += bs) {
            const std::int64_t count = std::min<std::int64_t>(bs, n - begin);
            Tensor batch({count, train_.images.dim(1), train_.images.dim(2),
                          train_.images.dim(3)});
            std::vector<int> labels(static_cast<std::size_t>(count));
            for (std::int64_t i = 0; i < count; ++i) {
                const std::int64_t src = order[static_cast<std::size_t>(begin + i)];
                std::memcpy(batch.data() + i * sample_size_,
                            train_.images.data() + src * sample_size_,
                            sizeof(scalar) * static_cast<std::size_t>(sample_size_));
                labels[static_cast<std::size_t>(i)] = train_.labels[static_cast<std::size_t>(src)];
            }
            const double loss = backward_and_step(model_, state_, batch, labels, sgd);
            loss_sum += loss * static_cast<double>(count);
            epoch_macs_ += kTrainMacFactor * macs_per_sample * static_cast<std::uint64_t>(count);
        }
        ++model_.epoch;
        return loss_sum / static_cast<double>(n);
    }

    void finish_epoch(RunResult& result, double train_loss, int total_epochs) {
        LogRow row;
        row.epoch = model_.epoch;
        row.event_type = "epoch";
        row.fpr_all = current_fpr();
        row.ppr_all = current_ppr();
        row.train_loss = train_loss;
        const bool eval_now =
            model_.epoch % config_.eval_every == 0 || model_.epoch == total_epochs;
        if (eval_now) {
            row.test_acc = evaluate_accuracy(model_, test_.images, test_.labels);
            result.final_test_acc = *row.test_acc;
        }
        result.final_train_loss = train_loss;
        result.log.push_back(row);

        cumulative_macs_ += epoch_macs_;
        result.macs.push_back({model_.epoch, epoch_macs_, cumulative_macs_});
        epoch_macs_ = 0;
        result.total_train_macs = cumulative_macs_;
    }

    void prune_event(RunResult& result, const PruneSchedule& schedule, double ratio) {
        Selection selection =
            select_filters(model_, schedule.mode, schedule.norm_p, ratio, config_.min_filters);
        apply_mask(model_, selection);
        for (const PrunePick& pick : selection.picks) {
            LogRow row;
            row.epoch = model_.epoch;
            row.event_type = "prune";
            row.layer = pick.layer;
            row.filter = pick.filter;
            row.norm = pick.norm;
            result.log.push_back(row);
        }
        LogRow summary;
        summary.epoch = model_.epoch;
        summary.event_type = "prune_summary";
        summary.fpr_all = current_fpr();
        summary.ppr_all = current_ppr();
        result.log.push_back(summary);
        result.prune_event_epochs.push_back(model_.epoch);
    }

    void hard_rebuild(RunResult& result) {
        if (!model_.any_masked()) return;
        model_ = rebuild_without_masked(model_);
        state_.reset(model_);
        LogRow row;
        row.epoch = model_.epoch;
        row.event_type = "rebuild";
        row.fpr_all = current_fpr();
        row.ppr_all = current_ppr();
        result.log.push_back(row);
        result.rebuild_epoch = model_.epoch;
    }

private:
    ModelGraph model_;
    const Dataset& train_;
    const Dataset& test_;
    const RunConfig& config_;
    SgdState state_;
    std::int64_t start_filters_;
    std::int64_t start_params_;
    std::int64_t sample_size_ = 0;
    std::uint64_t epoch_macs_ = 0;
    std::uint64_t cumulative_macs_ = 0;
};

}  // namespace

RunResult iplt_run(ModelGraph model, const Dataset& train, const Dataset& test,
                   const RunConfig& config) {
    config.validate();
    const PruneSchedule schedule = config.schedule();
    Runner runner(std::move(model), train, test, config);
    RunResult result;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double loss = runner.train_one_epoch(config.epochs);
        if (schedule.event_at(epoch)) {
            runner.prune_event(result, schedule, schedule.ratio_at(epoch));
            if (epoch == schedule.last_event_epoch()) {
                runner.hard_rebuild(result);
            }
        }
        runner.finish_epoch(result, loss, config.epochs);
    }
    result.model = std::move(runner.model());
    return result;
}

RunResult train_run(ModelGraph model, const Dataset& train, const Dataset& test,
                    const RunConfig& config) {
    RunConfig plain = config;
    plain.ratios.clear();
    return iplt_run(std::move(model), train, test, plain);
}

RunResult traditional_run(ModelGraph model, const Dataset& train, const Dataset& test,
                          const RunConfig& config) {
    config.validate();
    const PruneSchedule schedule = config.schedule();
    const int total_epochs =
        config.pretrain_epochs + static_cast<int>(config.ratios.size()) * config.retrain_epochs;
    Runner runner(std::move(model), train, test, config);
    RunResult result;

    for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
        const double loss = runner.train_one_epoch(total_epochs);
        runner.finish_epoch(result, loss, total_epochs);
    }
    for (double ratio : config.ratios) {
        runner.prune_event(result, schedule, ratio);
        for (int r = 0; r < config.retrain_epochs; ++r) {
            const double loss = runner.train_one_epoch(total_epochs);
            runner.finish_epoch(result, loss, total_epochs);
        }
    }
    // The model stays full-sized (soft masks) for the whole training
    // budget; only the final artifact is rebuilt.
    runner.hard_rebuild(result);
    result.model = std::move(runner.model());
    return result;
}

void write_run_outputs(const RunResult& result, const ModelGraph& start_model,
                       const RunConfig& config) {
    const std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);

    save_checkpoint(start_model, dir / "start.ckpt");
    save_checkpoint(result.model, dir / "final.ckpt");

    {
        std::ofstream out(dir / "runlog.csv", std::ios::trunc);
        out << run_log_header() << '\n';
        for (const LogRow& row : result.log) {
            out << format_log_row(row) << '\n';
        }
    }
    {
        std::ofstream out(dir / "macs.csv", std::ios::trunc);
        out << "epoch,epoch_macs,cumulative_macs\n";
        for (const MacRow& row : result.macs) {
            out << row.epoch << ',' << row.epoch_macs << ',' << row.cumulative_macs << '\n';
        }
    }

    const PruneReport report = make_report(start_model, result.model);
    {
        std::ofstream out(dir / "report.txt", std::ios::trunc);
        out << render_report_text(report);
    }
    {
        std::ofstream out(dir / "report.csv", std::ios::trunc);
        out << render_report_csv(report);
    }
    {
        std::ofstream out(dir / "summary.csv", std::ios::trunc);
        out << "preset,mode,seed,epochs,fpr_all,ppr_all,final_test_acc,final_train_loss,"
               "total_train_macs,params_before,params_after\n";
        out << config.preset << ',' << config.mode << ',' << config.seed << ',' << config.epochs
            << ',' << fmt6(report.fpr_all) << ',' << fmt6(report.ppr_all) << ','
            << fmt6(result.final_test_acc) << ',' << fmt6(result.final_train_loss) << ','
            << result.total_train_macs << ',' << report.params_before << ','
            << report.params_after << '\n';
    }
}

Dataset load_train_dataset(const RunConfig& config) {
    if (!config.train_images.empty() || !config.train_labels.empty()) {
        if (config.train_images.empty() || config.train_labels.empty()) {
            throw ConfigError("train_images and train_labels must be given together");
        }
        return load_mnist_idx(config.train_images, config.train_labels).subset(config.subset);
    }
    if (config.preset == "toy-cnn") {
        SyntheticSpec spec;
        spec.seed = config.seed * 2 + 1;
        spec.samples = config.subset > 0 ? config.subset : 512;
        return make_synthetic(spec);
    }
    DigitsSpec spec;
    spec.seed = config.seed * 2 + 1;
    spec.samples = config.subset > 0 ? config.subset : 10000;
    return make_digits(spec);
}

Dataset load_test_dataset(const RunConfig& config) {
    if (!config.test_images.empty() || !config.test_labels.empty()) {
        if (config.test_images.empty() || config.test_labels.empty()) {
            throw ConfigError("test_images and test_labels must be given together");
        }
        return load_mnist_idx(config.test_images, config.test_labels).subset(config.test_subset);
    }
    if (config.preset == "toy-cnn") {
        SyntheticSpec spec;
        spec.seed = config.seed * 2 + 2;
        spec.samples = config.test_subset > 0 ? config.test_subset : 256;
        return make_synthetic(spec);
    }
    DigitsSpec spec;
    spec.seed = config.seed * 2 + 2;
    spec.samples = config.test_subset > 0 ? config.test_subset : 2000;
    return make_digits(spec);
}

}  // namespace iplt
