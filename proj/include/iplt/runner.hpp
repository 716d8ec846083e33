#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iplt/config.hpp"
#include "iplt/dataset.hpp"
#include "iplt/metrics.hpp"
#include "iplt/model.hpp"
#include "iplt/pruner.hpp"

namespace iplt {

// Append-only run log. CSV columns are pinned:
//   epoch,event_type,layer,filter,norm,fpr_all,ppr_all,train_loss,test_acc
// Event types: epoch, prune, prune_summary, rebuild.
struct LogRow {
    std::int64_t epoch = 0;
    std::string event_type;
    std::optional<int> layer;
    std::optional<int> filter;
    std::optional<double> norm;
    std::optional<double> fpr_all;
    std::optional<double> ppr_all;
    std::optional<double> train_loss;
    std::optional<double> test_acc;
};

std::string run_log_header();
std::string format_log_row(const LogRow& row);

struct MacRow {
    std::int64_t epoch = 0;
    std::uint64_t epoch_macs = 0;
    std::uint64_t cumulative_macs = 0;
};

struct RunResult {
    ModelGraph model;
    double final_test_acc = 0.0;
    double final_train_loss = 0.0;
    std::uint64_t total_train_macs = 0;
    std::vector<LogRow> log;
    std::vector<MacRow> macs;
    std::vector<std::int64_t> prune_event_epochs;
    std::optional<std::int64_t> rebuild_epoch;
};

// Baseline: plain training, no schedule.
RunResult train_run(ModelGraph model, const Dataset& train, const Dataset& test,
                    const RunConfig& config);

// Incremental prune-while-training: prune every k epochs on the rising
// ratio list, hard-rebuild right after the last scheduled event, then keep
// training the genuinely smaller model to the epoch budget. An empty ratio
// list degenerates to train_run exactly.
RunResult iplt_run(ModelGraph model, const Dataset& train, const Dataset& test,
                   const RunConfig& config);

// Pretrain for `pretrain_epochs`, then iterate (prune to next ratio,
// retrain `retrain_epochs`) under the same selection criterion; the model
// stays full-sized (soft masks) for the whole training budget and is only
// rebuilt at the very end.
RunResult traditional_run(ModelGraph model, const Dataset& train, const Dataset& test,
                          const RunConfig& config);

// Writes runlog.csv, macs.csv, summary.csv, report.txt/report.csv and the
// start/final checkpoints into config.out_dir.
void write_run_outputs(const RunResult& result, const ModelGraph& start_model,
                       const RunConfig& config);

// Dataset resolution for the CLI: IDX paths when configured, otherwise a
// seeded synthetic fallback (documented in README).
Dataset load_train_dataset(const RunConfig& config);
Dataset load_test_dataset(const RunConfig& config);

}  // namespace iplt
