#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iplt/pruner.hpp"

namespace iplt {

// Everything a run needs, assembled from a key=value config file and/or
// command-line flags (flags win). See docs in README for the key list.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string preset = "mnist-cnn";
    int epochs = 15;
    int batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<double> lr_decay_at{0.5, 0.75};  // fractions of the epoch budget
    double lr_decay_factor = 0.1;
    int eval_every = 1;

    // schedule
    int k = 2;
    std::vector<double> ratios;
    std::string mode = "global";
    double norm_p = 2.0;
    int min_filters = 0;

    // traditional flow
    int pretrain_epochs = 0;
    int retrain_epochs = 1;

    // data
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::int64_t subset = 0;       // 0 = all
    std::int64_t test_subset = 0;  // 0 = all

    std::string out_dir = "runs/out";

    void validate() const;  // throws ConfigError naming the bad field
    PruneSchedule schedule() const;
};

// Plain-text key=value file; '#' starts a comment, blank lines ignored.
// Unknown keys are an error.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);
void apply_config_entries(RunConfig& config, const std::map<std::string, std::string>& entries);

std::vector<double> parse_ratio_list(const std::string& text);

// "[10%,20%,...]" convenience: ratios from 0.1 to `final` in steps of 0.1.
std::vector<double> ratio_ladder(double final_ratio);

}  // namespace iplt
