#include "iplt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace iplt {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field '" + key + "': cannot parse '" + value + "' as a number");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field '" + key + "': cannot parse '" + value + "' as an integer");
    }
}

}  // namespace

std::vector<double> parse_ratio_list(const std::string& text) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        double v;
        if (!item.empty() && item.back() == '%') {
            v = parse_double("ratios", item.substr(0, item.size() - 1)) / 100.0;
        } else {
            v = parse_double("ratios", item);
        }
        out.push_back(v);
    }
    return out;
}

std::vector<double> ratio_ladder(double final_ratio) {
    std::vector<double> out;
    for (int i = 1;; ++i) {
        const double r = 0.1 * i;
        if (r > final_ratio + 1e-9) break;
        out.push_back(r);
    }
    if (out.empty() || std::abs(out.back() - final_ratio) > 1e-9) {
        out.push_back(final_ratio);
    }
    return out;
}

std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::map<std::string, std::string> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        }
        entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return entries;
}

void apply_config_entries(RunConfig& config, const std::map<std::string, std::string>& entries) {
    static const std::set<std::string> known = {
        "seed",        "preset",       "epochs",       "batch_size",   "lr",
        "momentum",    "weight_decay", "eval_every",   "k",            "ratios",
        "mode",        "norm_p",       "min_filters",  "pretrain_epochs",
        "retrain_epochs", "train_images", "train_labels", "test_images",
        "test_labels", "subset",       "test_subset",  "out_dir"};
    for (const auto& [key, value] : entries) {
        if (!known.count(key)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        if (key == "seed") config.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "preset") config.preset = value;
        else if (key == "epochs") config.epochs = static_cast<int>(parse_int(key, value));
        else if (key == "batch_size") config.batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "lr") config.lr = parse_double(key, value);
        else if (key == "momentum") config.momentum = parse_double(key, value);
        else if (key == "weight_decay") config.weight_decay = parse_double(key, value);
        else if (key == "eval_every") config.eval_every = static_cast<int>(parse_int(key, value));
        else if (key == "k") config.k = static_cast<int>(parse_int(key, value));
        else if (key == "ratios") config.ratios = parse_ratio_list(value);
        else if (key == "mode") config.mode = value;
        else if (key == "norm_p") config.norm_p = parse_double(key, value);
        else if (key == "min_filters") config.min_filters = static_cast<int>(parse_int(key, value));
        else if (key == "pretrain_epochs")
            config.pretrain_epochs = static_cast<int>(parse_int(key, value));
        else if (key == "retrain_epochs")
            config.retrain_epochs = static_cast<int>(parse_int(key, value));
        else if (key == "train_images") config.train_images = value;
        else if (key == "train_labels") config.train_labels = value;
        else if (key == "test_images") config.test_images = value;
        else if (key == "test_labels") config.test_labels = value;
        else if (key == "subset") config.subset = parse_int(key, value);
        else if (key == "test_subset") config.test_subset = parse_int(key, value);
        else if (key == "out_dir") config.out_dir = value;
    }
}

void RunConfig::validate() const {
    if (epochs < 0) throw ConfigError("field 'epochs': must be >= 0");
    if (batch_size < 1) throw ConfigError("field 'batch_size': must be >= 1");
    if (lr < 0.0) throw ConfigError("field 'lr': must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("field 'momentum': must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("field 'weight_decay': must be >= 0");
    if (eval_every < 1) throw ConfigError("field 'eval_every': must be >= 1");
    if (min_filters < 0) throw ConfigError("field 'min_filters': must be >= 0");
    if (pretrain_epochs < 0) throw ConfigError("field 'pretrain_epochs': must be >= 0");
    if (retrain_epochs < 0) throw ConfigError("field 'retrain_epochs': must be >= 0");
    if (subset < 0) throw ConfigError("field 'subset': must be >= 0");
    if (preset != "mnist-cnn" && preset != "toy-cnn") {
        throw ConfigError("field 'preset': expected mnist-cnn or toy-cnn, got '" + preset + "'");
    }
    if (!train_images.empty() && !std::filesystem::exists(train_images)) {
        throw ConfigError("field 'train_images': file not found: " + train_images);
    }
    if (!train_labels.empty() && !std::filesystem::exists(train_labels)) {
        throw ConfigError("field 'train_labels': file not found: " + train_labels);
    }
    if (!test_images.empty() && !std::filesystem::exists(test_images)) {
        throw ConfigError("field 'test_images': file not found: " + test_images);
    }
    if (!test_labels.empty() && !std::filesystem::exists(test_labels)) {
        throw ConfigError("field 'test_labels': file not found: " + test_labels);
    }
    schedule().validate();
}

PruneSchedule RunConfig::schedule() const {
    PruneSchedule s;
    s.k = k;
    s.ratios = ratios;
    s.mode = parse_compare_mode(mode);
    s.norm_p = norm_p;
    return s;
}

}  // namespace iplt
