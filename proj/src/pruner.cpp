#include "iplt/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace iplt {

const char* compare_mode_name(CompareMode mode) {
    return mode == CompareMode::IntraLayer ? "intra-layer" : "global";
}

CompareMode parse_compare_mode(const std::string& text) {
    if (text == "intra-layer" || text == "intra_layer" || text == "intra") {
        return CompareMode::IntraLayer;
    }
    if (text == "global") {
        return CompareMode::Global;
    }
    throw ConfigError("unknown compare mode '" + text + "' (expected intra-layer or global)");
}

void PruneSchedule::validate() const {
    if (k < 1) {
        throw ConfigError("schedule k must be >= 1, got " + std::to_string(k));
    }
    if (norm_p <= 0.0) {
        throw ConfigError("schedule norm_p must be > 0");
    }
    double prev = 0.0;
    for (double r : ratios) {
        if (r <= prev || r >= 1.0) {
            throw ConfigError("schedule ratios must be strictly increasing within (0, 1)");
        }
        prev = r;
    }
}

bool PruneSchedule::event_at(std::int64_t epoch) const {
    return !ratios.empty() && epoch >= 1 && epoch % k == 0 && epoch <= last_event_epoch();
}

double PruneSchedule::ratio_at(std::int64_t epoch) const {
    if (!event_at(epoch)) {
        throw Error("no prune event at epoch " + std::to_string(epoch));
    }
    return ratios[static_cast<std::size_t>(epoch / k - 1)];
}

double filter_norm(const Tensor& filter, double p) {
    if (p <= 0.0) {
        throw Error("filter_norm requires p > 0");
    }
    const std::int64_t n = filter.size();
    const scalar* data = filter.data();
    if (p == 2.0) {
        scalar acc = 0.0;
        for (std::int64_t i = 0; i < n; ++i) acc += data[i] * data[i];
        return std::sqrt(acc);
    }
    scalar acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += std::pow(std::abs(data[i]), p);
    return std::pow(acc, 1.0 / p);
}

std::vector<double> layer_filter_norms(const ConvLayer& conv, double p) {
    const std::int64_t o = conv.out_channels();
    const std::int64_t row = conv.params.weights.size() / o;
    std::vector<double> norms(static_cast<std::size_t>(o));
    for (std::int64_t j = 0; j < o; ++j) {
        Tensor filter({conv.in_channels(), conv.kernel(), conv.kernel()},
                      std::vector<scalar>(conv.params.weights.data() + j * row,
                                          conv.params.weights.data() + (j + 1) * row));
        norms[static_cast<std::size_t>(j)] = filter_norm(filter, p);
    }
    return norms;
}

namespace {

struct Candidate {
    double norm;
    int layer;
    int filter;
    bool operator<(const Candidate& other) const {
        if (norm != other.norm) return norm < other.norm;
        if (layer != other.layer) return layer < other.layer;
        return filter < other.filter;
    }
};

}  // namespace

Selection select_filters(const ModelGraph& model, CompareMode mode, double norm_p,
                         double target_ratio, int min_filters) {
    if (target_ratio < 0.0 || target_ratio >= 1.0) {
        throw Error("target_ratio must lie in [0, 1)");
    }
    const auto conv_indices = model.conv_layer_indices();
    Selection selection;

    if (mode == CompareMode::IntraLayer) {
        for (int li : conv_indices) {
            const ConvLayer& conv = model.conv_at(li);
            const std::int64_t total = conv.out_channels();
            const std::int64_t target =
                static_cast<std::int64_t>(std::floor(target_ratio * static_cast<double>(total)));
            const std::int64_t already = total - conv.alive_count();
            std::int64_t need = target - already;
            if (need <= 0) continue;

            const auto norms = layer_filter_norms(conv, norm_p);
            std::vector<Candidate> candidates;
            for (std::int64_t j = 0; j < total; ++j) {
                if (conv.alive[static_cast<std::size_t>(j)]) {
                    candidates.push_back({norms[static_cast<std::size_t>(j)], li,
                                          static_cast<int>(j)});
                }
            }
            std::sort(candidates.begin(), candidates.end());
            for (std::int64_t t = 0; t < need; ++t) {
                const Candidate& c = candidates[static_cast<std::size_t>(t)];
                selection.picks.push_back({c.layer, c.filter, c.norm});
            }
        }
        return selection;
    }

    // Global mode: one ranking across the whole network, quota on the
    // original filter count.
    const std::int64_t total = model.total_filters();
    const std::int64_t target =
        static_cast<std::int64_t>(std::floor(target_ratio * static_cast<double>(total)));
    const std::int64_t already = total - model.alive_filters();
    std::int64_t need = target - already;
    if (need <= 0) return selection;

    std::vector<Candidate> candidates;
    std::map<int, std::int64_t> alive_left;
    for (int li : conv_indices) {
        const ConvLayer& conv = model.conv_at(li);
        alive_left[li] = conv.alive_count();
        const auto norms = layer_filter_norms(conv, norm_p);
        for (std::int64_t j = 0; j < conv.out_channels(); ++j) {
            if (conv.alive[static_cast<std::size_t>(j)]) {
                candidates.push_back({norms[static_cast<std::size_t>(j)], li,
                                      static_cast<int>(j)});
            }
        }
    }
    std::sort(candidates.begin(), candidates.end());

    for (const Candidate& c : candidates) {
        if (need == 0) break;
        if (alive_left[c.layer] <= 1) {
            if (min_filters <= 0) {
                throw LayerCollapseError(
                    c.layer, "global selection at ratio " + std::to_string(target_ratio) +
                                 " would prune every filter of layer " + std::to_string(c.layer));
            }
            continue;  // guard on: skip this layer's remaining candidates
        }
        if (min_filters > 0 && alive_left[c.layer] <= min_filters) {
            continue;
        }
        selection.picks.push_back({c.layer, c.filter, c.norm});
        --alive_left[c.layer];
        --need;
    }
    return selection;
}

void apply_mask(ModelGraph& model, const Selection& selection) {
    for (const PrunePick& pick : selection.picks) {
        ConvLayer& conv = model.conv_at(pick.layer);
        if (pick.filter < 0 || pick.filter >= static_cast<int>(conv.alive.size())) {
            throw Error("filter " + std::to_string(pick.filter) + " out of range for layer " +
                        std::to_string(pick.layer));
        }
        if (!conv.alive[static_cast<std::size_t>(pick.filter)]) {
            throw Error("filter " + std::to_string(pick.filter) + " of layer " +
                        std::to_string(pick.layer) + " is already pruned");
        }
        conv.alive[static_cast<std::size_t>(pick.filter)] = 0;
    }
}

}  // namespace iplt
