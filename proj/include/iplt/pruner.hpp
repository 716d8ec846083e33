#pragma once

#include <string>
#include <vector>

#include "iplt/model.hpp"

namespace iplt {

enum class CompareMode { IntraLayer, Global };

const char* compare_mode_name(CompareMode mode);
CompareMode parse_compare_mode(const std::string& text);

// Incremental schedule: a prune event fires at the end of epoch e whenever
// e % k == 0 and e <= k * ratios.size(); event t targets ratios[t-1]. The
// ratios are cumulative fractions of the ORIGINAL filter count.
struct PruneSchedule {
    int k = 2;
    std::vector<double> ratios;
    CompareMode mode = CompareMode::Global;
    double norm_p = 2.0;

    void validate() const;
    bool event_at(std::int64_t epoch) const;
    double ratio_at(std::int64_t epoch) const;
    std::int64_t last_event_epoch() const { return static_cast<std::int64_t>(k) *
                                                   static_cast<std::int64_t>(ratios.size()); }
    bool empty() const { return ratios.empty(); }
};

struct PrunePick {
    int layer;   // model layer index of the conv layer
    int filter;  // output filter index within that layer
    double norm;
};

struct Selection {
    std::vector<PrunePick> picks;
    bool empty() const { return picks.empty(); }
    std::size_t size() const { return picks.size(); }
};

// (sum |w|^p)^(1/p) over every entry of the filter.
double filter_norm(const Tensor& filter, double p);

// Norms of the filters of one conv layer (masked filters included).
std::vector<double> layer_filter_norms(const ConvLayer& conv, double p);

// Chooses additional filters to prune so the cumulative count reaches the
// target. Global mode ranks every alive filter in the network; intra-layer
// mode applies floor(ratio * O_i) per layer. Ties break on (layer, filter).
// min_filters == 0 disables the guard: a global selection that would empty
// a layer throws LayerCollapseError. With min_filters >= 1 such candidates
// are skipped and the quota is filled further down the ranking.
Selection select_filters(const ModelGraph& model, CompareMode mode, double norm_p,
                         double target_ratio, int min_filters = 0);

// Marks the selected filters as pruned. Forward passes zero their feature
// maps; their weights, biases and BN channel parameters stop updating.
// Pruning an already-masked filter throws.
void apply_mask(ModelGraph& model, const Selection& selection);

}  // namespace iplt
