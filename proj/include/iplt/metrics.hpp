#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "iplt/model.hpp"

namespace iplt {

// One report row per conv or fully-connected layer. For conv layers FPR is
// pruned output filters / original filters; for FC layers the FPR column
// carries the fraction of input features removed by upstream pruning
// (their own outputs are never pruned). PPR charges a layer for every
// weight it loses, including input slices lost to the previous layer's
// pruning.
struct LayerReport {
    std::string name;
    double fpr = 0.0;
    double ppr = 0.0;
    std::int64_t params_before = 0;
    std::int64_t params_after = 0;
};

struct PruneReport {
    std::vector<LayerReport> layers;
    double fpr_all = 0.0;
    double ppr_all = 0.0;
    std::int64_t params_before = 0;
    std::int64_t params_after = 0;
    std::int64_t macs_before = 0;  // conv + FC multiply-accumulates, one sample
    std::int64_t macs_after = 0;
    double pruned_macs_fraction = 0.0;
    std::int64_t size_bytes_before = 0;  // serialized checkpoint sizes
    std::int64_t size_bytes_after = 0;
};

struct FprResult {
    std::vector<double> per_layer;          // indexed by conv ordinal
    std::vector<std::int64_t> pruned;       // pruned filters per conv
    std::vector<std::int64_t> total;        // original filters per conv
    double fpr_all = 0.0;
};

// Mask view: original counts vs alive counts of one model.
FprResult compute_fpr(const ModelGraph& model);
// Structural view: counts of two architecture-aligned models.
FprResult compute_fpr(const ModelGraph& before, const ModelGraph& after);

struct PprResult {
    std::vector<double> per_layer;            // conv/FC rows in layer order
    std::vector<std::int64_t> params_before;  // matching per-row counts
    std::vector<std::int64_t> params_after;
    std::int64_t total_before = 0;  // whole network including BatchNorm
    std::int64_t total_after = 0;
    double ppr_all = 0.0;
};

PprResult compute_ppr(const ModelGraph& model);
PprResult compute_ppr(const ModelGraph& before, const ModelGraph& after);

struct FlopsResult {
    std::vector<std::int64_t> per_layer;  // conv/FC rows in layer order
    std::int64_t total_macs = 0;
};

// Multiply-accumulate counts per sample for conv and FC layers. The mask
// view prices a masked model as if it were already rebuilt.
FlopsResult compute_flops(const ModelGraph& model, bool respect_mask = true);

PruneReport make_report(const ModelGraph& model);
PruneReport make_report(const ModelGraph& before, const ModelGraph& after);

// Byte-stable renderings; percentages carry three decimals ("3.125").
std::string render_report_text(const PruneReport& report);
std::string render_report_csv(const PruneReport& report);

// Table of (label, FPR%, accuracy%) rows for run comparisons.
struct ComparisonRow {
    std::string label;
    double fpr_all = 0.0;
    double accuracy = 0.0;
};
std::string render_comparison_text(const std::vector<ComparisonRow>& rows);

}  // namespace iplt
