#include "iplt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "iplt/checkpoint.hpp"

namespace iplt {

namespace {

void check_aligned(const ModelGraph& before, const ModelGraph& after) {
    if (before.layers.size() != after.layers.size()) {
        throw ShapeError("models have different layer counts (" +
                         std::to_string(before.layers.size()) + " vs " +
                         std::to_string(after.layers.size()) + ")");
    }
    for (std::size_t i = 0; i < before.layers.size(); ++i) {
        if (before.layers[i].index() != after.layers[i].index()) {
            throw ShapeError("layer " + std::to_string(i) + " kind mismatch (" +
                             layer_kind_name(before.layers[i]) + " vs " +
                             layer_kind_name(after.layers[i]) + ")");
        }
    }
}

// Per-layer structural dimensions under an optional mask, i.e. the shapes
// the model would have after a hard rebuild. This is the analytic side of
// the mask-view/rebuilt-view equivalence.
struct EffectiveDims {
    // conv/FC rows in layer order
    struct Row {
        int layer_index;
        bool is_conv;
        std::int64_t params_before, params_after;
        std::int64_t macs_before, macs_after;
        std::int64_t out_before, out_after;  // conv filters; FC out features
        std::int64_t in_before, in_after;    // input channels / features
    };
    std::vector<Row> rows;
    std::int64_t params_total_before = 0;
    std::int64_t params_total_after = 0;
    std::int64_t macs_total_before = 0;
    std::int64_t macs_total_after = 0;
    std::int64_t filters_before = 0;
    std::int64_t filters_after = 0;
};

EffectiveDims effective_dims(const ModelGraph& model, bool respect_mask) {
    EffectiveDims dims;
    const auto shapes = infer_shapes(model);

    std::int64_t ch_before = model.input_shape[0];
    std::int64_t ch_after = model.input_shape[0];

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& layer = model.layers[i];
        const auto& out_shape = shapes[i];
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            const std::int64_t o = conv->out_channels();
            const std::int64_t oa = respect_mask ? conv->alive_count() : o;
            const std::int64_t k2 = conv->kernel() * conv->kernel();
            const std::int64_t plane = out_shape[1] * out_shape[2];
            EffectiveDims::Row row;
            row.layer_index = static_cast<int>(i);
            row.is_conv = true;
            row.out_before = o;
            row.out_after = oa;
            row.in_before = ch_before;
            row.in_after = ch_after;
            row.params_before = o * ch_before * k2 + o;
            row.params_after = oa * ch_after * k2 + oa;
            row.macs_before = o * ch_before * k2 * plane;
            row.macs_after = oa * ch_after * k2 * plane;
            dims.rows.push_back(row);
            dims.filters_before += o;
            dims.filters_after += oa;
            dims.params_total_before += row.params_before;
            dims.params_total_after += row.params_after;
            dims.macs_total_before += row.macs_before;
            dims.macs_total_after += row.macs_after;
            ch_before = o;
            ch_after = oa;
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            (void)bn;
            dims.params_total_before += 4 * ch_before;
            dims.params_total_after += 4 * ch_after;
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            const auto& in_shape = shapes[i - 1];
            const std::int64_t plane = in_shape[1] * in_shape[2];
            ch_before = ch_before * plane;
            ch_after = ch_after * plane;
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            const std::int64_t out = fc->out_features();
            EffectiveDims::Row row;
            row.layer_index = static_cast<int>(i);
            row.is_conv = false;
            row.out_before = out;
            row.out_after = out;
            row.in_before = ch_before;
            row.in_after = ch_after;
            row.params_before = out * ch_before + out;
            row.params_after = out * ch_after + out;
            row.macs_before = out * ch_before;
            row.macs_after = out * ch_after;
            dims.rows.push_back(row);
            dims.params_total_before += row.params_before;
            dims.params_total_after += row.params_after;
            dims.macs_total_before += row.macs_before;
            dims.macs_total_after += row.macs_after;
            ch_before = out;
            ch_after = out;
        }
        // ReLU / MaxPool neither carry parameters nor change channels.
    }
    return dims;
}

std::string row_name(const EffectiveDims& dims, std::size_t row_index) {
    int conv_n = 0, fc_n = 0;
    for (std::size_t i = 0; i <= row_index; ++i) {
        if (dims.rows[i].is_conv) {
            ++conv_n;
        } else {
            ++fc_n;
        }
    }
    return dims.rows[row_index].is_conv ? "Conv" + std::to_string(conv_n)
                                        : "Fc" + std::to_string(fc_n);
}

double ratio_or_zero(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string pct(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", fraction * 100.0);
    return buf;
}

}  // namespace

FprResult compute_fpr(const ModelGraph& model) {
    FprResult r;
    std::int64_t pruned_sum = 0, total_sum = 0;
    for (int li : model.conv_layer_indices()) {
        const ConvLayer& conv = model.conv_at(li);
        const std::int64_t total = conv.out_channels();
        const std::int64_t pruned = total - conv.alive_count();
        r.per_layer.push_back(ratio_or_zero(pruned, total));
        r.pruned.push_back(pruned);
        r.total.push_back(total);
        pruned_sum += pruned;
        total_sum += total;
    }
    r.fpr_all = ratio_or_zero(pruned_sum, total_sum);
    return r;
}

FprResult compute_fpr(const ModelGraph& before, const ModelGraph& after) {
    check_aligned(before, after);
    FprResult r;
    std::int64_t pruned_sum = 0, total_sum = 0;
    const auto conv_idx = before.conv_layer_indices();
    for (int li : conv_idx) {
        const std::int64_t total = before.conv_at(li).out_channels();
        const std::int64_t kept = after.conv_at(li).out_channels();
        const std::int64_t pruned = total - kept;
        if (pruned < 0) {
            throw ShapeError("layer " + std::to_string(li) + " grew from " +
                             std::to_string(total) + " to " + std::to_string(kept) + " filters");
        }
        r.per_layer.push_back(ratio_or_zero(pruned, total));
        r.pruned.push_back(pruned);
        r.total.push_back(total);
        pruned_sum += pruned;
        total_sum += total;
    }
    r.fpr_all = ratio_or_zero(pruned_sum, total_sum);
    return r;
}

PprResult compute_ppr(const ModelGraph& model) {
    const EffectiveDims dims = effective_dims(model, true);
    PprResult r;
    for (const auto& row : dims.rows) {
        r.per_layer.push_back(ratio_or_zero(row.params_before - row.params_after,
                                            row.params_before));
        r.params_before.push_back(row.params_before);
        r.params_after.push_back(row.params_after);
    }
    r.total_before = dims.params_total_before;
    r.total_after = dims.params_total_after;
    r.ppr_all = 1.0 - ratio_or_zero(r.total_after, std::max<std::int64_t>(r.total_before, 1));
    if (r.total_before == 0) r.ppr_all = 0.0;
    return r;
}

PprResult compute_ppr(const ModelGraph& before, const ModelGraph& after) {
    check_aligned(before, after);
    const EffectiveDims db = effective_dims(before, false);
    const EffectiveDims da = effective_dims(after, false);
    if (db.rows.size() != da.rows.size()) {
        throw ShapeError("report row mismatch between models");
    }
    PprResult r;
    for (std::size_t i = 0; i < db.rows.size(); ++i) {
        const std::int64_t pb = db.rows[i].params_before;
        const std::int64_t pa = da.rows[i].params_before;  // "before" view of each model
        r.per_layer.push_back(ratio_or_zero(pb - pa, pb));
        r.params_before.push_back(pb);
        r.params_after.push_back(pa);
    }
    r.total_before = count_parameters(before).total;
    r.total_after = count_parameters(after).total;
    r.ppr_all = 1.0 - ratio_or_zero(r.total_after, std::max<std::int64_t>(r.total_before, 1));
    if (r.total_before == 0) r.ppr_all = 0.0;
    return r;
}

FlopsResult compute_flops(const ModelGraph& model, bool respect_mask) {
    const EffectiveDims dims = effective_dims(model, respect_mask);
    FlopsResult r;
    for (const auto& row : dims.rows) {
        r.per_layer.push_back(respect_mask ? row.macs_after : row.macs_before);
    }
    r.total_macs = respect_mask ? dims.macs_total_after : dims.macs_total_before;
    return r;
}

namespace {

PruneReport report_from_dims(const EffectiveDims& dims, std::int64_t size_before,
                             std::int64_t size_after) {
    PruneReport rep;
    for (std::size_t i = 0; i < dims.rows.size(); ++i) {
        const auto& row = dims.rows[i];
        LayerReport lr;
        lr.name = row_name(dims, i);
        lr.fpr = row.is_conv ? ratio_or_zero(row.out_before - row.out_after, row.out_before)
                             : ratio_or_zero(row.in_before - row.in_after, row.in_before);
        lr.ppr = ratio_or_zero(row.params_before - row.params_after, row.params_before);
        lr.params_before = row.params_before;
        lr.params_after = row.params_after;
        rep.layers.push_back(lr);
    }
    rep.fpr_all = ratio_or_zero(dims.filters_before - dims.filters_after, dims.filters_before);
    rep.params_before = dims.params_total_before;
    rep.params_after = dims.params_total_after;
    rep.ppr_all = dims.params_total_before == 0
                      ? 0.0
                      : 1.0 - ratio_or_zero(dims.params_total_after, dims.params_total_before);
    rep.macs_before = dims.macs_total_before;
    rep.macs_after = dims.macs_total_after;
    rep.pruned_macs_fraction =
        dims.macs_total_before == 0
            ? 0.0
            : 1.0 - ratio_or_zero(dims.macs_total_after, dims.macs_total_before);
    rep.size_bytes_before = size_before;
    rep.size_bytes_after = size_after;
    return rep;
}

}  // namespace

PruneReport make_report(const ModelGraph& model) {
    const EffectiveDims dims = effective_dims(model, true);
    const std::int64_t size_before =
        static_cast<std::int64_t>(serialize_checkpoint(model).size());
    const std::int64_t size_after = model.any_masked()
        ? static_cast<std::int64_t>(serialize_checkpoint(rebuild_without_masked(model)).size())
        : size_before;
    return report_from_dims(dims, size_before, size_after);
}

PruneReport make_report(const ModelGraph& before, const ModelGraph& after) {
    check_aligned(before, after);
    const EffectiveDims db = effective_dims(before, false);
    const EffectiveDims da = effective_dims(after, true);
    if (db.rows.size() != da.rows.size()) {
        throw ShapeError("report row mismatch between models");
    }
    EffectiveDims merged = db;
    merged.params_total_after = da.params_total_after;
    merged.macs_total_after = da.macs_total_after;
    merged.filters_after = da.filters_after;
    for (std::size_t i = 0; i < merged.rows.size(); ++i) {
        merged.rows[i].params_after = da.rows[i].params_after;
        merged.rows[i].macs_after = da.rows[i].macs_after;
        merged.rows[i].out_after = da.rows[i].out_after;
        merged.rows[i].in_after = da.rows[i].in_after;
    }
    return report_from_dims(merged,
                            static_cast<std::int64_t>(serialize_checkpoint(before).size()),
                            static_cast<std::int64_t>(serialize_checkpoint(
                                after.any_masked() ? rebuild_without_masked(after) : after)
                                                          .size()));
}

std::string render_report_text(const PruneReport& report) {
    std::ostringstream out;
    out << "Pruning report (MACs cover conv and fully-connected layers; FLOPs = 2 x MACs)\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %10s %10s %16s %16s\n", "Layer", "FPR(%)", "PPR(%)",
                  "Params before", "Params after");
    out << line;
    for (const LayerReport& lr : report.layers) {
        std::snprintf(line, sizeof(line), "%-8s %10s %10s %16lld %16lld\n", lr.name.c_str(),
                      pct(lr.fpr).c_str(), pct(lr.ppr).c_str(),
                      static_cast<long long>(lr.params_before),
                      static_cast<long long>(lr.params_after));
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-8s %10s %10s %16lld %16lld\n", "Total",
                  pct(report.fpr_all).c_str(), pct(report.ppr_all).c_str(),
                  static_cast<long long>(report.params_before),
                  static_cast<long long>(report.params_after));
    out << line;
    std::snprintf(line, sizeof(line), "MACs/sample: %lld -> %lld (pruned %s%%)\n",
                  static_cast<long long>(report.macs_before),
                  static_cast<long long>(report.macs_after),
                  pct(report.pruned_macs_fraction).c_str());
    out << line;
    std::snprintf(line, sizeof(line), "FLOPs/sample: %lld -> %lld\n",
                  static_cast<long long>(2 * report.macs_before),
                  static_cast<long long>(2 * report.macs_after));
    out << line;
    std::snprintf(line, sizeof(line), "Checkpoint bytes: %lld -> %lld\n",
                  static_cast<long long>(report.size_bytes_before),
                  static_cast<long long>(report.size_bytes_after));
    out << line;
    return out.str();
}

std::string render_report_csv(const PruneReport& report) {
    std::ostringstream out;
    out << "layer,fpr_pct,ppr_pct,params_before,params_after\n";
    for (const LayerReport& lr : report.layers) {
        out << lr.name << ',' << pct(lr.fpr) << ',' << pct(lr.ppr) << ',' << lr.params_before
            << ',' << lr.params_after << '\n';
    }
    out << "TOTAL," << pct(report.fpr_all) << ',' << pct(report.ppr_all) << ','
        << report.params_before << ',' << report.params_after << '\n';
    out << "MACS," << report.macs_before << ',' << report.macs_after << ','
        << pct(report.pruned_macs_fraction) << ",\n";
    out << "BYTES," << report.size_bytes_before << ',' << report.size_bytes_after << ",,\n";
    return out.str();
}

std::string render_comparison_text(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s %10s %12s\n", "Model", "FPR(%)", "Accuracy(%)");
    out << line;
    for (const ComparisonRow& row : rows) {
        std::snprintf(line, sizeof(line), "%-24s %10s %12s\n", row.label.c_str(),
                      pct(row.fpr_all).c_str(), pct(row.accuracy).c_str());
        out << line;
    }
    return out.str();
}

}  // namespace iplt
