#pragma once

// Shared test scaffolding: independent oracle implementations (naive
// convolution, finite differences, brute-force selection, flat parameter
// counts) and random model/tensor generators. Everything here must stay
// independent of the production code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include "iplt/model.hpp"
#include "iplt/ops.hpp"
#include "iplt/rng.hpp"
#include "iplt/tensor.hpp"

namespace testutil {

using iplt::ConvLayer;
using iplt::ModelGraph;
using iplt::Rng;
using iplt::scalar;
using iplt::Tensor;

inline void fill_normal(Tensor& t, Rng& rng, double stddev = 1.0) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = rng.normal(0.0, stddev);
    }
}

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(lo, hi);
    }
}

// ---- naive convolution oracle (six explicit loops) -------------------

inline Tensor naive_conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                           int stride, int padding) {
    const std::int64_t B = input.dim(0), I = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::int64_t O = weights.dim(0), K = weights.dim(2);
    const std::int64_t OH = (H + 2 * padding - K) / stride + 1;
    const std::int64_t OW = (W + 2 * padding - K) / stride + 1;
    Tensor out({B, O, OH, OW});
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t o = 0; o < O; ++o) {
            for (std::int64_t oh = 0; oh < OH; ++oh) {
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                    scalar acc = bias[o];
                    for (std::int64_t ci = 0; ci < I; ++ci) {
                        for (std::int64_t kh = 0; kh < K; ++kh) {
                            for (std::int64_t kw = 0; kw < K; ++kw) {
                                const std::int64_t ih = oh * stride - padding + kh;
                                const std::int64_t iw = ow * stride - padding + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += input.at({b, ci, ih, iw}) * weights.at({o, ci, kh, kw});
                            }
                        }
                    }
                    out.at({b, o, oh, ow}) = acc;
                }
            }
        }
    }
    return out;
}

// ---- central finite differences ---------------------------------------

// Max "relative" error between an analytic gradient and central finite
// differences of `f` w.r.t. the entries of `x`.
template <typename F>
double fd_max_rel_error(Tensor& x, const Tensor& analytic, F f, double h = 1e-5) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const scalar saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[i];
        const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, err);
    }
    return worst;
}

inline double weighted_sum(const Tensor& t, const Tensor& weights) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) acc += t[i] * weights[i];
    return acc;
}

// ---- brute-force selection oracle --------------------------------------

// Independent re-summation of the importance norm.
inline double oracle_filter_norm(const std::vector<scalar>& values, double p) {
    double acc = 0.0;
    for (scalar v : values) acc += std::pow(std::abs(v), p);
    return std::pow(acc, 1.0 / p);
}

struct OraclePick {
    int layer;
    int filter;
};

inline bool operator==(const OraclePick& a, const OraclePick& b) {
    return a.layer == b.layer && a.filter == b.filter;
}

// "Sort all alive filter norms ascending, take the lowest" with the
// (norm, layer, filter) tie rule, applied per mode.
inline std::vector<OraclePick> oracle_select(const ModelGraph& model, bool global, double p,
                                             double target_ratio) {
    struct Entry {
        double norm;
        int layer;
        int filter;
    };
    auto collect = [&](int li) {
        std::vector<Entry> out;
        const ConvLayer& conv = model.conv_at(li);
        const std::int64_t o = conv.out_channels();
        const std::int64_t row = conv.params.weights.size() / o;
        for (std::int64_t j = 0; j < o; ++j) {
            if (!conv.alive[static_cast<std::size_t>(j)]) continue;
            std::vector<scalar> vals(conv.params.weights.data() + j * row,
                                     conv.params.weights.data() + (j + 1) * row);
            out.push_back({oracle_filter_norm(vals, p), li, static_cast<int>(j)});
        }
        return out;
    };
    auto sort_entries = [](std::vector<Entry>& es) {
        std::sort(es.begin(), es.end(), [](const Entry& a, const Entry& b) {
            return std::tie(a.norm, a.layer, a.filter) < std::tie(b.norm, b.layer, b.filter);
        });
    };

    std::vector<OraclePick> picks;
    if (global) {
        std::vector<Entry> all;
        std::int64_t total = 0, alive = 0;
        for (int li : model.conv_layer_indices()) {
            total += model.conv_at(li).out_channels();
            alive += model.conv_at(li).alive_count();
            auto es = collect(li);
            all.insert(all.end(), es.begin(), es.end());
        }
        sort_entries(all);
        const std::int64_t target =
            static_cast<std::int64_t>(std::floor(target_ratio * static_cast<double>(total)));
        const std::int64_t need = target - (total - alive);
        for (std::int64_t i = 0; i < need && i < static_cast<std::int64_t>(all.size()); ++i) {
            picks.push_back({all[static_cast<std::size_t>(i)].layer,
                             all[static_cast<std::size_t>(i)].filter});
        }
    } else {
        for (int li : model.conv_layer_indices()) {
            const ConvLayer& conv = model.conv_at(li);
            auto es = collect(li);
            sort_entries(es);
            const std::int64_t total = conv.out_channels();
            const std::int64_t target =
                static_cast<std::int64_t>(std::floor(target_ratio * static_cast<double>(total)));
            const std::int64_t need = target - (total - conv.alive_count());
            for (std::int64_t i = 0; i < need && i < static_cast<std::int64_t>(es.size()); ++i) {
                picks.push_back({es[static_cast<std::size_t>(i)].layer,
                                 es[static_cast<std::size_t>(i)].filter});
            }
        }
    }
    return picks;
}

// ---- flat parameter-count oracle ---------------------------------------

// Sum of raw array lengths, written without reference to the layer math.
inline std::int64_t oracle_param_count(const ModelGraph& model) {
    std::int64_t total = 0;
    for (const auto& layer : model.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            total += conv->params.weights.size() + conv->params.bias.size();
        } else if (const auto* bn = std::get_if<iplt::BatchNormLayer>(&layer)) {
            total += bn->gamma.size() + bn->beta.size() + bn->running_mean.size() +
                     bn->running_var.size();
        } else if (const auto* fc = std::get_if<iplt::FullyConnectedLayer>(&layer)) {
            total += fc->weights.size() + fc->bias.size();
        }
    }
    return total;
}

// ---- random model generator --------------------------------------------

struct RandomModelConfig {
    int max_conv_blocks = 3;
    bool randomize_bn_stats = true;
};

inline ConvLayer random_conv(Rng& rng, std::int64_t in_ch, std::int64_t out_ch, std::int64_t k,
                             int padding) {
    ConvLayer conv;
    conv.params.weights = Tensor({out_ch, in_ch, k, k});
    conv.params.bias = Tensor({out_ch});
    conv.params.stride = 1;
    conv.params.padding = padding;
    fill_normal(conv.params.weights, rng, 0.5);
    fill_normal(conv.params.bias, rng, 0.1);
    conv.alive.assign(static_cast<std::size_t>(out_ch), 1);
    return conv;
}

// A small random-but-valid CNN ending in flatten + FC, with occasionally
// trained-looking BN statistics.
inline ModelGraph random_cnn(Rng& rng, const RandomModelConfig& cfg = {}) {
    ModelGraph m;
    m.name = "random-cnn";
    m.creation_seed = 0;
    std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(3));
    std::int64_t h = 6 + static_cast<std::int64_t>(rng.below(6));
    std::int64_t w = h;
    m.input_shape = {c, h, w};

    const int blocks = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                               cfg.max_conv_blocks)));
    for (int b = 0; b < blocks; ++b) {
        const std::int64_t out_ch = 2 + static_cast<std::int64_t>(rng.below(5));
        const std::int64_t k = (h >= 3 && rng.uniform01() < 0.8) ? 3 : 1;
        const int padding = (k == 3 && rng.uniform01() < 0.5) ? 1 : 0;
        if (h + 2 * padding < k) break;
        m.layers.push_back(random_conv(rng, c, out_ch, k, padding));
        c = out_ch;
        h = h + 2 * padding - k + 1;
        w = h;
        if (rng.uniform01() < 0.7) {
            iplt::BatchNormLayer bn;
            bn.gamma = Tensor({c});
            bn.beta = Tensor({c});
            bn.running_mean = Tensor({c});
            bn.running_var = Tensor({c});
            if (cfg.randomize_bn_stats) {
                fill_uniform(bn.gamma, rng, 0.5, 1.5);
                fill_normal(bn.beta, rng, 0.3);
                fill_normal(bn.running_mean, rng, 0.5);
                fill_uniform(bn.running_var, rng, 0.5, 2.0);
            } else {
                bn.gamma.fill(1.0);
                bn.running_var.fill(1.0);
            }
            m.layers.push_back(bn);
        }
        if (rng.uniform01() < 0.8) {
            m.layers.push_back(iplt::ReluLayer{});
        }
        if (h >= 4 && rng.uniform01() < 0.5) {
            m.layers.push_back(iplt::MaxPoolLayer{2, 2});
            h = (h - 2) / 2 + 1;
            w = h;
        }
    }
    m.layers.push_back(iplt::FlattenLayer{});
    const std::int64_t classes = 2 + static_cast<std::int64_t>(rng.below(4));
    iplt::FullyConnectedLayer fc;
    fc.weights = Tensor({classes, c * h * w});
    fc.bias = Tensor({classes});
    fill_normal(fc.weights, rng, 0.3);
    fill_normal(fc.bias, rng, 0.1);
    m.layers.push_back(fc);
    return m;
}

// Random alive mask leaving at least one filter per layer.
inline void random_mask(ModelGraph& model, Rng& rng, double keep_prob = 0.6) {
    for (int li : model.conv_layer_indices()) {
        ConvLayer& conv = model.conv_at(li);
        bool any = false;
        for (auto& a : conv.alive) {
            a = rng.uniform01() < keep_prob ? 1 : 0;
            any = any || a;
        }
        if (!any) {
            conv.alive[static_cast<std::size_t>(rng.below(conv.alive.size()))] = 1;
        }
    }
}

inline Tensor random_input_for(const ModelGraph& model, Rng& rng, std::int64_t batch = 2) {
    Tensor x({batch, model.input_shape[0], model.input_shape[1], model.input_shape[2]});
    fill_normal(x, rng);
    return x;
}

}  // namespace testutil
