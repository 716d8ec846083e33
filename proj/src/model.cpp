#include "iplt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace iplt {

std::int64_t ConvLayer::alive_count() const {
    std::int64_t n = 0;
    for (auto a : alive) n += a ? 1 : 0;
    return n;
}

bool ConvLayer::fully_alive() const {
    return alive_count() == static_cast<std::int64_t>(alive.size());
}

const char* layer_kind_name(const LayerSpec& layer) {
    switch (layer.index()) {
        case 0: return "Conv";
        case 1: return "BatchNorm";
        case 2: return "ReLU";
        case 3: return "MaxPool";
        case 4: return "Flatten";
        case 5: return "FullyConnected";
        default: return "?";
    }
}

std::vector<int> ModelGraph::conv_layer_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (std::holds_alternative<ConvLayer>(layers[i])) {
            out.push_back(static_cast<int>(i));
        }
    }
    return out;
}

ConvLayer& ModelGraph::conv_at(int layer_index) {
    if (layer_index < 0 || layer_index >= static_cast<int>(layers.size()) ||
        !std::holds_alternative<ConvLayer>(layers[static_cast<std::size_t>(layer_index)])) {
        throw ShapeError("layer " + std::to_string(layer_index) + " is not a conv layer");
    }
    return std::get<ConvLayer>(layers[static_cast<std::size_t>(layer_index)]);
}

const ConvLayer& ModelGraph::conv_at(int layer_index) const {
    return const_cast<ModelGraph*>(this)->conv_at(layer_index);
}

std::int64_t ModelGraph::total_filters() const {
    std::int64_t n = 0;
    for (int i : conv_layer_indices()) n += conv_at(i).out_channels();
    return n;
}

std::int64_t ModelGraph::alive_filters() const {
    std::int64_t n = 0;
    for (int i : conv_layer_indices()) n += conv_at(i).alive_count();
    return n;
}

bool ModelGraph::any_masked() const {
    for (int i : conv_layer_indices()) {
        if (!conv_at(i).fully_alive()) return true;
    }
    return false;
}

std::vector<std::vector<std::int64_t>> infer_shapes(const ModelGraph& model) {
    std::vector<std::vector<std::int64_t>> shapes;
    shapes.reserve(model.layers.size());
    std::vector<std::int64_t> cur{model.input_shape[0], model.input_shape[1],
                                  model.input_shape[2]};
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto fail = [&](const std::string& msg) -> ShapeError {
            return ShapeError("layer " + std::to_string(i) + " (" +
                              layer_kind_name(model.layers[i]) + "): " + msg);
        };
        const LayerSpec& layer = model.layers[i];
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            if (cur.size() != 3) throw fail("expects a [C, H, W] input, got " + shape_string(cur));
            if (cur[0] != conv->in_channels()) {
                throw fail("expects " + std::to_string(conv->in_channels()) +
                           " input channels, got " + std::to_string(cur[0]));
            }
            std::int64_t oh, ow;
            try {
                oh = conv_out_extent(cur[1], conv->kernel(), conv->params.stride,
                                     conv->params.padding);
                ow = conv_out_extent(cur[2], conv->kernel(), conv->params.stride,
                                     conv->params.padding);
            } catch (const ShapeError& e) {
                throw fail(e.what());
            }
            cur = {conv->out_channels(), oh, ow};
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            if (cur.size() != 3) throw fail("expects a [C, H, W] input, got " + shape_string(cur));
            if (cur[0] != bn->channels()) {
                throw fail("has " + std::to_string(bn->channels()) + " channels, input has " +
                           std::to_string(cur[0]));
            }
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            // any shape
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
            if (cur.size() != 3) throw fail("expects a [C, H, W] input, got " + shape_string(cur));
            if (cur[1] < pool->window || cur[2] < pool->window) {
                throw fail("window " + std::to_string(pool->window) + " exceeds input " +
                           shape_string(cur));
            }
            cur = {cur[0], (cur[1] - pool->window) / pool->stride + 1,
                   (cur[2] - pool->window) / pool->stride + 1};
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            if (cur.size() != 3) throw fail("expects a [C, H, W] input, got " + shape_string(cur));
            cur = {cur[0] * cur[1] * cur[2]};
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            if (cur.size() != 1) throw fail("expects a flat input, got " + shape_string(cur));
            if (cur[0] != fc->in_features()) {
                throw fail("expects " + std::to_string(fc->in_features()) + " features, got " +
                           std::to_string(cur[0]));
            }
            cur = {fc->out_features()};
        }
        shapes.push_back(cur);
    }
    return shapes;
}

std::array<std::int64_t, 2> spatial_at_flatten(const ModelGraph& model, int flatten_index) {
    if (flatten_index <= 0 ||
        !std::holds_alternative<FlattenLayer>(model.layers[static_cast<std::size_t>(flatten_index)])) {
        throw ShapeError("layer " + std::to_string(flatten_index) + " is not a flatten layer");
    }
    const auto shapes = infer_shapes(model);
    const auto& in = shapes[static_cast<std::size_t>(flatten_index - 1)];
    return {in[1], in[2]};
}

namespace {

void zero_masked_channels(Tensor& t, const std::vector<std::uint8_t>& alive) {
    const std::int64_t b = t.dim(0), c = t.dim(1);
    const std::int64_t plane = t.dim(2) * t.dim(3);
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            if (!alive[static_cast<std::size_t>(ci)]) {
                scalar* row = t.data() + (bi * c + ci) * plane;
                std::memset(row, 0, sizeof(scalar) * static_cast<std::size_t>(plane));
            }
        }
    }
}

struct ForwardTrace {
    std::vector<Tensor> inputs;  // input fed to each layer
    std::vector<BnCache> bn_cache;
    // Mask governing each layer's output (null when none was applied).
    std::vector<const std::vector<std::uint8_t>*> mask_at;
};

Tensor forward_impl(ModelGraph& model, const Tensor& batch, bool training, ForwardTrace* trace) {
    if (batch.rank() != 4 || batch.dim(1) != model.input_shape[0] ||
        batch.dim(2) != model.input_shape[1] || batch.dim(3) != model.input_shape[2]) {
        throw ShapeError("batch shape " + shape_string(batch.shape()) + " does not match input [" +
                         std::to_string(model.input_shape[0]) + ", " +
                         std::to_string(model.input_shape[1]) + ", " +
                         std::to_string(model.input_shape[2]) + "]");
    }
    infer_shapes(model);  // fail fast with the layer index on inconsistent graphs

    Tensor cur = batch;
    const std::vector<std::uint8_t>* mask = nullptr;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        LayerSpec& layer = model.layers[i];
        if (trace) trace->inputs.push_back(cur);
        const std::vector<std::uint8_t>* applied = nullptr;
        BnCache cache;

        if (auto* conv = std::get_if<ConvLayer>(&layer)) {
            cur = conv2d_forward(cur, conv->params);
            mask = &conv->alive;
            if (!conv->fully_alive()) {
                zero_masked_channels(cur, conv->alive);
                applied = mask;
            }
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            Tensor y = batchnorm2d_forward(cur, bn->gamma, bn->beta, bn->running_mean,
                                           bn->running_var, bn->eps, training,
                                           training ? &cache : nullptr);
            if (training) {
                // Running stats advance only for channels that are still
                // alive; masked channels stay frozen.
                const std::int64_t c = bn->channels();
                const scalar m = bn->momentum;
                for (std::int64_t ci = 0; ci < c; ++ci) {
                    if (mask && !(*mask)[static_cast<std::size_t>(ci)]) continue;
                    const std::size_t cs = static_cast<std::size_t>(ci);
                    const scalar bmean = cache.mean[cs];
                    const scalar bvar = 1.0 / (cache.invstd[cs] * cache.invstd[cs]) - bn->eps;
                    bn->running_mean[ci] = (1.0 - m) * bn->running_mean[ci] + m * bmean;
                    bn->running_var[ci] = (1.0 - m) * bn->running_var[ci] + m * bvar;
                }
            }
            cur = std::move(y);
            if (mask) {
                bool all = true;
                for (auto a : *mask) all = all && a;
                if (!all) {
                    zero_masked_channels(cur, *mask);
                    applied = mask;
                }
            }
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            cur = relu_forward(cur);
        } else if (auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
            cur = maxpool2d_forward(cur, pool->window, pool->stride);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            cur = cur.reshaped({cur.dim(0), cur.dim(1) * cur.dim(2) * cur.dim(3)});
            mask = nullptr;
        } else if (auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            cur = linear_forward(cur, fc->weights, fc->bias);
            mask = nullptr;
        }

        if (trace) {
            trace->bn_cache.push_back(std::move(cache));
            trace->mask_at.push_back(applied);
        }
    }
    return cur;
}

void zero_masked_grad(Tensor& grad, const std::vector<std::uint8_t>* mask) {
    if (mask) zero_masked_channels(grad, *mask);
}

std::vector<std::uint8_t> frozen_rows(const std::vector<std::uint8_t>& alive,
                                      std::int64_t row_size) {
    std::vector<std::uint8_t> out(alive.size() * static_cast<std::size_t>(row_size), 0);
    for (std::size_t j = 0; j < alive.size(); ++j) {
        if (!alive[j]) {
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(j * row_size), row_size, 1);
        }
    }
    return out;
}

std::vector<std::uint8_t> frozen_entries(const std::vector<std::uint8_t>& alive) {
    std::vector<std::uint8_t> out(alive.size(), 0);
    for (std::size_t j = 0; j < alive.size(); ++j) out[j] = alive[j] ? 0 : 1;
    return out;
}

// Mask of the conv layer governing each layer's channels (nullptr once a
// Flatten or FC breaks the channel correspondence).
std::vector<const std::vector<std::uint8_t>*> governing_masks(const ModelGraph& model) {
    std::vector<const std::vector<std::uint8_t>*> out(model.layers.size(), nullptr);
    const std::vector<std::uint8_t>* mask = nullptr;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (const auto* conv = std::get_if<ConvLayer>(&model.layers[i])) {
            mask = &conv->alive;
        } else if (std::holds_alternative<FlattenLayer>(model.layers[i]) ||
                   std::holds_alternative<FullyConnectedLayer>(model.layers[i])) {
            mask = nullptr;
        }
        out[i] = mask;
    }
    return out;
}

}  // namespace

Tensor forward(ModelGraph& model, const Tensor& batch, Mode mode) {
    return forward_impl(model, batch, mode == Mode::Train, nullptr);
}

void SgdState::reset(const ModelGraph& model) {
    velocity.clear();
    for (const LayerSpec& layer : model.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            velocity.emplace_back(conv->params.weights.shape());
            velocity.emplace_back(conv->params.bias.shape());
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            velocity.emplace_back(bn->gamma.shape());
            velocity.emplace_back(bn->beta.shape());
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            velocity.emplace_back(fc->weights.shape());
            velocity.emplace_back(fc->bias.shape());
        }
    }
}

bool SgdState::matches(const ModelGraph& model) const {
    SgdState fresh;
    fresh.reset(model);
    if (fresh.velocity.size() != velocity.size()) return false;
    for (std::size_t i = 0; i < velocity.size(); ++i) {
        if (fresh.velocity[i].shape() != velocity[i].shape()) return false;
    }
    return true;
}

scalar backward_and_step(ModelGraph& model, SgdState& state, const Tensor& batch,
                         const std::vector<int>& labels, const SgdConfig& config) {
    if (!state.matches(model)) {
        state.reset(model);
    }
    ForwardTrace trace;
    Tensor logits = forward_impl(model, batch, true, &trace);
    auto [loss, grad] = softmax_cross_entropy(logits, labels);

    const auto governing = governing_masks(model);

    // Parameter gradients aligned with SgdState::reset order.
    std::vector<Tensor> param_grads;
    param_grads.resize(state.velocity.size());
    std::size_t param_cursor = state.velocity.size();

    for (std::size_t ri = model.layers.size(); ri-- > 0;) {
        LayerSpec& layer = model.layers[ri];
        const Tensor& input = trace.inputs[ri];
        if (auto* conv = std::get_if<ConvLayer>(&layer)) {
            zero_masked_grad(grad, trace.mask_at[ri]);
            ConvGrads g = conv2d_backward(input, conv->params, grad);
            param_grads[param_cursor - 2] = std::move(g.weights);
            param_grads[param_cursor - 1] = std::move(g.bias);
            param_cursor -= 2;
            grad = std::move(g.input);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            zero_masked_grad(grad, trace.mask_at[ri]);
            BnGrads g = batchnorm2d_backward(input, bn->gamma, grad, trace.bn_cache[ri]);
            param_grads[param_cursor - 2] = std::move(g.gamma);
            param_grads[param_cursor - 1] = std::move(g.beta);
            param_cursor -= 2;
            grad = std::move(g.input);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            grad = relu_backward(input, grad);
        } else if (auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
            grad = maxpool2d_backward(input, grad, pool->window, pool->stride);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            grad = grad.reshaped(input.shape());
        } else if (auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            LinearGrads g = linear_backward(input, fc->weights, grad);
            param_grads[param_cursor - 2] = std::move(g.weights);
            param_grads[param_cursor - 1] = std::move(g.bias);
            param_cursor -= 2;
            grad = std::move(g.input);
        }
    }

    // Apply the update; masked filters and their BN channels stay put.
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        LayerSpec& layer = model.layers[i];
        if (auto* conv = std::get_if<ConvLayer>(&layer)) {
            const bool partial = !conv->fully_alive();
            std::vector<std::uint8_t> fw, fb;
            if (partial) {
                fw = frozen_rows(conv->alive, conv->in_channels() * conv->kernel() * conv->kernel());
                fb = frozen_entries(conv->alive);
            }
            sgd_step(conv->params.weights, param_grads[cursor], state.velocity[cursor], config.lr,
                     config.momentum, config.weight_decay, partial ? &fw : nullptr);
            ++cursor;
            sgd_step(conv->params.bias, param_grads[cursor], state.velocity[cursor], config.lr,
                     config.momentum, config.weight_decay, partial ? &fb : nullptr);
            ++cursor;
        } else if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            const auto* mask = governing[i];
            std::vector<std::uint8_t> fz;
            bool partial = false;
            if (mask) {
                for (auto a : *mask) partial = partial || !a;
                if (partial) fz = frozen_entries(*mask);
            }
            sgd_step(bn->gamma, param_grads[cursor], state.velocity[cursor], config.lr,
                     config.momentum, config.weight_decay, partial ? &fz : nullptr);
            ++cursor;
            sgd_step(bn->beta, param_grads[cursor], state.velocity[cursor], config.lr,
                     config.momentum, config.weight_decay, partial ? &fz : nullptr);
            ++cursor;
        } else if (auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            sgd_step(fc->weights, param_grads[cursor], state.velocity[cursor], config.lr,
                     config.momentum, config.weight_decay);
            ++cursor;
            sgd_step(fc->bias, param_grads[cursor], state.velocity[cursor], config.lr,
                     config.momentum, config.weight_decay);
            ++cursor;
        }
    }
    return loss;
}

ParamCounts count_parameters(const ModelGraph& model) {
    ParamCounts counts;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& layer = model.layers[i];
        std::int64_t n = 0;
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            n = conv->params.weights.size() + conv->params.bias.size();
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            n = 4 * bn->channels();
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            n = fc->weights.size() + fc->bias.size();
        } else {
            continue;
        }
        counts.per_layer.push_back({static_cast<int>(i), layer_kind_name(layer), n});
        counts.total += n;
    }
    return counts;
}

namespace {

Tensor take_rows(const Tensor& t, const std::vector<std::int64_t>& rows) {
    // Keeps the listed leading-dimension slices, order preserved.
    std::vector<std::int64_t> shape = t.shape();
    const std::int64_t row_size = t.size() / t.dim(0);
    shape[0] = static_cast<std::int64_t>(rows.size());
    Tensor out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(out.data() + static_cast<std::int64_t>(i) * row_size,
                    t.data() + rows[i] * row_size,
                    sizeof(scalar) * static_cast<std::size_t>(row_size));
    }
    return out;
}

Tensor take_input_slices(const Tensor& weights, const std::vector<std::int64_t>& keep) {
    // weights [O, I, K, K] -> [O, keep.size(), K, K]
    const std::int64_t o = weights.dim(0), in = weights.dim(1);
    const std::int64_t kk = weights.dim(2) * weights.dim(3);
    Tensor out({o, static_cast<std::int64_t>(keep.size()), weights.dim(2), weights.dim(3)});
    for (std::int64_t oi = 0; oi < o; ++oi) {
        for (std::size_t ii = 0; ii < keep.size(); ++ii) {
            std::memcpy(out.data() + (oi * static_cast<std::int64_t>(keep.size()) +
                                      static_cast<std::int64_t>(ii)) * kk,
                        weights.data() + (oi * in + keep[ii]) * kk,
                        sizeof(scalar) * static_cast<std::size_t>(kk));
        }
    }
    return out;
}

}  // namespace

ModelGraph remove_output_channels(const ModelGraph& model, int layer_index,
                                  const std::set<int>& channels) {
    const ConvLayer& conv = model.conv_at(layer_index);
    const std::int64_t out_ch = conv.out_channels();
    for (int c : channels) {
        if (c < 0 || c >= out_ch) {
            throw ShapeError("filter " + std::to_string(c) + " out of range for layer " +
                             std::to_string(layer_index));
        }
    }
    if (static_cast<std::int64_t>(channels.size()) >= out_ch) {
        throw LayerCollapseError(layer_index, "removing all " + std::to_string(out_ch) +
                                                  " filters of layer " +
                                                  std::to_string(layer_index));
    }

    ModelGraph result = model;
    if (channels.empty()) {
        return result;
    }

    std::vector<std::int64_t> keep;
    for (std::int64_t j = 0; j < out_ch; ++j) {
        if (!channels.count(static_cast<int>(j))) keep.push_back(j);
    }

    ConvLayer& target = result.conv_at(layer_index);
    target.params.weights = take_rows(conv.params.weights, keep);
    target.params.bias = take_rows(conv.params.bias, keep);
    std::vector<std::uint8_t> new_alive;
    for (std::int64_t j : keep) new_alive.push_back(conv.alive[static_cast<std::size_t>(j)]);
    target.alive = std::move(new_alive);

    // Downstream adjustments: paired BatchNorm channels, the next conv's
    // input slices, or the FC columns that flow from the removed maps.
    for (std::size_t i = static_cast<std::size_t>(layer_index) + 1; i < result.layers.size();
         ++i) {
        LayerSpec& layer = result.layers[i];
        if (auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            bn->gamma = take_rows(bn->gamma, keep);
            bn->beta = take_rows(bn->beta, keep);
            bn->running_mean = take_rows(bn->running_mean, keep);
            bn->running_var = take_rows(bn->running_var, keep);
        } else if (auto* next = std::get_if<ConvLayer>(&layer)) {
            next->params.weights = take_input_slices(next->params.weights, keep);
            break;
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            const auto hw = spatial_at_flatten(model, static_cast<int>(i));
            const std::int64_t plane = hw[0] * hw[1];
            for (std::size_t j = i + 1; j < result.layers.size(); ++j) {
                if (auto* fc = std::get_if<FullyConnectedLayer>(&result.layers[j])) {
                    // Channel-major flatten: channel c owns columns
                    // [c*plane, (c+1)*plane).
                    const std::int64_t out_f = fc->out_features();
                    const std::int64_t in_f = fc->in_features();
                    if (in_f != out_ch * plane) {
                        throw ShapeError("layer " + std::to_string(j) +
                                         " (FullyConnected): input width " + std::to_string(in_f) +
                                         " does not match flattened conv output");
                    }
                    Tensor w({out_f, static_cast<std::int64_t>(keep.size()) * plane});
                    for (std::int64_t r = 0; r < out_f; ++r) {
                        scalar* dst = w.data() + r * static_cast<std::int64_t>(keep.size()) * plane;
                        const scalar* src = fc->weights.data() + r * in_f;
                        for (std::size_t ci = 0; ci < keep.size(); ++ci) {
                            std::memcpy(dst + static_cast<std::int64_t>(ci) * plane,
                                        src + keep[ci] * plane,
                                        sizeof(scalar) * static_cast<std::size_t>(plane));
                        }
                    }
                    fc->weights = std::move(w);
                    break;
                }
                if (!std::holds_alternative<ReluLayer>(result.layers[j])) {
                    throw ShapeError("cannot adjust layer " + std::to_string(j) + " (" +
                                     layer_kind_name(result.layers[j]) +
                                     ") after pruning through a flatten");
                }
            }
            break;
        } else if (std::holds_alternative<FullyConnectedLayer>(layer)) {
            throw ShapeError("conv output feeding FullyConnected without Flatten is unsupported");
        }
        // ReLU / MaxPool carry the channels through unchanged.
    }
    return result;
}

ModelGraph rebuild_without_masked(const ModelGraph& model) {
    ModelGraph result = model;
    for (int li : model.conv_layer_indices()) {
        const ConvLayer& conv = result.conv_at(li);
        std::set<int> masked;
        for (std::size_t j = 0; j < conv.alive.size(); ++j) {
            if (!conv.alive[j]) masked.insert(static_cast<int>(j));
        }
        if (!masked.empty()) {
            result = remove_output_channels(result, li, masked);
        }
    }
    return result;
}

double evaluate_accuracy(ModelGraph& model, const Tensor& images, const std::vector<int>& labels,
                         int batch_size) {
    const std::int64_t n = images.dim(0);
    if (n != static_cast<std::int64_t>(labels.size())) {
        throw ShapeError("image/label count mismatch");
    }
    const std::int64_t sample = images.size() / n;
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < n; start += batch_size) {
        const std::int64_t count = std::min<std::int64_t>(batch_size, n - start);
        Tensor batch({count, images.dim(1), images.dim(2), images.dim(3)});
        std::memcpy(batch.data(), images.data() + start * sample,
                    sizeof(scalar) * static_cast<std::size_t>(count * sample));
        Tensor logits = forward(model, batch, Mode::Eval);
        const std::int64_t classes = logits.dim(1);
        for (std::int64_t b = 0; b < count; ++b) {
            const scalar* row = logits.data() + b * classes;
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < classes; ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (best == labels[static_cast<std::size_t>(start + b)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

ConvLayer init_conv(Rng& rng, std::int64_t out_ch, std::int64_t in_ch, std::int64_t kernel,
                    int stride, int padding) {
    ConvLayer conv;
    conv.params.weights = Tensor({out_ch, in_ch, kernel, kernel});
    conv.params.bias = Tensor({out_ch});
    conv.params.stride = stride;
    conv.params.padding = padding;
    const scalar std = std::sqrt(2.0 / static_cast<scalar>(in_ch * kernel * kernel));
    for (std::int64_t i = 0; i < conv.params.weights.size(); ++i) {
        conv.params.weights[i] = rng.normal(0.0, std);
    }
    conv.alive.assign(static_cast<std::size_t>(out_ch), 1);
    return conv;
}

BatchNormLayer init_bn(std::int64_t channels) {
    BatchNormLayer bn;
    bn.gamma = Tensor::full({channels}, 1.0);
    bn.beta = Tensor({channels});
    bn.running_mean = Tensor({channels});
    bn.running_var = Tensor::full({channels}, 1.0);
    return bn;
}

FullyConnectedLayer init_fc(Rng& rng, std::int64_t out, std::int64_t in) {
    FullyConnectedLayer fc;
    fc.weights = Tensor({out, in});
    fc.bias = Tensor({out});
    const scalar std = std::sqrt(2.0 / static_cast<scalar>(in));
    for (std::int64_t i = 0; i < fc.weights.size(); ++i) {
        fc.weights[i] = rng.normal(0.0, std);
    }
    return fc;
}

}  // namespace

ModelGraph make_mnist_cnn(std::uint64_t seed) {
    ModelGraph m;
    m.name = "mnist-cnn";
    m.creation_seed = seed;
    m.rng = Rng(seed);
    m.input_shape = {1, 28, 28};
    m.layers.push_back(init_conv(m.rng, 16, 1, 3, 1, 1));
    m.layers.push_back(init_bn(16));
    m.layers.push_back(ReluLayer{});
    m.layers.push_back(MaxPoolLayer{2, 2});
    m.layers.push_back(init_conv(m.rng, 32, 16, 3, 1, 1));
    m.layers.push_back(init_bn(32));
    m.layers.push_back(ReluLayer{});
    m.layers.push_back(MaxPoolLayer{2, 2});
    m.layers.push_back(FlattenLayer{});
    m.layers.push_back(init_fc(m.rng, 128, 32 * 7 * 7));
    m.layers.push_back(ReluLayer{});
    m.layers.push_back(init_fc(m.rng, 10, 128));
    return m;
}

ModelGraph make_toy_cnn(std::uint64_t seed, int in_channels, int height, int width,
                        int num_classes) {
    ModelGraph m;
    m.name = "toy-cnn";
    m.creation_seed = seed;
    m.rng = Rng(seed);
    m.input_shape = {in_channels, height, width};
    m.layers.push_back(init_conv(m.rng, 8, in_channels, 3, 1, 1));
    m.layers.push_back(init_bn(8));
    m.layers.push_back(ReluLayer{});
    m.layers.push_back(MaxPoolLayer{2, 2});
    const std::int64_t h2 = height / 2, w2 = width / 2;
    m.layers.push_back(init_conv(m.rng, 8, 8, 3, 1, 1));
    m.layers.push_back(init_bn(8));
    m.layers.push_back(ReluLayer{});
    m.layers.push_back(MaxPoolLayer{2, 2});
    m.layers.push_back(FlattenLayer{});
    m.layers.push_back(init_fc(m.rng, num_classes, 8 * (h2 / 2) * (w2 / 2)));
    return m;
}

ModelGraph make_preset(const std::string& preset, std::uint64_t seed) {
    if (preset == "mnist-cnn") return make_mnist_cnn(seed);
    if (preset == "toy-cnn") return make_toy_cnn(seed);
    throw ConfigError("unknown model preset '" + preset + "' (expected mnist-cnn or toy-cnn)");
}

std::string describe(const ModelGraph& model) {
    std::ostringstream out;
    out << model.name << " input [" << model.input_shape[0] << ", " << model.input_shape[1]
        << ", " << model.input_shape[2] << "]\n";
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& layer = model.layers[i];
        out << "  " << i << ": " << layer_kind_name(layer);
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            out << ' ' << conv->out_channels() << 'x' << conv->in_channels() << 'x'
                << conv->kernel() << 'x' << conv->kernel() << " stride " << conv->params.stride
                << " pad " << conv->params.padding << " alive " << conv->alive_count() << '/'
                << conv->out_channels();
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            out << ' ' << bn->channels() << "ch";
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
            out << ' ' << pool->window << '/' << pool->stride;
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            out << ' ' << fc->out_features() << 'x' << fc->in_features();
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace iplt
