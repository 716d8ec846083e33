#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "iplt/ops.hpp"
#include "iplt/rng.hpp"
#include "iplt/tensor.hpp"

namespace iplt {

// Conv carries its own prune mask: alive[j] == 0 means output filter j is
// masked out (its feature map forced to zero, its parameters frozen).
struct ConvLayer {
    ConvParams params;
    std::vector<std::uint8_t> alive;

    std::int64_t out_channels() const { return params.weights.dim(0); }
    std::int64_t in_channels() const { return params.weights.dim(1); }
    std::int64_t kernel() const { return params.weights.dim(2); }
    std::int64_t alive_count() const;
    bool fully_alive() const;
};

struct BatchNormLayer {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    scalar eps = 1e-5;
    scalar momentum = 0.1;  // running <- (1 - m) * running + m * batch

    std::int64_t channels() const { return gamma.dim(0); }
};

struct ReluLayer {};

struct MaxPoolLayer {
    int window = 2;
    int stride = 2;
};

struct FlattenLayer {};

struct FullyConnectedLayer {
    Tensor weights;  // [out, in]
    Tensor bias;     // [out]

    std::int64_t out_features() const { return weights.dim(0); }
    std::int64_t in_features() const { return weights.dim(1); }
};

using LayerSpec = std::variant<ConvLayer, BatchNormLayer, ReluLayer, MaxPoolLayer, FlattenLayer,
                               FullyConnectedLayer>;

const char* layer_kind_name(const LayerSpec& layer);

// Sequential CNN with explicit channel bookkeeping. The graph owns its RNG
// so that checkpoints capture the full training state.
struct ModelGraph {
    std::vector<LayerSpec> layers;
    std::array<std::int64_t, 3> input_shape{0, 0, 0};  // [C, H, W]
    std::string name;
    std::uint64_t creation_seed = 0;
    std::int64_t epoch = 0;
    Rng rng;

    std::vector<int> conv_layer_indices() const;
    ConvLayer& conv_at(int layer_index);
    const ConvLayer& conv_at(int layer_index) const;
    std::int64_t total_filters() const;
    std::int64_t alive_filters() const;
    bool any_masked() const;
};

enum class Mode { Train, Eval };

// Per-layer output shapes (the last entry is the model output shape).
// Throws ShapeError naming the offending layer index on any inconsistency.
std::vector<std::vector<std::int64_t>> infer_shapes(const ModelGraph& model);

// Spatial [H, W] of the tensor feeding the Flatten at `flatten_index`.
std::array<std::int64_t, 2> spatial_at_flatten(const ModelGraph& model, int flatten_index);

Tensor forward(ModelGraph& model, const Tensor& batch, Mode mode);

struct SgdConfig {
    scalar lr = 0.05;
    scalar momentum = 0.9;
    scalar weight_decay = 5e-4;
};

// Velocity buffers aligned with the model's parameter tensors, reset on any
// structural change (the momentum history does not survive a rebuild).
struct SgdState {
    std::vector<Tensor> velocity;
    void reset(const ModelGraph& model);
    bool matches(const ModelGraph& model) const;
};

// One forward/backward/update cycle in train mode; returns the mean batch
// loss. Masked filters receive no updates of any kind.
scalar backward_and_step(ModelGraph& model, SgdState& state, const Tensor& batch,
                         const std::vector<int>& labels, const SgdConfig& config);

struct LayerParamCount {
    int layer_index = 0;
    std::string kind;
    std::int64_t count = 0;
};

struct ParamCounts {
    std::vector<LayerParamCount> per_layer;
    std::int64_t total = 0;
};

// Conv: O*I*K*K + O; FC: out*in + out; BatchNorm: 4 per channel (gamma,
// beta and the two running stats).
ParamCounts count_parameters(const ModelGraph& model);

// Structural surgery: drop the named output filters of the conv layer at
// `layer_index`, shrink its paired BatchNorm, the next conv's input slices,
// and (through Flatten) the matching FullyConnected input columns. Survivor
// order is preserved. Removing every filter throws LayerCollapseError.
ModelGraph remove_output_channels(const ModelGraph& model, int layer_index,
                                  const std::set<int>& channels);

// Applies remove_output_channels for every masked filter of every conv
// layer, yielding the genuinely smaller model ("hard rebuild").
ModelGraph rebuild_without_masked(const ModelGraph& model);

// Fraction of samples whose argmax logit equals the label (eval mode).
double evaluate_accuracy(ModelGraph& model, const Tensor& images, const std::vector<int>& labels,
                         int batch_size = 256);

// ---- presets ---------------------------------------------------------

// Two conv/BN/pool blocks (16 and 32 filters, K=3) and a 128-wide hidden FC
// head for 1x28x28 inputs. This architecture is an artifact choice.
ModelGraph make_mnist_cnn(std::uint64_t seed);

// Single small conv block for quick experiments and CI.
ModelGraph make_toy_cnn(std::uint64_t seed, int in_channels = 1, int height = 12, int width = 12,
                        int num_classes = 2);

ModelGraph make_preset(const std::string& preset, std::uint64_t seed);

// Human-readable architecture summary (one layer per line).
std::string describe(const ModelGraph& model);

}  // namespace iplt
