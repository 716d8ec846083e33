#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "iplt/tensor.hpp"

namespace iplt {

// Weights are [out_channels, in_channels, K, K]; bias is [out_channels].
struct ConvParams {
    Tensor weights;
    Tensor bias;
    int stride = 1;
    int padding = 0;
};

// Output spatial extent for one axis; throws if the result is non-positive.
std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, int stride, int padding);

// Cross-correlation (deep-learning "convolution", the kernel is not flipped).
// input [B, I, H, W] -> output [B, O, H', W'].
Tensor conv2d_forward(const Tensor& input, const ConvParams& params);

// Single-filter view of the same operation: input [I, H, W] with filter
// [I, K, K] gives the [H', W'] map of that output channel, bias excluded.
Tensor per_filter_forward(const Tensor& input, const Tensor& filter, int stride, int padding);

struct ConvGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out);

// x [B, In] with weights [Out, In], bias [Out] -> [B, Out].
Tensor linear_forward(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct LinearGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_out);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

// Square window, no padding; ties take the first position in scan order.
Tensor maxpool2d_forward(const Tensor& x, int window, int stride);
Tensor maxpool2d_backward(const Tensor& x, const Tensor& grad_out, int window, int stride);

// Per-channel batch statistics captured by the forward pass for backward.
struct BnCache {
    std::vector<scalar> mean;
    std::vector<scalar> invstd;
};

// x [B, C, H, W]. In training mode normalizes with (biased) batch statistics
// and fills `cache`; in eval mode uses running_mean / running_var. Running
// stats are not modified here; the caller owns that update.
Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& running_mean, const Tensor& running_var,
                           scalar eps, bool training, BnCache* cache);

struct BnGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};
BnGrads batchnorm2d_backward(const Tensor& x, const Tensor& gamma, const Tensor& grad_out,
                             const BnCache& cache);

// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
std::pair<scalar, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels);

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
// Entries with a nonzero byte in `frozen` are left untouched (both the
// parameter and its velocity). In checked mode non-finite gradients throw.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, scalar lr, scalar momentum,
              scalar weight_decay, const std::vector<std::uint8_t>* frozen = nullptr);

}  // namespace iplt
