#include "iplt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace iplt {

namespace {

// Row-major GEMM kernels with fixed accumulation order (k ascending for
// every output element), which keeps results reproducible run to run.

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(const scalar* a, const scalar* b, scalar* c, std::int64_t m, std::int64_t k,
             std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        scalar* crow = c + i * n;
        const scalar* arow = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const scalar av = arow[p];
            if (av == 0.0) continue;
            const scalar* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(const scalar* a, const scalar* b, scalar* c, std::int64_t m, std::int64_t k,
             std::int64_t n) {
    for (std::int64_t p = 0; p < k; ++p) {
        const scalar* arow = a + p * m;
        const scalar* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const scalar av = arow[i];
            if (av == 0.0) continue;
            scalar* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// B [R,C] row-major -> out [C,R]
void transpose(const scalar* b, scalar* out, std::int64_t rows, std::int64_t cols) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const scalar* src = b + r * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
            out[j * rows + r] = src[j];
        }
    }
}

struct ConvDims {
    std::int64_t batch, in_ch, in_h, in_w;
    std::int64_t out_ch, kernel;
    std::int64_t out_h, out_w;
    int stride, padding;
};

ConvDims conv_dims(const Tensor& input, const ConvParams& params) {
    if (input.rank() != 4) {
        throw ShapeError("conv2d input must be [B, C, H, W], got " + shape_string(input.shape()));
    }
    const Tensor& w = params.weights;
    if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
        throw ShapeError("conv2d weights must be [O, I, K, K], got " + shape_string(w.shape()));
    }
    if (params.bias.rank() != 1 || params.bias.dim(0) != w.dim(0)) {
        throw ShapeError("conv2d bias must be [O=" + std::to_string(w.dim(0)) + "], got " +
                         shape_string(params.bias.shape()));
    }
    if (input.dim(1) != w.dim(1)) {
        throw ShapeError("conv2d input has " + std::to_string(input.dim(1)) +
                         " channels but weights expect " + std::to_string(w.dim(1)));
    }
    if (params.stride < 1 || params.padding < 0) {
        throw ShapeError("conv2d needs stride >= 1 and padding >= 0");
    }
    ConvDims d;
    d.batch = input.dim(0);
    d.in_ch = input.dim(1);
    d.in_h = input.dim(2);
    d.in_w = input.dim(3);
    d.out_ch = w.dim(0);
    d.kernel = w.dim(2);
    d.stride = params.stride;
    d.padding = params.padding;
    d.out_h = conv_out_extent(d.in_h, d.kernel, d.stride, d.padding);
    d.out_w = conv_out_extent(d.in_w, d.kernel, d.stride, d.padding);
    return d;
}

// Gathers one image [I, H, W] into columns [I*K*K, OH*OW]; zero padding.
void im2col(const scalar* img, const ConvDims& d, scalar* cols) {
    const std::int64_t plane = d.out_h * d.out_w;
    for (std::int64_t ci = 0; ci < d.in_ch; ++ci) {
        const scalar* src = img + ci * d.in_h * d.in_w;
        for (std::int64_t kh = 0; kh < d.kernel; ++kh) {
            for (std::int64_t kw = 0; kw < d.kernel; ++kw) {
                scalar* dst = cols + ((ci * d.kernel + kh) * d.kernel + kw) * plane;
                for (std::int64_t oh = 0; oh < d.out_h; ++oh) {
                    const std::int64_t ih = oh * d.stride - d.padding + kh;
                    scalar* drow = dst + oh * d.out_w;
                    if (ih < 0 || ih >= d.in_h) {
                        std::memset(drow, 0, sizeof(scalar) * static_cast<std::size_t>(d.out_w));
                        continue;
                    }
                    const scalar* srow = src + ih * d.in_w;
                    for (std::int64_t ow = 0; ow < d.out_w; ++ow) {
                        const std::int64_t iw = ow * d.stride - d.padding + kw;
                        drow[ow] = (iw >= 0 && iw < d.in_w) ? srow[iw] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of columns back into one image (exact adjoint of im2col).
void col2im_acc(const scalar* cols, const ConvDims& d, scalar* img) {
    const std::int64_t plane = d.out_h * d.out_w;
    for (std::int64_t ci = 0; ci < d.in_ch; ++ci) {
        scalar* dst = img + ci * d.in_h * d.in_w;
        for (std::int64_t kh = 0; kh < d.kernel; ++kh) {
            for (std::int64_t kw = 0; kw < d.kernel; ++kw) {
                const scalar* src = cols + ((ci * d.kernel + kh) * d.kernel + kw) * plane;
                for (std::int64_t oh = 0; oh < d.out_h; ++oh) {
                    const std::int64_t ih = oh * d.stride - d.padding + kh;
                    if (ih < 0 || ih >= d.in_h) continue;
                    scalar* drow = dst + ih * d.in_w;
                    const scalar* srow = src + oh * d.out_w;
                    for (std::int64_t ow = 0; ow < d.out_w; ++ow) {
                        const std::int64_t iw = ow * d.stride - d.padding + kw;
                        if (iw >= 0 && iw < d.in_w) {
                            drow[iw] += srow[ow];
                        }
                    }
                }
            }
        }
    }
}

thread_local std::vector<scalar> g_col_scratch;
thread_local std::vector<scalar> g_transpose_scratch;

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, int stride, int padding) {
    const std::int64_t out = (in + 2 * padding - kernel) / stride + 1;
    if (in + 2 * padding < kernel || out <= 0) {
        throw ShapeError("conv window " + std::to_string(kernel) + " does not fit input extent " +
                         std::to_string(in) + " with padding " + std::to_string(padding));
    }
    return out;
}

Tensor conv2d_forward(const Tensor& input, const ConvParams& params) {
    const ConvDims d = conv_dims(input, params);
    Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});

    const std::int64_t cols_rows = d.in_ch * d.kernel * d.kernel;
    const std::int64_t plane = d.out_h * d.out_w;
    g_col_scratch.assign(static_cast<std::size_t>(cols_rows * plane), 0.0);

    const scalar* wdata = params.weights.data();
    const scalar* bdata = params.bias.data();
    for (std::int64_t b = 0; b < d.batch; ++b) {
        const scalar* img = input.data() + b * d.in_ch * d.in_h * d.in_w;
        scalar* dst = out.data() + b * d.out_ch * plane;
        im2col(img, d, g_col_scratch.data());
        for (std::int64_t o = 0; o < d.out_ch; ++o) {
            std::fill(dst + o * plane, dst + (o + 1) * plane, bdata[o]);
        }
        gemm_nn(wdata, g_col_scratch.data(), dst, d.out_ch, cols_rows, plane);
    }
    return out;
}

Tensor per_filter_forward(const Tensor& input, const Tensor& filter, int stride, int padding) {
    if (input.rank() != 3) {
        throw ShapeError("per-filter input must be [I, H, W], got " + shape_string(input.shape()));
    }
    if (filter.rank() != 3) {
        throw ShapeError("filter must be [I, K, K], got " + shape_string(filter.shape()));
    }
    if (input.dim(0) != filter.dim(0)) {
        throw ShapeError("filter expects " + std::to_string(filter.dim(0)) + " channels, input has " +
                         std::to_string(input.dim(0)));
    }
    ConvParams p;
    p.weights = filter.reshaped({1, filter.dim(0), filter.dim(1), filter.dim(2)});
    p.bias = Tensor({1});
    p.stride = stride;
    p.padding = padding;
    Tensor batched = input.reshaped({1, input.dim(0), input.dim(1), input.dim(2)});
    Tensor out = conv2d_forward(batched, p);
    return out.reshaped({out.dim(2), out.dim(3)});
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out) {
    const ConvDims d = conv_dims(input, params);
    if (grad_out.shape() != std::vector<std::int64_t>{d.batch, d.out_ch, d.out_h, d.out_w}) {
        throw ShapeError("grad_out shape " + shape_string(grad_out.shape()) +
                         " does not match conv output");
    }

    ConvGrads g;
    g.input = Tensor(input.shape());
    g.weights = Tensor(params.weights.shape());
    g.bias = Tensor(params.bias.shape());

    const std::int64_t cols_rows = d.in_ch * d.kernel * d.kernel;
    const std::int64_t plane = d.out_h * d.out_w;
    g_col_scratch.assign(static_cast<std::size_t>(cols_rows * plane), 0.0);
    std::vector<scalar> grad_cols(static_cast<std::size_t>(cols_rows * plane));

    for (std::int64_t b = 0; b < d.batch; ++b) {
        const scalar* img = input.data() + b * d.in_ch * d.in_h * d.in_w;
        const scalar* gout = grad_out.data() + b * d.out_ch * plane;

        for (std::int64_t o = 0; o < d.out_ch; ++o) {
            scalar s = 0.0;
            const scalar* row = gout + o * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                s += row[i];
            }
            g.bias[o] += s;
        }

        im2col(img, d, g_col_scratch.data());
        // dW += gout [O, P] * colsT [P, IKK]; the transposed copy keeps the
        // accumulation in element-wise (vectorizable) form.
        g_transpose_scratch.resize(static_cast<std::size_t>(cols_rows * plane));
        transpose(g_col_scratch.data(), g_transpose_scratch.data(), cols_rows, plane);
        gemm_nn(gout, g_transpose_scratch.data(), g.weights.data(), d.out_ch, plane, cols_rows);
        // dcols = W^T [IKK, O] * gout [O, P]
        std::fill(grad_cols.begin(), grad_cols.end(), 0.0);
        gemm_tn(params.weights.data(), gout, grad_cols.data(), cols_rows, d.out_ch, plane);
        col2im_acc(grad_cols.data(), d, g.input.data() + b * d.in_ch * d.in_h * d.in_w);
    }
    return g;
}

Tensor linear_forward(const Tensor& x, const Tensor& weights, const Tensor& bias) {
    if (x.rank() != 2 || weights.rank() != 2) {
        throw ShapeError("linear expects x [B, In] and weights [Out, In]");
    }
    const std::int64_t batch = x.dim(0), in = x.dim(1);
    const std::int64_t out = weights.dim(0);
    if (weights.dim(1) != in) {
        throw ShapeError("linear weights expect " + std::to_string(weights.dim(1)) +
                         " inputs, got " + std::to_string(in));
    }
    if (bias.rank() != 1 || bias.dim(0) != out) {
        throw ShapeError("linear bias must be [" + std::to_string(out) + "]");
    }
    Tensor y({batch, out});
    for (std::int64_t b = 0; b < batch; ++b) {
        scalar* row = y.data() + b * out;
        std::memcpy(row, bias.data(), sizeof(scalar) * static_cast<std::size_t>(out));
    }
    // y += x [B, In] * W^T [In, Out] via a transposed weight copy.
    g_transpose_scratch.resize(static_cast<std::size_t>(out * in));
    transpose(weights.data(), g_transpose_scratch.data(), out, in);
    gemm_nn(x.data(), g_transpose_scratch.data(), y.data(), batch, in, out);
    return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_out) {
    const std::int64_t batch = x.dim(0), in = x.dim(1), out = weights.dim(0);
    if (grad_out.shape() != std::vector<std::int64_t>{batch, out}) {
        throw ShapeError("linear grad_out shape " + shape_string(grad_out.shape()) +
                         " does not match output");
    }
    LinearGrads g;
    g.input = Tensor({batch, in});
    g.weights = Tensor({out, in});
    g.bias = Tensor({out});
    // dx = dy [B, Out] * W [Out, In]
    gemm_nn(grad_out.data(), weights.data(), g.input.data(), batch, out, in);
    // dW = dy^T [Out, B] * x [B, In]
    gemm_tn(grad_out.data(), x.data(), g.weights.data(), out, batch, in);
    for (std::int64_t b = 0; b < batch; ++b) {
        const scalar* row = grad_out.data() + b * out;
        for (std::int64_t o = 0; o < out; ++o) {
            g.bias[o] += row[o];
        }
    }
    return g;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.shape());
    const scalar* src = x.data();
    scalar* dst = y.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) {
        dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    }
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (!x.same_shape(grad_out)) {
        throw ShapeError("relu grad_out shape mismatch");
    }
    Tensor g(x.shape());
    const scalar* xs = x.data();
    const scalar* gs = grad_out.data();
    scalar* dst = g.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) {
        dst[i] = xs[i] > 0.0 ? gs[i] : 0.0;
    }
    return g;
}

namespace {
void pool_check(const Tensor& x, int window, int stride) {
    if (x.rank() != 4) {
        throw ShapeError("maxpool input must be [B, C, H, W]");
    }
    if (window < 1 || stride < 1) {
        throw ShapeError("maxpool needs window >= 1 and stride >= 1");
    }
    if (x.dim(2) < window || x.dim(3) < window) {
        throw ShapeError("maxpool window " + std::to_string(window) + " exceeds input " +
                         shape_string(x.shape()));
    }
}
}  // namespace

Tensor maxpool2d_forward(const Tensor& x, int window, int stride) {
    pool_check(x, window, stride);
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = (h - window) / stride + 1;
    const std::int64_t ow = (w - window) / stride + 1;
    Tensor y({b, c, oh, ow});
    for (std::int64_t i = 0; i < b * c; ++i) {
        const scalar* plane = x.data() + i * h * w;
        scalar* dst = y.data() + i * oh * ow;
        for (std::int64_t r = 0; r < oh; ++r) {
            for (std::int64_t s = 0; s < ow; ++s) {
                scalar best = -std::numeric_limits<scalar>::infinity();
                for (std::int64_t kh = 0; kh < window; ++kh) {
                    const scalar* row = plane + (r * stride + kh) * w + s * stride;
                    for (std::int64_t kw = 0; kw < window; ++kw) {
                        if (row[kw] > best) best = row[kw];
                    }
                }
                dst[r * ow + s] = best;
            }
        }
    }
    return y;
}

Tensor maxpool2d_backward(const Tensor& x, const Tensor& grad_out, int window, int stride) {
    pool_check(x, window, stride);
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = (h - window) / stride + 1;
    const std::int64_t ow = (w - window) / stride + 1;
    if (grad_out.shape() != std::vector<std::int64_t>{b, c, oh, ow}) {
        throw ShapeError("maxpool grad_out shape mismatch");
    }
    Tensor g(x.shape());
    for (std::int64_t i = 0; i < b * c; ++i) {
        const scalar* plane = x.data() + i * h * w;
        const scalar* gsrc = grad_out.data() + i * oh * ow;
        scalar* dst = g.data() + i * h * w;
        for (std::int64_t r = 0; r < oh; ++r) {
            for (std::int64_t s = 0; s < ow; ++s) {
                // First maximum in scan order receives the gradient.
                scalar best = -std::numeric_limits<scalar>::infinity();
                std::int64_t best_idx = 0;
                for (std::int64_t kh = 0; kh < window; ++kh) {
                    const std::int64_t row = (r * stride + kh) * w + s * stride;
                    for (std::int64_t kw = 0; kw < window; ++kw) {
                        if (plane[row + kw] > best) {
                            best = plane[row + kw];
                            best_idx = row + kw;
                        }
                    }
                }
                dst[best_idx] += gsrc[r * ow + s];
            }
        }
    }
    return g;
}

Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& running_mean, const Tensor& running_var, scalar eps,
                           bool training, BnCache* cache) {
    if (x.rank() != 4) {
        throw ShapeError("batchnorm input must be [B, C, H, W]");
    }
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (gamma.dim(0) != c || beta.dim(0) != c || running_mean.dim(0) != c ||
        running_var.dim(0) != c) {
        throw ShapeError("batchnorm parameter channel count does not match input channels " +
                         std::to_string(c));
    }
    const std::int64_t plane = h * w;
    const std::int64_t per_channel = b * plane;

    std::vector<scalar> mean(static_cast<std::size_t>(c), 0.0);
    std::vector<scalar> invstd(static_cast<std::size_t>(c), 0.0);

    if (training) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            scalar acc = 0.0;
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const scalar* row = x.data() + (bi * c + ci) * plane;
                for (std::int64_t i = 0; i < plane; ++i) acc += row[i];
            }
            mean[static_cast<std::size_t>(ci)] = acc / static_cast<scalar>(per_channel);
        }
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const scalar mu = mean[static_cast<std::size_t>(ci)];
            scalar acc = 0.0;
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const scalar* row = x.data() + (bi * c + ci) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const scalar d = row[i] - mu;
                    acc += d * d;
                }
            }
            const scalar var = acc / static_cast<scalar>(per_channel);
            invstd[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(var + eps);
        }
        if (cache) {
            cache->mean = mean;
            cache->invstd = invstd;
        }
    } else {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            mean[static_cast<std::size_t>(ci)] = running_mean[ci];
            invstd[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(running_var[ci] + eps);
        }
    }

    Tensor y(x.shape());
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const scalar mu = mean[static_cast<std::size_t>(ci)];
            const scalar is = invstd[static_cast<std::size_t>(ci)];
            const scalar gc = gamma[ci];
            const scalar bc = beta[ci];
            const scalar* src = x.data() + (bi * c + ci) * plane;
            scalar* dst = y.data() + (bi * c + ci) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                dst[i] = (src[i] - mu) * is * gc + bc;
            }
        }
    }
    return y;
}

BnGrads batchnorm2d_backward(const Tensor& x, const Tensor& gamma, const Tensor& grad_out,
                             const BnCache& cache) {
    if (!x.same_shape(grad_out)) {
        throw ShapeError("batchnorm grad_out shape mismatch");
    }
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t plane = h * w;
    const scalar m = static_cast<scalar>(b * plane);

    BnGrads g;
    g.input = Tensor(x.shape());
    g.gamma = Tensor({c});
    g.beta = Tensor({c});

    for (std::int64_t ci = 0; ci < c; ++ci) {
        const scalar mu = cache.mean[static_cast<std::size_t>(ci)];
        const scalar is = cache.invstd[static_cast<std::size_t>(ci)];
        scalar sum_dy = 0.0;
        scalar sum_dy_xhat = 0.0;
        for (std::int64_t bi = 0; bi < b; ++bi) {
            const scalar* xs = x.data() + (bi * c + ci) * plane;
            const scalar* gs = grad_out.data() + (bi * c + ci) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const scalar xhat = (xs[i] - mu) * is;
                sum_dy += gs[i];
                sum_dy_xhat += gs[i] * xhat;
            }
        }
        g.beta[ci] = sum_dy;
        g.gamma[ci] = sum_dy_xhat;

        const scalar gc = gamma[ci];
        for (std::int64_t bi = 0; bi < b; ++bi) {
            const scalar* xs = x.data() + (bi * c + ci) * plane;
            const scalar* gs = grad_out.data() + (bi * c + ci) * plane;
            scalar* dst = g.input.data() + (bi * c + ci) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const scalar xhat = (xs[i] - mu) * is;
                dst[i] = gc * is / m * (m * gs[i] - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
    return g;
}

std::pair<scalar, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy expects logits [B, classes]");
    }
    const std::int64_t batch = logits.dim(0), classes = logits.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != batch) {
        throw ShapeError("label count " + std::to_string(labels.size()) +
                         " does not match batch " + std::to_string(batch));
    }
    Tensor grad({batch, classes});
    scalar loss = 0.0;
    const scalar inv_batch = 1.0 / static_cast<scalar>(batch);
    for (std::int64_t b = 0; b < batch; ++b) {
        const int label = labels[static_cast<std::size_t>(b)];
        if (label < 0 || label >= classes) {
            throw DataError(DataError::Kind::LabelRange,
                            "label " + std::to_string(label) + " outside [0, " +
                                std::to_string(classes) + ")");
        }
        const scalar* row = logits.data() + b * classes;
        scalar mx = row[0];
        for (std::int64_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        scalar denom = 0.0;
        for (std::int64_t j = 0; j < classes; ++j) denom += std::exp(row[j] - mx);
        const scalar log_denom = std::log(denom);
        loss += -(row[label] - mx - log_denom);
        scalar* grow = grad.data() + b * classes;
        for (std::int64_t j = 0; j < classes; ++j) {
            const scalar p = std::exp(row[j] - mx) / denom;
            grow[j] = (p - (j == label ? 1.0 : 0.0)) * inv_batch;
        }
    }
    return {loss * inv_batch, grad};
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, scalar lr, scalar momentum,
              scalar weight_decay, const std::vector<std::uint8_t>* frozen) {
    if (!param.same_shape(grad) || !param.same_shape(velocity)) {
        throw ShapeError("sgd_step: param/grad/velocity shapes must match");
    }
    if (frozen && static_cast<std::int64_t>(frozen->size()) != param.size()) {
        throw ShapeError("sgd_step: frozen mask length mismatch");
    }
    if (checked_mode() && !grad.all_finite()) {
        throw Error("sgd_step: non-finite gradient");
    }
    const std::int64_t n = param.size();
    scalar* p = param.data();
    const scalar* g = grad.data();
    scalar* v = velocity.data();
    for (std::int64_t i = 0; i < n; ++i) {
        if (frozen && (*frozen)[static_cast<std::size_t>(i)]) continue;
        v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
        p[i] -= lr * v[i];
    }
}

}  // namespace iplt
