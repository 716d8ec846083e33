// Every backward op against central finite differences (float64).
// The acceptance suite re-runs these at 100 cases per op; here a handful
// of randomized instances keep the unit cycle fast.

#include <doctest.h>

#include "iplt/ops.hpp"
#include "testutil.hpp"

using namespace iplt;
using namespace testutil;

namespace {
constexpr double kTol = 1e-4;
}

TEST_SUITE("gradcheck") {
    TEST_CASE("conv2d gradients (incl. stride and padding)") {
        Rng rng(101);
        for (int trial = 0; trial < 6; ++trial) {
            const std::int64_t I = 1 + rng.below(3);
            const std::int64_t O = 1 + rng.below(3);
            const std::int64_t K = 1 + 2 * rng.below(2);
            const int stride = 1 + static_cast<int>(rng.below(2));
            const int padding = static_cast<int>(rng.below(2));
            const std::int64_t H = K + 2 + rng.below(3);
            ConvParams p;
            p.weights = Tensor({O, I, K, K});
            p.bias = Tensor({O});
            fill_normal(p.weights, rng);
            fill_normal(p.bias, rng);
            p.stride = stride;
            p.padding = padding;
            Tensor x({2, I, H, H});
            fill_normal(x, rng);

            Tensor r(conv2d_forward(x, p).shape());
            fill_normal(r, rng);
            ConvGrads grads = conv2d_backward(x, p, r);

            auto loss_x = [&]() { return weighted_sum(conv2d_forward(x, p), r); };
            CHECK(fd_max_rel_error(x, grads.input, loss_x) < kTol);
            CHECK(fd_max_rel_error(p.weights, grads.weights, loss_x) < kTol);
            CHECK(fd_max_rel_error(p.bias, grads.bias, loss_x) < kTol);
        }
    }

    TEST_CASE("zero grad_out produces zero gradients") {
        Rng rng(103);
        ConvParams p;
        p.weights = Tensor({3, 2, 3, 3});
        p.bias = Tensor({3});
        fill_normal(p.weights, rng);
        Tensor x({1, 2, 5, 5});
        fill_normal(x, rng);
        Tensor zero(conv2d_forward(x, p).shape());
        ConvGrads grads = conv2d_backward(x, p, zero);
        for (std::int64_t i = 0; i < grads.input.size(); ++i) CHECK(grads.input[i] == 0.0);
        for (std::int64_t i = 0; i < grads.weights.size(); ++i) CHECK(grads.weights[i] == 0.0);
        for (std::int64_t i = 0; i < grads.bias.size(); ++i) CHECK(grads.bias[i] == 0.0);
    }

    TEST_CASE("conv bias gradient equals the grad_out channel sums") {
        Rng rng(107);
        ConvParams p;
        p.weights = Tensor({3, 2, 3, 3});
        p.bias = Tensor({3});
        fill_normal(p.weights, rng);
        Tensor x({2, 2, 5, 5});
        fill_normal(x, rng);
        Tensor r(conv2d_forward(x, p).shape());
        fill_normal(r, rng);
        ConvGrads grads = conv2d_backward(x, p, r);
        const std::int64_t plane = r.dim(2) * r.dim(3);
        for (std::int64_t o = 0; o < 3; ++o) {
            scalar want = 0.0;
            for (std::int64_t b = 0; b < 2; ++b) {
                for (std::int64_t i = 0; i < plane; ++i) {
                    want += r[(b * 3 + o) * plane + i];
                }
            }
            CHECK(grads.bias[o] == doctest::Approx(want).epsilon(1e-12));
        }
    }

    TEST_CASE("linear gradients") {
        Rng rng(109);
        for (int trial = 0; trial < 4; ++trial) {
            const std::int64_t B = 1 + rng.below(4), In = 2 + rng.below(5), Out = 1 + rng.below(4);
            Tensor w({Out, In}), b({Out}), x({B, In});
            fill_normal(w, rng);
            fill_normal(b, rng);
            fill_normal(x, rng);
            Tensor r({B, Out});
            fill_normal(r, rng);
            LinearGrads grads = linear_backward(x, w, r);
            auto loss = [&]() { return weighted_sum(linear_forward(x, w, b), r); };
            CHECK(fd_max_rel_error(x, grads.input, loss) < kTol);
            CHECK(fd_max_rel_error(w, grads.weights, loss) < kTol);
            CHECK(fd_max_rel_error(b, grads.bias, loss) < kTol);
        }
    }

    TEST_CASE("relu gradient away from the kink") {
        Rng rng(113);
        Tensor x({40});
        for (std::int64_t i = 0; i < x.size(); ++i) {
            scalar v = rng.normal();
            if (std::abs(v) < 1e-3) v = 0.1;  // keep clear of the kink
            x[i] = v;
        }
        Tensor r({40});
        fill_normal(r, rng);
        Tensor analytic = relu_backward(x, r);
        auto loss = [&]() { return weighted_sum(relu_forward(x), r); };
        CHECK(fd_max_rel_error(x, analytic, loss) < kTol);
    }

    TEST_CASE("maxpool gradient") {
        Rng rng(127);
        Tensor x({2, 2, 6, 6});
        fill_normal(x, rng);
        Tensor fwd = maxpool2d_forward(x, 2, 2);
        Tensor r(fwd.shape());
        fill_normal(r, rng);
        Tensor analytic = maxpool2d_backward(x, r, 2, 2);
        auto loss = [&]() { return weighted_sum(maxpool2d_forward(x, 2, 2), r); };
        CHECK(fd_max_rel_error(x, analytic, loss) < kTol);
    }

    TEST_CASE("batchnorm gradients (train mode batch statistics)") {
        Rng rng(131);
        for (int trial = 0; trial < 3; ++trial) {
            const std::int64_t C = 1 + rng.below(3);
            Tensor x({3, C, 4, 4});
            fill_normal(x, rng);
            Tensor gamma({C}), beta({C}), rm({C}), rv = Tensor::full({C}, 1.0);
            fill_uniform(gamma, rng, 0.5, 1.5);
            fill_normal(beta, rng, 0.2);
            Tensor r(x.shape());
            fill_normal(r, rng);

            BnCache cache;
            batchnorm2d_forward(x, gamma, beta, rm, rv, 1e-5, true, &cache);
            BnGrads grads = batchnorm2d_backward(x, gamma, r, cache);

            auto loss = [&]() {
                BnCache c2;
                return weighted_sum(batchnorm2d_forward(x, gamma, beta, rm, rv, 1e-5, true, &c2),
                                    r);
            };
            CHECK(fd_max_rel_error(x, grads.input, loss) < kTol);
            CHECK(fd_max_rel_error(gamma, grads.gamma, loss) < kTol);
            CHECK(fd_max_rel_error(beta, grads.beta, loss) < kTol);
        }
    }

    TEST_CASE("softmax cross-entropy gradient") {
        Rng rng(137);
        Tensor logits({4, 6});
        fill_normal(logits, rng);
        std::vector<int> labels{1, 0, 5, 3};
        auto [loss, grad] = softmax_cross_entropy(logits, labels);
        (void)loss;
        auto f = [&]() { return softmax_cross_entropy(logits, labels).first; };
        CHECK(fd_max_rel_error(logits, grad, f) < kTol);
    }
}
