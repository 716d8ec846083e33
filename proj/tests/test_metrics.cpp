#include <doctest.h>

#include <cmath>

#include "iplt/metrics.hpp"
#include "iplt/pruner.hpp"
#include "testutil.hpp"

using namespace iplt;
using namespace testutil;

namespace {

// [O1=10 filters on 1 ch] -> [O2=20 filters] -> flatten -> FC head.
ModelGraph two_conv_net(Rng& rng, std::int64_t o1 = 10, std::int64_t o2 = 20) {
    ModelGraph m;
    m.input_shape = {1, 6, 6};
    m.layers.push_back(random_conv(rng, 1, o1, 3, 1));
    m.layers.push_back(random_conv(rng, o1, o2, 3, 1));
    m.layers.push_back(FlattenLayer{});
    FullyConnectedLayer fc;
    fc.weights = Tensor({3, o2 * 6 * 6});
    fc.bias = Tensor({3});
    fill_normal(fc.weights, rng);
    m.layers.push_back(fc);
    return m;
}

void mask_filters(ModelGraph& m, int layer, std::initializer_list<int> filters) {
    Selection sel;
    for (int f : filters) sel.picks.push_back({layer, f, 0.0});
    apply_mask(m, sel);
}

}  // namespace

TEST_SUITE("metrics.fpr") {
    TEST_CASE("nothing pruned, all zeros") {
        Rng rng(301);
        ModelGraph m = two_conv_net(rng);
        FprResult r = compute_fpr(m);
        CHECK(r.fpr_all == 0.0);
        for (double v : r.per_layer) CHECK(v == 0.0);
    }

    TEST_CASE("uniform intra-layer 70% yields FPR_all of exactly 70%") {
        Rng rng(303);
        ModelGraph m = two_conv_net(rng, 10, 20);
        Selection sel = select_filters(m, CompareMode::IntraLayer, 2.0, 0.7);
        apply_mask(m, sel);
        FprResult r = compute_fpr(m);
        CHECK(r.per_layer[0] == doctest::Approx(0.7).epsilon(0));
        CHECK(r.per_layer[1] == doctest::Approx(0.7).epsilon(0));
        CHECK(r.fpr_all == doctest::Approx(0.7).epsilon(0));
    }

    TEST_CASE("five filters pruned from the second of (10, 20) gives 5/30") {
        Rng rng(305);
        ModelGraph m = two_conv_net(rng);
        mask_filters(m, 1, {0, 3, 7, 11, 19});
        FprResult r = compute_fpr(m);
        CHECK(r.fpr_all == doctest::Approx(5.0 / 30.0).epsilon(1e-15));
        CHECK(r.per_layer[0] == 0.0);
        CHECK(r.per_layer[1] == doctest::Approx(0.25).epsilon(0));
    }

    TEST_CASE("mask view equals the structural before/after view") {
        Rng rng(307);
        for (int trial = 0; trial < 10; ++trial) {
            ModelGraph m = random_cnn(rng);
            ModelGraph original = m;
            random_mask(m, rng);
            FprResult mask_view = compute_fpr(m);
            FprResult struct_view = compute_fpr(original, rebuild_without_masked(m));
            CHECK(mask_view.fpr_all == struct_view.fpr_all);
            CHECK(mask_view.pruned == struct_view.pruned);
            CHECK(mask_view.total == struct_view.total);
        }
    }
}

TEST_SUITE("metrics.ppr") {
    TEST_CASE("nothing pruned, zero everywhere") {
        Rng rng(311);
        ModelGraph m = two_conv_net(rng);
        CHECK(compute_ppr(m).ppr_all == 0.0);
    }

    TEST_CASE("the spec's single-conv-pair hand count") {
        // Layer A: 4 filters 3x3 on 1 channel; layer B: 2 filters 3x3.
        Rng rng(313);
        ModelGraph m;
        m.input_shape = {1, 5, 5};
        m.layers.push_back(random_conv(rng, 1, 4, 3, 1));
        m.layers.push_back(random_conv(rng, 4, 2, 3, 1));
        const ModelGraph original = m;
        mask_filters(m, 0, {1, 2});

        PprResult r = compute_ppr(m);
        // A: 4*9+4 = 40 params -> 2*9+2 = 20 (18 weights + 2 biases lost).
        CHECK(r.params_before[0] == 40);
        CHECK(r.params_after[0] == 20);
        // B: 2*4*9+2 = 74 -> loses 2*2*9 = 36 input weights -> 38.
        CHECK(r.params_before[1] == 74);
        CHECK(r.params_after[1] == 38);
        // Cross-check against the count_parameters diff on the rebuilt net.
        const std::int64_t after = count_parameters(rebuild_without_masked(m)).total;
        CHECK(r.total_after == after);
        CHECK(r.total_before == count_parameters(original).total);
    }

    TEST_CASE("PPR_all equals 1 - after/before from structural counts, exactly") {
        Rng rng(317);
        for (int trial = 0; trial < 15; ++trial) {
            ModelGraph m = random_cnn(rng);
            random_mask(m, rng);
            PprResult r = compute_ppr(m);
            const std::int64_t before = count_parameters(m).total;
            const std::int64_t after = count_parameters(rebuild_without_masked(m)).total;
            CHECK(r.total_before == before);
            CHECK(r.total_after == after);
            CHECK(r.ppr_all ==
                  doctest::Approx(1.0 - static_cast<double>(after) /
                                            static_cast<double>(before)).epsilon(0));
        }
    }

    TEST_CASE("downstream shrinkage is charged to the downstream layer") {
        Rng rng(319);
        ModelGraph m = two_conv_net(rng, 8, 4);
        mask_filters(m, 0, {0, 1});
        PprResult r = compute_ppr(m);
        CHECK(r.per_layer[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(r.per_layer[1] > 0.0);  // lost input slices it did not choose
    }
}

TEST_SUITE("metrics.flops") {
    TEST_CASE("one 1x1 filter over one channel of an 8x8 input is 64 MACs") {
        Rng rng(323);
        ModelGraph m;
        m.input_shape = {1, 8, 8};
        m.layers.push_back(random_conv(rng, 1, 1, 1, 0));
        FlopsResult r = compute_flops(m);
        CHECK(r.total_macs == 64);
    }

    TEST_CASE("toy net rows match the per-layer hand computation") {
        Rng rng(327);
        ModelGraph m = two_conv_net(rng, 10, 20);
        FlopsResult r = compute_flops(m);
        // conv1: 10*1*9*36, conv2: 20*10*9*36, fc: 3*(20*36)
        CHECK(r.per_layer[0] == 10 * 1 * 9 * 36);
        CHECK(r.per_layer[1] == 20 * 10 * 9 * 36);
        CHECK(r.per_layer[2] == 3 * 20 * 36);
        CHECK(r.total_macs == r.per_layer[0] + r.per_layer[1] + r.per_layer[2]);
    }

    TEST_CASE("halving every layer's channels cuts interior conv MACs by 75%") {
        Rng rng(331);
        ModelGraph m = two_conv_net(rng, 8, 8);
        const FlopsResult before = compute_flops(m);
        mask_filters(m, 0, {0, 1, 2, 3});
        mask_filters(m, 1, {4, 5, 6, 7});
        const FlopsResult after = compute_flops(m);
        CHECK(after.per_layer[0] * 2 == before.per_layer[0]);      // first conv: out halved
        CHECK(after.per_layer[1] * 4 == before.per_layer[1]);      // interior: in and out halved
        const double frac = 1.0 - static_cast<double>(after.total_macs) /
                                      static_cast<double>(before.total_macs);
        CHECK(frac > 0.5);
        CHECK(frac <= 0.75);
    }

    TEST_CASE("mask view equals the rebuilt view exactly") {
        Rng rng(337);
        for (int trial = 0; trial < 10; ++trial) {
            ModelGraph m = random_cnn(rng);
            random_mask(m, rng);
            ModelGraph rebuilt = rebuild_without_masked(m);
            CHECK(compute_flops(m, true).total_macs == compute_flops(rebuilt, false).total_macs);
        }
    }

    TEST_CASE("pruning never increases the MAC count") {
        Rng rng(341);
        ModelGraph m = random_cnn(rng);
        const std::int64_t before = compute_flops(m).total_macs;
        random_mask(m, rng);
        CHECK(compute_flops(m).total_macs <= before);
    }
}
