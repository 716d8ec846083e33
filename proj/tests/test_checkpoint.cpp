#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "iplt/checkpoint.hpp"
#include "iplt/pruner.hpp"
#include "testutil.hpp"

using namespace iplt;
using namespace testutil;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("checkpoint") {
    TEST_CASE("save, load, save again is byte-identical") {
        ModelGraph m = make_mnist_cnn(21);
        m.epoch = 5;
        const auto bytes1 = serialize_checkpoint(m);
        ModelGraph loaded = deserialize_checkpoint(bytes1);
        const auto bytes2 = serialize_checkpoint(loaded);
        CHECK(bytes1 == bytes2);
        CHECK(loaded.name == m.name);
        CHECK(loaded.epoch == 5);
        CHECK(loaded.creation_seed == 21);
        CHECK(loaded.rng == m.rng);
    }

    TEST_CASE("file round trip preserves eval behaviour exactly") {
        ModelGraph m = make_toy_cnn(23);
        const auto path = temp_file("iplt_test_roundtrip.ckpt");
        save_checkpoint(m, path);
        ModelGraph loaded = load_checkpoint(path);
        Rng rng(10);
        Tensor x = random_input_for(m, rng);
        CHECK(forward(m, x, Mode::Eval) == forward(loaded, x, Mode::Eval));
        std::filesystem::remove(path);
    }

    TEST_CASE("truncated files fail with a truncation/checksum error") {
        ModelGraph m = make_toy_cnn(29);
        auto bytes = serialize_checkpoint(m);
        bytes.resize(bytes.size() / 2);
        CHECK_THROWS_AS(deserialize_checkpoint(bytes), CheckpointError);
        try {
            deserialize_checkpoint(bytes);
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::BadChecksum);
        }
    }

    TEST_CASE("flipping one payload byte fails the CRC") {
        ModelGraph m = make_toy_cnn(31);
        auto bytes = serialize_checkpoint(m);
        bytes[bytes.size() / 2] ^= 0x40;
        try {
            deserialize_checkpoint(bytes);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::BadChecksum);
        }
    }

    TEST_CASE("wrong magic and wrong version are distinct errors") {
        ModelGraph m = make_toy_cnn(37);
        auto bytes = serialize_checkpoint(m);
        auto bad_magic = bytes;
        bad_magic[0] = 'X';
        try {
            deserialize_checkpoint(bad_magic);
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == CheckpointError::Kind::BadMagic);
        }
    }

    TEST_CASE("a pruned, rebuilt model reloads with reduced channel counts") {
        ModelGraph m = make_toy_cnn(41);
        Selection sel;
        sel.picks.push_back({0, 1, 0.0});
        sel.picks.push_back({0, 3, 0.0});
        sel.picks.push_back({4, 0, 0.0});
        apply_mask(m, sel);
        ModelGraph rebuilt = rebuild_without_masked(m);
        const auto path = temp_file("iplt_test_pruned.ckpt");
        save_checkpoint(rebuilt, path);
        ModelGraph loaded = load_checkpoint(path);
        CHECK(loaded.conv_at(0).out_channels() == 6);
        CHECK(loaded.conv_at(4).out_channels() == 7);
        CHECK(loaded.conv_at(4).in_channels() == 6);
        CHECK(serialize_checkpoint(loaded) == serialize_checkpoint(rebuilt));
        std::filesystem::remove(path);
    }

    TEST_CASE("masked-but-not-rebuilt checkpoints keep the mask") {
        ModelGraph m = make_toy_cnn(43);
        Selection sel;
        sel.picks.push_back({0, 5, 0.0});
        apply_mask(m, sel);
        ModelGraph loaded = deserialize_checkpoint(serialize_checkpoint(m));
        CHECK(loaded.conv_at(0).alive_count() == 7);
        CHECK(loaded.conv_at(0).alive[5] == 0);
    }
}
