#include "iplt/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace iplt {

namespace {

constexpr char kMagic[8] = {'I', 'P', 'L', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

enum class LayerTag : std::uint8_t {
    Conv = 0,
    BatchNorm = 1,
    Relu = 2,
    MaxPool = 3,
    Flatten = 4,
    FullyConnected = 5,
};

struct Writer {
    std::vector<std::uint8_t> bytes;

    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::int64_t d : t.shape()) i64(d);
        for (std::int64_t i = 0; i < t.size(); ++i) f64(t[i]);
    }
};

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) {
            throw CheckpointError(CheckpointError::Kind::Truncated,
                                  "checkpoint truncated at byte " + std::to_string(pos));
        }
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape) d = i64();
        const std::int64_t n = shape_product(shape);
        std::vector<scalar> data(static_cast<std::size_t>(n));
        for (auto& v : data) v = f64();
        return Tensor(std::move(shape), std::move(data));
    }
};

std::uint32_t crc_of(const std::vector<std::uint8_t>& bytes, std::size_t n) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelGraph& model) {
    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kVersion);
    w.str(model.name);
    w.u64(model.creation_seed);
    w.i64(model.epoch);
    for (std::int64_t d : model.input_shape) w.i64(d);
    w.str(model.rng.serialize());
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const LayerSpec& layer : model.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            w.u8(static_cast<std::uint8_t>(LayerTag::Conv));
            w.u32(static_cast<std::uint32_t>(conv->params.stride));
            w.u32(static_cast<std::uint32_t>(conv->params.padding));
            w.tensor(conv->params.weights);
            w.tensor(conv->params.bias);
            w.u32(static_cast<std::uint32_t>(conv->alive.size()));
            for (auto a : conv->alive) w.u8(a ? 1 : 0);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            w.u8(static_cast<std::uint8_t>(LayerTag::BatchNorm));
            w.f64(bn->eps);
            w.f64(bn->momentum);
            w.tensor(bn->gamma);
            w.tensor(bn->beta);
            w.tensor(bn->running_mean);
            w.tensor(bn->running_var);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            w.u8(static_cast<std::uint8_t>(LayerTag::Relu));
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
            w.u8(static_cast<std::uint8_t>(LayerTag::MaxPool));
            w.u32(static_cast<std::uint32_t>(pool->window));
            w.u32(static_cast<std::uint32_t>(pool->stride));
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            w.u8(static_cast<std::uint8_t>(LayerTag::Flatten));
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            w.u8(static_cast<std::uint8_t>(LayerTag::FullyConnected));
            w.tensor(fc->weights);
            w.tensor(fc->bias);
        }
    }
    w.u32(crc_of(w.bytes, w.bytes.size()));
    return std::move(w.bytes);
}

ModelGraph deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof(kMagic) + 8) {
        throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint too short");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError(CheckpointError::Kind::BadMagic, "not an IPLT checkpoint");
    }
    // CRC is little-endian like every other integer here.
    const std::uint32_t stored =
        static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
        static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
        static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
        static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
    if (crc_of(bytes, bytes.size() - 4) != stored) {
        throw CheckpointError(CheckpointError::Kind::BadChecksum, "checkpoint CRC mismatch");
    }

    Reader r{bytes};
    r.pos = sizeof(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw CheckpointError(CheckpointError::Kind::BadVersion,
                              "unsupported checkpoint version " + std::to_string(version));
    }
    ModelGraph model;
    model.name = r.str();
    model.creation_seed = r.u64();
    model.epoch = r.i64();
    for (auto& d : model.input_shape) d = r.i64();
    model.rng.restore(r.str());
    const std::uint32_t layer_count = r.u32();
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const auto tag = static_cast<LayerTag>(r.u8());
        switch (tag) {
            case LayerTag::Conv: {
                ConvLayer conv;
                conv.params.stride = static_cast<int>(r.u32());
                conv.params.padding = static_cast<int>(r.u32());
                conv.params.weights = r.tensor();
                conv.params.bias = r.tensor();
                const std::uint32_t n = r.u32();
                conv.alive.resize(n);
                for (auto& a : conv.alive) a = r.u8();
                model.layers.push_back(std::move(conv));
                break;
            }
            case LayerTag::BatchNorm: {
                BatchNormLayer bn;
                bn.eps = r.f64();
                bn.momentum = r.f64();
                bn.gamma = r.tensor();
                bn.beta = r.tensor();
                bn.running_mean = r.tensor();
                bn.running_var = r.tensor();
                model.layers.push_back(std::move(bn));
                break;
            }
            case LayerTag::Relu:
                model.layers.push_back(ReluLayer{});
                break;
            case LayerTag::MaxPool: {
                MaxPoolLayer pool;
                pool.window = static_cast<int>(r.u32());
                pool.stride = static_cast<int>(r.u32());
                model.layers.push_back(pool);
                break;
            }
            case LayerTag::Flatten:
                model.layers.push_back(FlattenLayer{});
                break;
            case LayerTag::FullyConnected: {
                FullyConnectedLayer fc;
                fc.weights = r.tensor();
                fc.bias = r.tensor();
                model.layers.push_back(std::move(fc));
                break;
            }
            default:
                throw CheckpointError(CheckpointError::Kind::Truncated,
                                      "unknown layer tag " + std::to_string(static_cast<int>(tag)));
        }
    }
    return model;
}

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path.string() +
                                                             " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw CheckpointError(CheckpointError::Kind::Io, "write failed for " + path.string());
    }
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace iplt
