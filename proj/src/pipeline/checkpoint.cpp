#include "twoshot/pipeline/checkpoint.hpp"

#include "twoshot/util/binary_io.hpp"

#include <stdexcept>

namespace twoshot::pipeline {

namespace {
constexpr std::uint32_t kVersion = 1;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    BinaryWriter w;
    w.magic("TSVL");
    w.u32(kVersion);
    w.u64(ckpt.iteration);
    w.u8(ckpt.phase);
    w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        w.str(name);
        if (t.rank() > 255) throw std::invalid_argument("checkpoint: rank too large for '" + name + "'");
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : t.data()) w.f32(v);
    }
    return w.buffer();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    BinaryReader r(bytes, "checkpoint");
    r.expect_magic("TSVL");
    const auto version = r.u32();
    if (version != kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.iteration = r.u64();
    c.phase = r.u8();
    if (c.phase > 4) r.fail("bad phase tag " + std::to_string(c.phase));
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto name = r.str();
        if (c.params.contains(name)) r.fail("duplicate entry '" + name + "'");
        const auto rank = r.u8();
        ad::Shape shape;
        std::size_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            shape.push_back(r.u32());
            numel *= shape.back();
            if (numel > (std::size_t{1} << 28)) r.fail("entry '" + name + "' too large");
        }
        if (r.remaining() < numel * 4) r.fail("truncated payload for '" + name + "'");
        std::vector<float> v(numel);
        for (auto& x : v) x = r.f32();
        c.params.add(name, ad::Tensor<float>(shape, std::move(v), true));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) { write_file_bytes(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) {
    try {
        return decode_checkpoint(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

model::ModelConfig infer_model_config(const ad::ParameterSet<float>& params, int max_objects) {
    auto out_channels = [&](const std::string& name) {
        if (!params.contains(name)) throw std::invalid_argument("checkpoint lacks '" + name + "'");
        return static_cast<int>(params.at(name).dim(0));
    };
    model::ModelConfig cfg;
    cfg.key_channels = out_channels("key_enc.proj.weight");
    cfg.value_channels = out_channels("value_enc.proj.weight");
    cfg.hidden_channels = out_channels("key_enc.conv1.weight");
    cfg.max_objects = max_objects;
    return cfg;
}

}  // namespace twoshot::pipeline
