#include "atelier/reference_codec.hpp"

#include "atelier/codecs.hpp"
#include "atelier/error.hpp"
#include "atelier/synthetic.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <variant>

namespace atelier {

namespace {

// Just enough of the protobuf wire format to emit ONNX ModelProto messages.
class Message {
public:
    Message& varint(int field, std::uint64_t value) {
        key(field, 0);
        raw_varint(value);
        return *this;
    }
    Message& bytes(int field, std::string_view value) {
        key(field, 2);
        raw_varint(value.size());
        out_.append(value);
        return *this;
    }
    Message& message(int field, const Message& m) { return bytes(field, m.out_); }
    [[nodiscard]] const std::string& str() const { return out_; }

private:
    void key(int field, int wire) { raw_varint(static_cast<std::uint64_t>(field) << 3 | static_cast<unsigned>(wire)); }
    void raw_varint(std::uint64_t v) {
        while (v >= 0x80) {
            out_.push_back(static_cast<char>((v & 0x7f) | 0x80));
            v >>= 7;
        }
        out_.push_back(static_cast<char>(v));
    }
    std::string out_;
};

// ONNX field numbers.
namespace onnx {
constexpr int kModelIrVersion = 1, kModelProducer = 2, kModelGraph = 7, kModelOpset = 8;
constexpr int kOpsetVersion = 2;
constexpr int kGraphNode = 1, kGraphName = 2, kGraphInitializer = 5, kGraphInput = 11, kGraphOutput = 12;
constexpr int kNodeInput = 1, kNodeOutput = 2, kNodeName = 3, kNodeOpType = 4, kNodeAttribute = 5;
constexpr int kAttrName = 1, kAttrInts = 8, kAttrType = 20, kAttrTypeInts = 7;
constexpr int kTensorDims = 1, kTensorDataType = 2, kTensorName = 8, kTensorRawData = 9, kFloat = 1;
constexpr int kValueName = 1, kValueType = 2, kTypeTensor = 1, kTensorElemType = 1, kTensorShape = 2;
constexpr int kShapeDim = 1, kDimValue = 1, kDimParam = 2;
}  // namespace onnx

Message ints_attribute(const std::string& name, std::initializer_list<std::int64_t> values) {
    Message attr;
    attr.bytes(onnx::kAttrName, name);
    for (const auto v : values) attr.varint(onnx::kAttrInts, static_cast<std::uint64_t>(v));
    attr.varint(onnx::kAttrType, onnx::kAttrTypeInts);
    return attr;
}

Message tensor_value(const std::string& name, const std::array<std::variant<std::int64_t, std::string>, 4>& dims) {
    Message shape;
    for (const auto& d : dims) {
        Message dim;
        if (const auto* v = std::get_if<std::int64_t>(&d)) {
            dim.varint(onnx::kDimValue, static_cast<std::uint64_t>(*v));
        } else {
            dim.bytes(onnx::kDimParam, std::get<std::string>(d));
        }
        shape.message(onnx::kShapeDim, dim);
    }
    Message tensor_type;
    tensor_type.varint(onnx::kTensorElemType, onnx::kFloat).message(onnx::kTensorShape, shape);
    Message type;
    type.message(onnx::kTypeTensor, tensor_type);
    Message value;
    value.bytes(onnx::kValueName, name).message(onnx::kValueType, type);
    return value;
}

Message float_initializer(const std::string& name, const std::vector<std::int64_t>& dims,
                          const std::vector<float>& data) {
    Message t;
    for (const auto d : dims) t.varint(onnx::kTensorDims, static_cast<std::uint64_t>(d));
    t.varint(onnx::kTensorDataType, onnx::kFloat);
    t.bytes(onnx::kTensorName, name);
    std::string raw(data.size() * sizeof(float), '\0');
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &data[i], sizeof bits);
        for (int b = 0; b < 4; ++b) raw[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>(bits >> (8 * b));
    }
    t.bytes(onnx::kTensorRawData, raw);
    return t;
}

std::string model_bytes(const Message& graph) {
    Message opset;
    opset.bytes(1, "").varint(onnx::kOpsetVersion, 11);
    Message model;
    model.varint(onnx::kModelIrVersion, 6).bytes(onnx::kModelProducer, "atelier").message(onnx::kModelGraph, graph);
    model.message(onnx::kModelOpset, opset);
    return model.str();
}

// Weights [2q, 3, s, s]: q basis patches followed by their negatives.
std::vector<float> projection_weights(int s, int q) {
    std::vector<std::vector<double>> dct(static_cast<std::size_t>(s), std::vector<double>(static_cast<std::size_t>(s)));
    for (int k = 0; k < s; ++k) {
        const double a = k == 0 ? std::sqrt(1.0 / s) : std::sqrt(2.0 / s);
        for (int n = 0; n < s; ++n) {
            dct[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] =
                a * std::cos(std::numbers::pi * (2 * n + 1) * k / (2.0 * s));
        }
    }
    const double color[3][3] = {{1 / std::sqrt(3.0), 1 / std::sqrt(3.0), 1 / std::sqrt(3.0)},
                                {1 / std::sqrt(2.0), -1 / std::sqrt(2.0), 0.0},
                                {1 / std::sqrt(6.0), 1 / std::sqrt(6.0), -2 / std::sqrt(6.0)}};
    // Spatial frequencies ordered by u + v, then u.
    std::vector<std::pair<int, int>> freqs;
    for (int sum = 0; sum <= 2 * (s - 1); ++sum) {
        for (int u = 0; u < s; ++u) {
            const int v = sum - u;
            if (v >= 0 && v < s) freqs.emplace_back(u, v);
        }
    }
    if (q % 3 != 0 || q / 3 > static_cast<int>(freqs.size())) {
        throw InvalidArgument("reference codec: components must be 3 x (number of spatial frequencies kept)");
    }
    const std::size_t patch = static_cast<std::size_t>(3 * s * s);
    std::vector<float> w(static_cast<std::size_t>(2 * q) * patch);
    int o = 0;
    for (int f = 0; f < q / 3; ++f) {
        const auto [u, v] = freqs[static_cast<std::size_t>(f)];
        for (int k = 0; k < 3; ++k, ++o) {
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < s; ++y) {
                    for (int x = 0; x < s; ++x) {
                        const double value = color[k][c] * dct[static_cast<std::size_t>(u)][static_cast<std::size_t>(y)] *
                                             dct[static_cast<std::size_t>(v)][static_cast<std::size_t>(x)];
                        const std::size_t idx = static_cast<std::size_t>((c * s + y) * s + x);
                        w[static_cast<std::size_t>(o) * patch + idx] = static_cast<float>(value);
                        w[static_cast<std::size_t>(o + q) * patch + idx] = static_cast<float>(-value);
                    }
                }
            }
        }
    }
    return w;
}

std::string encoder_graph(int s, int q) {
    const std::int64_t out = 2 * q;
    Message conv;
    conv.bytes(onnx::kNodeInput, "image").bytes(onnx::kNodeInput, "W").bytes(onnx::kNodeOutput, "projected");
    conv.bytes(onnx::kNodeName, "project").bytes(onnx::kNodeOpType, "Conv");
    conv.message(onnx::kNodeAttribute, ints_attribute("kernel_shape", {s, s}));
    conv.message(onnx::kNodeAttribute, ints_attribute("strides", {s, s}));
    Message relu;
    relu.bytes(onnx::kNodeInput, "projected").bytes(onnx::kNodeOutput, "features");
    relu.bytes(onnx::kNodeName, "rectify").bytes(onnx::kNodeOpType, "Relu");

    Message graph;
    graph.message(onnx::kGraphNode, conv).message(onnx::kGraphNode, relu).bytes(onnx::kGraphName, "encoder");
    graph.message(onnx::kGraphInitializer, float_initializer("W", {out, 3, s, s}, projection_weights(s, q)));
    graph.message(onnx::kGraphInput, tensor_value("image", {std::int64_t{1}, std::int64_t{3}, "H", "W"}));
    graph.message(onnx::kGraphOutput, tensor_value("features", {std::int64_t{1}, out, "h", "w"}));
    return model_bytes(graph);
}

std::string decoder_graph(int s, int q) {
    const std::int64_t in = 2 * q;
    Message deconv;
    deconv.bytes(onnx::kNodeInput, "features").bytes(onnx::kNodeInput, "W").bytes(onnx::kNodeOutput, "image");
    deconv.bytes(onnx::kNodeName, "reconstruct").bytes(onnx::kNodeOpType, "ConvTranspose");
    deconv.message(onnx::kNodeAttribute, ints_attribute("kernel_shape", {s, s}));
    deconv.message(onnx::kNodeAttribute, ints_attribute("strides", {s, s}));

    Message graph;
    graph.message(onnx::kGraphNode, deconv).bytes(onnx::kGraphName, "decoder");
    graph.message(onnx::kGraphInitializer, float_initializer("W", {in, 3, s, s}, projection_weights(s, q)));
    graph.message(onnx::kGraphInput, tensor_value("features", {std::int64_t{1}, in, "h", "w"}));
    graph.message(onnx::kGraphOutput, tensor_value("image", {std::int64_t{1}, std::int64_t{3}, "H", "W"}));
    return model_bytes(graph);
}

}  // namespace

std::map<std::string, std::string> build_reference_codec(const ReferenceCodecOptions& options) {
    if (static_cast<int>(options.downsample.size()) != kLayerCount ||
        static_cast<int>(options.components.size()) != kLayerCount) {
        throw InvalidArgument("reference codec needs one downsample factor and component count per layer");
    }
    std::map<std::string, std::string> files;
    nlohmann::json manifest = {
        {"format", "atelier-codec"},
        {"version", 1},
        {"name", "reference-dct"},
        {"input", {{"mean", {0.485, 0.456, 0.406}}, {"std", {0.229, 0.224, 0.225}}}},
    };
    nlohmann::json layers = nlohmann::json::array();
    for (int l = 0; l < kLayerCount; ++l) {
        const int s = options.downsample[static_cast<std::size_t>(l)];
        const int q = options.components[static_cast<std::size_t>(l)];
        const std::string enc = "enc" + std::to_string(l + 1) + ".onnx";
        const std::string dec = "dec" + std::to_string(l + 1) + ".onnx";
        files[enc] = encoder_graph(s, q);
        files[dec] = decoder_graph(s, q);
        layers.push_back({{"name", "dct" + std::to_string(s) + "x" + std::to_string(s) + "_" + std::to_string(q)},
                          {"channels", 2 * q},
                          {"downsample", s},
                          {"encoder", enc},
                          {"decoder", dec}});
    }
    manifest["layers"] = layers;
    files["manifest.json"] = manifest.dump(2);

    // Measure the round trip of the graphs exactly as they will be loaded.
    const CodecStack stack = load_pretrained_codec(files, "reference-dct");
    const Image validation = synthetic_texture(options.validation_seed, options.validation_size);
    for (int l = 0; l < kLayerCount; ++l) {
        const double db = std::min(roundtrip_psnr(stack, l, validation), 99.0);
        manifest["layers"][static_cast<std::size_t>(l)]["roundtrip_psnr_db"] = std::round(db * 100.0) / 100.0;
        if (db < 25.0) {
            spdlog::warn("reference codec layer {} round-trip PSNR {:.2f} dB is below 25 dB", l + 1, db);
        }
    }
    files["manifest.json"] = manifest.dump(2);
    return files;
}

void write_reference_codec(const std::filesystem::path& path, const ReferenceCodecOptions& options) {
    const auto files = build_reference_codec(options);
    const std::string text = path.string();
    if (!text.empty() && text.back() == '/') {
        std::filesystem::create_directories(path);
        for (const auto& [name, content] : files) {
            std::ofstream out(path / name, std::ios::binary);
            out.write(content.data(), static_cast<std::streamsize>(content.size()));
            if (!out) throw Error("cannot write " + (path / name).string());
        }
        return;
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::string tar = write_tar(files);
    std::ofstream out(path, std::ios::binary);
    out.write(tar.data(), static_cast<std::streamsize>(tar.size()));
    if (!out) throw Error("cannot write " + path.string());
}

}  // namespace atelier
