#pragma once

#include "atelier/image.hpp"
#include "atelier/style_stats.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace atelier {

inline constexpr int kLayerCount = 5;

enum class CodecKind { Toy, Pretrained };
enum class ReconstructionContract { Exact, Approximate };

std::string to_string(CodecKind kind);

struct LayerSpec {
    std::string name;
    Eigen::Index channels = 0;
    int downsample = 1;  // feature grid cell size in pixels
};

/// Encoder/decoder pair implementation for all layers of a stack.
class CodecBackend {
public:
    virtual ~CodecBackend() = default;
    /// Encodes an image at `layer`. Images are reflect-padded to a multiple of the
    /// layer's downsample factor; the unpadded size is recorded in the map.
    [[nodiscard]] virtual FeatureMap encode(int layer, const Image& image) const = 0;
    /// Decodes a map produced (or derived) from `encode` back to the recorded image size.
    [[nodiscard]] virtual Image decode(const FeatureMap& map) const = 0;
};

/// L = 5 paired encoders e_l and decoders d_l. Immutable and safe to share
/// between threads; copies share the backend.
class CodecStack {
public:
    CodecStack(CodecKind kind, ReconstructionContract contract, std::vector<LayerSpec> layers, std::string id,
               std::shared_ptr<const CodecBackend> backend);

    [[nodiscard]] CodecKind kind() const { return kind_; }
    [[nodiscard]] ReconstructionContract contract() const { return contract_; }
    [[nodiscard]] const std::string& id() const { return id_; }
    [[nodiscard]] int layers() const { return static_cast<int>(layers_.size()); }
    [[nodiscard]] const std::vector<LayerSpec>& layer_specs() const { return layers_; }
    [[nodiscard]] LayerSchema schema() const;

    [[nodiscard]] FeatureMap encode(int layer, const Image& image) const;
    [[nodiscard]] Image decode(const FeatureMap& map) const;
    [[nodiscard]] std::vector<FeatureMap> encode_all(const Image& image) const;

    /// Per-layer mean/covariance of the image's feature maps.
    [[nodiscard]] StyleStats image_stats(const Image& image) const;

    /// Schema of a store or model built with this codec under `resize`.
    [[nodiscard]] StyleSchema style_schema(const ResizePolicy& resize) const;

private:
    CodecKind kind_;
    ReconstructionContract contract_;
    std::vector<LayerSpec> layers_;
    std::string id_;
    std::shared_ptr<const CodecBackend> backend_;
};

struct ToyCodecOptions {
    std::uint64_t seed = 0;
    std::vector<int> patch_sizes{1, 2, 4, 6, 8};
};

/// Exactly invertible codec: layer l maps each s_l x s_l patch (all channels)
/// through a seeded orthonormal matrix, so p_l = 3 s_l^2 and d_l(e_l(I)) = I.
CodecStack toy_codec(std::uint64_t seed = 0);
CodecStack toy_codec(const ToyCodecOptions& options);

/// Loads a pretrained codec: a tar archive or a directory holding manifest.json
/// plus ONNX graphs enc1..enc5 and dec1..dec5. Throws CodecLoadError.
CodecStack load_pretrained_codec(const std::filesystem::path& path);

/// Same, from in-memory files keyed by name.
CodecStack load_pretrained_codec(const std::map<std::string, std::string>& files, const std::string& origin);

/// Rebuilds a codec from its id ("toy:seed=0:patches=1,2,4,6,8" or "pretrained:<path>").
CodecStack codec_from_id(const std::string& id);

/// PSNR of d_l(e_l(image)) against the image.
double roundtrip_psnr(const CodecStack& codec, int layer, const Image& image);

/// Minimal ustar archive support used for codec bundles.
std::map<std::string, std::string> read_tar(const std::string& bytes);
std::string write_tar(const std::map<std::string, std::string>& files);

}  // namespace atelier
