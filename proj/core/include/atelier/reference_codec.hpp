#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace atelier {

/// Parameters of the bundled reference codec: a fixed, non-learned stand-in for
/// published encoder/decoder weights, expressed in the same ONNX container.
///
/// Layer l projects each downsample_l x downsample_l patch onto its lowest
/// `components_l` DCT x opponent-color basis functions. The encoder emits the
/// rectified positive and negative parts (2 x components channels, Conv + Relu);
/// the decoder is the matching ConvTranspose, so d(e(I)) is a lossy projection.
struct ReferenceCodecOptions {
    std::vector<int> downsample{1, 2, 4, 8, 16};
    std::vector<int> components{3, 9, 24, 48, 96};
    std::uint64_t validation_seed = 7;
    int validation_size = 128;
};

/// Archive members (manifest.json, enc1.onnx .. dec5.onnx). The manifest records
/// the round-trip PSNR of each layer on a seeded validation texture.
std::map<std::string, std::string> build_reference_codec(const ReferenceCodecOptions& options = {});

/// Writes the bundle as a tar archive (or a directory when `path` ends in '/').
void write_reference_codec(const std::filesystem::path& path, const ReferenceCodecOptions& options = {});

}  // namespace atelier
