#pragma once

#include "atelier/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace atelier {

/// Seeded procedural texture (stripes, plaid, blobs, value noise or rings with a
/// random palette and a little fine grain). Same seed, same pixels.
Image synthetic_texture(std::uint64_t seed, int size = 128);

/// Writes `count` textures as tex_0000.png ... into `directory` (created if needed).
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& directory, int count,
                                                          int size = 128, std::uint64_t seed = 0);

}  // namespace atelier
