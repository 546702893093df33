#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atelier {

/// RGB image, row-major interleaved, nominal range [0, 1].
class Image {
public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int rows, int cols, double fill = 0.0);

    [[nodiscard]] int rows() const { return rows_; }
    [[nodiscard]] int cols() const { return cols_; }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] double& at(int r, int c, int ch) { return data_[index(r, c, ch)]; }
    [[nodiscard]] double at(int r, int c, int ch) const { return data_[index(r, c, ch)]; }

    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }

    [[nodiscard]] Image clamped() const;
    [[nodiscard]] double max_abs_difference(const Image& other) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    [[nodiscard]] std::size_t index(int r, int c, int ch) const {
        return (static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c)) *
                   kChannels +
               static_cast<std::size_t>(ch);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// How images are resized before statistics are computed.
struct ResizePolicy {
    enum class Kind { None, ShortSide };
    Kind kind = Kind::ShortSide;
    int size = 512;

    /// "none" or "short:<pixels>"
    static ResizePolicy parse(std::string_view text);
    [[nodiscard]] std::string to_string() const;
    [[nodiscard]] Image apply(const Image& image) const;

    friend bool operator==(const ResizePolicy&, const ResizePolicy&) = default;
};

/// Decodes PNG or JPEG bytes. Throws InvalidArgument for anything else.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

/// 8-bit RGB PNG of the image (values clamped to [0, 1] and rounded).
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);

/// Area-averaging downscale / bicubic upscale so the shorter side equals `target`.
Image resize_short_side(const Image& image, int target);

/// Peak signal-to-noise ratio in dB for signals in [0, 1].
double psnr(const Image& reference, const Image& test);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace atelier
