#include "atelier/image.hpp"

#include "atelier/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace atelier {

Image::Image(int rows, int cols, double fill) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) {
        throw InvalidArgument("image dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * kChannels, fill);
}

Image Image::clamped() const {
    Image out = *this;
    for (double& v : out.data_) v = std::clamp(v, 0.0, 1.0);
    return out;
}

double Image::max_abs_difference(const Image& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw InvalidArgument("max_abs_difference: image sizes differ");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) worst = std::max(worst, std::abs(data_[i] - other.data_[i]));
    return worst;
}

ResizePolicy ResizePolicy::parse(std::string_view text) {
    if (text == "none") return {Kind::None, 0};
    constexpr std::string_view prefix = "short:";
    if (text.starts_with(prefix)) {
        int size = 0;
        const auto digits = text.substr(prefix.size());
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), size);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && size > 0) return {Kind::ShortSide, size};
    }
    throw InvalidArgument("resize policy must be 'none' or 'short:<pixels>', got '" + std::string(text) + "'");
}

std::string ResizePolicy::to_string() const {
    return kind == Kind::None ? "none" : "short:" + std::to_string(size);
}

Image ResizePolicy::apply(const Image& image) const {
    if (kind == Kind::None) return image;
    return resize_short_side(image, size);
}

namespace {

cv::Mat to_mat(const Image& image) {
    cv::Mat mat(image.rows(), image.cols(), CV_64FC3);
    std::copy(image.values().begin(), image.values().end(), mat.ptr<double>());
    return mat;
}

Image from_mat(const cv::Mat& mat) {
    cv::Mat converted;
    mat.convertTo(converted, CV_64FC3);
    Image out(converted.rows, converted.cols);
    const auto* src = converted.ptr<double>();
    std::copy(src, src + out.values().size(), out.values().begin());
    return out;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) {
        throw InvalidArgument("not a decodable image: empty input");
    }
    const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat decoded;
    try {
        decoded = cv::imdecode(buffer, cv::IMREAD_COLOR | cv::IMREAD_ANYDEPTH);
    } catch (const cv::Exception& e) {
        throw InvalidArgument(std::string("not a decodable image: ") + e.what());
    }
    if (decoded.empty()) {
        throw InvalidArgument("not a decodable image (PNG or JPEG expected)");
    }
    cv::Mat rgb;
    cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
    const double scale = rgb.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
    cv::Mat unit;
    rgb.convertTo(unit, CV_64FC3, scale);
    return from_mat(unit);
}

Image read_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_image(bytes);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    if (image.empty()) {
        throw InvalidArgument("encode_png: empty image");
    }
    cv::Mat bytes(image.rows(), image.cols(), CV_8UC3);
    for (int r = 0; r < image.rows(); ++r) {
        auto* row = bytes.ptr<std::uint8_t>(r);
        for (int c = 0; c < image.cols(); ++c) {
            // Stored as BGR for OpenCV.
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(image.at(r, c, ch), 0.0, 1.0);
                row[c * 3 + (2 - ch)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", bytes, out)) {
        throw Error("encode_png: PNG encoder failed");
    }
    return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    write_file_bytes(path, bytes);
}

Image resize_short_side(const Image& image, int target) {
    if (target < 1) {
        throw InvalidArgument("resize_short_side: target must be positive");
    }
    const int short_side = std::min(image.rows(), image.cols());
    if (short_side == target) return image;
    const double scale = static_cast<double>(target) / short_side;
    const int rows = std::max(1, static_cast<int>(std::lround(image.rows() * scale)));
    const int cols = std::max(1, static_cast<int>(std::lround(image.cols() * scale)));
    cv::Mat resized;
    cv::resize(to_mat(image), resized, cv::Size(cols, rows), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_CUBIC);
    return from_mat(resized);
}

double psnr(const Image& reference, const Image& test) {
    if (reference.rows() != test.rows() || reference.cols() != test.cols()) {
        throw InvalidArgument("psnr: image sizes differ");
    }
    double sum = 0.0;
    const auto a = reference.values();
    const auto b = test.values();
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = sum / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidArgument("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("short write to " + path.string());
    }
}

}  // namespace atelier
