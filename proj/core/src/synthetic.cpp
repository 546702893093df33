#include "atelier/synthetic.hpp"

#include "atelier/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace atelier {

namespace {

using Rgb = std::array<double, 3>;

Rgb mix(const Rgb& a, const Rgb& b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

// Smoothstep-interpolated lattice noise on a g x g torus.
class ValueNoise {
public:
    ValueNoise(int grid, std::mt19937_64& rng) : grid_(grid), values_(static_cast<std::size_t>(grid * grid)) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& v : values_) v = u(rng);
    }

    double operator()(double x, double y) const {  // x, y in [0, 1)
        const double gx = x * grid_;
        const double gy = y * grid_;
        const int x0 = static_cast<int>(std::floor(gx));
        const int y0 = static_cast<int>(std::floor(gy));
        const double tx = smooth(gx - x0);
        const double ty = smooth(gy - y0);
        const double a = at(x0, y0) + (at(x0 + 1, y0) - at(x0, y0)) * tx;
        const double b = at(x0, y0 + 1) + (at(x0 + 1, y0 + 1) - at(x0, y0 + 1)) * tx;
        return a + (b - a) * ty;
    }

private:
    static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
    double at(int x, int y) const {
        x = ((x % grid_) + grid_) % grid_;
        y = ((y % grid_) + grid_) % grid_;
        return values_[static_cast<std::size_t>(y * grid_ + x)];
    }

    int grid_;
    std::vector<double> values_;
};

}  // namespace

Image synthetic_texture(std::uint64_t seed, int size) {
    if (size < 1) {
        throw InvalidArgument("texture size must be positive");
    }
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 0x1234567ull);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto color = [&] { return Rgb{u(rng), u(rng), u(rng)}; };
    constexpr double tau = 2.0 * std::numbers::pi;

    const int family = static_cast<int>(rng() % 5);
    const Rgb c0 = color();
    const Rgb c1 = color();
    const Rgb c2 = color();
    const double theta = u(rng) * std::numbers::pi;
    const double freq = 2.0 + u(rng) * 10.0;  // cycles per image
    const double freq2 = 2.0 + u(rng) * 10.0;
    const double phase = u(rng) * tau;
    const ValueNoise noise(4 + static_cast<int>(rng() % 8), rng);

    struct Blob {
        double x, y, r;
        Rgb c;
    };
    std::vector<Blob> blobs;
    if (family == 2) {
        const int count = 6 + static_cast<int>(rng() % 10);
        for (int i = 0; i < count; ++i) blobs.push_back({u(rng), u(rng), 0.04 + 0.12 * u(rng), color()});
    }

    Image image(size, size);
    std::normal_distribution<double> grain(0.0, 0.01);
    for (int r = 0; r < size; ++r) {
        const double y = (r + 0.5) / size;
        for (int c = 0; c < size; ++c) {
            const double x = (c + 0.5) / size;
            Rgb px{};
            switch (family) {
                case 0: {  // stripes
                    const double t = 0.5 + 0.5 * std::sin(tau * freq * (x * std::cos(theta) + y * std::sin(theta)) + phase);
                    px = mix(mix(c0, c1, t), c2, 0.3 * noise(x, y));
                    break;
                }
                case 1: {  // plaid
                    const double a = 0.5 + 0.5 * std::sin(tau * freq * x + phase);
                    const double b = 0.5 + 0.5 * std::sin(tau * freq2 * y);
                    px = mix(mix(c0, c1, a), c2, 0.6 * b);
                    break;
                }
                case 2: {  // blobs
                    px = mix(c0, c1, 0.3 * noise(x, y));
                    for (const auto& blob : blobs) {
                        const double d2 = (x - blob.x) * (x - blob.x) + (y - blob.y) * (y - blob.y);
                        px = mix(px, blob.c, std::exp(-d2 / (2.0 * blob.r * blob.r)));
                    }
                    break;
                }
                case 3: {  // value noise, two octaves
                    const double t = 0.7 * noise(x, y) + 0.3 * noise(std::fmod(2.0 * x, 1.0), std::fmod(2.0 * y, 1.0));
                    px = t < 0.5 ? mix(c0, c1, 2.0 * t) : mix(c1, c2, 2.0 * t - 1.0);
                    break;
                }
                default: {  // rings
                    const double cx = 0.5 + 0.3 * std::cos(phase);
                    const double cy = 0.5 + 0.3 * std::sin(phase);
                    const double d = std::hypot(x - cx, y - cy);
                    const double t = 0.5 + 0.5 * std::cos(tau * freq * d);
                    px = mix(mix(c0, c1, t), c2, 0.4 * noise(x, y));
                    break;
                }
            }
            for (int ch = 0; ch < 3; ++ch) {
                image.at(r, c, ch) = std::clamp(px[static_cast<std::size_t>(ch)] + grain(rng), 0.0, 1.0);
            }
        }
    }
    return image;
}

std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& directory, int count, int size,
                                                          std::uint64_t seed) {
    std::filesystem::create_directories(directory);
    std::vector<std::filesystem::path> paths;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "tex_%04d.png", i);
        paths.push_back(directory / name);
        write_png(synthetic_texture(seed + static_cast<std::uint64_t>(i), size), paths.back());
    }
    return paths;
}

}  // namespace atelier
