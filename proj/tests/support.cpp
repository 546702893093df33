#include "support.hpp"

#include <array>
#include <atomic>
#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

namespace atelier::testing {

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
    }
    return m;
}

Vector random_simplex(Eigen::Index k, std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    Vector v(k);
    for (Eigen::Index i = 0; i < k; ++i) v[i] = e(rng);
    return v / v.sum();
}

Matrix random_spd(Eigen::Index p, std::mt19937_64& rng, double lo, double hi) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(p, p, rng));
    const Matrix q = qr.householderQ();
    std::uniform_real_distribution<double> u(lo, hi);
    Vector lambda(p);
    for (Eigen::Index i = 0; i < p; ++i) lambda[i] = u(rng);
    Matrix s = q * lambda.asDiagonal() * q.transpose();
    return (s + s.transpose()) / 2.0;
}

Image random_image(int rows, int cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(rows, cols);
    for (auto& v : img.values()) v = u(rng);
    return img;
}

double relative_frobenius(const Matrix& a, const Matrix& b) {
    const double scale = b.norm();
    return scale > 0.0 ? (a - b).norm() / scale : (a - b).norm();
}

SmallModel small_model(int count, int size, Eigen::Index k, std::uint64_t seed) {
    SmallModel out{toy_codec(0), {}, {}};
    out.store.schema = out.codec.style_schema(ResizePolicy::parse("none"));
    for (int i = 0; i < count; ++i) {
        StoreEntry e;
        char name[32];
        std::snprintf(name, sizeof name, "tex_%04d.png", i);
        e.id = name;
        const Image img = synthetic_texture(seed + static_cast<std::uint64_t>(i), size);
        e.rows = e.source_rows = img.rows();
        e.cols = e.source_cols = img.cols();
        e.stats = quantize_stats(out.codec.image_stats(img));
        out.store.entries.push_back(std::move(e));
    }
    ModelFitOptions options;
    options.k = k;
    options.archetypes.seed = seed;
    out.model = fit_model(out.store.stats(), out.store.ids(), out.store.schema, options);
    return out;
}

std::filesystem::path cli_path() { return ATELIER_CLI_PATH; }

int run(const std::string& command, std::string* out) {
    FILE* pipe = ::popen(command.c_str(), "r");
    if (!pipe) return -1;
    std::array<char, 4096> buffer{};
    std::string captured;
    std::size_t n = 0;
    while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0) captured.append(buffer.data(), n);
    const int status = ::pclose(pipe);
    if (out) *out = std::move(captured);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace atelier::testing
