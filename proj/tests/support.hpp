#pragma once

#include "atelier/archetypal.hpp"
#include "atelier/codecs.hpp"
#include "atelier/corpus.hpp"
#include "atelier/synthetic.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace atelier::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "atelier");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
Vector random_simplex(Eigen::Index k, std::mt19937_64& rng);
/// Random SPD matrix with eigenvalues spread over [lo, hi].
Matrix random_spd(Eigen::Index p, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0);
Image random_image(int rows, int cols, std::mt19937_64& rng);

double relative_frobenius(const Matrix& a, const Matrix& b);

/// Small toy-codec model over `count` synthetic textures, fitted in memory.
struct SmallModel {
    CodecStack codec;
    StyleStore store;
    ArchetypeModel model;
};
SmallModel small_model(int count = 12, int size = 48, Eigen::Index k = 4, std::uint64_t seed = 0);

/// Path of the built `atelier` executable (set at configure time).
std::filesystem::path cli_path();

/// Runs a shell command, returning its exit status; stdout is captured into `out` if given.
int run(const std::string& command, std::string* out = nullptr);

}  // namespace atelier::testing
