#include "atelier/archetypal.hpp"
#include "atelier/codecs.hpp"
#include "atelier/synthetic.hpp"
#include "atelier/wct.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace atelier;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

}  // namespace

static void BM_SimplexLsq(benchmark::State& state) {
    const Eigen::Index k = state.range(0);
    const Matrix z = gaussian(2 * k, k, 1);
    const Vector x = gaussian(2 * k, 1, 2).col(0);
    for (auto _ : state) benchmark::DoNotOptimize(simplex_lsq(z, x));
}
BENCHMARK(BM_SimplexLsq)->Arg(8)->Arg(32)->Arg(128);

static void BM_InverseSqrt(benchmark::State& state) {
    const Eigen::Index p = state.range(0);
    const Matrix f = gaussian(p, 2 * p, 3);
    const Matrix cov = f * f.transpose() / static_cast<double>(2 * p);
    for (auto _ : state) benchmark::DoNotOptimize(sym_matrix_power(cov, MatrixPower::InvSqrt));
}
BENCHMARK(BM_InverseSqrt)->Arg(48)->Arg(192)->Arg(512);

static void BM_ColorTransform(benchmark::State& state) {
    const Eigen::Index p = state.range(0);
    FeatureMap content;
    content.activations = gaussian(p, 4096, 4);
    content.grid_rows = 64;
    content.grid_cols = 64;
    const LayerStats target = compute_layer_stats(gaussian(p, 4 * p, 5));
    for (auto _ : state) benchmark::DoNotOptimize(color_transform(content, target));
}
BENCHMARK(BM_ColorTransform)->Arg(12)->Arg(48)->Arg(192);

static void BM_FitArchetypes(benchmark::State& state) {
    const Matrix x = gaussian(32, state.range(0), 6);
    for (auto _ : state) benchmark::DoNotOptimize(fit_archetypes(x, 8));
}
BENCHMARK(BM_FitArchetypes)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

static void BM_Stylize(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const CodecStack codec = toy_codec(0);
    const Image content = synthetic_texture(1, size);
    const StyleStats style = codec.image_stats(synthetic_texture(2, size));
    const ContentEncoding enc = encode_content(codec, content);
    for (auto _ : state) benchmark::DoNotOptimize(stylize(enc, style, codec, {0.7, 0.7, true}));
}
BENCHMARK(BM_Stylize)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
