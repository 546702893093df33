#include "atelier/wct.hpp"

#include "atelier/error.hpp"

#include <spdlog/spdlog.h>

#include <random>

namespace atelier {

void StylizationParams::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw InvalidArgument("gamma must lie in [0, 1], got " + std::to_string(gamma));
    }
    if (!(delta >= 0.0 && delta <= 1.0)) {
        throw InvalidArgument("delta must lie in [0, 1], got " + std::to_string(delta));
    }
}

ColoringOp ColoringOp::from_stats(const LayerStats& target, double eps) {
    if (target.covariance.rows() != target.mean.size() || target.covariance.cols() != target.mean.size()) {
        throw InvalidArgument("target statistics are inconsistent");
    }
    ColoringOp op;
    op.mean = target.mean;
    // An all-zero target covariance legitimately colors to a constant map.
    op.coloring = target.covariance.cwiseAbs().maxCoeff() > 0.0
                      ? sym_matrix_power(target.covariance, MatrixPower::Sqrt, eps)
                      : Matrix::Zero(target.mean.size(), target.mean.size());
    return op;
}

Matrix whiten(const Matrix& activations, double eps) {
    require_finite(activations, "feature map");
    const Eigen::Index p = activations.rows();
    const Eigen::Index m = activations.cols();
    if (m == 0) {
        throw InvalidArgument("feature map has no positions");
    }
    const Vector mean = activations.rowwise().mean();
    const Matrix centered = activations.colwise() - mean;
    const double inv_m = 1.0 / static_cast<double>(m);
    if (m < p) {
        // Sigma^{-1/2} F = F G^{-1/2} with G = F^T F / m, which is m x m.
        const Matrix gram = (centered.transpose() * centered) * inv_m;
        return centered * sym_matrix_power(gram, MatrixPower::InvSqrt, eps);
    }
    const Matrix cov = (centered * centered.transpose()) * inv_m;
    return sym_matrix_power(cov, MatrixPower::InvSqrt, eps) * centered;
}

namespace {

std::optional<Matrix> try_whiten(const Matrix& activations, double eps) {
    try {
        return whiten(activations, eps);
    } catch (const NumericError& e) {
        spdlog::warn("whitening degenerate ({}); coloring to the target mean only", e.what());
        return std::nullopt;
    }
}

FeatureMap colored(const FeatureMap& geometry, const std::optional<Matrix>& white, const ColoringOp& op) {
    FeatureMap out = geometry;
    if (white) {
        out.activations = op.coloring * *white;
        out.activations.colwise() += op.mean;
    } else {
        out.activations = op.mean.replicate(1, geometry.positions());
    }
    return out;
}

void check_style(const StyleStats& style, const CodecStack& codec) {
    if (schema_of(style) != codec.schema()) {
        throw SchemaMismatch("style statistics do not match the codec's layer schema");
    }
}

struct Term {
    double weight;
    const FeatureMap* map;
};

// Weighted sum of the terms with nonzero weight. Both update rules go through
// here so that equal weights produce bit-identical results.
FeatureMap blend(std::initializer_list<Term> terms) {
    const FeatureMap* geometry = nullptr;
    Matrix sum;
    for (const auto& term : terms) {
        if (term.weight == 0.0) continue;
        if (!geometry) {
            geometry = term.map;
            sum = term.weight * term.map->activations;
        } else {
            sum += term.weight * term.map->activations;
        }
    }
    if (!geometry) {
        throw InvalidArgument("blend of zero-weight terms");
    }
    FeatureMap out = *geometry;
    out.activations = std::move(sum);
    return out;
}

}  // namespace

FeatureMap color_transform(const FeatureMap& content, const ColoringOp& op, double eps) {
    if (content.channels() != op.mean.size()) {
        throw SchemaMismatch("color_transform: content has " + std::to_string(content.channels()) +
                             " channels, target has " + std::to_string(op.mean.size()));
    }
    return colored(content, try_whiten(content.activations, eps), op);
}

FeatureMap color_transform(const FeatureMap& content, const LayerStats& target, double eps) {
    if (content.channels() != target.channels()) {
        throw SchemaMismatch("color_transform: content has " + std::to_string(content.channels()) +
                             " channels, target has " + std::to_string(target.channels()));
    }
    return color_transform(content, ColoringOp::from_stats(target, eps), eps);
}

ContentEncoding encode_content(const CodecStack& codec, const Image& content, double eps) {
    ContentEncoding out;
    out.rows = content.rows();
    out.cols = content.cols();
    out.features = codec.encode_all(content);
    for (const auto& map : out.features) out.whitened.push_back(try_whiten(map.activations, eps));
    return out;
}

Image stylize(const Image& content, const StyleStats& style, const CodecStack& codec, const StylizationParams& params,
              const TraceSink& trace) {
    params.validate();
    check_style(style, codec);
    return stylize(encode_content(codec, content), style, codec, params, trace);
}

Image stylize(const ContentEncoding& content, const StyleStats& style, const CodecStack& codec,
              const StylizationParams& params, const TraceSink& trace) {
    params.validate();
    check_style(style, codec);
    const double g = params.gamma;
    const double d = params.delta;
    Image running;
    for (int l = codec.layers() - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        const FeatureMap& ec = content.features[li];
        const ColoringOp op = ColoringOp::from_stats(style[li]);

        const bool need_running = g * d != 0.0 || trace;
        const bool need_content = g * (1.0 - d) != 0.0 || trace;
        FeatureMap c_running;
        if (need_running) {
            if (l == codec.layers() - 1) {
                c_running = colored(ec, content.whitened[li], op);
            } else {
                c_running = color_transform(codec.encode(l, running), op);
            }
        }
        FeatureMap c_content;
        if (need_content) c_content = colored(ec, content.whitened[li], op);

        FeatureMap mixed = blend({{g * d, &c_running}, {g * (1.0 - d), &c_content}, {1.0 - g, &ec}});
        if (trace) trace(LayerTrace{l, c_running, c_content, ec, mixed});
        running = codec.decode(mixed);
    }
    return params.clamp ? running.clamped() : running;
}

Image stylize_baseline(const Image& content, const StyleStats& style, const CodecStack& codec, double gamma,
                       bool clamp) {
    StylizationParams{gamma, 1.0, clamp}.validate();
    check_style(style, codec);
    return stylize_baseline(encode_content(codec, content), style, codec, gamma, clamp);
}

Image stylize_baseline(const ContentEncoding& content, const StyleStats& style, const CodecStack& codec, double gamma,
                       bool clamp) {
    StylizationParams{gamma, 1.0, clamp}.validate();
    check_style(style, codec);
    Image running;
    for (int l = codec.layers() - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        const ColoringOp op = ColoringOp::from_stats(style[li]);
        const bool top = l == codec.layers() - 1;
        const FeatureMap e = top ? content.features[li] : codec.encode(l, running);
        FeatureMap c;
        if (gamma != 0.0) c = top ? colored(e, content.whitened[li], op) : color_transform(e, op);
        running = codec.decode(blend({{gamma, &c}, {1.0 - gamma, &e}}));
    }
    return clamp ? running.clamped() : running;
}

Image noise_image(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image out(rows, cols);
    for (auto& v : out.values()) v = u(rng);
    return out;
}

Image synthesize_texture(const StyleStats& style, const CodecStack& codec, std::uint64_t seed,
                         const SynthesisOptions& options) {
    if (options.iterations < 1) {
        throw InvalidArgument("texture synthesis needs at least one iteration");
    }
    if (options.size < 1) {
        throw InvalidArgument("texture size must be positive");
    }
    check_style(style, codec);
    Image image = noise_image(options.size, options.size, seed);
    const StylizationParams full{1.0, 1.0, false};
    for (int it = 0; it < options.iterations; ++it) image = stylize(image, style, codec, full);
    return options.clamp ? image.clamped() : image;
}

}  // namespace atelier
