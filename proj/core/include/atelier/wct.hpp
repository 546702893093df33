#pragma once

#include "atelier/archetypal.hpp"
#include "atelier/codecs.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace atelier {

struct StylizationParams {
    double gamma = 1.0;  // amount of stylization
    double delta = 1.0;  // trust in the running stylized image
    bool clamp = true;   // clamp the final image to [0, 1]

    /// Throws InvalidArgument unless both parameters lie in [0, 1].
    void validate() const;
};

/// Target side of the whitening-coloring transform: mu^s and (Sigma^s)^{1/2}.
struct ColoringOp {
    Vector mean;
    Matrix coloring;

    static ColoringOp from_stats(const LayerStats& target, double eps = kDefaultEigClamp);
};

/// Whitened content: W^c (F^c - mu^c), columns in the map's position order.
///
/// Uses the pseudo-inverse square root of the channel covariance; when there are
/// fewer positions than channels the equivalent position-Gram form is used.
/// Throws NumericError for a zero-variance map.
Matrix whiten(const Matrix& activations, double eps = kDefaultEigClamp);

/// C^s(F^c) = C^s W^c (F^c - mu^c) + mu^s. A zero-variance content map yields a
/// map filled with mu^s (logged).
FeatureMap color_transform(const FeatureMap& content, const LayerStats& target, double eps = kDefaultEigClamp);
FeatureMap color_transform(const FeatureMap& content, const ColoringOp& op, double eps = kDefaultEigClamp);

/// Per-layer encodings of a content image together with their whitened form,
/// reusable across stylizations of the same image.
struct ContentEncoding {
    std::vector<FeatureMap> features;
    std::vector<std::optional<Matrix>> whitened;  // empty for zero-variance maps
    int rows = 0;
    int cols = 0;
};

ContentEncoding encode_content(const CodecStack& codec, const Image& content, double eps = kDefaultEigClamp);

/// Intermediates of one layer of the proposed update, for inspection.
struct LayerTrace {
    int layer = 0;
    FeatureMap colored_running;  // C(e(I_{l+1}))
    FeatureMap colored_content;  // C(e(I^c))
    FeatureMap content;          // e(I^c)
    FeatureMap blended;          // what is decoded
};
using TraceSink = std::function<void(const LayerTrace&)>;

/// Coarse-to-fine update I_l = d_l(gamma (delta C(e(I_{l+1})) + (1 - delta) C(e(I^c))) + (1 - gamma) e(I^c)),
/// l = L..1, with I_{L+1} = I^c.
Image stylize(const Image& content, const StyleStats& style, const CodecStack& codec, const StylizationParams& params,
              const TraceSink& trace = {});
Image stylize(const ContentEncoding& content, const StyleStats& style, const CodecStack& codec,
              const StylizationParams& params, const TraceSink& trace = {});

/// Single-parameter update I_l = d_l(gamma C(e(I_{l+1})) + (1 - gamma) e(I_{l+1})).
Image stylize_baseline(const Image& content, const StyleStats& style, const CodecStack& codec, double gamma,
                       bool clamp = true);
Image stylize_baseline(const ContentEncoding& content, const StyleStats& style, const CodecStack& codec, double gamma,
                       bool clamp = true);

struct SynthesisOptions {
    int iterations = 3;
    int size = 512;
    bool clamp = true;
};

/// Repeated full-strength stylization of seeded uniform noise.
Image synthesize_texture(const StyleStats& style, const CodecStack& codec, std::uint64_t seed,
                         const SynthesisOptions& options = {});

/// Seeded uniform noise in [0, 1].
Image noise_image(int rows, int cols, std::uint64_t seed);

}  // namespace atelier
