#include "atelier/service.hpp"

#include "atelier/corpus.hpp"
#include "atelier/error.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace atelier {

using nlohmann::json;

SimplexVector normalize_user_alpha(const Vector& raw, Eigen::Index k) {
    if (raw.size() != k) {
        throw FieldError("alpha", "expected " + std::to_string(k) + " weights, got " + std::to_string(raw.size()));
    }
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i])) {
            throw FieldError("alpha", "weight " + std::to_string(i) + " is not a finite number");
        }
        if (raw[i] < 0.0) {
            throw FieldError("alpha", "weight " + std::to_string(i) + " is negative");
        }
    }
    const double sum = raw.sum();
    if (sum < 0.5 || sum > 2.0) {
        std::ostringstream msg;
        msg << "weights sum to " << sum << "; expected a sum within [0.5, 2] (renormalized to 1)";
        throw FieldError("alpha", msg.str());
    }
    return SimplexVector(raw / sum);
}

Vector parse_alpha_spec(const std::string& spec, Eigen::Index k) {
    Vector out = Vector::Zero(k);
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    std::stringstream parts(spec);
    std::string part;
    bool any = false;
    while (std::getline(parts, part, ',')) {
        if (part.empty()) continue;
        const auto colon = part.find(':');
        if (colon == std::string::npos) {
            throw FieldError("alpha", "entry '" + part + "' is not of the form archetype:weight");
        }
        long long j = -1;
        const std::string id = part.substr(0, colon);
        const auto [end, ec] = std::from_chars(id.data(), id.data() + id.size(), j);
        if (ec != std::errc() || end != id.data() + id.size()) {
            throw FieldError("alpha", "archetype id '" + id + "' is not an integer");
        }
        if (j < 0 || j >= k) {
            throw FieldError("alpha", "archetype " + id + " out of range [0, " + std::to_string(k) + ")");
        }
        if (seen[static_cast<std::size_t>(j)]) {
            throw FieldError("alpha", "archetype " + id + " listed twice");
        }
        seen[static_cast<std::size_t>(j)] = true;
        double w = 0.0;
        try {
            std::size_t used = 0;
            w = std::stod(part.substr(colon + 1), &used);
            if (used != part.size() - colon - 1) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw FieldError("alpha", "weight '" + part.substr(colon + 1) + "' is not a number");
        }
        out[j] = w;
        any = true;
    }
    if (!any) {
        throw FieldError("alpha", "no weights given");
    }
    return out;
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < length; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

StyleService::StyleService(ArchetypeModel model, CodecStack codec, ServiceOptions options)
    : model_(std::move(model)),
      codec_(std::move(codec)),
      resize_(ResizePolicy::parse(model_.schema.resize_policy)),
      options_(options),
      contents_(options.cache_capacity),
      textures_(options.cache_capacity) {
    if (codec_.schema() != model_.schema.channels || to_string(codec_.kind()) != model_.schema.codec_kind) {
        throw SchemaMismatch("codec does not match the model's schema");
    }
    if (static_cast<Eigen::Index>(model_.archetype_stats.size()) != model_.k()) {
        throw InvalidArgument("model carries no archetype statistics");
    }
}

std::unique_ptr<StyleService> StyleService::open(const std::filesystem::path& model_dir, ServiceOptions options) {
    ArchetypeModel model = load_model(model_dir);
    CodecStack codec = codec_from_id(model.schema.codec_id);
    return std::make_unique<StyleService>(std::move(model), std::move(codec), options);
}

json StyleService::model_summary() const {
    const auto& t = model_.telemetry;
    json archetypes = json::array();
    for (Eigen::Index j = 0; j < model_.k(); ++j) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(model_.n()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        const auto beta = model_.beta.col(j);
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return beta[a] > beta[b]; });
        json top = json::array();
        for (std::size_t i = 0; i < std::min(options_.top_contributions, order.size()); ++i) {
            if (beta[order[i]] <= 0.0) break;
            top.push_back({{"image_id", model_.image_ids[static_cast<std::size_t>(order[i])]}, {"weight", beta[order[i]]}});
        }
        archetypes.push_back({{"id", j}, {"top_contributions", top}});
    }
    return {{"k", model_.k()},
            {"n", model_.n()},
            {"schema",
             {{"layers", model_.schema.channels},
              {"codec_kind", model_.schema.codec_kind},
              {"codec_id", model_.schema.codec_id},
              {"resize", model_.schema.resize_policy},
              {"hash", model_.schema.hash()}}},
            {"reducer_rank", model_.reducer.rank},
            {"telemetry",
             {{"objective_curve", t.objective_curve},
              {"iterations", t.iterations},
              {"converged", t.converged},
              {"seed", t.seed},
              {"explained_variance_ratio", t.explained_variance_ratio}}},
            {"archetypes", archetypes}};
}

std::shared_ptr<StyleService::Content> StyleService::content(std::span<const std::uint8_t> bytes, std::string* hash) {
    if (bytes.size() > kMaxUploadBytes) {
        throw FieldError("image", "upload exceeds " + std::to_string(kMaxUploadBytes) + " bytes");
    }
    const std::string key = content_hash(bytes);
    if (hash) *hash = key;
    if (auto hit = contents_.get(key)) return *hit;
    auto entry = std::make_shared<Content>();
    try {
        entry->image = decode_image(bytes);
    } catch (const InvalidArgument& e) {
        throw FieldError("image", e.what());
    }
    entry->encoding = encode_content(codec_, entry->image);
    contents_.put(key, entry);
    return entry;
}

std::shared_ptr<StyleService::Content> StyleService::cached(const std::string& hash) {
    if (auto hit = contents_.get(hash)) return *hit;
    throw FieldError("image_hash", "unknown or evicted image " + hash + "; upload the image again");
}

std::string StyleService::upload(std::span<const std::uint8_t> bytes) {
    std::string hash;
    content(bytes, &hash);
    return hash;
}

StyleDecomposition StyleService::decompose(const Image& image) const {
    return decompose_style(model_, assemble_descriptor(image_style_stats(codec_, image, resize_), model_.schema.channels));
}

const StyleDecomposition& StyleService::own_decomposition(Content& c) const {
    std::lock_guard lock(c.decomposition_mutex);
    if (!c.decomposition) c.decomposition = decompose(c.image);
    return *c.decomposition;
}

StyleDecomposition StyleService::decompose_upload(std::span<const std::uint8_t> bytes, std::string* hash) {
    return own_decomposition(*content(bytes, hash));
}

StyleDecomposition StyleService::decompose_cached(const std::string& hash) { return own_decomposition(*cached(hash)); }

json StyleService::decomposition_json(const StyleDecomposition& d, double threshold) const {
    json weights = json::array();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d.alpha.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return d.alpha[a] > d.alpha[b]; });
    for (const auto j : order) {
        if (d.alpha[j] > threshold) weights.push_back({{"archetype", j}, {"weight", d.alpha[j]}});
    }
    return {{"weights", weights},
            {"alpha", std::vector<double>(d.alpha.weights().begin(), d.alpha.weights().end())},
            {"residual", d.residual},
            {"relative_residual", d.relative_residual}};
}

Image StyleService::stylize_content(Content& c, const StylizeRequest& request) {
    try {
        request.params.validate();
    } catch (const InvalidArgument& e) {
        throw FieldError(request.params.gamma >= 0.0 && request.params.gamma <= 1.0 ? "delta" : "gamma", e.what());
    }
    SimplexVector code;
    if (request.enhance && !request.alpha) {
        const auto [j, w] = *request.enhance;
        if (j < 0 || j >= model_.k()) throw FieldError("enhance", "archetype " + std::to_string(j) + " out of range");
        if (!(w >= 0.0 && w <= 1.0)) throw FieldError("enhance", "strength must lie in [0, 1]");
        code = enhance_code(own_decomposition(c).alpha, j, w);
    } else if (request.alpha && !request.enhance) {
        code = normalize_user_alpha(*request.alpha, model_.k());
    } else {
        throw FieldError("alpha", request.alpha ? "give either explicit weights or an enhancement, not both"
                                                : "required (or an enhancement target)");
    }
    const MixedStyle style = mix_style(model_, code);
    if (request.baseline) {
        return stylize_baseline(c.encoding, style.layers, codec_, request.params.gamma, request.params.clamp);
    }
    return stylize(c.encoding, style.layers, codec_, request.params);
}

Image StyleService::stylize_upload(std::span<const std::uint8_t> bytes, const StylizeRequest& request) {
    return stylize_content(*content(bytes, nullptr), request);
}

Image StyleService::stylize_cached(const std::string& hash, const StylizeRequest& request) {
    return stylize_content(*cached(hash), request);
}

std::vector<std::uint8_t> StyleService::stylize_png(std::span<const std::uint8_t> bytes, const StylizeRequest& request) {
    return encode_png(stylize_upload(bytes, request));
}

std::vector<std::uint8_t> StyleService::stylize_png_cached(const std::string& hash, const StylizeRequest& request) {
    return encode_png(stylize_cached(hash, request));
}

Image StyleService::texture(Eigen::Index archetype, std::uint64_t seed) const {
    if (archetype < 0 || archetype >= model_.k()) {
        throw FieldError("archetype", "archetype " + std::to_string(archetype) + " out of range [0, " +
                                          std::to_string(model_.k()) + ")");
    }
    return synthesize_texture(archetype_stats(model_, archetype), codec_, seed, options_.texture);
}

std::vector<std::uint8_t> StyleService::texture_png(Eigen::Index archetype, std::uint64_t seed) {
    const std::string key = std::to_string(archetype) + ":" + std::to_string(seed);
    if (auto hit = textures_.get(key)) return **hit;
    auto png = std::make_shared<const std::vector<std::uint8_t>>(encode_png(texture(archetype, seed)));
    textures_.put(key, png);
    return *png;
}

}  // namespace atelier
