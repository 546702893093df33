#pragma once

#include "atelier/archetypal.hpp"
#include "atelier/codecs.hpp"
#include "atelier/error.hpp"
#include "atelier/wct.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace atelier {

/// A request parameter failed validation; `field` names it for the client.
class FieldError : public InvalidArgument {
public:
    FieldError(std::string field, const std::string& message)
        : InvalidArgument(field + ": " + message), field_(std::move(field)), message_(message) {}

    [[nodiscard]] const std::string& field() const { return field_; }
    [[nodiscard]] const std::string& message() const { return message_; }

private:
    std::string field_;
    std::string message_;
};

inline constexpr std::size_t kMaxUploadBytes = 20u * 1024u * 1024u;
inline constexpr double kDisplayThreshold = 0.01;

/// Renormalizes a user-entered code onto the simplex. Sums outside [0.5, 2],
/// negative or non-finite entries and a wrong length raise FieldError("alpha").
SimplexVector normalize_user_alpha(const Vector& raw, Eigen::Index k);

/// Parses "j:w,j:w,..." (0-based archetype ids) into a length-k vector (not normalized).
Vector parse_alpha_spec(const std::string& spec, Eigen::Index k);

/// Hex SHA-256 of a byte buffer.
std::string content_hash(std::span<const std::uint8_t> bytes);

/// Thread-safe least-recently-used map.
template <typename Key, typename Value>
class LruCache {
public:
    explicit LruCache(std::size_t capacity) : capacity_(capacity) {}

    std::optional<Value> get(const Key& key) {
        std::lock_guard lock(mutex_);
        const auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        order_.splice(order_.begin(), order_, it->second);
        return it->second->second;
    }

    void put(const Key& key, Value value) {
        std::lock_guard lock(mutex_);
        if (capacity_ == 0) return;
        if (const auto it = index_.find(key); it != index_.end()) {
            it->second->second = std::move(value);
            order_.splice(order_.begin(), order_, it->second);
            return;
        }
        order_.emplace_front(key, std::move(value));
        index_[key] = order_.begin();
        if (order_.size() > capacity_) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
    }

    [[nodiscard]] std::size_t size() const {
        std::lock_guard lock(mutex_);
        return order_.size();
    }

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::list<std::pair<Key, Value>> order_;
    std::unordered_map<Key, typename std::list<std::pair<Key, Value>>::iterator> index_;
};

struct ServiceOptions {
    std::size_t cache_capacity = 32;
    SynthesisOptions texture;
    std::size_t top_contributions = 5;
};

struct StylizeRequest {
    std::optional<Vector> alpha;  // raw user weights, renormalized by the service
    std::optional<std::pair<Eigen::Index, double>> enhance;  // move the image's own code toward j by w
    StylizationParams params;
    bool baseline = false;
};

/// Everything the CLI and HTTP front ends do with a fitted model. One loaded
/// model, immutable; only the caches mutate (internally synchronized).
class StyleService {
public:
    StyleService(ArchetypeModel model, CodecStack codec, ServiceOptions options = {});

    /// Loads model.json/model.blob and the codec it was fitted with.
    static std::unique_ptr<StyleService> open(const std::filesystem::path& model_dir, ServiceOptions options = {});

    [[nodiscard]] const ArchetypeModel& model() const { return model_; }
    [[nodiscard]] const CodecStack& codec() const { return codec_; }

    [[nodiscard]] nlohmann::json model_summary() const;

    /// Decodes (FieldError("image") when not an image) and caches an upload; returns its hash.
    std::string upload(std::span<const std::uint8_t> bytes);

    StyleDecomposition decompose(const Image& image) const;
    /// Decomposition of an uploaded image (cached by content hash).
    StyleDecomposition decompose_upload(std::span<const std::uint8_t> bytes, std::string* hash = nullptr);
    StyleDecomposition decompose_cached(const std::string& hash);

    /// {"image_hash"?, "alpha": [...], "weights": [{"archetype", "weight"} above threshold], "residual", ...}
    [[nodiscard]] nlohmann::json decomposition_json(const StyleDecomposition& d, double threshold = kDisplayThreshold) const;

    Image stylize_upload(std::span<const std::uint8_t> bytes, const StylizeRequest& request);
    Image stylize_cached(const std::string& hash, const StylizeRequest& request);
    std::vector<std::uint8_t> stylize_png(std::span<const std::uint8_t> bytes, const StylizeRequest& request);
    std::vector<std::uint8_t> stylize_png_cached(const std::string& hash, const StylizeRequest& request);

    Image texture(Eigen::Index archetype, std::uint64_t seed) const;
    std::vector<std::uint8_t> texture_png(Eigen::Index archetype, std::uint64_t seed);

    [[nodiscard]] std::size_t cached_contents() const { return contents_.size(); }

private:
    struct Content {
        Image image;
        ContentEncoding encoding;
        std::optional<StyleDecomposition> decomposition;
        std::mutex decomposition_mutex;
    };

    std::shared_ptr<Content> content(std::span<const std::uint8_t> bytes, std::string* hash);
    std::shared_ptr<Content> cached(const std::string& hash);
    const StyleDecomposition& own_decomposition(Content& c) const;
    Image stylize_content(Content& c, const StylizeRequest& request);

    ArchetypeModel model_;
    CodecStack codec_;
    ResizePolicy resize_;
    ServiceOptions options_;
    LruCache<std::string, std::shared_ptr<Content>> contents_;
    LruCache<std::string, std::shared_ptr<const std::vector<std::uint8_t>>> textures_;
};

}  // namespace atelier
