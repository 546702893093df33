#pragma once

#include "atelier/archetypal.hpp"
#include "atelier/codecs.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace atelier {

inline constexpr int kStoreFormatVersion = 1;
inline constexpr int kModelFormatVersion = 1;

struct StoreEntry {
    std::string id;    // path relative to the ingested directory, '/' separated
    int rows = 0;      // after resizing
    int cols = 0;
    int source_rows = 0;
    int source_cols = 0;
    StyleStats stats;  // values representable in 32-bit floats
};

/// Per-image style statistics of an image collection, in sorted id order.
struct StyleStore {
    StyleSchema schema;
    std::vector<StoreEntry> entries;

    [[nodiscard]] std::size_t size() const { return entries.size(); }
    [[nodiscard]] std::vector<std::string> ids() const;
    [[nodiscard]] std::vector<StyleStats> stats() const;
    [[nodiscard]] StyleDescriptor descriptor(std::size_t i) const;
};

struct IngestOptions {
    ResizePolicy resize;
    std::vector<std::string> include;  // ids or file names; empty: everything
    std::vector<std::string> exclude;  // applied after include
    unsigned threads = 0;
};

struct SkippedFile {
    std::string id;
    std::string reason;
};

struct IngestReport {
    std::vector<SkippedFile> skipped;
};

/// Ingests every PNG/JPEG below `directory`. Undecodable files are skipped and logged.
/// Throws InvalidArgument when no usable image remains.
StyleStore ingest(const std::filesystem::path& directory, const CodecStack& codec, const IngestOptions& options = {},
                  IngestReport* report = nullptr);

/// Rounds statistics to 32-bit floats (and mirrors the upper triangle), i.e. to
/// exactly what the store file can hold.
StyleStats quantize_stats(const StyleStats& stats);

/// Statistics of one image exactly as ingestion stores them: resized, encoded, quantized.
StyleStats image_style_stats(const CodecStack& codec, const Image& image, const ResizePolicy& resize);

/// store.json + store.blob inside `directory`.
void save_store(const StyleStore& store, const std::filesystem::path& directory);
/// Throws CorruptionError on truncation or checksum failure, VersionError on an unknown version.
StyleStore load_store(const std::filesystem::path& directory);

/// model.json + model.blob inside `directory`.
void save_model(const ArchetypeModel& model, const std::filesystem::path& directory);
ArchetypeModel load_model(const std::filesystem::path& directory);

}  // namespace atelier
