#include "atelier/corpus.hpp"

#include "atelier/error.hpp"
#include "atelier/parallel.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <optional>

namespace atelier {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> StyleStore::ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

std::vector<StyleStats> StyleStore::stats() const {
    std::vector<StyleStats> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.stats);
    return out;
}

StyleDescriptor StyleStore::descriptor(std::size_t i) const {
    return assemble_descriptor(entries.at(i).stats, schema.channels);
}

StyleStats quantize_stats(const StyleStats& stats) {
    StyleStats out = stats;
    for (auto& layer : out) {
        layer.mean = layer.mean.cast<float>().cast<double>();
        const Eigen::Index p = layer.covariance.rows();
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = i; j < p; ++j) {
                const double v = static_cast<double>(static_cast<float>(layer.covariance(i, j)));
                layer.covariance(i, j) = v;
                layer.covariance(j, i) = v;
            }
        }
    }
    return out;
}

StyleStats image_style_stats(const CodecStack& codec, const Image& image, const ResizePolicy& resize) {
    return quantize_stats(codec.image_stats(resize.apply(image)));
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

bool is_image_file(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

bool listed(const std::vector<std::string>& list, const std::string& id) {
    const std::string name = fs::path(id).filename().string();
    return std::any_of(list.begin(), list.end(), [&](const std::string& item) { return item == id || item == name; });
}

}  // namespace

StyleStore ingest(const fs::path& directory, const CodecStack& codec, const IngestOptions& options,
                  IngestReport* report) {
    if (!fs::is_directory(directory)) {
        throw InvalidArgument("not a directory: " + directory.string());
    }
    std::vector<std::string> ids;
    for (const auto& entry : fs::recursive_directory_iterator(directory)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        const std::string id = entry.path().lexically_relative(directory).generic_string();
        if (!options.include.empty() && !listed(options.include, id)) continue;
        if (listed(options.exclude, id)) continue;
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());

    std::vector<std::optional<StoreEntry>> results(ids.size());
    std::vector<std::string> failures(ids.size());
    parallel_for(
        ids.size(),
        [&](std::size_t i) {
            try {
                const Image source = read_image(directory / ids[i]);
                const Image image = options.resize.apply(source);
                StoreEntry entry;
                entry.id = ids[i];
                entry.rows = image.rows();
                entry.cols = image.cols();
                entry.source_rows = source.rows();
                entry.source_cols = source.cols();
                entry.stats = quantize_stats(codec.image_stats(image));
                results[i] = std::move(entry);
            } catch (const Error& e) {
                failures[i] = e.what();
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        },
        options.threads);

    StyleStore store;
    store.schema = codec.style_schema(options.resize);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (results[i]) {
            store.entries.push_back(std::move(*results[i]));
        } else {
            spdlog::warn("skipping {}: {}", ids[i], failures[i]);
            if (report) report->skipped.push_back({ids[i], failures[i]});
        }
    }
    if (store.entries.empty()) {
        throw InvalidArgument("no usable images in " + directory.string());
    }
    spdlog::info("ingested {} images ({} skipped) from {}", store.entries.size(), ids.size() - store.entries.size(),
                 directory.string());
    return store;
}

// ---------------------------------------------------------------------------
// Binary helpers

namespace {

template <typename T>
void append_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(bytes, sizeof(T));
}

template <typename T>
T read_le(const char* data) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, data, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

std::string crc_hex(const std::string& data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t offset = 0;
    // crc32 takes uInt lengths; feed large blobs in chunks.
    while (offset < data.size()) {
        const std::size_t chunk = std::min<std::size_t>(data.size() - offset, 1u << 30);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + offset), static_cast<uInt>(chunk));
        offset += chunk;
    }
    char buffer[16];
    std::snprintf(buffer, sizeof buffer, "%08lx", static_cast<unsigned long>(crc));
    return buffer;
}

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidArgument("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes via a temporary file so a crash never leaves a half-written artifact in place.
void write_all(const fs::path& path, const std::string& data) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) {
            throw Error("cannot write " + path.string());
        }
    }
    fs::rename(tmp, path);
}

json schema_json(const StyleSchema& schema) {
    return {{"layers", schema.channels},
            {"codec_kind", schema.codec_kind},
            {"codec_id", schema.codec_id},
            {"resize", schema.resize_policy},
            {"hash", schema.hash()}};
}

StyleSchema schema_from_json(const json& j) {
    StyleSchema schema;
    schema.channels = j.at("layers").get<LayerSchema>();
    schema.codec_kind = j.at("codec_kind").get<std::string>();
    schema.codec_id = j.at("codec_id").get<std::string>();
    schema.resize_policy = j.at("resize").get<std::string>();
    if (j.at("hash").get<std::string>() != schema.hash()) {
        throw CorruptionError("schema hash does not match the recorded schema");
    }
    return schema;
}

json parse_manifest(const fs::path& path, const char* format, int supported) {
    if (!fs::exists(path)) {
        throw InvalidArgument("missing " + path.string());
    }
    json manifest;
    try {
        manifest = json::parse(read_all(path));
    } catch (const json::parse_error& e) {
        throw CorruptionError(path.string() + " is truncated or not valid JSON: " + e.what());
    }
    if (!manifest.is_object() || manifest.value("format", "") != format) {
        throw CorruptionError(path.string() + " is not an " + std::string(format) + " manifest");
    }
    const auto version = manifest.value("version", 0);
    if (version > supported) {
        throw VersionError(path.string() + " has format version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(supported) +
                           "; re-create it or upgrade atelier");
    }
    if (version < 1) {
        throw VersionError(path.string() + " has unsupported format version " + std::to_string(version));
    }
    return manifest;
}

std::string load_blob(const fs::path& path, const json& info) {
    if (!fs::exists(path)) {
        throw CorruptionError("missing blob " + path.string());
    }
    std::string blob = read_all(path);
    const auto expected = info.at("bytes").get<std::uint64_t>();
    if (blob.size() != expected) {
        throw CorruptionError(path.string() + " has " + std::to_string(blob.size()) + " bytes, expected " +
                              std::to_string(expected) + " (truncated or extended)");
    }
    if (crc_hex(blob) != info.at("crc32").get<std::string>()) {
        throw CorruptionError(path.string() + " fails its checksum");
    }
    return blob;
}

void check_range(const std::string& blob, std::uint64_t offset, std::uint64_t bytes, const std::string& what) {
    if (offset > blob.size() || bytes > blob.size() - offset) {
        throw CorruptionError(what + " lies outside the blob");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Store files

void save_store(const StyleStore& store, const fs::path& directory) {
    fs::create_directories(directory);
    std::string blob;
    json entries = json::array();
    const std::string hash = store.schema.hash();
    for (const auto& entry : store.entries) {
        if (schema_of(entry.stats) != store.schema.channels) {
            throw SchemaMismatch("store entry " + entry.id + " does not match the store schema");
        }
        const std::size_t offset = blob.size();
        std::size_t count = 0;
        for (const auto& layer : entry.stats) {
            for (Eigen::Index i = 0; i < layer.mean.size(); ++i, ++count) {
                append_le(blob, static_cast<float>(layer.mean[i]));
            }
            const Eigen::Index p = layer.covariance.rows();
            for (Eigen::Index i = 0; i < p; ++i) {
                for (Eigen::Index j = i; j < p; ++j, ++count) append_le(blob, static_cast<float>(layer.covariance(i, j)));
            }
        }
        entries.push_back({{"id", entry.id},
                           {"rows", entry.rows},
                           {"cols", entry.cols},
                           {"source_rows", entry.source_rows},
                           {"source_cols", entry.source_cols},
                           {"schema_hash", hash},
                           {"offset", offset},
                           {"count", count}});
    }
    const json manifest = {{"format", "atelier-store"},
                           {"version", kStoreFormatVersion},
                           {"schema", schema_json(store.schema)},
                           {"blob", {{"file", "store.blob"}, {"dtype", "f32le"}, {"bytes", blob.size()}, {"crc32", crc_hex(blob)}}},
                           {"entries", entries}};
    write_all(directory / "store.blob", blob);
    write_all(directory / "store.json", manifest.dump(1) + "\n");
}

StyleStore load_store(const fs::path& directory) {
    const json manifest = parse_manifest(directory / "store.json", "atelier-store", kStoreFormatVersion);
    try {
        StyleStore store;
        store.schema = schema_from_json(manifest.at("schema"));
        const std::string hash = store.schema.hash();
        const std::string blob = load_blob(directory / manifest.at("blob").at("file").get<std::string>(), manifest.at("blob"));
        const Eigen::Index dim = descriptor_dimension(store.schema.channels);
        std::string previous;
        for (const auto& item : manifest.at("entries")) {
            StoreEntry entry;
            entry.id = item.at("id").get<std::string>();
            if (!previous.empty() && entry.id <= previous) {
                throw CorruptionError("store entries are not in sorted order");
            }
            previous = entry.id;
            if (item.at("schema_hash").get<std::string>() != hash) {
                throw SchemaMismatch("store entry " + entry.id + " was computed under a different schema");
            }
            entry.rows = item.at("rows").get<int>();
            entry.cols = item.at("cols").get<int>();
            entry.source_rows = item.at("source_rows").get<int>();
            entry.source_cols = item.at("source_cols").get<int>();
            const auto offset = item.at("offset").get<std::uint64_t>();
            const auto count = item.at("count").get<std::uint64_t>();
            if (count != static_cast<std::uint64_t>(dim)) {
                throw CorruptionError("store entry " + entry.id + " has the wrong record length");
            }
            check_range(blob, offset, count * sizeof(float), "store entry " + entry.id);
            const char* data = blob.data() + offset;
            for (const Eigen::Index p : store.schema.channels) {
                LayerStats layer;
                layer.mean.resize(p);
                layer.covariance.resize(p, p);
                for (Eigen::Index i = 0; i < p; ++i, data += sizeof(float)) layer.mean[i] = read_le<float>(data);
                for (Eigen::Index i = 0; i < p; ++i) {
                    for (Eigen::Index j = i; j < p; ++j, data += sizeof(float)) {
                        layer.covariance(i, j) = layer.covariance(j, i) = read_le<float>(data);
                    }
                }
                entry.stats.push_back(std::move(layer));
            }
            store.entries.push_back(std::move(entry));
        }
        if (store.entries.empty()) {
            throw CorruptionError("store has no entries");
        }
        return store;
    } catch (const json::exception& e) {
        throw CorruptionError("malformed store manifest: " + std::string(e.what()));
    }
}

// ---------------------------------------------------------------------------
// Model files

namespace {

class TensorWriter {
public:
    void add(const std::string& name, const Matrix& m) {
        const std::size_t offset = blob_.size();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) append_le(blob_, m(r, c));
        }
        index_[name] = {{"offset", offset}, {"rows", m.rows()}, {"cols", m.cols()}};
    }
    void add(const std::string& name, const Vector& v) { add(name, Matrix(v)); }

    [[nodiscard]] const std::string& blob() const { return blob_; }
    [[nodiscard]] const json& index() const { return index_; }

private:
    std::string blob_;
    json index_ = json::object();
};

class TensorReader {
public:
    TensorReader(const std::string& blob, const json& index) : blob_(blob), index_(index) {}

    Matrix matrix(const std::string& name, Eigen::Index rows = -1, Eigen::Index cols = -1) const {
        if (!index_.contains(name)) {
            throw CorruptionError("model is missing tensor '" + name + "'");
        }
        const auto& info = index_.at(name);
        const auto r = info.at("rows").get<Eigen::Index>();
        const auto c = info.at("cols").get<Eigen::Index>();
        if (r < 0 || c < 0 || (rows >= 0 && r != rows) || (cols >= 0 && c != cols)) {
            throw CorruptionError("tensor '" + name + "' has an unexpected shape");
        }
        const auto offset = info.at("offset").get<std::uint64_t>();
        check_range(blob_, offset, static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(c) * sizeof(double),
                    "tensor '" + name + "'");
        Matrix m(r, c);
        const char* data = blob_.data() + offset;
        for (Eigen::Index j = 0; j < c; ++j) {
            for (Eigen::Index i = 0; i < r; ++i, data += sizeof(double)) m(i, j) = read_le<double>(data);
        }
        return m;
    }

    Vector vector(const std::string& name, Eigen::Index size = -1) const { return matrix(name, size, 1).col(0); }

private:
    const std::string& blob_;
    const json& index_;
};

std::string stats_name(std::size_t j, std::size_t l, const char* what) {
    return "archetype" + std::to_string(j) + ".layer" + std::to_string(l) + "." + what;
}

}  // namespace

void save_model(const ArchetypeModel& model, const fs::path& directory) {
    fs::create_directories(directory);
    TensorWriter tensors;
    tensors.add("reducer.mean", model.reducer.mean);
    tensors.add("reducer.basis", model.reducer.basis);
    tensors.add("reducer.singular_values", model.reducer.singular_values);
    tensors.add("reduced_corpus", model.reduced_corpus);
    tensors.add("archetypes", model.archetypes);
    tensors.add("beta", model.beta);
    tensors.add("alpha", model.alpha);
    for (std::size_t j = 0; j < model.archetype_stats.size(); ++j) {
        for (std::size_t l = 0; l < model.archetype_stats[j].size(); ++l) {
            tensors.add(stats_name(j, l, "mean"), model.archetype_stats[j][l].mean);
            tensors.add(stats_name(j, l, "covariance"), model.archetype_stats[j][l].covariance);
        }
    }
    const auto& t = model.telemetry;
    const json manifest = {
        {"format", "atelier-model"},
        {"version", kModelFormatVersion},
        {"schema", schema_json(model.schema)},
        {"k", model.k()},
        {"n", model.n()},
        {"image_ids", model.image_ids},
        {"reducer", {{"rank", model.reducer.rank}, {"explained_variance_ratio", model.reducer.explained_variance_ratio}}},
        {"telemetry",
         {{"objective_curve", t.objective_curve},
          {"iterations", t.iterations},
          {"converged", t.converged},
          {"seed", t.seed},
          {"explained_variance_ratio", t.explained_variance_ratio},
          {"centered", t.centered}}},
        {"blob", {{"file", "model.blob"}, {"dtype", "f64le"}, {"bytes", tensors.blob().size()}, {"crc32", crc_hex(tensors.blob())}}},
        {"tensors", tensors.index()}};
    write_all(directory / "model.blob", tensors.blob());
    write_all(directory / "model.json", manifest.dump(1) + "\n");
}

ArchetypeModel load_model(const fs::path& directory) {
    const json manifest = parse_manifest(directory / "model.json", "atelier-model", kModelFormatVersion);
    try {
        ArchetypeModel model;
        model.schema = schema_from_json(manifest.at("schema"));
        const std::string blob = load_blob(directory / manifest.at("blob").at("file").get<std::string>(), manifest.at("blob"));
        const TensorReader tensors(blob, manifest.at("tensors"));
        const auto k = manifest.at("k").get<Eigen::Index>();
        const auto n = manifest.at("n").get<Eigen::Index>();
        const Eigen::Index dim = descriptor_dimension(model.schema.channels);

        model.image_ids = manifest.at("image_ids").get<std::vector<std::string>>();
        if (static_cast<Eigen::Index>(model.image_ids.size()) != n) {
            throw CorruptionError("model lists " + std::to_string(model.image_ids.size()) + " image ids for n=" +
                                  std::to_string(n));
        }
        const auto& reducer = manifest.at("reducer");
        model.reducer.rank = reducer.at("rank").get<Eigen::Index>();
        model.reducer.explained_variance_ratio = reducer.at("explained_variance_ratio").get<double>();
        const Eigen::Index r = model.reducer.rank;
        model.reducer.mean = tensors.vector("reducer.mean", dim);
        model.reducer.basis = tensors.matrix("reducer.basis", dim, r);
        model.reducer.singular_values = tensors.vector("reducer.singular_values", r);
        model.reduced_corpus = tensors.matrix("reduced_corpus", r, n);
        model.archetypes = tensors.matrix("archetypes", r, k);
        model.beta = tensors.matrix("beta", n, k);
        model.alpha = tensors.matrix("alpha", k, n);
        for (Eigen::Index j = 0; j < k; ++j) {
            StyleStats stats;
            for (std::size_t l = 0; l < model.schema.channels.size(); ++l) {
                const Eigen::Index p = model.schema.channels[l];
                const auto js = static_cast<std::size_t>(j);
                stats.push_back({tensors.vector(stats_name(js, l, "mean"), p),
                                 tensors.matrix(stats_name(js, l, "covariance"), p, p)});
            }
            model.archetype_stats.push_back(std::move(stats));
        }

        const auto& t = manifest.at("telemetry");
        model.telemetry.objective_curve = t.at("objective_curve").get<std::vector<double>>();
        model.telemetry.iterations = t.at("iterations").get<int>();
        model.telemetry.converged = t.at("converged").get<bool>();
        model.telemetry.seed = t.at("seed").get<std::uint64_t>();
        model.telemetry.explained_variance_ratio = t.at("explained_variance_ratio").get<double>();
        model.telemetry.centered = t.at("centered").get<bool>();
        return model;
    } catch (const json::exception& e) {
        throw CorruptionError("malformed model manifest: " + std::string(e.what()));
    }
}

}  // namespace atelier
