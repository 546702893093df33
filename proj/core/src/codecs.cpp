#include "atelier/codecs.hpp"

#include "atelier/error.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>
#include <random>
#include <sstream>

namespace atelier {

std::string to_string(CodecKind kind) { return kind == CodecKind::Toy ? "toy" : "pretrained"; }

CodecStack::CodecStack(CodecKind kind, ReconstructionContract contract, std::vector<LayerSpec> layers, std::string id,
                       std::shared_ptr<const CodecBackend> backend)
    : kind_(kind), contract_(contract), layers_(std::move(layers)), id_(std::move(id)), backend_(std::move(backend)) {
    if (static_cast<int>(layers_.size()) != kLayerCount) {
        throw SchemaMismatch("codec stack must have exactly " + std::to_string(kLayerCount) + " layers");
    }
    for (const auto& layer : layers_) {
        if (layer.channels < 1 || layer.downsample < 1) {
            throw SchemaMismatch("codec layer " + layer.name + " has an invalid schema");
        }
    }
}

LayerSchema CodecStack::schema() const {
    LayerSchema out;
    for (const auto& layer : layers_) out.push_back(layer.channels);
    return out;
}

FeatureMap CodecStack::encode(int layer, const Image& image) const {
    if (layer < 0 || layer >= layers()) {
        throw InvalidArgument("codec layer " + std::to_string(layer) + " out of range");
    }
    if (image.empty()) {
        throw InvalidArgument("cannot encode an empty image");
    }
    FeatureMap map = backend_->encode(layer, image);
    if (map.channels() != layers_[static_cast<std::size_t>(layer)].channels) {
        throw SchemaMismatch("layer " + layers_[static_cast<std::size_t>(layer)].name + " produced " +
                             std::to_string(map.channels()) + " channels, schema declares " +
                             std::to_string(layers_[static_cast<std::size_t>(layer)].channels));
    }
    return map;
}

Image CodecStack::decode(const FeatureMap& map) const {
    if (map.layer < 0 || map.layer >= layers()) {
        throw InvalidArgument("feature map layer out of range");
    }
    if (map.channels() != layers_[static_cast<std::size_t>(map.layer)].channels ||
        map.positions() != static_cast<Eigen::Index>(map.grid_rows) * map.grid_cols) {
        throw SchemaMismatch("feature map does not match layer " + layers_[static_cast<std::size_t>(map.layer)].name);
    }
    return backend_->decode(map);
}

std::vector<FeatureMap> CodecStack::encode_all(const Image& image) const {
    std::vector<FeatureMap> out;
    out.reserve(layers_.size());
    for (int l = 0; l < layers(); ++l) out.push_back(encode(l, image));
    return out;
}

StyleStats CodecStack::image_stats(const Image& image) const {
    StyleStats out;
    out.reserve(layers_.size());
    for (int l = 0; l < layers(); ++l) out.push_back(compute_layer_stats(encode(l, image)));
    return out;
}

StyleSchema CodecStack::style_schema(const ResizePolicy& resize) const {
    return StyleSchema{schema(), to_string(kind_), id_, resize.to_string()};
}

double roundtrip_psnr(const CodecStack& codec, int layer, const Image& image) {
    return psnr(image, codec.decode(codec.encode(layer, image)));
}

namespace {

/// Symmetric reflection ("abc|cba") extended periodically, for any overshoot.
int reflect_index(int i, int n) {
    const int period = 2 * n;
    int r = i % period;
    if (r < 0) r += period;
    return r < n ? r : period - 1 - r;
}

int padded(int size, int cell) { return (size + cell - 1) / cell * cell; }

// ---------------------------------------------------------------------------
// Toy codec

class ToyBackend final : public CodecBackend {
public:
    ToyBackend(std::vector<int> patches, std::vector<Matrix> rotations)
        : patches_(std::move(patches)), rotations_(std::move(rotations)) {}

    FeatureMap encode(int layer, const Image& image) const override {
        const int s = patches_[static_cast<std::size_t>(layer)];
        const int rows = padded(image.rows(), s);
        const int cols = padded(image.cols(), s);
        FeatureMap map;
        map.layer = layer;
        map.grid_rows = rows / s;
        map.grid_cols = cols / s;
        map.image_rows = image.rows();
        map.image_cols = image.cols();
        const Eigen::Index dim = 3 * s * s;
        Matrix patches(dim, static_cast<Eigen::Index>(map.grid_rows) * map.grid_cols);
        for (int gr = 0; gr < map.grid_rows; ++gr) {
            for (int gc = 0; gc < map.grid_cols; ++gc) {
                const Eigen::Index col = static_cast<Eigen::Index>(gr) * map.grid_cols + gc;
                Eigen::Index k = 0;
                for (int dy = 0; dy < s; ++dy) {
                    const int r = reflect_index(gr * s + dy, image.rows());
                    for (int dx = 0; dx < s; ++dx) {
                        const int c = reflect_index(gc * s + dx, image.cols());
                        for (int ch = 0; ch < 3; ++ch) patches(k++, col) = image.at(r, c, ch);
                    }
                }
            }
        }
        map.activations = rotations_[static_cast<std::size_t>(layer)] * patches;
        return map;
    }

    Image decode(const FeatureMap& map) const override {
        const int s = patches_[static_cast<std::size_t>(map.layer)];
        const Matrix patches = rotations_[static_cast<std::size_t>(map.layer)].transpose() * map.activations;
        Image out(map.image_rows, map.image_cols);
        for (int gr = 0; gr < map.grid_rows; ++gr) {
            for (int gc = 0; gc < map.grid_cols; ++gc) {
                const Eigen::Index col = static_cast<Eigen::Index>(gr) * map.grid_cols + gc;
                Eigen::Index k = 0;
                for (int dy = 0; dy < s; ++dy) {
                    const int r = gr * s + dy;
                    for (int dx = 0; dx < s; ++dx) {
                        const int c = gc * s + dx;
                        for (int ch = 0; ch < 3; ++ch, ++k) {
                            if (r < out.rows() && c < out.cols()) out.at(r, c, ch) = patches(k, col);
                        }
                    }
                }
            }
        }
        return out;
    }

private:
    std::vector<int> patches_;
    std::vector<Matrix> rotations_;
};

std::string toy_id(const ToyCodecOptions& options) {
    std::string id = "toy:seed=" + std::to_string(options.seed) + ":patches=";
    for (std::size_t i = 0; i < options.patch_sizes.size(); ++i) {
        if (i > 0) id += ',';
        id += std::to_string(options.patch_sizes[i]);
    }
    return id;
}

}  // namespace

CodecStack toy_codec(std::uint64_t seed) {
    ToyCodecOptions options;
    options.seed = seed;
    return toy_codec(options);
}

CodecStack toy_codec(const ToyCodecOptions& options) {
    if (static_cast<int>(options.patch_sizes.size()) != kLayerCount) {
        throw InvalidArgument("toy codec needs one patch size per layer");
    }
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> rotations;
    std::vector<LayerSpec> layers;
    for (int l = 0; l < kLayerCount; ++l) {
        const int s = options.patch_sizes[static_cast<std::size_t>(l)];
        if (s < 1) {
            throw InvalidArgument("toy codec patch sizes must be positive");
        }
        const Eigen::Index dim = 3 * s * s;
        Matrix gaussian(dim, dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            for (Eigen::Index i = 0; i < dim; ++i) gaussian(i, j) = normal(rng);
        }
        Eigen::HouseholderQR<Matrix> qr(gaussian);
        rotations.push_back(qr.householderQ() * Matrix::Identity(dim, dim));
        layers.push_back({"patch" + std::to_string(s), dim, s});
    }
    return CodecStack(CodecKind::Toy, ReconstructionContract::Exact, std::move(layers), toy_id(options),
                      std::make_shared<ToyBackend>(options.patch_sizes, std::move(rotations)));
}

// ---------------------------------------------------------------------------
// Pretrained (ONNX) codec

namespace {

struct Graph {
    mutable cv::dnn::Net net;
    mutable std::mutex mutex;

    cv::Mat run(const cv::Mat& blob) const {
        std::lock_guard lock(mutex);
        net.setInput(blob);
        return net.forward().clone();
    }
};

class OnnxBackend final : public CodecBackend {
public:
    OnnxBackend(std::vector<LayerSpec> layers, std::vector<std::unique_ptr<Graph>> encoders,
                std::vector<std::unique_ptr<Graph>> decoders, std::array<double, 3> mean, std::array<double, 3> stddev)
        : layers_(std::move(layers)),
          encoders_(std::move(encoders)),
          decoders_(std::move(decoders)),
          mean_(mean),
          std_(stddev) {}

    FeatureMap encode(int layer, const Image& image) const override {
        const int cell = layers_[static_cast<std::size_t>(layer)].downsample;
        const int rows = padded(image.rows(), cell);
        const int cols = padded(image.cols(), cell);
        const int shape[] = {1, 3, rows, cols};
        cv::Mat blob(4, shape, CV_32F);
        auto* data = blob.ptr<float>();
        for (int ch = 0; ch < 3; ++ch) {
            for (int r = 0; r < rows; ++r) {
                const int sr = reflect_index(r, image.rows());
                for (int c = 0; c < cols; ++c) {
                    const double v = image.at(sr, reflect_index(c, image.cols()), ch);
                    data[(static_cast<std::size_t>(ch) * rows + r) * cols + c] =
                        static_cast<float>((v - mean_[static_cast<std::size_t>(ch)]) / std_[static_cast<std::size_t>(ch)]);
                }
            }
        }
        cv::Mat out;
        try {
            out = encoders_[static_cast<std::size_t>(layer)]->run(blob);
        } catch (const cv::Exception& e) {
            throw CodecLoadError("encoder " + layers_[static_cast<std::size_t>(layer)].name + " failed: " + e.what());
        }
        if (out.dims != 4 || out.size[0] != 1) {
            throw SchemaMismatch("encoder output must be a 1 x C x H x W tensor");
        }
        FeatureMap map;
        map.layer = layer;
        map.grid_rows = out.size[2];
        map.grid_cols = out.size[3];
        map.image_rows = image.rows();
        map.image_cols = image.cols();
        const int channels = out.size[1];
        const Eigen::Index positions = static_cast<Eigen::Index>(map.grid_rows) * map.grid_cols;
        map.activations.resize(channels, positions);
        const auto* src = out.ptr<float>();
        for (int ch = 0; ch < channels; ++ch) {
            for (Eigen::Index j = 0; j < positions; ++j) {
                map.activations(ch, j) = src[static_cast<std::size_t>(ch) * static_cast<std::size_t>(positions) +
                                             static_cast<std::size_t>(j)];
            }
        }
        return map;
    }

    Image decode(const FeatureMap& map) const override {
        const int channels = static_cast<int>(map.channels());
        const int shape[] = {1, channels, map.grid_rows, map.grid_cols};
        cv::Mat blob(4, shape, CV_32F);
        auto* data = blob.ptr<float>();
        const Eigen::Index positions = map.positions();
        for (int ch = 0; ch < channels; ++ch) {
            for (Eigen::Index j = 0; j < positions; ++j) {
                data[static_cast<std::size_t>(ch) * static_cast<std::size_t>(positions) + static_cast<std::size_t>(j)] =
                    static_cast<float>(map.activations(ch, j));
            }
        }
        cv::Mat out;
        try {
            out = decoders_[static_cast<std::size_t>(map.layer)]->run(blob);
        } catch (const cv::Exception& e) {
            throw CodecLoadError("decoder " + layers_[static_cast<std::size_t>(map.layer)].name + " failed: " +
                                 e.what());
        }
        if (out.dims != 4 || out.size[1] != 3 || out.size[2] < map.image_rows || out.size[3] < map.image_cols) {
            throw SchemaMismatch("decoder output must be a 1 x 3 x H x W tensor covering the image");
        }
        const int rows = out.size[2];
        const int cols = out.size[3];
        const auto* src = out.ptr<float>();
        Image image(map.image_rows, map.image_cols);
        for (int ch = 0; ch < 3; ++ch) {
            for (int r = 0; r < map.image_rows; ++r) {
                for (int c = 0; c < map.image_cols; ++c) {
                    const double v = src[(static_cast<std::size_t>(ch) * rows + r) * cols + c];
                    image.at(r, c, ch) = v * std_[static_cast<std::size_t>(ch)] + mean_[static_cast<std::size_t>(ch)];
                }
            }
        }
        return image;
    }

private:
    std::vector<LayerSpec> layers_;
    std::vector<std::unique_ptr<Graph>> encoders_;
    std::vector<std::unique_ptr<Graph>> decoders_;
    std::array<double, 3> mean_;
    std::array<double, 3> std_;
};

std::unique_ptr<Graph> load_graph(const std::map<std::string, std::string>& files, const std::string& name) {
    const auto it = files.find(name);
    if (it == files.end()) {
        throw CodecLoadError("codec archive is missing graph '" + name + "'");
    }
    auto graph = std::make_unique<Graph>();
    try {
        graph->net = cv::dnn::readNetFromONNX(it->second.data(), it->second.size());
    } catch (const cv::Exception& e) {
        throw CodecLoadError("graph '" + name + "' could not be loaded (unsupported operator or corrupt data): " +
                             e.what());
    }
    if (graph->net.empty()) {
        throw CodecLoadError("graph '" + name + "' is empty");
    }
    graph->net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    graph->net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    return graph;
}

std::array<double, 3> read_triplet(const nlohmann::json& node, const char* key, double fallback) {
    std::array<double, 3> out{fallback, fallback, fallback};
    if (node.contains(key)) {
        const auto& values = node.at(key);
        if (!values.is_array() || values.size() != 3) {
            throw CodecLoadError(std::string("manifest input.") + key + " must list three values");
        }
        for (std::size_t i = 0; i < 3; ++i) out[i] = values[i].get<double>();
    }
    return out;
}

}  // namespace

CodecStack load_pretrained_codec(const std::map<std::string, std::string>& files, const std::string& origin) {
    const auto manifest_it = files.find("manifest.json");
    if (manifest_it == files.end()) {
        throw CodecLoadError(origin + ": codec archive has no manifest.json");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_it->second);
    } catch (const nlohmann::json::exception& e) {
        throw CodecLoadError(origin + ": manifest.json is not valid JSON: " + e.what());
    }

    std::vector<LayerSpec> layers;
    std::vector<std::unique_ptr<Graph>> encoders;
    std::vector<std::unique_ptr<Graph>> decoders;
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
    try {
        if (manifest.value("format", "") != "atelier-codec") {
            throw CodecLoadError(origin + ": manifest format is not 'atelier-codec'");
        }
        const auto& layer_list = manifest.at("layers");
        if (!layer_list.is_array() || static_cast<int>(layer_list.size()) != kLayerCount) {
            throw CodecLoadError(origin + ": manifest must declare exactly " + std::to_string(kLayerCount) + " layers");
        }
        const nlohmann::json input = manifest.value("input", nlohmann::json::object());
        mean = read_triplet(input, "mean", 0.0);
        stddev = read_triplet(input, "std", 1.0);
        for (int l = 0; l < kLayerCount; ++l) {
            const auto& entry = layer_list[static_cast<std::size_t>(l)];
            LayerSpec spec;
            spec.name = entry.value("name", "layer" + std::to_string(l + 1));
            spec.channels = entry.at("channels").get<Eigen::Index>();
            spec.downsample = entry.at("downsample").get<int>();
            if (spec.channels < 1 || spec.downsample < 1) {
                throw CodecLoadError(origin + ": layer " + spec.name + " declares an invalid schema");
            }
            layers.push_back(spec);
            encoders.push_back(load_graph(files, entry.value("encoder", "enc" + std::to_string(l + 1) + ".onnx")));
            decoders.push_back(load_graph(files, entry.value("decoder", "dec" + std::to_string(l + 1) + ".onnx")));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CodecLoadError(origin + ": malformed manifest: " + e.what());
    }

    auto backend = std::make_shared<OnnxBackend>(layers, std::move(encoders), std::move(decoders), mean, stddev);
    CodecStack stack(CodecKind::Pretrained, ReconstructionContract::Approximate, layers, "pretrained:" + origin,
                     backend);

    // Probe every layer so schema or operator problems surface at load time.
    for (int l = 0; l < kLayerCount; ++l) {
        const int cell = layers[static_cast<std::size_t>(l)].downsample;
        const Image probe(2 * cell, 2 * cell, 0.5);
        try {
            const FeatureMap map = stack.encode(l, probe);
            const Image back = stack.decode(map);
            if (back.rows() != probe.rows() || back.cols() != probe.cols()) {
                throw CodecLoadError("decoder changed the image size");
            }
        } catch (const Error& e) {
            throw CodecLoadError(origin + ": layer " + layers[static_cast<std::size_t>(l)].name +
                                 " failed validation: " + e.what());
        }
    }
    return stack;
}

CodecStack load_pretrained_codec(const std::filesystem::path& path) {
    std::map<std::string, std::string> files;
    std::error_code ec;
    if (std::filesystem::is_directory(path, ec)) {
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            std::ifstream in(entry.path(), std::ios::binary);
            files[entry.path().filename().string()] =
                std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw CodecLoadError("cannot open codec archive " + path.string());
        }
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        try {
            files = read_tar(bytes);
        } catch (const CorruptionError& e) {
            throw CodecLoadError(path.string() + ": " + e.what());
        }
    }
    return load_pretrained_codec(files, std::filesystem::absolute(path).lexically_normal().string());
}

CodecStack codec_from_id(const std::string& id) {
    constexpr std::string_view pretrained = "pretrained:";
    if (id.starts_with(pretrained)) {
        return load_pretrained_codec(std::filesystem::path(id.substr(pretrained.size())));
    }
    if (id == "toy") return toy_codec(0);
    if (id.starts_with("toy:")) {
        ToyCodecOptions options;
        std::stringstream parts(id.substr(4));
        std::string part;
        while (std::getline(parts, part, ':')) {
            if (part.starts_with("seed=")) {
                options.seed = std::stoull(part.substr(5));
            } else if (part.starts_with("patches=")) {
                options.patch_sizes.clear();
                std::stringstream sizes(part.substr(8));
                std::string size;
                while (std::getline(sizes, size, ',')) options.patch_sizes.push_back(std::stoi(size));
            } else {
                throw InvalidArgument("unknown toy codec option '" + part + "'");
            }
        }
        return toy_codec(options);
    }
    throw InvalidArgument("unknown codec '" + id + "' (expected 'toy[:seed=N[:patches=a,b,c,d,e]]' or a codec path)");
}

// ---------------------------------------------------------------------------
// ustar

namespace {

constexpr std::size_t kBlock = 512;

std::uint64_t parse_octal(const char* field, std::size_t width) {
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < width && field[i] != '\0' && field[i] != ' '; ++i) {
        if (field[i] < '0' || field[i] > '7') {
            throw CorruptionError("tar header has a malformed numeric field");
        }
        value = value * 8 + static_cast<std::uint64_t>(field[i] - '0');
    }
    return value;
}

void put_octal(char* field, std::size_t width, std::uint64_t value) {
    // width - 1 digits, NUL terminated
    std::string digits(width - 1, '0');
    for (std::size_t i = width - 1; i-- > 0;) {
        digits[i] = static_cast<char>('0' + (value & 7u));
        value >>= 3;
    }
    std::memcpy(field, digits.data(), width - 1);
    field[width - 1] = '\0';
}

unsigned header_checksum(const char* header) {
    unsigned sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) {
        sum += (i >= 148 && i < 156) ? static_cast<unsigned>(' ') : static_cast<unsigned char>(header[i]);
    }
    return sum;
}

}  // namespace

std::map<std::string, std::string> read_tar(const std::string& bytes) {
    std::map<std::string, std::string> files;
    std::size_t offset = 0;
    while (true) {
        if (offset + kBlock > bytes.size()) {
            throw CorruptionError("tar archive is truncated");
        }
        const char* header = bytes.data() + offset;
        if (std::all_of(header, header + kBlock, [](char c) { return c == '\0'; })) break;
        if (parse_octal(header + 148, 8) != header_checksum(header)) {
            throw CorruptionError("tar header checksum mismatch");
        }
        std::string name(header, strnlen(header, 100));
        const std::string prefix(header + 345, strnlen(header + 345, 155));
        if (!prefix.empty()) name = prefix + "/" + name;
        const std::uint64_t size = parse_octal(header + 124, 12);
        const char type = header[156];
        offset += kBlock;
        if (offset + size > bytes.size()) {
            throw CorruptionError("tar entry '" + name + "' is truncated");
        }
        if (type == '0' || type == '\0') {
            const auto slash = name.find_last_of('/');
            files[slash == std::string::npos ? name : name.substr(slash + 1)] = bytes.substr(offset, size);
        }
        offset += (size + kBlock - 1) / kBlock * kBlock;
    }
    return files;
}

std::string write_tar(const std::map<std::string, std::string>& files) {
    std::string out;
    for (const auto& [name, content] : files) {
        if (name.size() >= 100) {
            throw InvalidArgument("tar entry name too long: " + name);
        }
        char header[kBlock] = {};
        std::memcpy(header, name.data(), name.size());
        put_octal(header + 100, 8, 0644);
        put_octal(header + 108, 8, 0);
        put_octal(header + 116, 8, 0);
        put_octal(header + 124, 12, content.size());
        put_octal(header + 136, 12, 0);
        header[156] = '0';
        std::memcpy(header + 257, "ustar", 6);
        std::memcpy(header + 263, "00", 2);
        const unsigned checksum = header_checksum(header);
        put_octal(header + 148, 7, checksum);
        header[155] = ' ';
        out.append(header, kBlock);
        out += content;
        out.append((kBlock - content.size() % kBlock) % kBlock, '\0');
    }
    out.append(2 * kBlock, '\0');
    return out;
}

}  // namespace atelier
