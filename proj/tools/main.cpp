// atelier: archetypal style analysis from the command line.

#include "http_server.hpp"

#include "atelier/corpus.hpp"
#include "atelier/reference_codec.hpp"
#include "atelier/service.hpp"
#include "atelier/synthetic.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageError = 2;

std::vector<std::string> read_list(const std::string& path) {
    std::vector<std::string> out;
    if (path.empty()) return out;
    std::ifstream in(path);
    if (!in) throw atelier::InvalidArgument("cannot open list file " + path);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line.front() != '#') out.push_back(line);
    }
    return out;
}

atelier::CodecStack open_codec(const std::string& spec) {
    if (spec.starts_with("toy") || spec.starts_with("pretrained:")) return atelier::codec_from_id(spec);
    return atelier::load_pretrained_codec(fs::path(spec));
}

void write_json_file(const fs::path& path, const json& value) {
    std::ofstream out(path);
    out << value.dump(2) << "\n";
    if (!out) throw atelier::Error("cannot write " + path.string());
}

std::vector<std::uint8_t> read_input(const std::string& path) {
    if (!fs::is_regular_file(path)) throw atelier::InvalidArgument("no such file: " + path);
    return atelier::read_file_bytes(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Archetypal style analysis: ingest image collections, fit archetypes, decompose and stylize."};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Compute style statistics for every image in a directory");
    std::string ingest_dir, ingest_out, codec_spec = "toy", resize_spec = "short:512", include_file, exclude_file;
    unsigned threads = 0;
    ingest->add_option("directory", ingest_dir, "Directory of PNG/JPEG images")->required();
    ingest->add_option("--out", ingest_out, "Store directory")->required();
    ingest->add_option("--codec", codec_spec, "'toy[:seed=N]' or a pretrained codec archive")->capture_default_str();
    ingest->add_option("--resize", resize_spec, "'short:<pixels>' or 'none'")->capture_default_str();
    ingest->add_option("--include", include_file, "File listing image ids to keep");
    ingest->add_option("--exclude", exclude_file, "File listing image ids to drop");
    ingest->add_option("--threads", threads, "Worker threads (0: all cores)");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit the reducer and archetypes on a store");
    std::string fit_store, fit_out;
    long long fit_k = 0;
    std::uint64_t fit_seed = 0;
    long long fit_rank = atelier::kDefaultReducerRank;
    int fit_iterations = 200;
    double fit_tolerance = 1e-6;
    fit->add_option("store", fit_store, "Store directory")->required();
    fit->add_option("--k", fit_k, "Number of archetypes (default: 32, or 256 from 2000 images)");
    fit->add_option("--seed", fit_seed, "Random seed")->capture_default_str();
    fit->add_option("--out", fit_out, "Model directory")->required();
    fit->add_option("--rank", fit_rank, "Reducer rank (clamped to n - 1)")->capture_default_str();
    fit->add_option("--max-iterations", fit_iterations)->capture_default_str();
    fit->add_option("--tolerance", fit_tolerance, "Relative objective decrease to stop at")->capture_default_str();

    // encode
    auto* encode = app.add_subcommand("encode", "Print the archetypal decomposition of an image as JSON");
    std::string model_dir, image_path;
    double threshold = atelier::kDisplayThreshold;
    encode->add_option("model", model_dir, "Model directory")->required();
    encode->add_option("image", image_path, "Image file")->required();
    encode->add_option("--threshold", threshold, "Smallest weight to list")->capture_default_str();

    // stylize
    auto* stylize = app.add_subcommand("stylize", "Transfer a mixture of archetypal styles onto an image");
    std::string alpha_spec, stylize_out = "stylized.png";
    double strength = 1.0;
    std::optional<double> gamma, delta;
    std::vector<double> enhance;
    bool baseline = false;
    stylize->add_option("model", model_dir, "Model directory")->required();
    stylize->add_option("image", image_path, "Content image")->required();
    auto* alpha_opt = stylize->add_option("--alpha", alpha_spec, "Archetype weights 'j:w,...' (0-based ids)");
    auto* enhance_opt =
        stylize->add_option("--enhance", enhance, "Move the image's own code toward archetype j by w")->expected(2);
    alpha_opt->excludes(enhance_opt);
    stylize->add_option("--strength", strength, "Sets gamma = delta")->capture_default_str();
    stylize->add_option("--gamma", gamma, "Amount of stylization (overrides --strength)");
    stylize->add_option("--delta", delta, "Trust in the running stylized image (overrides --strength)");
    stylize->add_flag("--baseline", baseline, "Use the single-parameter update instead");
    stylize->add_option("--out", stylize_out, "Output PNG")->capture_default_str();

    // synthesize
    auto* synthesize = app.add_subcommand("synthesize", "Render archetype textures from noise");
    long long archetype = -1;
    std::uint64_t seed = 0;
    bool all = false;
    std::string synth_out;
    atelier::SynthesisOptions synth;
    synthesize->add_option("model", model_dir, "Model directory")->required();
    auto* archetype_opt = synthesize->add_option("--archetype", archetype, "Archetype id (0-based)");
    auto* all_opt = synthesize->add_flag("--all", all, "One texture per archetype");
    archetype_opt->excludes(all_opt);
    synthesize->add_option("--seed", seed)->capture_default_str();
    synthesize->add_option("--size", synth.size, "Texture side in pixels")->capture_default_str();
    synthesize->add_option("--iterations", synth.iterations)->capture_default_str();
    synthesize->add_option("--out", synth_out, "Output PNG, or directory with --all");

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the HTTP API for a model");
    atelier::http::ServerOptions server;
    std::string serve_model;
    int texture_size = 512;
    serve->add_option("model", serve_model, "Model directory")->envname("ATELIER_MODEL");
    serve->add_option("--port", server.port)->capture_default_str();
    serve->add_option("--host", server.host)->capture_default_str();
    serve->add_option("--threads", server.threads, "Worker threads (0: all cores)");
    serve->add_option("--texture-size", texture_size, "Side of synthesized archetype textures")->capture_default_str();

    // utilities
    auto* make_codec = app.add_subcommand("make-codec", "Write the bundled reference ONNX codec");
    std::string codec_out;
    make_codec->add_option("path", codec_out, "Archive path (trailing '/' writes a directory)")->required();

    auto* make_corpus = app.add_subcommand("make-corpus", "Write seeded procedural textures");
    std::string corpus_dir;
    int corpus_count = 64, corpus_size = 128;
    std::uint64_t corpus_seed = 0;
    make_corpus->add_option("directory", corpus_dir)->required();
    make_corpus->add_option("--count", corpus_count)->capture_default_str();
    make_corpus->add_option("--size", corpus_size)->capture_default_str();
    make_corpus->add_option("--seed", corpus_seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }
    spdlog::set_default_logger(spdlog::stderr_color_mt("atelier"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*ingest) {
            atelier::IngestOptions options;
            options.resize = atelier::ResizePolicy::parse(resize_spec);
            options.include = read_list(include_file);
            options.exclude = read_list(exclude_file);
            options.threads = threads;
            atelier::IngestReport report;
            const auto store = atelier::ingest(ingest_dir, open_codec(codec_spec), options, &report);
            atelier::save_store(store, ingest_out);
            std::cout << json{{"entries", store.size()}, {"skipped", report.skipped.size()},
                              {"schema_hash", store.schema.hash()}}
                             .dump()
                      << "\n";
        } else if (*fit) {
            if (!fs::exists(fs::path(fit_store) / "store.json")) {
                throw atelier::InvalidArgument("no store at " + fit_store);
            }
            const auto start = std::chrono::steady_clock::now();
            const auto store = atelier::load_store(fit_store);
            if (fit_k < 0) throw atelier::InvalidArgument("--k must be positive");
            if (fit_k > static_cast<long long>(store.size())) {
                throw atelier::InvalidArgument("k=" + std::to_string(fit_k) + " exceeds the number of images n=" +
                                               std::to_string(store.size()));
            }
            atelier::ModelFitOptions options;
            options.k = fit_k;
            options.reducer_rank = fit_rank;
            options.archetypes.seed = fit_seed;
            options.archetypes.max_iterations = fit_iterations;
            options.archetypes.tolerance = fit_tolerance;
            const auto model = atelier::fit_model(store.stats(), store.ids(), store.schema, options);
            atelier::save_model(model, fit_out);
            const json report = {
                {"config",
                 {{"store", fs::absolute(fit_store).lexically_normal().string()},
                  {"k", model.k()},
                  {"seed", fit_seed},
                  {"reducer_rank_requested", fit_rank},
                  {"max_iterations", fit_iterations},
                  {"tolerance", fit_tolerance}}},
                {"n", model.n()},
                {"k", model.k()},
                {"reducer_rank", model.reducer.rank},
                {"explained_variance_ratio", model.reducer.explained_variance_ratio},
                {"objective_curve", model.telemetry.objective_curve},
                {"iterations", model.telemetry.iterations},
                {"converged", model.telemetry.converged},
                {"schema_hash", model.schema.hash()}};
            write_json_file(fs::path(fit_out) / "fit_report.json", report);
            spdlog::info("fitted k={} on n={} in {:.2f} s, objective {:.6g}", model.k(), model.n(),
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                         model.telemetry.objective_curve.empty() ? 0.0 : model.telemetry.objective_curve.back());
            std::cout << report.dump(2) << "\n";
        } else if (*encode) {
            auto service = atelier::StyleService::open(model_dir);
            const auto bytes = read_input(image_path);
            const auto d = service->decompose_upload(bytes);
            json out = service->decomposition_json(d, threshold);
            out.erase("alpha");
            std::cout << out.dump(2) << "\n";
        } else if (*stylize) {
            auto service = atelier::StyleService::open(model_dir);
            atelier::StylizeRequest request;
            if (!alpha_spec.empty()) request.alpha = atelier::parse_alpha_spec(alpha_spec, service->model().k());
            if (!enhance.empty()) {
                if (enhance[0] != std::floor(enhance[0])) throw atelier::InvalidArgument("--enhance: j must be an integer");
                request.enhance = std::pair{static_cast<Eigen::Index>(enhance[0]), enhance[1]};
            }
            request.params.gamma = gamma.value_or(strength);
            request.params.delta = delta.value_or(strength);
            request.baseline = baseline;
            const auto png = service->stylize_png(read_input(image_path), request);
            atelier::write_file_bytes(stylize_out, png);
        } else if (*synthesize) {
            atelier::ServiceOptions options;
            options.texture = synth;
            auto service = atelier::StyleService::open(model_dir, options);
            const auto k = service->model().k();
            if (all) {
                const fs::path dir = synth_out.empty() ? fs::path("textures") : fs::path(synth_out);
                fs::create_directories(dir);
                for (Eigen::Index j = 0; j < k; ++j) {
                    char name[48];
                    std::snprintf(name, sizeof name, "archetype_%03ld.png", static_cast<long>(j));
                    atelier::write_file_bytes(dir / name, service->texture_png(j, seed));
                }
            } else {
                if (archetype < 0) throw atelier::InvalidArgument("give --archetype j or --all");
                const fs::path out = synth_out.empty() ? fs::path("archetype_" + std::to_string(archetype) + ".png")
                                                       : fs::path(synth_out);
                atelier::write_file_bytes(out, service->texture_png(archetype, seed));
            }
        } else if (*serve) {
            if (serve_model.empty()) throw atelier::InvalidArgument("no model given (argument or ATELIER_MODEL)");
            atelier::ServiceOptions options;
            options.texture.size = texture_size;
            auto service = atelier::StyleService::open(serve_model, options);
            if (!atelier::http::serve(*service, server)) {
                throw atelier::Error("cannot listen on " + server.host + ":" + std::to_string(server.port));
            }
        } else if (*make_codec) {
            atelier::write_reference_codec(codec_out);
        } else if (*make_corpus) {
            atelier::write_synthetic_corpus(corpus_dir, corpus_count, corpus_size, corpus_seed);
        }
    } catch (const atelier::FieldError& e) {
        spdlog::error("{}", e.what());
        return kUsageError;
    } catch (const atelier::Error& e) {
        spdlog::error("{}", e.what());
        return kUsageError;
    } catch (const std::exception& e) {
        spdlog::error("unexpected failure: {}", e.what());
        return 1;
    }
    return 0;
}
