#include "http_server.hpp"

#include "atelier/parallel.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <optional>

namespace atelier::http {

namespace {

using nlohmann::json;

std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    json body = {{"error", message}};
    if (!field.empty()) body["field"] = field;
    send_json(res, status, body);
}

// Runs a handler, mapping library errors to HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& handler) {
    try {
        handler();
    } catch (const FieldError& e) {
        send_error(res, 400, e.message(), e.field());
    } catch (const SchemaMismatch& e) {
        send_error(res, 400, e.what());
    } catch (const InvalidArgument& e) {
        send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, std::string("malformed request body: ") + e.what(), "body");
    } catch (const std::exception& e) {
        spdlog::error("request failed: {}", e.what());
        send_error(res, 500, e.what());
    }
}

std::optional<std::string> field_value(const httplib::Request& req, const std::string& name) {
    if (req.has_file(name)) return req.get_file_value(name).content;
    if (req.has_param(name)) return req.get_param_value(name);
    return std::nullopt;
}

double parse_number(const std::string& text, const std::string& field) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw FieldError(field, "'" + text + "' is not a number");
}

bool parse_flag(const std::string& text) { return text == "1" || text == "true" || text == "on" || text == "yes"; }

Vector alpha_from_json(const json& value, Eigen::Index k) {
    if (value.is_string()) return parse_alpha_spec(value.get<std::string>(), k);
    if (!value.is_array()) {
        throw FieldError("alpha", "expected an array of " + std::to_string(k) + " weights or a 'j:w,...' string");
    }
    Vector out(static_cast<Eigen::Index>(value.size()));
    for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].is_number()) {
            throw FieldError("alpha", "weight " + std::to_string(i) + " is not a number");
        }
        out[static_cast<Eigen::Index>(i)] = value[i].get<double>();
    }
    return out;
}

Vector parse_alpha(const std::string& text, Eigen::Index k) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        json parsed;
        try {
            parsed = json::parse(text);
        } catch (const json::exception&) {
            throw FieldError("alpha", "not valid JSON");
        }
        return alpha_from_json(parsed, k);
    }
    return parse_alpha_spec(text, k);
}

std::pair<Eigen::Index, double> parse_enhance(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw FieldError("enhance", "expected 'archetype:strength'");
    }
    const double j = parse_number(text.substr(0, colon), "enhance");
    if (j != std::floor(j)) {
        throw FieldError("enhance", "archetype id must be an integer");
    }
    return {static_cast<Eigen::Index>(j), parse_number(text.substr(colon + 1), "enhance")};
}

struct StylizeInput {
    std::optional<std::string> upload;
    std::optional<std::string> hash;
    StylizeRequest request;
};

StylizeInput parse_stylize(const httplib::Request& req, Eigen::Index k) {
    StylizeInput in;
    std::optional<double> strength, gamma, delta;
    if (req.get_header_value("Content-Type").starts_with("application/json")) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            throw FieldError("body", "not valid JSON");
        }
        if (!body.is_object()) throw FieldError("body", "expected a JSON object");
        const auto number = [&](const char* key) -> std::optional<double> {
            if (!body.contains(key)) return std::nullopt;
            if (!body[key].is_number()) throw FieldError(key, "expected a number");
            return body[key].get<double>();
        };
        if (body.contains("image_hash")) in.hash = body["image_hash"].get<std::string>();
        if (body.contains("alpha")) in.request.alpha = alpha_from_json(body["alpha"], k);
        if (body.contains("enhance")) {
            const auto& e = body["enhance"];
            if (!e.is_object() || !e.contains("archetype") || !e.contains("strength")) {
                throw FieldError("enhance", "expected {\"archetype\": j, \"strength\": w}");
            }
            in.request.enhance = {e["archetype"].get<Eigen::Index>(), e["strength"].get<double>()};
        }
        strength = number("strength");
        gamma = number("gamma");
        delta = number("delta");
        if (body.contains("baseline")) in.request.baseline = body["baseline"].get<bool>();
    } else {
        if (req.has_file("image")) in.upload = req.get_file_value("image").content;
        if (auto v = field_value(req, "image_hash")) in.hash = *v;
        if (auto v = field_value(req, "alpha")) in.request.alpha = parse_alpha(*v, k);
        if (auto v = field_value(req, "enhance")) in.request.enhance = parse_enhance(*v);
        if (auto v = field_value(req, "strength")) strength = parse_number(*v, "strength");
        if (auto v = field_value(req, "gamma")) gamma = parse_number(*v, "gamma");
        if (auto v = field_value(req, "delta")) delta = parse_number(*v, "delta");
        if (auto v = field_value(req, "baseline")) in.request.baseline = parse_flag(*v);
    }
    const double s = strength.value_or(1.0);
    in.request.params.gamma = gamma.value_or(s);
    in.request.params.delta = delta.value_or(s);
    for (const auto& [name, value] : {std::pair{"gamma", in.request.params.gamma}, {"delta", in.request.params.delta}}) {
        if (!(value >= 0.0 && value <= 1.0)) throw FieldError(name, "must lie in [0, 1]");
    }
    if (!in.upload && !in.hash) {
        throw FieldError("image", "upload an image or reference one by image_hash");
    }
    return in;
}

}  // namespace

void configure(httplib::Server& server, StyleService& service) {
    server.set_payload_max_length(kMaxUploadBytes);

    server.Get("/api/model", [&service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service.model_summary()); });
    });

    server.Get(R"(/api/archetypes/(-?\d+)/texture)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto j = std::stoll(req.matches[1].str());
            std::uint64_t seed = 0;
            if (req.has_param("seed")) {
                const std::string text = req.get_param_value("seed");
                try {
                    std::size_t used = 0;
                    seed = std::stoull(text, &used);
                    if (used != text.size() || text.starts_with('-')) throw std::invalid_argument(text);
                } catch (const std::exception&) {
                    throw FieldError("seed", "'" + text + "' is not a non-negative integer");
                }
            }
            const auto png = service.texture_png(static_cast<Eigen::Index>(j), seed);
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        });
    });

    server.Post("/api/decompose", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::string hash;
            StyleDecomposition d;
            if (req.is_multipart_form_data()) {
                if (!req.has_file("image")) {
                    if (!req.has_file("image_hash")) throw FieldError("image", "missing upload");
                    hash = req.get_file_value("image_hash").content;
                    d = service.decompose_cached(hash);
                } else {
                    d = service.decompose_upload(as_bytes(req.get_file_value("image").content), &hash);
                }
            } else {
                if (req.body.empty()) throw FieldError("image", "missing upload");
                d = service.decompose_upload(as_bytes(req.body), &hash);
            }
            json body = service.decomposition_json(d);
            body["image_hash"] = hash;
            send_json(res, 200, body);
        });
    });

    server.Post("/api/stylize", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const StylizeInput in = parse_stylize(req, service.model().k());
            std::vector<std::uint8_t> png;
            std::string hash;
            if (in.upload) {
                hash = content_hash(as_bytes(*in.upload));
                png = service.stylize_png(as_bytes(*in.upload), in.request);
            } else {
                hash = *in.hash;
                png = service.stylize_png_cached(hash, in.request);
            }
            res.set_header("X-Image-Hash", hash);
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        });
    });

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const char* reason = res.status == 413 ? "upload exceeds the 20 MB limit" : httplib::status_message(res.status);
            send_error(res, res.status, reason);
        }
    });
}

bool serve(StyleService& service, const ServerOptions& options) {
    httplib::Server server;
    const unsigned threads = options.threads > 0 ? options.threads : std::max(2u, default_concurrency());
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    configure(server, service);
    spdlog::info("serving model (k={}) on http://{}:{} with {} workers", service.model().k(), options.host,
                 options.port, threads);
    return server.listen(options.host, options.port);
}

}  // namespace atelier::http
