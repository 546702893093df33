#pragma once

#include "atelier/service.hpp"

#include <httplib.h>

#include <string>

namespace atelier::http {

/// Registers the JSON/PNG API on `server`:
///   GET  /api/model
///   GET  /api/archetypes/{j}/texture?seed=
///   POST /api/decompose   (multipart field "image", or a raw image body)
///   POST /api/stylize     (multipart: image | image_hash, alpha, gamma, delta, strength, baseline, enhance;
///                          or a JSON body with image_hash)
/// Uploads above kMaxUploadBytes are answered with 413; invalid fields with 400.
void configure(httplib::Server& server, StyleService& service);

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    unsigned threads = 0;  // 0: one worker per core (at least two)
};

/// Blocks until the server is stopped.
bool serve(StyleService& service, const ServerOptions& options);

}  // namespace atelier::http
