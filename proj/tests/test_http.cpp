#include "http_server.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace atelier;
using nlohmann::json;
using atelier::testing::TempDir;

namespace {

class HttpTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        small = new atelier::testing::SmallModel(atelier::testing::small_model(10, 40, 3, 11));
        ServiceOptions options;
        options.texture = {1, 32, true};
        service = new StyleService(small->model, small->codec, options);
        server = new httplib::Server;
        server->new_task_queue = [] { return new httplib::ThreadPool(4); };
        http::configure(*server, *service);
        port = server->bind_to_any_port("127.0.0.1");
        thread = new std::thread([] { server->listen_after_bind(); });
        server->wait_until_ready();
    }
    static void TearDownTestSuite() {
        server->stop();
        thread->join();
        delete thread;
        delete server;
        delete service;
        delete small;
    }

    static httplib::Client client() {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(60, 0);
        return c;
    }

    static std::string png(std::uint64_t seed) {
        const auto bytes = encode_png(synthetic_texture(seed, 40));
        return {bytes.begin(), bytes.end()};
    }

    static json error_body(const httplib::Result& r) { return json::parse(r->body); }

    static atelier::testing::SmallModel* small;
    static StyleService* service;
    static httplib::Server* server;
    static std::thread* thread;
    static int port;
};
atelier::testing::SmallModel* HttpTest::small = nullptr;
StyleService* HttpTest::service = nullptr;
httplib::Server* HttpTest::server = nullptr;
std::thread* HttpTest::thread = nullptr;
int HttpTest::port = 0;

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_F(HttpTest, ModelSummary) {
    auto r = client().Get("/api/model");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
    const json body = json::parse(r->body);
    EXPECT_EQ(body, service->model_summary());
    EXPECT_EQ(body.at("k"), 3);
}

TEST_F(HttpTest, ArchetypeTextures) {
    auto r = client().Get("/api/archetypes/1/texture?seed=3");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(bytes_of(r->body), encode_png(synthesize_texture(archetype_stats(small->model, 1), small->codec, 3,
                                                                {1, 32, true})));
    r = client().Get("/api/archetypes/3/texture");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(error_body(r).at("field"), "archetype");
    r = client().Get("/api/archetypes/0/texture?seed=-2");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(error_body(r).at("field"), "seed");
    r = client().Get("/api/archetypes/x/texture");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 404);
}

TEST_F(HttpTest, DecomposeMultipartAndRawBodies) {
    const std::string image = png(200);
    const httplib::MultipartFormDataItems items{{"image", image, "content.png", "image/png"}};
    auto r = client().Post("/api/decompose", items);
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    const json body = json::parse(r->body);
    EXPECT_EQ(body.at("image_hash"), content_hash(bytes_of(image)));
    json expected = service->decomposition_json(service->decompose(decode_image(bytes_of(image))));
    expected["image_hash"] = body.at("image_hash");
    EXPECT_EQ(body, expected);

    r = client().Post("/api/decompose", image, "image/png");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body), body);

    const httplib::MultipartFormDataItems by_hash{{"image_hash", body.at("image_hash").get<std::string>(), "", ""}};
    r = client().Post("/api/decompose", by_hash);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);

    r = client().Post("/api/decompose", "plain text", "text/plain");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(error_body(r).at("field"), "image");
}

TEST_F(HttpTest, StylizeMatchesTheService) {
    const std::string image = png(201);
    const httplib::MultipartFormDataItems items{{"image", image, "content.png", "image/png"},
                                                {"alpha", "[0.2, 0.3, 0.5]", "", ""},
                                                {"gamma", "0.7", "", ""},
                                                {"delta", "0.4", "", ""}};
    auto r = client().Post("/api/stylize", items);
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    const std::string hash = r->get_header_value("X-Image-Hash");
    EXPECT_EQ(hash, content_hash(bytes_of(image)));
    StylizeRequest request;
    request.alpha = (Vector(3) << 0.2, 0.3, 0.5).finished();
    request.params = {0.7, 0.4, true};
    EXPECT_EQ(bytes_of(r->body), service->stylize_png(bytes_of(image), request));

    // Slider changes reuse the cached upload by hash.
    const json follow_up = {{"image_hash", hash}, {"alpha", "0:0.2,1:0.3,2:0.5"}, {"gamma", 0.7}, {"delta", 0.4}};
    auto again = client().Post("/api/stylize", follow_up.dump(), "application/json");
    ASSERT_TRUE(again);
    ASSERT_EQ(again->status, 200) << again->body;
    EXPECT_EQ(again->body, r->body);
}

TEST_F(HttpTest, StylizeStrengthAndEnhance) {
    const std::string image = png(202);
    auto r = client().Post("/api/stylize", httplib::MultipartFormDataItems{{"image", image, "c.png", "image/png"},
                                                                            {"enhance", "2:0.5", "", ""},
                                                                            {"strength", "0.6", "", ""}});
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    StylizeRequest request;
    request.enhance = std::pair<Eigen::Index, double>{2, 0.5};
    request.params = {0.6, 0.6, true};
    EXPECT_EQ(bytes_of(r->body), service->stylize_png(bytes_of(image), request));
}

TEST_F(HttpTest, InvalidFieldsAreReported) {
    const std::string image = png(203);
    const auto post = [&](httplib::MultipartFormDataItems items) {
        items.push_back({"image", image, "c.png", "image/png"});
        auto r = client().Post("/api/stylize", items);
        EXPECT_TRUE(r);
        EXPECT_EQ(r->status, 400) << r->body;
        return json::parse(r->body);
    };
    EXPECT_EQ(post({{"alpha", "[0.1, 0.1, 0.1]", "", ""}}).at("field"), "alpha");
    EXPECT_EQ(post({{"alpha", "[1, 0]", "", ""}}).at("field"), "alpha");
    EXPECT_EQ(post({{"alpha", "5:1", "", ""}}).at("field"), "alpha");
    EXPECT_EQ(post({{"alpha", "[0.5, 0.5, 0]", "", ""}, {"gamma", "1.5", "", ""}}).at("field"), "gamma");
    EXPECT_EQ(post({{"alpha", "[0.5, 0.5, 0]", "", ""}, {"delta", "abc", "", ""}}).at("field"), "delta");
    EXPECT_EQ(post({{"enhance", "9:0.5", "", ""}}).at("field"), "enhance");
    EXPECT_EQ(post({}).at("field"), "alpha");
    const json message = post({{"alpha", "[3, 3, 3]", "", ""}});
    EXPECT_NE(message.at("error").get<std::string>().find("[0.5, 2]"), std::string::npos);

    auto r = client().Post("/api/stylize", R"({"image_hash": "0123", "alpha": [1, 0, 0]})", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(error_body(r).at("field"), "image_hash");
    r = client().Post("/api/stylize", "{not json", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(error_body(r).at("field"), "body");
}

TEST_F(HttpTest, OversizedUploadsAreRejected) {
    const std::string huge(kMaxUploadBytes + 1024, 'x');
    auto r = client().Post("/api/decompose", huge, "image/png");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 413);
    EXPECT_NE(error_body(r).at("error").get<std::string>().find("20 MB"), std::string::npos);
}

TEST_F(HttpTest, ConcurrentStylizeRequestsAgree) {
    const std::string image = png(204);
    std::vector<std::string> bodies(6);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        threads.emplace_back([&, i] {
            auto r = client().Post("/api/stylize", httplib::MultipartFormDataItems{{"image", image, "c.png", "image/png"},
                                                                                    {"alpha", "0:1", "", ""}});
            if (r && r->status == 200) bodies[i] = r->body;
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& b : bodies) {
        EXPECT_FALSE(b.empty());
        EXPECT_EQ(b, bodies[0]);
    }
}

TEST_F(HttpTest, MatchesTheCommandLine) {
    TempDir dir;
    save_model(small->model, dir / "model");
    const std::string image = png(205);
    write_file_bytes(dir / "content.png", bytes_of(image));
    const std::string command = atelier::testing::cli_path().string() + " stylize " + (dir / "model").string() + " " +
                                (dir / "content.png").string() + " --alpha 0:0.5,2:0.5 --gamma 0.8 --delta 0.3 --out " +
                                (dir / "cli.png").string() + " 2>/dev/null";
    ASSERT_EQ(atelier::testing::run(command), 0);
    auto r = client().Post("/api/stylize", httplib::MultipartFormDataItems{{"image", image, "c.png", "image/png"},
                                                                            {"alpha", "[0.5, 0, 0.5]", "", ""},
                                                                            {"gamma", "0.8", "", ""},
                                                                            {"delta", "0.3", "", ""}});
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(bytes_of(r->body), read_file_bytes(dir / "cli.png"));
}
