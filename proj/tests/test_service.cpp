#include "atelier/error.hpp"
#include "atelier/service.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <thread>

using namespace atelier;

namespace {

std::string field_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const FieldError& e) {
        return e.field();
    }
    return "<no error>";
}

class ServiceTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        small = new atelier::testing::SmallModel(atelier::testing::small_model(10, 40, 3, 5));
        ServiceOptions options;
        options.cache_capacity = 2;
        options.texture = {1, 32, true};
        service = new StyleService(small->model, small->codec, options);
    }
    static void TearDownTestSuite() {
        delete service;
        delete small;
    }
    static atelier::testing::SmallModel* small;
    static StyleService* service;

    static std::vector<std::uint8_t> png(std::uint64_t seed) { return encode_png(synthetic_texture(seed, 40)); }
};
atelier::testing::SmallModel* ServiceTest::small = nullptr;
StyleService* ServiceTest::service = nullptr;

}  // namespace

TEST(NormalizeUserAlpha, RenormalizesWithinTolerance) {
    const SimplexVector a = normalize_user_alpha((Vector(3) << 0.2, 0.2, 0.4).finished(), 3);
    EXPECT_DOUBLE_EQ(a[2], 0.5);
    EXPECT_DOUBLE_EQ(normalize_user_alpha((Vector(2) << 1.0, 1.0).finished(), 2)[0], 0.5);
    EXPECT_EQ(field_of([] { normalize_user_alpha((Vector(3) << 0.1, 0.1, 0.1).finished(), 3); }), "alpha");
    EXPECT_EQ(field_of([] { normalize_user_alpha((Vector(2) << 1.5, 0.6).finished(), 2); }), "alpha");
    EXPECT_EQ(field_of([] { normalize_user_alpha((Vector(2) << 1.2, -0.2).finished(), 2); }), "alpha");
    EXPECT_EQ(field_of([] { normalize_user_alpha((Vector(2) << NAN, 1.0).finished(), 2); }), "alpha");
    EXPECT_EQ(field_of([] { normalize_user_alpha(Vector::Constant(3, 0.5), 2); }), "alpha");
}

TEST(ParseAlphaSpec, ParsesAndValidates) {
    const Vector v = parse_alpha_spec("0:0.25,2:0.75", 3);
    EXPECT_EQ(v, (Vector(3) << 0.25, 0.0, 0.75).finished());
    EXPECT_THROW(parse_alpha_spec("3:1", 3), FieldError);
    EXPECT_THROW(parse_alpha_spec("-1:1", 3), FieldError);
    EXPECT_THROW(parse_alpha_spec("1:0.5,1:0.5", 3), FieldError);
    EXPECT_THROW(parse_alpha_spec("a:1", 3), FieldError);
    EXPECT_THROW(parse_alpha_spec("1:x", 3), FieldError);
    EXPECT_THROW(parse_alpha_spec("1", 3), FieldError);
    EXPECT_THROW(parse_alpha_spec("", 3), FieldError);
}

TEST(ContentHash, KnownDigest) {
    const std::string abc = "abc";
    EXPECT_EQ(content_hash(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size())),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(LruCache, EvictsLeastRecentlyUsed) {
    LruCache<int, std::string> cache(2);
    cache.put(1, "one");
    cache.put(2, "two");
    EXPECT_EQ(cache.get(1), "one");  // 2 is now the oldest
    cache.put(3, "three");
    EXPECT_FALSE(cache.get(2).has_value());
    EXPECT_EQ(cache.get(1), "one");
    EXPECT_EQ(cache.get(3), "three");
    cache.put(3, "drei");
    EXPECT_EQ(cache.get(3), "drei");
    EXPECT_EQ(cache.size(), 2u);
}

TEST_F(ServiceTest, TrainingImagesDecomposeToTheirCodes) {
    for (Eigen::Index i = 0; i < small->model.n(); ++i) {
        const StyleDecomposition d = service->decompose(synthetic_texture(5 + static_cast<std::uint64_t>(i), 40));
        EXPECT_LE((d.alpha.weights() - small->model.alpha.col(i)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST_F(ServiceTest, DecompositionJsonListsSignificantWeights) {
    std::string hash;
    const StyleDecomposition d = service->decompose_upload(png(100), &hash);
    EXPECT_EQ(hash.size(), 64u);
    const auto j = service->decomposition_json(d);
    EXPECT_EQ(j.at("alpha").size(), 3u);
    double previous = 2.0;
    for (const auto& w : j.at("weights")) {
        EXPECT_GT(w.at("weight").get<double>(), kDisplayThreshold);
        EXPECT_LE(w.at("weight").get<double>(), previous);
        previous = w.at("weight").get<double>();
    }
    EXPECT_GE(j.at("residual").get<double>(), 0.0);
    const StyleDecomposition again = service->decompose_cached(hash);
    EXPECT_EQ(again.alpha.weights(), d.alpha.weights());
}

TEST_F(ServiceTest, StylizeRequestsAreValidated) {
    const auto bytes = png(101);
    StylizeRequest r;
    EXPECT_EQ(field_of([&] { service->stylize_upload(bytes, r); }), "alpha");
    r.alpha = Vector::Constant(3, 1.0 / 3.0);
    r.enhance = std::pair<Eigen::Index, double>{0, 0.5};
    EXPECT_EQ(field_of([&] { service->stylize_upload(bytes, r); }), "alpha");
    r.alpha.reset();
    r.enhance = std::pair<Eigen::Index, double>{7, 0.5};
    EXPECT_EQ(field_of([&] { service->stylize_upload(bytes, r); }), "enhance");
    r.enhance = std::pair<Eigen::Index, double>{0, 1.5};
    EXPECT_EQ(field_of([&] { service->stylize_upload(bytes, r); }), "enhance");
    r.enhance = std::pair<Eigen::Index, double>{0, 0.5};
    r.params.gamma = 3.0;
    EXPECT_EQ(field_of([&] { service->stylize_upload(bytes, r); }), "gamma");
    r.params.gamma = 0.5;
    r.params.delta = -1.0;
    EXPECT_EQ(field_of([&] { service->stylize_upload(bytes, r); }), "delta");
    const std::string junk = "not an image";
    EXPECT_EQ(field_of([&] {
                  service->stylize_upload(std::span(reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size()),
                                          StylizeRequest{Vector::Constant(3, 1.0 / 3.0)});
              }),
              "image");
    EXPECT_EQ(field_of([&] { service->stylize_cached("feedface", StylizeRequest{Vector::Constant(3, 1.0 / 3.0)}); }),
              "image_hash");
}

TEST_F(ServiceTest, StylizeMatchesDirectPipeline) {
    const auto bytes = png(102);
    StylizeRequest r;
    r.alpha = (Vector(3) << 0.2, 0.3, 0.5).finished();
    r.params = {0.8, 0.6, true};
    const Image expected = stylize(decode_image(bytes), mix_style(small->model, *r.alpha).layers, small->codec, r.params);
    EXPECT_TRUE(service->stylize_upload(bytes, r) == expected);
    const std::string hash = service->upload(bytes);
    EXPECT_EQ(service->stylize_png_cached(hash, r), encode_png(expected));

    r.baseline = true;
    const Image base = stylize_baseline(decode_image(bytes), mix_style(small->model, *r.alpha).layers, small->codec, 0.8);
    EXPECT_TRUE(service->stylize_upload(bytes, r) == base);
}

TEST_F(ServiceTest, EnhanceUsesTheImagesOwnCode) {
    const auto bytes = png(103);
    const SimplexVector own = service->decompose_upload(bytes).alpha;
    StylizeRequest r;
    r.enhance = std::pair<Eigen::Index, double>{1, 0.4};
    StylizeRequest explicit_code;
    explicit_code.alpha = enhance_code(own, 1, 0.4).weights();
    EXPECT_EQ(service->stylize_png(bytes, r), service->stylize_png(bytes, explicit_code));
}

TEST_F(ServiceTest, ContentCacheIsBounded) {
    service->upload(png(110));
    const std::string evicted = service->upload(png(111));
    service->upload(png(112));
    service->upload(png(113));
    EXPECT_LE(service->cached_contents(), 2u);
    EXPECT_THROW(service->decompose_cached(evicted), FieldError);
}

TEST_F(ServiceTest, TexturesAreDeterministicAndConcurrent) {
    const auto first = service->texture_png(0, 4);
    EXPECT_EQ(first, service->texture_png(0, 4));
    EXPECT_EQ(decode_image(first).rows(), 32);
    EXPECT_EQ(field_of([] { service->texture(3, 0); }), "archetype");

    std::vector<std::vector<std::uint8_t>> results(4);
    std::vector<std::thread> threads;
    const auto bytes = png(120);
    for (std::size_t t = 0; t < results.size(); ++t) {
        threads.emplace_back([&, t] {
            StylizeRequest r;
            r.alpha = Vector::Constant(3, 1.0 / 3.0);
            results[t] = service->stylize_png(bytes, r);
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& r : results) EXPECT_EQ(r, results[0]);
}

TEST_F(ServiceTest, SummaryDescribesTheModel) {
    const auto s = service->model_summary();
    EXPECT_EQ(s.at("k"), 3);
    EXPECT_EQ(s.at("n"), 10);
    EXPECT_EQ(s.at("archetypes").size(), 3u);
    EXPECT_EQ(s.at("schema").at("hash"), small->model.schema.hash());
    for (const auto& a : s.at("archetypes")) {
        EXPECT_FALSE(a.at("top_contributions").empty());
        EXPECT_LE(a.at("top_contributions").size(), 5u);
    }
}

TEST(StyleServiceConstruction, RejectsMismatchedCodec) {
    const auto small = atelier::testing::small_model(6, 24, 2, 1);
    ToyCodecOptions other;
    other.patch_sizes = {1, 2, 3, 4, 5};
    EXPECT_THROW(StyleService(small.model, toy_codec(other)), SchemaMismatch);
}
