#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

using namespace atelier;
using atelier::testing::run;
using atelier::testing::TempDir;

namespace fs = std::filesystem;

namespace {

// One corpus, store and model shared by the whole suite (built through the CLI).
class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir = new TempDir("atelier-cli");
        ASSERT_EQ(cli("make-corpus " + path("corpus") + " --count 10 --size 48 --seed 3"), 0);
        std::string out;
        ASSERT_EQ(cli("ingest " + path("corpus") + " --out " + path("store") + " --resize none", &out), 0);
        const auto summary = nlohmann::json::parse(out);
        ASSERT_EQ(summary.at("entries"), 10);
        ASSERT_EQ(cli("fit " + path("store") + " --k 3 --seed 1 --out " + path("model"), &out), 0);
    }
    static void TearDownTestSuite() { delete dir; }

    static std::string path(const std::string& name) { return (dir->path() / name).string(); }

    static int cli(const std::string& args, std::string* out = nullptr, const std::string& env = {}) {
        return run(env + " " + atelier::testing::cli_path().string() + " " + args + " 2>/dev/null", out);
    }

    static TempDir* dir;
};
TempDir* CliTest::dir = nullptr;

}  // namespace

TEST_F(CliTest, FitWritesReportAndModel) {
    const auto bytes = read_file_bytes(fs::path(path("model")) / "fit_report.json");
    const auto report = nlohmann::json::parse(bytes.begin(), bytes.end());
    EXPECT_EQ(report.at("k"), 3);
    EXPECT_EQ(report.at("config").at("seed"), 1);
    const auto curve = report.at("objective_curve").get<std::vector<double>>();
    for (std::size_t t = 1; t < curve.size(); ++t) EXPECT_LE(curve[t], curve[t - 1] + 1e-10);
    const ArchetypeModel model = load_model(path("model"));
    EXPECT_EQ(model.k(), 3);
    EXPECT_EQ(model.n(), 10);
}

TEST_F(CliTest, EncodePrintsDecomposition) {
    std::string out;
    ASSERT_EQ(cli("encode " + path("model") + " " + path("corpus/tex_0004.png"), &out), 0);
    const auto j = nlohmann::json::parse(out);
    EXPECT_FALSE(j.contains("alpha"));
    double total = 0.0;
    for (const auto& w : j.at("weights")) total += w.at("weight").get<double>();
    EXPECT_LE(total, 1.0 + 1e-9);
    EXPECT_GT(total, 0.9);
    // A training image decomposes to its stored code.
    const ArchetypeModel model = load_model(path("model"));
    for (const auto& w : j.at("weights")) {
        EXPECT_NEAR(w.at("weight").get<double>(), model.alpha(w.at("archetype").get<Eigen::Index>(), 4), 1e-6);
    }
}

TEST_F(CliTest, StylizeVariants) {
    const std::string model = path("model");
    const std::string content = path("corpus/tex_0001.png");
    ASSERT_EQ(cli("stylize " + model + " " + content + " --alpha 0:1 --gamma 0 --out " + path("g0.png")), 0);
    EXPECT_EQ(read_file_bytes(path("g0.png")), encode_png(read_image(content)));

    ASSERT_EQ(cli("stylize " + model + " " + content + " --alpha 0:0.3,1:0.7 --strength 1 --out " + path("ours.png")), 0);
    ASSERT_EQ(cli("stylize " + model + " " + content + " --alpha 0:0.3,1:0.7 --gamma 1 --baseline --out " +
                  path("base.png")),
              0);
    EXPECT_EQ(read_file_bytes(path("ours.png")), read_file_bytes(path("base.png")));

    ASSERT_EQ(cli("stylize " + model + " " + content + " --enhance 2 0.5 --out " + path("enh.png")), 0);
    EXPECT_EQ(decode_image(read_file_bytes(path("enh.png"))).rows(), 48);
}

TEST_F(CliTest, SynthesizeBatchWritesOneFilePerArchetype) {
    ASSERT_EQ(cli("synthesize " + path("model") + " --all --size 32 --iterations 1 --out " + path("tex")), 0);
    for (int j = 0; j < 3; ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "archetype_%03d.png", j);
        EXPECT_TRUE(fs::exists(fs::path(path("tex")) / name)) << name;
    }
    ASSERT_EQ(cli("synthesize " + path("model") + " --archetype 1 --size 32 --iterations 1 --out " + path("one.png")), 0);
    EXPECT_EQ(read_file_bytes(path("one.png")), read_file_bytes(fs::path(path("tex")) / "archetype_001.png"));
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
    const std::string model = path("model");
    const std::string content = path("corpus/tex_0001.png");
    EXPECT_EQ(cli("fit " + path("store") + " --k 11 --out " + path("m2")), 2);
    EXPECT_EQ(cli("fit " + path("nowhere") + " --k 2 --out " + path("m3")), 2);
    EXPECT_EQ(cli("stylize " + model + " " + content + " --alpha 0:0.1 --out " + path("x.png")), 2);
    EXPECT_EQ(cli("stylize " + model + " " + content + " --alpha 7:1 --out " + path("x.png")), 2);
    EXPECT_EQ(cli("stylize " + model + " " + content + " --alpha 0:1 --gamma 2 --out " + path("x.png")), 2);
    EXPECT_EQ(cli("stylize " + model + " " + path("store/store.json") + " --alpha 0:1 --out " + path("x.png")), 2);
    EXPECT_EQ(cli("encode " + path("nowhere") + " " + content), 2);
    EXPECT_EQ(cli("synthesize " + model + " --archetype 3"), 2);
    EXPECT_EQ(cli("ingest " + path("nowhere") + " --out " + path("s2")), 2);
    EXPECT_EQ(cli("ingest " + path("corpus") + " --out " + path("s2") + " --resize huge"), 2);
    EXPECT_EQ(cli("frobnicate"), 2);
    EXPECT_EQ(cli("stylize"), 2);
    EXPECT_EQ(cli("--help"), 0);
}

TEST_F(CliTest, ServeNeedsAModel) {
    EXPECT_EQ(cli("serve", nullptr, "env -u ATELIER_MODEL"), 2);
    EXPECT_EQ(cli("serve --port 1", nullptr, "ATELIER_MODEL=" + path("nowhere")), 2);
}

TEST_F(CliTest, MakeCodecThenIngestWithIt) {
    ASSERT_EQ(cli("make-codec " + path("codec.tar")), 0);
    std::string out;
    ASSERT_EQ(cli("ingest " + path("corpus") + " --out " + path("pstore") + " --resize none --codec " +
                      path("codec.tar"),
                  &out),
              0);
    const StyleStore store = load_store(path("pstore"));
    EXPECT_EQ(store.schema.codec_kind, "pretrained");
    EXPECT_EQ(store.schema.channels, (LayerSchema{6, 18, 48, 96, 192}));
}
