#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support/temp_dir.hpp"

#include "dinoprobe/embeddings.hpp"
#include "dinoprobe/error.hpp"
#include "dinoprobe/manifest.hpp"
#include "dinoprobe/rng.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/text.hpp"

#include <filesystem>
#include <fstream>

using namespace dinoprobe;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures = DINOPROBE_FIXTURES;

using testing_support::TempDir;

void touch_image(const fs::path& p)
{
    fs::create_directories(p.parent_path());
    fs::copy_file(fixtures / "images/white_1x1.png", p, fs::copy_options::overwrite_existing);
}

DatasetManifest mini_manifest(const fs::path& root)
{
    return build_manifest(root);
}

const VisionTransformer& tiny_model()
{
    static const VisionTransformer model(WeightStore::load(fixtures / "vit_tiny/weights.dpt"));
    return model;
}

} // namespace

TEST_CASE("build_manifest")
{
    SUBCASE("banana-shaped class layout")
    {
        TempDir dir("manifest_banana");
        const std::pair<const char*, int> classes[] = {
            {"green", 104}, {"yellowish-green", 48}, {"midripen", 88}, {"overripen", 33}};
        for (auto [name, count] : classes)
            for (int i = 0; i < count; ++i)
                touch_image(dir.path / name / ("img" + std::to_string(i) + ".jpg"));
        const auto m = build_manifest(dir.path);
        CHECK(m.entries.size() == 273);
        CHECK(m.class_names == std::vector<std::string>{"green", "midripen", "overripen", "yellowish-green"});
        const auto ordinal =
            build_manifest(dir.path, {}, {"green", "yellowish-green", "midripen", "overripen"});
        CHECK(ordinal.class_names.front() == "green");
        CHECK(ordinal.entries[104].label == "yellowish-green");
        CHECK_THROWS_AS(build_manifest(dir.path, {}, {"green", "midripen"}), ConfigError);
    }
    SUBCASE("a single class is an error")
    {
        TempDir dir("manifest_one");
        touch_image(dir.path / "only/a.png");
        CHECK_THROWS_AS(build_manifest(dir.path), DataError);
    }
    SUBCASE("no images at all is an error")
    {
        TempDir dir("manifest_none");
        fs::create_directories(dir.path / "a");
        fs::create_directories(dir.path / "b");
        CHECK_THROWS_AS(build_manifest(dir.path), DataError);
    }
    SUBCASE("case-variant duplicate names across classes get distinct ids")
    {
        TempDir dir("manifest_case");
        touch_image(dir.path / "healthy/Apple.PNG");
        touch_image(dir.path / "damaged/apple.png");
        std::ofstream(dir.path / "damaged/notes.txt") << "ignored";
        fs::create_directories(dir.path / "empty");
        const auto m = build_manifest(dir.path);
        REQUIRE(m.entries.size() == 2);
        CHECK(m.entries[0].sample_id == "damaged/apple.png");
        CHECK(m.entries[1].sample_id == "healthy/Apple.PNG");
        CHECK(m.class_names == std::vector<std::string>{"damaged", "healthy"});
    }
    SUBCASE("creation order does not matter")
    {
        TempDir a("manifest_order_a"), b("manifest_order_b");
        const std::vector<std::string> names{"z.png", "m.jpg", "a.jpeg", "k.png"};
        for (std::size_t i = 0; i < names.size(); ++i) {
            touch_image(a.path / "x" / names[i]);
            touch_image(a.path / "y" / names[i]);
            touch_image(b.path / "y" / names[names.size() - 1 - i]);
            touch_image(b.path / "x" / names[names.size() - 1 - i]);
        }
        auto ma = build_manifest(a.path), mb = build_manifest(b.path);
        REQUIRE(ma.entries.size() == mb.entries.size());
        for (std::size_t i = 0; i < ma.entries.size(); ++i)
            CHECK(ma.entries[i].sample_id == mb.entries[i].sample_id);
        CHECK(ma.entries[0].sample_id == "x/a.jpeg");
    }
    SUBCASE("CSV round trip")
    {
        TempDir dir("manifest_csv");
        const auto m = build_manifest(fixtures / "mini_dataset");
        write_manifest_csv(m, dir.path / "manifest.csv");
        const auto back = read_manifest_csv(dir.path / "manifest.csv");
        CHECK(back.entries == m.entries);
        CHECK(back.class_names == m.class_names);
        std::ofstream(dir.path / "bad.csv") << "sample_id,path,label\na,b\n";
        CHECK_THROWS_AS(read_manifest_csv(dir.path / "bad.csv"), DataError);
        std::ofstream(dir.path / "dup.csv") << "sample_id,path,label\na,x.png,c1\na,y.png,c2\n";
        CHECK_THROWS_AS(read_manifest_csv(dir.path / "dup.csv"), DataError);
    }
}

TEST_CASE("extract_embeddings")
{
    TempDir cache("extract_cache");
    const auto& model = tiny_model();

    SUBCASE("empty manifest")
    {
        DatasetManifest empty;
        const auto r = extract_embeddings(empty, model, "tiny", cache.path);
        CHECK(r.embeddings.size() == 0);
        CHECK(r.forward_passes == 0);
        CHECK(fs::is_empty(cache.path));
    }
    SUBCASE("warm cache skips the model and keeps identical bytes")
    {
        const auto m = mini_manifest(fixtures / "mini_dataset");
        const auto first = extract_embeddings(m, model, "tiny", cache.path);
        CHECK(first.embeddings.size() == 24);
        CHECK(first.embeddings.dim == 64);
        CHECK(first.forward_passes == 24);
        const auto cache_file = embedding_cache_path(cache.path, "tiny", m.preprocess);
        const auto bytes = read_file_bytes(cache_file);

        const auto second = extract_embeddings(m, model, "tiny", cache.path);
        CHECK(second.forward_passes == 0);
        CHECK(second.cache_hits == 24);
        CHECK(second.embeddings.vectors == first.embeddings.vectors);
        CHECK(read_file_bytes(cache_file) == bytes);

        // recomputing from scratch into another cache writes the same bytes
        TempDir other("extract_cache_other");
        ExtractOptions opts;
        opts.jobs = 3;
        const auto third = extract_embeddings(m, model, "tiny", other.path, opts);
        CHECK(third.forward_passes == 24);
        CHECK(read_file_bytes(embedding_cache_path(other.path, "tiny", m.preprocess)) == bytes);
    }
    SUBCASE("edited images are re-embedded")
    {
        TempDir data("extract_data");
        fs::copy(fixtures / "mini_dataset", data.path, fs::copy_options::recursive);
        const auto m = mini_manifest(data.path);
        extract_embeddings(m, model, "tiny", cache.path);
        fs::copy_file(fixtures / "vit_tiny/images/img1.png", data.path / "ripe/ripe_03.png",
                      fs::copy_options::overwrite_existing);
        const auto again = extract_embeddings(m, model, "tiny", cache.path);
        CHECK(again.forward_passes == 1);
        PreprocessSpec other = m.preprocess;
        other.mode = ResizeMode::fit_width_pad_height;
        auto m2 = m;
        m2.preprocess = other;
        CHECK(extract_embeddings(m2, model, "tiny", cache.path).forward_passes == 24);
    }
    SUBCASE("unreadable samples are collected; too many abort")
    {
        TempDir data("extract_bad");
        fs::copy(fixtures / "mini_dataset", data.path, fs::copy_options::recursive);
        fs::copy_file(fixtures / "images/truncated.jpg", data.path / "green/broken.jpg");
        const auto m = mini_manifest(data.path);
        const auto r = extract_embeddings(m, model, "tiny", cache.path);
        CHECK(r.embeddings.size() == 24);
        REQUIRE(r.failures.size() == 1);
        CHECK(r.failures[0].find("green/broken.jpg") == 0);

        fs::copy_file(fixtures / "images/truncated.jpg", data.path / "ripe/broken2.jpg");
        fs::copy_file(fixtures / "images/not_an_image.png", data.path / "overripe/broken3.png");
        CHECK_THROWS_AS(extract_embeddings(mini_manifest(data.path), model, "tiny", cache.path), DataError);
    }
}

TEST_CASE("embedding CSV import")
{
    TempDir dir("import");
    const auto m = mini_manifest(fixtures / "mini_dataset");
    const auto set = extract_embeddings(m, tiny_model(), "tiny", dir.path / "cache").embeddings;

    SUBCASE("save then import round-trips exactly")
    {
        write_embeddings_csv(set, dir.path / "emb.csv");
        const auto back = import_embeddings(dir.path / "emb.csv", m, "tiny");
        CHECK(back.sample_ids == set.sample_ids);
        CHECK(back.labels == set.labels);
        CHECK(back.vectors == set.vectors);
        const auto content = text::read_text((dir.path / "emb.csv").string());
        CHECK(content.starts_with("sample_id,label,e0,e1,"));
        CHECK(content.find('\r') == std::string::npos);
    }
    SUBCASE("binary save/load round-trips exactly")
    {
        save_embeddings(set, dir.path / "emb.dpt");
        const auto back = load_embeddings(dir.path / "emb.dpt", m);
        CHECK(back.vectors == set.vectors);
        CHECK(back.model_tag == "tiny");
    }
    SUBCASE("unknown id")
    {
        write_embeddings_csv(set, dir.path / "emb.csv");
        std::string row = "green/ghost.png,green";
        for (int i = 0; i < 64; ++i)
            row += ",0.5";
        std::ofstream(dir.path / "emb.csv", std::ios::app) << row << "\n";
        CHECK_THROWS_WITH_AS(import_embeddings(dir.path / "emb.csv", m), doctest::Contains("green/ghost.png"),
                             DataError);
    }
    SUBCASE("ragged, non-finite, wrong label")
    {
        std::ofstream(dir.path / "ragged.csv") << "sample_id,label,e0,e1\ngreen/green_00.png,green,1,2\n"
                                                  "green/green_01.png,green,1\n";
        CHECK_THROWS_WITH_AS(import_embeddings(dir.path / "ragged.csv", m), doctest::Contains("row 3"), DataError);
        std::ofstream(dir.path / "nan.csv") << "sample_id,label,e0\ngreen/green_00.png,green,nan\n";
        CHECK_THROWS_WITH_AS(import_embeddings(dir.path / "nan.csv", m), doctest::Contains("row 2"), DataError);
        std::ofstream(dir.path / "label.csv") << "sample_id,label,e0\ngreen/green_00.png,ripe,1\n";
        CHECK_THROWS_AS(import_embeddings(dir.path / "label.csv", m), DataError);
    }
    SUBCASE("external 2048-d features")
    {
        Rng rng(1);
        std::ofstream out(dir.path / "cnn.csv");
        out << "sample_id,label";
        for (int j = 0; j < 2048; ++j)
            out << ",e" << j;
        out << "\n";
        for (const auto& e : m.entries) {
            out << e.sample_id << ',' << e.label;
            for (int j = 0; j < 2048; ++j)
                out << ',' << text::shortest(static_cast<float>(rng.normal()));
            out << "\n";
        }
        out.close();
        const auto cnn = import_embeddings(dir.path / "cnn.csv", m);
        CHECK(cnn.dim == 2048);
        CHECK(cnn.size() == 24);
        CHECK(cnn.model_tag == "cnn");
    }
}
