#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "hdms/io.hpp"
#include "hdms/rng.hpp"
#include "test_util.hpp"

using namespace hdms;
using namespace hdms::test;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("hdms_io_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void put_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.tile_size = 8;
    cfg.stride = 4;
    cfg.patch_size = 4;
    cfg.embed_dim = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.downsample_factor = 1;
    cfg.tiles_per_slide = 4;
    return cfg;
}

} // namespace

TEST_CASE("color image round trip is bit exact") {
    TempDir tmp;
    RasterImage img(13, 9, 3);
    Rng rng(1);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(256));
    const fs::path p = tmp.path / "img.ppm";
    write_image(p, img);
    const RasterImage back = read_image(p);
    CHECK(back.width == 13);
    CHECK(back.height == 9);
    CHECK(back.channels == 3);
    CHECK(back.data == img.data);
    // no stray temp file left behind
    CHECK_FALSE(fs::exists(tmp.path / "img.ppm.tmp"));
}

TEST_CASE("gray image and mask round trips") {
    TempDir tmp;
    RasterImage img(7, 5, 1);
    Rng rng(2);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(256));
    write_image(tmp.path / "g.pgm", img);
    CHECK(read_image(tmp.path / "g.pgm").data == img.data);

    BinaryMask mask(7, 5);
    for (auto& b : mask.bits) b = rng.bernoulli(0.5);
    write_mask(tmp.path / "m.pgm", mask);
    CHECK(read_mask(tmp.path / "m.pgm") == mask);
}

TEST_CASE("mask read thresholds at 128") {
    TempDir tmp;
    std::string bytes = "P5\n4 1\n255\n";
    bytes += static_cast<char>(0);
    bytes += static_cast<char>(127);
    bytes += static_cast<char>(128);
    bytes += static_cast<char>(255);
    put_bytes(tmp.path / "t.pgm", bytes);
    const BinaryMask m = read_mask(tmp.path / "t.pgm");
    CHECK_FALSE(m.get(0, 0));
    CHECK_FALSE(m.get(0, 1));
    CHECK(m.get(0, 2));
    CHECK(m.get(0, 3));
}

TEST_CASE("header comments are skipped") {
    TempDir tmp;
    std::string bytes = "P5\n# a comment\n2 1\n# another\n255\nAB";
    put_bytes(tmp.path / "c.pgm", bytes);
    const RasterImage img = read_image(tmp.path / "c.pgm");
    CHECK(img.width == 2);
    CHECK(img.data[0] == 'A');
    CHECK(img.data[1] == 'B');
}

TEST_CASE("unsupported and truncated rasters are rejected") {
    TempDir tmp;
    put_bytes(tmp.path / "ascii.pgm", "P3\n2 2\n255\n0 0 0 0 0 0 0 0 0 0 0 0\n");
    CHECK_THROWS_AS(read_image(tmp.path / "ascii.pgm"), UnsupportedFormat);

    put_bytes(tmp.path / "maxval.pgm", "P5\n2 2\n1000\nAAAA");
    CHECK_THROWS_AS(read_image(tmp.path / "maxval.pgm"), UnsupportedFormat);

    put_bytes(tmp.path / "short.pgm", "P5\n4 4\n255\nAB");
    CHECK_THROWS_AS(read_image(tmp.path / "short.pgm"), TruncatedFile);

    put_bytes(tmp.path / "hdr.pgm", "P5\n4");
    CHECK_THROWS_AS(read_image(tmp.path / "hdr.pgm"), TruncatedFile);
}

TEST_CASE("probability maps persist as big-endian 16-bit samples") {
    TempDir tmp;
    ProbMap map(3, 1);
    map.prob = {0.0f, 1.0f, 0.5f};
    const fs::path p = tmp.path / "p.pgm";
    write_prob_map(p, map);
    const std::string bytes = file_bytes(p);
    // header "P5\n3 1\n65535\n" then 6 raster bytes
    REQUIRE(bytes.size() == 13 + 6);
    CHECK(static_cast<unsigned char>(bytes[13]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[14]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[15]) == 0xff);
    CHECK(static_cast<unsigned char>(bytes[16]) == 0xff);
    // 0.5 * 65535 rounds to 32768 = 0x8000
    CHECK(static_cast<unsigned char>(bytes[17]) == 0x80);
    CHECK(static_cast<unsigned char>(bytes[18]) == 0x00);

    const ProbMap back = read_prob_map(p);
    for (std::size_t i = 0; i < map.prob.size(); ++i)
        CHECK(back.prob[i] == doctest::Approx(map.prob[i]).epsilon(1.0 / 65535.0));
}

TEST_CASE("probability round trip stays within one quantization step") {
    TempDir tmp;
    ProbMap map(16, 16);
    Rng rng(7);
    for (auto& p : map.prob) p = static_cast<float>(rng.uniform());
    write_prob_map(tmp.path / "q.pgm", map);
    const ProbMap back = read_prob_map(tmp.path / "q.pgm");
    for (std::size_t i = 0; i < map.prob.size(); ++i)
        CHECK(std::abs(back.prob[i] - map.prob[i]) <= 0.5f / 65535.0f + 1e-7f);
    // reading a written-back map is a fixed point
    write_prob_map(tmp.path / "q2.pgm", back);
    CHECK(read_prob_map(tmp.path / "q2.pgm").prob == back.prob);
}

TEST_CASE("stain profile round trip") {
    TempDir tmp;
    StainProfile p;
    p.stain_matrix = {{{0.65, 0.07}, {0.70, 0.99}, {0.29, 0.11}}};
    p.max_concentrations = {1.9705, 1.0308};
    write_stain_profile(tmp.path / "s.txt", p);
    const StainProfile back = read_stain_profile(tmp.path / "s.txt");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c)
            CHECK(back.stain_matrix[r][c] ==
                  doctest::Approx(p.stain_matrix[r][c]).epsilon(1e-12));
    CHECK(back.max_concentrations[0] == doctest::Approx(1.9705).epsilon(1e-12));

    put_bytes(tmp.path / "short.txt", "0.1 0.2 0.3\n");
    CHECK_THROWS_AS(read_stain_profile(tmp.path / "short.txt"), TruncatedFile);
}

TEST_CASE("checkpoint round trip is bit exact") {
    TempDir tmp;
    const PipelineConfig cfg = tiny_config();
    const VitParams params = init_params(cfg, 99);
    const fs::path p = tmp.path / "model.ckpt";
    save_checkpoint(p, params);

    const auto [back, back_cfg] = load_checkpoint(p);
    CHECK(back_cfg.tile_size == cfg.tile_size);
    CHECK(back_cfg.stride == cfg.stride);
    CHECK(back_cfg.patch_size == cfg.patch_size);
    CHECK(back_cfg.embed_dim == cfg.embed_dim);
    CHECK(back_cfg.depth == cfg.depth);
    CHECK(back_cfg.heads == cfg.heads);
    CHECK(back_cfg.downsample_factor == cfg.downsample_factor);
    auto a = params.tensor_list(), b = back.tensor_list();
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].first == b[t].first);
        REQUIRE(a[t].second->a == b[t].second->a);
    }

    // identical params produce byte-identical files
    save_checkpoint(tmp.path / "again.ckpt", params);
    CHECK(file_bytes(p) == file_bytes(tmp.path / "again.ckpt"));
}

TEST_CASE("checkpoint corruption is detected") {
    TempDir tmp;
    const fs::path p = tmp.path / "model.ckpt";
    save_checkpoint(p, init_params(tiny_config(), 5));
    const std::string good = file_bytes(p);

    std::string bad = good;
    bad[0] = 'X';
    put_bytes(tmp.path / "magic.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "magic.ckpt"), BadMagic);

    bad = good;
    bad[4] = 9; // version field
    put_bytes(tmp.path / "ver.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "ver.ckpt"), VersionMismatch);

    put_bytes(tmp.path / "trunc.ckpt", good.substr(0, 10));
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "trunc.ckpt"), TruncatedFile);

    // chopping the payload makes the last tensor overrun the file
    put_bytes(tmp.path / "chop.ckpt", good.substr(0, good.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "chop.ckpt"), CorruptDirectory);

    // renaming a tensor leaves the directory incomplete
    bad = good;
    const std::size_t name_at = bad.find("patch_proj");
    REQUIRE(name_at != std::string::npos);
    bad[name_at] = 'q';
    put_bytes(tmp.path / "name.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "name.ckpt"), CorruptDirectory);
}

TEST_CASE("run config parsing") {
    const RunConfig defaults = parse_run_config("");
    CHECK(defaults.pipeline.tile_size == 224);
    CHECK(defaults.n_slides == 12);
    CHECK(defaults.inclusion_fraction == 1.0);

    const RunConfig cfg = parse_run_config(
        "# comment line\n"
        "tile_size = 64\n"
        "stride = 32\n"
        "\n"
        "epochs = 7   # trailing comment\n"
        "augment_scaling = true\n"
        "noise_std = 4.5\n"
        "n_folds = 5\n");
    CHECK(cfg.pipeline.tile_size == 64);
    CHECK(cfg.pipeline.stride == 32);
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.train.augment.scaling);
    CHECK(cfg.phantom.noise_std == 4.5);
    CHECK(cfg.n_folds == 5);

    CHECK_THROWS_AS(parse_run_config("no_such_key = 1\n"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("tile_size\n"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("tile_size = banana\n"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("augment_flips = maybe\n"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("background_r = 300\n"), InvalidConfig);
}

TEST_CASE("overrides mutate a parsed config") {
    RunConfig cfg = parse_run_config("tile_size = 64\nstride = 32\n");
    apply_override(cfg, "epochs=3");
    apply_override(cfg, "seed = 42");
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.seed == 42);
    CHECK(cfg.pipeline.tile_size == 64);
    CHECK_THROWS_AS(apply_override(cfg, "bogus=1"), InvalidConfig);
    CHECK_THROWS_AS(apply_override(cfg, "epochs"), InvalidConfig);
}

TEST_CASE("slide corpus round trip") {
    TempDir tmp;
    std::vector<SlideRecord> slides;
    for (int i = 0; i < 3; ++i) {
        SlideRecord s = make_slide("s" + std::to_string(i), "pat" + std::to_string(i / 2), 20, 14);
        Rng rng(i);
        for (auto& v : s.image.data) v = static_cast<std::uint8_t>(rng.uniform_int(256));
        s.muscularis_gt.set(3, 4, true);
        s.muscularis_gt.set(3, 5, true);
        s.plexus_gt.set(3, 4, true);
        s.microns_per_pixel = 5.0;
        slides.push_back(std::move(s));
    }
    write_corpus(tmp.path / "corpus", slides);
    const auto back = read_corpus(tmp.path / "corpus");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].slide_id == slides[i].slide_id);
        CHECK(back[i].patient_id == slides[i].patient_id);
        CHECK(back[i].microns_per_pixel == 5.0);
        CHECK(back[i].image.data == slides[i].image.data);
        CHECK(back[i].muscularis_gt == slides[i].muscularis_gt);
        CHECK(back[i].plexus_gt == slides[i].plexus_gt);
    }
}

TEST_CASE("csv formats") {
    MetricReport r;
    r.slide_id = "s1";
    r.dice = 91.25;
    r.precision = 84.0;
    r.recall = 99.6667;
    r.pir = 100.0;
    r.counts = {10, 2, 1, 87};
    r.n_gt_regions = 3;
    r.n_included = 3;
    CHECK(metrics_csv({r}) ==
          "slide_id,dice,precision,recall,pir,tp,fp,fn,tn,n_gt_regions,n_included\n"
          "s1,91.2500,84.0000,99.6667,100.0000,10,2,1,87,3,3\n");

    SweepPoint pt{0.5, 90.0, 100.0, 85.5, 95.25};
    CHECK(sweep_csv({pt}) ==
          "threshold,mean_dice,mean_pir,mean_precision,mean_recall\n"
          "0.5000,90.0000,100.0000,85.5000,95.2500\n");

    EpochLogEntry e{2, 0.125, 0.0005};
    CHECK(train_log_csv({e}) == "epoch,mean_loss,lr\n2,0.125000,0.00050000\n");
}

TEST_CASE("text files round trip through atomic writes") {
    TempDir tmp;
    const std::string content = "line one\nline two\n";
    write_text_file(tmp.path / "t.txt", content);
    CHECK(read_text_file(tmp.path / "t.txt") == content);
    CHECK_THROWS_AS(read_text_file(tmp.path / "missing.txt"), PipelineError);
}
