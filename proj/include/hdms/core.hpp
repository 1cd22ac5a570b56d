#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdms/errors.hpp"

namespace hdms {

// Row-major 8-bit raster, 1 or 3 channels.
struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    RasterImage() = default;
    RasterImage(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    std::uint8_t at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * height;
    }
    bool valid() const {
        return width >= 1 && height >= 1 && (channels == 1 || channels == 3) &&
               data.size() == static_cast<std::size_t>(width) * height * channels;
    }
};

// 2-D boolean raster; the currency of segmentation and metrics.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // 0 or 1 per pixel

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h),
          bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool get(int row, int col) const {
        return bits[static_cast<std::size_t>(row) * width + col] != 0;
    }
    void set(int row, int col, bool v) {
        bits[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0;
    }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits) n += b != 0;
        return n;
    }
    bool operator==(const BinaryMask& o) const {
        return width == o.width && height == o.height && bits == o.bits;
    }
};

struct SlideRecord {
    std::string slide_id;
    std::string patient_id;
    RasterImage image; // 3-channel
    double microns_per_pixel = 0.0;
    BinaryMask muscularis_gt;
    BinaryMask plexus_gt;
};

struct FoldPlan {
    int n_folds = 0;
    std::vector<std::pair<std::string, int>> assignments; // (slide_id, fold)
};

struct PipelineConfig {
    int tile_size = 224;
    int stride = 112;
    int patch_size = 16;
    int embed_dim = 768;
    int depth = 12;
    int heads = 12;
    int downsample_factor = 10;
    int tiles_per_slide = 1000;
    double confidence_threshold = 0.5;

    int tokens_per_side() const { return tile_size / patch_size; }
    int n_tokens() const { return tokens_per_side() * tokens_per_side(); }

    void validate() const {
        if (tile_size < 1 || patch_size < 1 || tile_size % patch_size != 0)
            throw InvalidConfig("tile_size must be a positive multiple of patch_size");
        if (stride * 2 != tile_size)
            throw InvalidConfig("stride must equal tile_size/2");
        if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
            throw InvalidConfig("embed_dim must be a positive multiple of heads");
        if (depth < 1) throw InvalidConfig("depth must be >= 1");
        if (downsample_factor < 1) throw InvalidConfig("downsample_factor must be >= 1");
        if (tiles_per_slide < 1) throw InvalidConfig("tiles_per_slide must be >= 1");
        if (confidence_threshold < 0.0 || confidence_threshold > 1.0)
            throw InvalidConfig("confidence_threshold must be in [0,1]");
    }
};

// Checks every SlideRecord invariant; returns the record untouched on success.
const SlideRecord& validate_slide(const SlideRecord& record);

// Deterministic fold assignment. Slides sharing a patient_id land in the same
// fold when that does not break the size balance; otherwise assignment falls
// back to slide level and a warning is written to stderr.
FoldPlan make_fold_plan(const std::vector<SlideRecord>& slides, int n_folds,
                        std::uint64_t seed);

} // namespace hdms
