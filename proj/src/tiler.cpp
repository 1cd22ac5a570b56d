#include "hdms/tiler.hpp"

#include <algorithm>

#include "hdms/rng.hpp"

namespace hdms {

namespace {

// Symmetric reflection of an index into [0, n).
int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

RasterImage cut_reflect(const RasterImage& image, int r0, int c0, int size) {
    RasterImage tile(size, size, image.channels);
    for (int r = 0; r < size; ++r) {
        const int sr = reflect(r0 + r, image.height);
        for (int c = 0; c < size; ++c) {
            const int sc = reflect(c0 + c, image.width);
            for (int ch = 0; ch < image.channels; ++ch)
                tile.at(r, c, ch) = image.at(sr, sc, ch);
        }
    }
    return tile;
}

BinaryMask cut_reflect(const BinaryMask& mask, int r0, int c0, int size) {
    BinaryMask tile(size, size);
    for (int r = 0; r < size; ++r) {
        const int sr = reflect(r0 + r, mask.height);
        for (int c = 0; c < size; ++c)
            tile.set(r, c, mask.get(sr, reflect(c0 + c, mask.width)));
    }
    return tile;
}

std::vector<int> axis_origins(int dim, int tile_size, int stride) {
    const int count = (dim + stride - 1) / stride;
    std::vector<int> origins(count);
    for (int i = 0; i < count; ++i) origins[i] = std::min(i * stride, dim - stride);
    (void)tile_size;
    return origins;
}

} // namespace

RasterImage downsample(const RasterImage& image, int factor) {
    if (factor < 1) throw InvalidConfig("downsample factor must be >= 1");
    if (factor == 1) return image;
    const int oh = (image.height + factor - 1) / factor;
    const int ow = (image.width + factor - 1) / factor;
    RasterImage out(ow, oh, image.channels);
    for (int r = 0; r < oh; ++r) {
        const int r1 = std::min((r + 1) * factor, image.height);
        for (int c = 0; c < ow; ++c) {
            const int c1 = std::min((c + 1) * factor, image.width);
            for (int ch = 0; ch < image.channels; ++ch) {
                std::uint64_t sum = 0;
                std::uint64_t cnt = 0;
                for (int rr = r * factor; rr < r1; ++rr)
                    for (int cc = c * factor; cc < c1; ++cc) {
                        sum += image.at(rr, cc, ch);
                        ++cnt;
                    }
                // round half up, exact in integers
                out.at(r, c, ch) = static_cast<std::uint8_t>((2 * sum + cnt) / (2 * cnt));
            }
        }
    }
    return out;
}

BinaryMask downsample(const BinaryMask& mask, int factor) {
    if (factor < 1) throw InvalidConfig("downsample factor must be >= 1");
    if (factor == 1) return mask;
    const int oh = (mask.height + factor - 1) / factor;
    const int ow = (mask.width + factor - 1) / factor;
    BinaryMask out(ow, oh);
    for (int r = 0; r < oh; ++r) {
        const int r1 = std::min((r + 1) * factor, mask.height);
        for (int c = 0; c < ow; ++c) {
            const int c1 = std::min((c + 1) * factor, mask.width);
            std::uint64_t set = 0, cnt = 0;
            for (int rr = r * factor; rr < r1; ++rr)
                for (int cc = c * factor; cc < c1; ++cc) {
                    set += mask.get(rr, cc);
                    ++cnt;
                }
            out.set(r, c, 2 * set >= cnt); // majority, ties -> set
        }
    }
    return out;
}

std::vector<Tile> sample_training_tiles(const SlideRecord& slide, const PipelineConfig& config,
                                        std::uint64_t seed) {
    const RasterImage image = downsample(slide.image, config.downsample_factor);
    const BinaryMask label = downsample(slide.muscularis_gt, config.downsample_factor);

    const int t = config.tile_size;
    const int row_range = std::max(1, image.height - t + 1);
    const int col_range = std::max(1, image.width - t + 1);

    Rng rng(mix_seed(seed, slide.slide_id));
    std::vector<Tile> tiles;
    tiles.reserve(config.tiles_per_slide);
    for (int i = 0; i < config.tiles_per_slide; ++i) {
        const int r0 = static_cast<int>(rng.uniform_int(row_range));
        const int c0 = static_cast<int>(rng.uniform_int(col_range));
        Tile tile;
        tile.origin = {r0, c0};
        tile.pixels = cut_reflect(image, r0, c0, t);
        tile.label = cut_reflect(label, r0, c0, t);
        tiles.push_back(std::move(tile));
    }
    return tiles;
}

TileGrid inference_grid(std::pair<int, int> slide_dims, const PipelineConfig& config) {
    if (config.tile_size != 2 * config.stride)
        throw InvalidStride("inference grid requires tile_size = 2*stride");
    const auto [h, w] = slide_dims;
    if (h < config.stride || w < config.stride)
        throw InvalidConfig("slide smaller than stride cannot be gridded");

    TileGrid grid;
    grid.tile_size = config.tile_size;
    grid.stride = config.stride;
    grid.pad = config.stride / 2;
    grid.slide_height = h;
    grid.slide_width = w;
    const auto rows = axis_origins(h, config.tile_size, config.stride);
    const auto cols = axis_origins(w, config.tile_size, config.stride);
    grid.origins.reserve(rows.size() * cols.size());
    for (int r : rows)
        for (int c : cols) grid.origins.emplace_back(r, c);
    return grid;
}

RasterImage cut_tile(const RasterImage& slide, const TileGrid& grid, std::size_t index) {
    const auto [r0, c0] = grid.origins[index];
    // Grid origins are padded coordinates; shift back by pad before sampling.
    return cut_reflect(slide, r0 - grid.pad, c0 - grid.pad, grid.tile_size);
}

BinaryMask stitch(const TileGrid& grid, const std::vector<BinaryMask>& tile_maps,
                  std::pair<int, int> slide_dims) {
    if (tile_maps.size() != grid.origins.size())
        throw CountMismatch("tile map count " + std::to_string(tile_maps.size()) +
                            " != grid origin count " + std::to_string(grid.origins.size()));
    const auto [h, w] = slide_dims;
    const int center0 = (grid.tile_size - grid.stride) / 2;
    BinaryMask out(w, h);
    for (std::size_t i = 0; i < tile_maps.size(); ++i) {
        const auto& map = tile_maps[i];
        if (map.width != grid.tile_size || map.height != grid.tile_size)
            throw DimensionMismatch("tile map dimensions != tile_size");
        const auto [r0, c0] = grid.origins[i];
        for (int r = 0; r < grid.stride; ++r)
            for (int c = 0; c < grid.stride; ++c)
                out.set(r0 + r, c0 + c, map.get(center0 + r, center0 + c));
    }
    return out;
}

ProbMap stitch_prob(const TileGrid& grid, const std::vector<std::vector<float>>& tile_probs,
                    std::pair<int, int> slide_dims) {
    if (tile_probs.size() != grid.origins.size())
        throw CountMismatch("tile probability count != grid origin count");
    const auto [h, w] = slide_dims;
    const int t = grid.tile_size;
    const int center0 = (t - grid.stride) / 2;
    ProbMap out(w, h);
    for (std::size_t i = 0; i < tile_probs.size(); ++i) {
        const auto& probs = tile_probs[i];
        if (probs.size() != static_cast<std::size_t>(t) * t)
            throw DimensionMismatch("tile probability buffer != tile_size^2");
        const auto [r0, c0] = grid.origins[i];
        for (int r = 0; r < grid.stride; ++r)
            for (int c = 0; c < grid.stride; ++c)
                out.prob[static_cast<std::size_t>(r0 + r) * w + (c0 + c)] =
                    probs[static_cast<std::size_t>(center0 + r) * t + (center0 + c)];
    }
    return out;
}

} // namespace hdms
