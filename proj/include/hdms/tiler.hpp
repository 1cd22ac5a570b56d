#pragma once

#include <optional>
#include <vector>

#include "hdms/core.hpp"
#include "hdms/metrics.hpp"

namespace hdms {

// Geometry of overlapping inference tiles in the reflect-padded frame.
struct TileGrid {
    std::string slide_id;
    int tile_size = 0;
    int stride = 0;
    int pad = 0; // per border side
    int slide_height = 0;
    int slide_width = 0;
    std::vector<std::pair<int, int>> origins; // (row, col), padded coordinates
};

struct Tile {
    std::pair<int, int> origin{0, 0};
    RasterImage pixels; // tile_size x tile_size x 3
    std::optional<BinaryMask> label;
};

// Block-mean downsample; output dims = ceil(input/factor). Partial edge
// blocks average the available samples. Rounds half up.
RasterImage downsample(const RasterImage& image, int factor);

// Boolean rasters downsample by per-block majority vote, ties -> set.
BinaryMask downsample(const BinaryMask& mask, int factor);

// Samples tiles_per_slide training tiles (with label crops) from the slide
// after downsampling, uniform over valid origins, deterministic per
// (seed, slide_id). Slides smaller than tile_size are reflect-padded.
std::vector<Tile> sample_training_tiles(const SlideRecord& slide, const PipelineConfig& config,
                                        std::uint64_t seed);

// Overlapping grid covering every pixel of the (height, width) slide with a
// tile center region. Requires tile_size = 2*stride.
TileGrid inference_grid(std::pair<int, int> slide_dims, const PipelineConfig& config);

// Extracts the tile at a grid origin, sampling the reflect-padded slide.
RasterImage cut_tile(const RasterImage& slide, const TileGrid& grid, std::size_t index);

// Writes each tile's central stride x stride window into the output; where
// clamped tiles overlap, the later tile in grid order wins.
BinaryMask stitch(const TileGrid& grid, const std::vector<BinaryMask>& tile_maps,
                  std::pair<int, int> slide_dims);

// Same stitching geometry for per-pixel probabilities.
ProbMap stitch_prob(const TileGrid& grid, const std::vector<std::vector<float>>& tile_probs,
                    std::pair<int, int> slide_dims);

} // namespace hdms
