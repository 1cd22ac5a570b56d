#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hdms/core.hpp"
#include "hdms/metrics.hpp"
#include "hdms/phantom.hpp"
#include "hdms/stain.hpp"
#include "hdms/train.hpp"
#include "hdms/vit.hpp"

namespace hdms {

// --- NetPBM rasters (binary P6/P5 only) ------------------------------------

RasterImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RasterImage& image);

// Masks travel as 8-bit PGM; read thresholds at >= 128, write emits 0/255.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

// Probability maps persist as 16-bit PGM (maxval 65535, probability = value/65535).
ProbMap read_prob_map(const std::filesystem::path& path);
void write_prob_map(const std::filesystem::path& path, const ProbMap& map);

// --- Stain profile (text, one value per line) ------------------------------

StainProfile read_stain_profile(const std::filesystem::path& path);
void write_stain_profile(const std::filesystem::path& path, const StainProfile& profile);

// --- Checkpoints ------------------------------------------------------------

// Binary container: magic "HDMS", version, model config block, tensor
// directory with strictly increasing offsets, little-endian f32 payload.
void save_checkpoint(const std::filesystem::path& path, const VitParams& params);
std::pair<VitParams, PipelineConfig> load_checkpoint(const std::filesystem::path& path);

// --- Flat key=value run configuration ---------------------------------------

struct RunConfig {
    PipelineConfig pipeline;
    TrainConfig train;
    MacenkoParams macenko;
    PhantomConfig phantom;
    int n_slides = 12;
    int n_folds = 3;
    double inclusion_fraction = 1.0;
};

RunConfig parse_run_config(const std::string& text);
RunConfig read_run_config(const std::filesystem::path& path);
// Applies one "key=value" override in place; rejects unknown keys.
void apply_override(RunConfig& config, const std::string& key_value);

// --- Slide corpus on disk ---------------------------------------------------

// Layout per slide: {id}.ppm, {id}_muscularis.pgm, {id}_plexus.pgm, {id}.meta;
// the directory index lives in slides.txt (one id per line, run order).
void write_slide(const std::filesystem::path& dir, const SlideRecord& record);
SlideRecord read_slide(const std::filesystem::path& dir, const std::string& slide_id);
void write_corpus(const std::filesystem::path& dir, const std::vector<SlideRecord>& slides);
std::vector<SlideRecord> read_corpus(const std::filesystem::path& dir);

// --- CSV reports (LF endings, '.' decimal separator, 4 decimals) ------------

std::string metrics_csv(const std::vector<MetricReport>& reports);
std::string sweep_csv(const std::vector<SweepPoint>& points);
std::string train_log_csv(const std::vector<EpochLogEntry>& entries);
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

} // namespace hdms
