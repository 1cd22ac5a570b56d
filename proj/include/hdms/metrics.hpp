#pragma once

#include <string>
#include <vector>

#include "hdms/core.hpp"

namespace hdms {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
};

struct PrecisionRecall {
    double precision = 0.0; // percent
    double recall = 0.0;    // percent
    bool precision_degenerate = false; // tp+fp == 0
    bool recall_degenerate = false;    // tp+fn == 0
};

struct MetricReport {
    std::string slide_id;
    double dice = 0.0;      // percent
    double precision = 0.0; // percent
    double recall = 0.0;    // percent
    double pir = 0.0;       // percent
    ConfusionCounts counts;
    int n_gt_regions = 0;
    int n_included = 0;
};

struct SweepPoint {
    double threshold = 0.0;
    double mean_dice = 0.0;
    double mean_pir = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
};

struct BaselineRow {
    std::string model;
    double dice, precision, recall, pir;
};

struct PirResult {
    double pir = 0.0; // percent
    int n_included = 0;
    int n_gt = 0;
};

struct ComponentLabels {
    int count = 0;
    std::vector<int> labels; // 0 = background, components numbered 1..count
};

// Stitched per-pixel probability of the muscularis class, used by sweeps.
struct ProbMap {
    int width = 0;
    int height = 0;
    std::vector<float> prob; // row-major, [0,1]

    ProbMap() = default;
    ProbMap(int w, int h) : width(w), height(h), prob(static_cast<std::size_t>(w) * h, 0.f) {}
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// 100 * 2|X∩Y| / (|X|+|Y|); both masks empty counts as perfect agreement (100).
double dice(const BinaryMask& pred, const BinaryMask& gt);

PrecisionRecall precision_recall(const ConfusionCounts& counts);

// 8-connectivity labeling; components numbered by raster order of first pixel.
ComponentLabels connected_components(const BinaryMask& mask);

// A ground-truth plexus component counts as included when at least
// inclusion_fraction of its pixels fall inside the predicted muscularis.
PirResult pir(const BinaryMask& pred_muscularis, const BinaryMask& plexus_gt,
              double inclusion_fraction);

BinaryMask threshold_prob_map(const ProbMap& map, double threshold);

MetricReport evaluate_slide(const std::string& slide_id, const BinaryMask& pred,
                            const BinaryMask& muscularis_gt, const BinaryMask& plexus_gt,
                            double inclusion_fraction);

// Re-binarizes stored probability maps at each threshold and averages metrics
// over slides. gt/plexus masks align 1:1 with maps.
std::vector<SweepPoint> threshold_sweep(const std::vector<ProbMap>& prob_maps,
                                        const std::vector<BinaryMask>& muscularis_gts,
                                        const std::vector<BinaryMask>& plexus_gts,
                                        const std::vector<double>& thresholds,
                                        double inclusion_fraction);

// {0.01, 0.05, 0.1, ..., 0.95, 0.99}
std::vector<double> default_sweep_thresholds();

// Published comparison numbers, carried for report rendering only.
std::vector<BaselineRow> baseline_table();

} // namespace hdms
