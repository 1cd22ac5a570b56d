#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "hdms/core.hpp"
#include "hdms/metrics.hpp"
#include "hdms/tiler.hpp"
#include "hdms/vit.hpp"

namespace hdms {

struct AugmentFlags {
    bool rot90s = true;
    bool flips = true;
    bool scaling = false;
    double scale_min = 0.8;
    double scale_max = 1.25;
};

struct TrainConfig {
    double base_lr = 5e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 50;
    int warmup_epochs = 5;
    int batch_size = 64;
    std::uint64_t seed = 0;
    AugmentFlags augment;

    void validate() const {
        if (base_lr <= 0.0) throw InvalidConfig("base_lr must be > 0");
        if (warmup_epochs < 0 || warmup_epochs >= epochs)
            throw InvalidConfig("need 0 <= warmup_epochs < epochs");
        if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
        if (augment.scale_min <= 0.0 || augment.scale_max < augment.scale_min)
            throw InvalidConfig("bad augmentation scale range");
    }
};

template <class T>
struct OptimizerStateT {
    long step = 0;
    VitParamsT<T> m;
    VitParamsT<T> v;

    static OptimizerStateT shaped(const PipelineConfig& cfg) {
        OptimizerStateT s;
        s.m = VitParamsT<T>::shaped(cfg);
        s.v = VitParamsT<T>::shaped(cfg);
        return s;
    }
};

using OptimizerState = OptimizerStateT<float>;

// Linear warmup to base_lr, then cosine decay to exactly 0 at the final step.
inline double lr_at(long step, long steps_per_epoch, const TrainConfig& cfg) {
    cfg.validate();
    if (steps_per_epoch < 1) throw InvalidConfig("steps_per_epoch must be >= 1");
    const long warmup_steps = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
    const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;
    if (step < warmup_steps)
        return cfg.base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const long span = total_steps - warmup_steps - 1;
    if (span <= 0) return 0.0;
    const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
    return cfg.base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

// Biases, layernorm tensors, and the positional embedding are excluded from
// decoupled weight decay.
inline bool weight_decay_excluded(const std::string& name) {
    return name.find("bias") != std::string::npos || name.find("offset") != std::string::npos ||
           name.find("scale") != std::string::npos || name == "pos_embed";
}

// One decoupled-weight-decay Adam update, in place.
template <class T>
void adamw_step(VitParamsT<T>& params, const VitParamsT<T>& grads, OptimizerStateT<T>& state,
                double lr, const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto pt = params.tensor_list();
    auto gt = grads.tensor_list();
    auto mt = state.m.tensor_list();
    auto vt = state.v.tensor_list();
    for (std::size_t i = 0; i < pt.size(); ++i) {
        Mat<T>& p = *pt[i].second;
        const Mat<T>& g = *gt[i].second;
        Mat<T>& m = *mt[i].second;
        Mat<T>& v = *vt[i].second;
        if (!p.same_shape(g)) throw ShapeMismatch("gradient shape mismatch: " + pt[i].first);
        const double wd = weight_decay_excluded(pt[i].first) ? 0.0 : cfg.weight_decay;
        for (std::size_t j = 0; j < p.a.size(); ++j) {
            const double gj = g.a[j];
            const double mj = cfg.beta1 * m.a[j] + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * v.a[j] + (1.0 - cfg.beta2) * gj * gj;
            m.a[j] = static_cast<T>(mj);
            v.a[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            p.a[j] = static_cast<T>(p.a[j] - lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                                   wd * p.a[j]));
        }
    }
}

// Rotation (90 deg multiples), flips, and optional isotropic rescale with the
// identical geometric transform applied to image (bilinear) and label
// (nearest neighbor). All randomness comes from the shared rng.
Tile augment_tile(const Tile& tile, const AugmentFlags& flags, Rng& rng);

struct EpochLogEntry {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
};

// Fixed per-slide tile pool, epoch shuffles, AdamW with the cosine schedule.
// Per-epoch loss/lr entries go to `log` when non-null.
VitParams train_fold(const std::vector<const SlideRecord*>& train_slides,
                     const TrainConfig& train_cfg, const PipelineConfig& pipeline_cfg,
                     std::vector<EpochLogEntry>* log);

// Stitched muscularis probabilities for one slide (downsampled internally).
ProbMap segment_slide(const VitParams& params, const SlideRecord& slide,
                      const PipelineConfig& cfg);

struct FoldResult {
    int fold = 0;
    VitParams params;
    std::vector<EpochLogEntry> train_log;
    std::vector<ProbMap> prob_maps;            // per test slide
    std::vector<std::string> test_slide_ids;
    std::vector<BinaryMask> test_muscularis_gt; // downsampled
    std::vector<BinaryMask> test_plexus_gt;     // downsampled
    std::vector<MetricReport> reports;          // at the configured threshold
};

struct CrossValResult {
    std::vector<FoldResult> folds;
    double mean_dice = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_pir = 0.0;
};

CrossValResult run_cross_validation(const std::vector<SlideRecord>& slides,
                                    const FoldPlan& plan, const TrainConfig& train_cfg,
                                    const PipelineConfig& pipeline_cfg,
                                    double inclusion_fraction);

// Worker cap: HDMS_THREADS env var, else hardware concurrency.
int worker_count();

} // namespace hdms
