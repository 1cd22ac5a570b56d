#include "hdms/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace hdms {

int worker_count() {
    if (const char* env = std::getenv("HDMS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

namespace {

RasterImage rot90cw(const RasterImage& in) {
    RasterImage out(in.height, in.width, in.channels);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            for (int ch = 0; ch < in.channels; ++ch)
                out.at(r, c, ch) = in.at(in.height - 1 - c, r, ch);
    return out;
}

BinaryMask rot90cw(const BinaryMask& in) {
    BinaryMask out(in.height, in.width);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c) out.set(r, c, in.get(in.height - 1 - c, r));
    return out;
}

template <class Img>
Img flip_h(const Img& in) {
    Img out = in;
    if constexpr (std::is_same_v<Img, RasterImage>) {
        for (int r = 0; r < in.height; ++r)
            for (int c = 0; c < in.width; ++c)
                for (int ch = 0; ch < in.channels; ++ch)
                    out.at(r, c, ch) = in.at(r, in.width - 1 - c, ch);
    } else {
        for (int r = 0; r < in.height; ++r)
            for (int c = 0; c < in.width; ++c) out.set(r, c, in.get(r, in.width - 1 - c));
    }
    return out;
}

template <class Img>
Img flip_v(const Img& in) {
    Img out = in;
    if constexpr (std::is_same_v<Img, RasterImage>) {
        for (int r = 0; r < in.height; ++r)
            for (int c = 0; c < in.width; ++c)
                for (int ch = 0; ch < in.channels; ++ch)
                    out.at(r, c, ch) = in.at(in.height - 1 - r, c, ch);
    } else {
        for (int r = 0; r < in.height; ++r)
            for (int c = 0; c < in.width; ++c) out.set(r, c, in.get(in.height - 1 - r, c));
    }
    return out;
}

int reflect_idx(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

// Bilinear image / nearest-neighbor mask rescale to `scaled` pixels, then
// center-crop or reflect-pad back to the original size.
RasterImage rescale_image(const RasterImage& in, int scaled) {
    const int t = in.width;
    RasterImage mid(scaled, scaled, in.channels);
    const double ratio = static_cast<double>(t) / scaled;
    for (int r = 0; r < scaled; ++r) {
        const double sr = (r + 0.5) * ratio - 0.5;
        const int r0 = static_cast<int>(std::floor(sr));
        const double fr = sr - r0;
        for (int c = 0; c < scaled; ++c) {
            const double sc = (c + 0.5) * ratio - 0.5;
            const int c0 = static_cast<int>(std::floor(sc));
            const double fc = sc - c0;
            const int ra = std::clamp(r0, 0, t - 1), rb = std::clamp(r0 + 1, 0, t - 1);
            const int ca = std::clamp(c0, 0, t - 1), cb = std::clamp(c0 + 1, 0, t - 1);
            for (int ch = 0; ch < in.channels; ++ch) {
                const double v = (1 - fr) * ((1 - fc) * in.at(ra, ca, ch) + fc * in.at(ra, cb, ch)) +
                                 fr * ((1 - fc) * in.at(rb, ca, ch) + fc * in.at(rb, cb, ch));
                mid.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    RasterImage out(t, t, in.channels);
    const int off = (scaled - t) / 2;
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < t; ++c)
            for (int ch = 0; ch < in.channels; ++ch)
                out.at(r, c, ch) =
                    mid.at(reflect_idx(r + off, scaled), reflect_idx(c + off, scaled), ch);
    return out;
}

BinaryMask rescale_mask(const BinaryMask& in, int scaled) {
    const int t = in.width;
    BinaryMask mid(scaled, scaled);
    const double ratio = static_cast<double>(t) / scaled;
    for (int r = 0; r < scaled; ++r) {
        const int sr = std::clamp(static_cast<int>(std::lround((r + 0.5) * ratio - 0.5)), 0, t - 1);
        for (int c = 0; c < scaled; ++c) {
            const int sc =
                std::clamp(static_cast<int>(std::lround((c + 0.5) * ratio - 0.5)), 0, t - 1);
            mid.set(r, c, in.get(sr, sc));
        }
    }
    BinaryMask out(t, t);
    const int off = (scaled - t) / 2;
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < t; ++c)
            out.set(r, c, mid.get(reflect_idx(r + off, scaled), reflect_idx(c + off, scaled)));
    return out;
}

} // namespace

Tile augment_tile(const Tile& tile, const AugmentFlags& flags, Rng& rng) {
    if (tile.pixels.width != tile.pixels.height)
        throw ShapeMismatch("augmentation requires square tiles");
    // Draw all parameters first so image and label share identical geometry.
    const int rot = flags.rot90s ? static_cast<int>(rng.uniform_int(4)) : 0;
    const bool hflip = flags.flips && rng.bernoulli(0.5);
    const bool vflip = flags.flips && rng.bernoulli(0.5);
    const double scale = flags.scaling ? rng.uniform(flags.scale_min, flags.scale_max) : 1.0;

    Tile out = tile;
    for (int i = 0; i < rot; ++i) {
        out.pixels = rot90cw(out.pixels);
        if (out.label) out.label = rot90cw(*out.label);
    }
    if (hflip) {
        out.pixels = flip_h(out.pixels);
        if (out.label) out.label = flip_h(*out.label);
    }
    if (vflip) {
        out.pixels = flip_v(out.pixels);
        if (out.label) out.label = flip_v(*out.label);
    }
    if (flags.scaling) {
        const int t = out.pixels.width;
        const int scaled = std::max(1, static_cast<int>(std::lround(t * scale)));
        if (scaled != t) {
            out.pixels = rescale_image(out.pixels, scaled);
            if (out.label) out.label = rescale_mask(*out.label, scaled);
        }
    }
    return out;
}

namespace {

// Chunked batch gradient: fixed chunk size keeps the reduction order
// independent of the worker count.
constexpr int kGradChunk = 8;

struct BatchGradResult {
    double loss_sum = 0.0;
};

double batch_backward(const VitParams& params, const std::vector<const Tile*>& batch,
                      VitParams& grads_out) {
    const int n_chunks = (static_cast<int>(batch.size()) + kGradChunk - 1) / kGradChunk;
    std::vector<VitParams> chunk_grads(n_chunks);
    std::vector<double> chunk_loss(n_chunks, 0.0);

    const int workers = std::min(worker_count(), n_chunks);
    auto run_chunk = [&](int ci) {
        chunk_grads[ci] = VitParams::shaped(params.config);
        const int lo = ci * kGradChunk;
        const int hi = std::min<int>(lo + kGradChunk, static_cast<int>(batch.size()));
        for (int i = lo; i < hi; ++i) {
            chunk_loss[ci] +=
                vit_backward(params, batch[i]->pixels, *batch[i]->label, chunk_grads[ci]);
        }
    };
    if (workers <= 1) {
        for (int ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int ci = next.fetch_add(1); ci < n_chunks; ci = next.fetch_add(1))
                    run_chunk(ci);
            });
        for (auto& th : pool) th.join();
    }

    grads_out = VitParams::shaped(params.config);
    auto total = grads_out.tensor_list();
    double loss = 0.0;
    for (int ci = 0; ci < n_chunks; ++ci) {
        loss += chunk_loss[ci];
        auto part = chunk_grads[ci].tensor_list();
        for (std::size_t t = 0; t < total.size(); ++t)
            for (std::size_t j = 0; j < total[t].second->a.size(); ++j)
                total[t].second->a[j] += part[t].second->a[j];
    }
    const float inv = 1.0f / static_cast<float>(batch.size());
    for (auto& [name, m] : total)
        for (auto& v : m->a) v *= inv;
    return loss / static_cast<double>(batch.size());
}

} // namespace

VitParams train_fold(const std::vector<const SlideRecord*>& train_slides,
                     const TrainConfig& train_cfg, const PipelineConfig& pipeline_cfg,
                     std::vector<EpochLogEntry>* log) {
    train_cfg.validate();
    pipeline_cfg.validate();
    if (train_slides.empty()) throw EmptyTrainingSet("no training slides");

    // Fixed tile pool, sampled once per run.
    std::vector<Tile> pool;
    pool.reserve(train_slides.size() * pipeline_cfg.tiles_per_slide);
    for (const SlideRecord* slide : train_slides) {
        auto tiles = sample_training_tiles(*slide, pipeline_cfg, train_cfg.seed);
        for (auto& t : tiles) pool.push_back(std::move(t));
    }

    VitParams params = init_params(pipeline_cfg, mix_seed(train_cfg.seed, "init"));
    OptimizerState state = OptimizerState::shaped(pipeline_cfg);

    const long pool_size = static_cast<long>(pool.size());
    const long steps_per_epoch = (pool_size + train_cfg.batch_size - 1) / train_cfg.batch_size;

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(train_cfg.seed, "shuffle"));

    long global_step = 0;
    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double epoch_loss = 0.0;
        double last_lr = 0.0;
        for (long s = 0; s < steps_per_epoch; ++s) {
            const std::size_t lo = static_cast<std::size_t>(s) * train_cfg.batch_size;
            const std::size_t hi = std::min(lo + train_cfg.batch_size, pool.size());

            std::vector<Tile> augmented;
            augmented.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                Rng aug_rng(mix_seed(train_cfg.seed, "aug") ^
                            ((static_cast<std::uint64_t>(epoch) << 32) | i));
                augmented.push_back(augment_tile(pool[order[i]], train_cfg.augment, aug_rng));
            }
            std::vector<const Tile*> batch;
            batch.reserve(augmented.size());
            for (const auto& t : augmented) batch.push_back(&t);

            VitParams grads;
            const double loss = batch_backward(params, batch, grads);
            const double lr = lr_at(global_step, steps_per_epoch, train_cfg);
            adamw_step(params, grads, state, lr, train_cfg);
            epoch_loss += loss;
            last_lr = lr;
            ++global_step;
        }
        if (log)
            log->push_back({epoch, epoch_loss / static_cast<double>(steps_per_epoch), last_lr});
    }
    return params;
}

ProbMap segment_slide(const VitParams& params, const SlideRecord& slide,
                      const PipelineConfig& cfg) {
    const RasterImage image = downsample(slide.image, cfg.downsample_factor);
    const TileGrid grid = inference_grid({image.height, image.width}, cfg);

    std::vector<std::vector<float>> tile_probs(grid.origins.size());
    const int workers = std::min<std::size_t>(worker_count(), grid.origins.size());
    auto run_tile = [&](std::size_t i) {
        const RasterImage tile = cut_tile(image, grid, i);
        tile_probs[i] = prob_map_from_logits(vit_forward(params, tile));
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < grid.origins.size(); ++i) run_tile(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < grid.origins.size();
                     i = next.fetch_add(1))
                    run_tile(i);
            });
        for (auto& th : pool) th.join();
    }
    return stitch_prob(grid, tile_probs, {image.height, image.width});
}

CrossValResult run_cross_validation(const std::vector<SlideRecord>& slides, const FoldPlan& plan,
                                    const TrainConfig& train_cfg,
                                    const PipelineConfig& pipeline_cfg,
                                    double inclusion_fraction) {
    std::vector<int> fold_of(slides.size(), -1);
    for (std::size_t i = 0; i < slides.size(); ++i) {
        for (const auto& [id, f] : plan.assignments)
            if (id == slides[i].slide_id) fold_of[i] = f;
        if (fold_of[i] < 0)
            throw InvalidConfig("slide " + slides[i].slide_id + " missing from fold plan");
    }

    CrossValResult result;
    int n_reports = 0;
    for (int f = 0; f < plan.n_folds; ++f) {
        FoldResult fr;
        fr.fold = f;

        std::vector<const SlideRecord*> train_slides;
        std::vector<const SlideRecord*> test_slides;
        for (std::size_t i = 0; i < slides.size(); ++i)
            (fold_of[i] == f ? test_slides : train_slides).push_back(&slides[i]);

        TrainConfig fold_cfg = train_cfg;
        fold_cfg.seed = mix_seed(train_cfg.seed, "fold" + std::to_string(f));
        fr.params = train_fold(train_slides, fold_cfg, pipeline_cfg, &fr.train_log);

        for (const SlideRecord* slide : test_slides) {
            fr.prob_maps.push_back(segment_slide(fr.params, *slide, pipeline_cfg));
            fr.test_slide_ids.push_back(slide->slide_id);
            fr.test_muscularis_gt.push_back(
                downsample(slide->muscularis_gt, pipeline_cfg.downsample_factor));
            fr.test_plexus_gt.push_back(
                downsample(slide->plexus_gt, pipeline_cfg.downsample_factor));
            const BinaryMask pred =
                threshold_prob_map(fr.prob_maps.back(), pipeline_cfg.confidence_threshold);
            fr.reports.push_back(evaluate_slide(slide->slide_id, pred,
                                                fr.test_muscularis_gt.back(),
                                                fr.test_plexus_gt.back(), inclusion_fraction));
        }
        for (const auto& rep : fr.reports) {
            result.mean_dice += rep.dice;
            result.mean_precision += rep.precision;
            result.mean_recall += rep.recall;
            result.mean_pir += rep.pir;
            ++n_reports;
        }
        result.folds.push_back(std::move(fr));
    }
    if (n_reports > 0) {
        result.mean_dice /= n_reports;
        result.mean_precision /= n_reports;
        result.mean_recall /= n_reports;
        result.mean_pir /= n_reports;
    }
    return result;
}

} // namespace hdms
