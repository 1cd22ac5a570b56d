#include "hdms/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hdms/rng.hpp"

namespace hdms {

namespace {

struct Ellipse {
    double cx, cy, rx, ry;

    bool contains(double x, double y, double margin = 0.0) const {
        const double dx = (x - cx) / (rx + margin);
        const double dy = (y - cy) / (ry + margin);
        return dx * dx + dy * dy <= 1.0;
    }
};

} // namespace

SlideRecord generate_phantom(const PhantomConfig& cfg, const std::string& slide_id,
                             const std::string& patient_id) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int w = cfg.width, h = cfg.height;

    // Smooth centerline: a few low-frequency sinusoids around the midline.
    const double amp_budget = h / 8.0;
    double amp[3], freq[3], phase[3];
    for (int k = 0; k < 3; ++k) {
        amp[k] = rng.uniform(0.2, 1.0) * amp_budget / 3.0;
        freq[k] = rng.uniform(0.5, 2.0);
        phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    }
    const double thickness =
        rng.uniform(static_cast<double>(cfg.band_thickness_min),
                    static_cast<double>(cfg.band_thickness_max));
    std::vector<double> center(w);
    for (int x = 0; x < w; ++x) {
        double y = h / 2.0;
        for (int k = 0; k < 3; ++k)
            y += amp[k] * std::sin(2.0 * M_PI * freq[k] * x / w + phase[k]);
        center[x] = y;
    }

    BinaryMask band(w, h);
    for (int x = 0; x < w; ++x) {
        const int lo = std::max(0, static_cast<int>(std::ceil(center[x] - thickness / 2.0)));
        const int hi = std::min(h - 1, static_cast<int>(std::floor(center[x] + thickness / 2.0)));
        for (int y = lo; y <= hi; ++y) band.set(y, x, true);
    }

    // Non-overlapping elliptical blobs near the medial line, retried until
    // each rasterization lands strictly inside the band.
    BinaryMask plexus(w, h);
    int placed = 0;
    int attempts = 0;
    std::vector<Ellipse> blobs;
    while (placed < cfg.n_plexus) {
        if (++attempts > 1000)
            throw PlacementFailure("could not place " + std::to_string(cfg.n_plexus) +
                                   " blobs in 1000 attempts");
        Ellipse e;
        e.rx = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
        e.ry = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max);
        e.cx = rng.uniform(e.rx + 1.0, w - e.rx - 1.0);
        const double slack = thickness / 2.0 - e.ry - 3.0;
        const double offset = slack > 0.0 ? rng.uniform(-slack, slack) : 0.0;
        e.cy = center[static_cast<int>(e.cx)] + offset;

        // Keep a 3 px gap to earlier blobs so components stay separate.
        bool ok = true;
        for (const auto& other : blobs) {
            const double dx = e.cx - other.cx, dy = e.cy - other.cy;
            const double min_gap = std::max(e.rx, e.ry) + std::max(other.rx, other.ry) + 3.0;
            if (dx * dx + dy * dy < min_gap * min_gap) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;

        const int x0 = std::max(0, static_cast<int>(e.cx - e.rx - 1));
        const int x1 = std::min(w - 1, static_cast<int>(e.cx + e.rx + 1));
        const int y0 = std::max(0, static_cast<int>(e.cy - e.ry - 1));
        const int y1 = std::min(h - 1, static_cast<int>(e.cy + e.ry + 1));
        std::vector<std::pair<int, int>> pixels;
        for (int y = y0; y <= y1 && ok; ++y)
            for (int x = x0; x <= x1; ++x)
                if (e.contains(x, y)) {
                    if (!band.get(y, x)) {
                        ok = false;
                        break;
                    }
                    pixels.emplace_back(y, x);
                }
        if (!ok || pixels.empty()) continue;

        for (const auto& [y, x] : pixels) plexus.set(y, x, true);
        blobs.push_back(e);
        ++placed;
    }

    // Render: class color plus clipped Gaussian noise, raster order.
    RasterImage image(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto& mean = plexus.get(y, x)    ? cfg.plexus_color
                               : band.get(y, x)    ? cfg.muscularis_color
                                                   : cfg.background_color;
            for (int ch = 0; ch < 3; ++ch) {
                const double v = mean[ch] + cfg.noise_std * rng.normal();
                image.at(y, x, ch) =
                    static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }

    SlideRecord record;
    record.slide_id = slide_id;
    record.patient_id = patient_id;
    record.image = std::move(image);
    record.microns_per_pixel = 5.0;
    record.muscularis_gt = std::move(band);
    record.plexus_gt = std::move(plexus);
    return record;
}

std::vector<SlideRecord> generate_corpus(int n_slides, const PhantomConfig& base_config,
                                         std::uint64_t seed) {
    if (n_slides < 1) throw InvalidConfig("n_slides must be >= 1");
    std::vector<SlideRecord> corpus;
    corpus.reserve(n_slides);
    for (int i = 0; i < n_slides; ++i) {
        PhantomConfig cfg = base_config;
        cfg.seed = mix_seed(seed, "slide" + std::to_string(i));
        Rng jitter(mix_seed(seed, "jitter" + std::to_string(i)));
        const int span = cfg.band_thickness_max - cfg.band_thickness_min;
        if (span > 4) {
            // Narrow the thickness range per slide so corpora vary in geometry.
            const int lo = cfg.band_thickness_min + static_cast<int>(jitter.uniform_int(span / 2));
            cfg.band_thickness_min = lo;
            cfg.band_thickness_max = lo + span / 2;
        }
        char slide_id[32], patient_id[32];
        std::snprintf(slide_id, sizeof slide_id, "phantom_%03d", i);
        std::snprintf(patient_id, sizeof patient_id, "patient_%03d", i - i / 6);
        corpus.push_back(generate_phantom(cfg, slide_id, patient_id));
    }
    return corpus;
}

} // namespace hdms
