// End-to-end acceptance checks. Run with the pipeline CLI binary as argv[1];
// prints one PASS/FAIL line per criterion and exits non-zero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "hdms/io.hpp"
#include "hdms/metrics.hpp"
#include "hdms/phantom.hpp"
#include "hdms/rng.hpp"
#include "hdms/stain.hpp"
#include "hdms/tiler.hpp"
#include "hdms/train.hpp"
#include "hdms/vit.hpp"
#include "vit_oracle.hpp"

namespace fs = std::filesystem;
using namespace hdms;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;
fs::path g_work;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " > /dev/null";
    return std::system(cmd.c_str());
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "<missing:" + p.string() + ">";
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Parsed rows of a headered CSV, cells as doubles where possible.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
    std::istringstream in(file_bytes(p));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!cells.empty()) rows.push_back(std::move(cells));
    }
    return rows;
}

// --- criterion 1: exhaustive metric oracle ----------------------------------

bool criterion_metric_oracle(std::string& detail) {
    const auto t0 = Clock::now();
    for (int pa = 0; pa < 512; ++pa) {
        BinaryMask pred(3, 3);
        for (int i = 0; i < 9; ++i) pred.bits[i] = (pa >> i) & 1;
        for (int ga = 0; ga < 512; ++ga) {
            BinaryMask gt(3, 3);
            std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
            for (int i = 0; i < 9; ++i) {
                gt.bits[i] = (ga >> i) & 1;
                const bool p = (pa >> i) & 1, g = (ga >> i) & 1;
                tp += p && g;
                fp += p && !g;
                fn += !p && g;
                tn += !p && !g;
            }
            const ConfusionCounts c = confusion(pred, gt);
            if (c.tp != tp || c.fp != fp || c.fn != fn || c.tn != tn) {
                detail = "confusion counts diverge";
                return false;
            }
            const double want_dice =
                (tp + fp + fn == 0) ? 100.0 : 200.0 * tp / (2.0 * tp + fp + fn);
            if (dice(pred, gt) != want_dice) {
                detail = "dice diverges from brute force";
                return false;
            }
            const PrecisionRecall pr = precision_recall(c);
            const double want_p = (tp + fp == 0) ? 0.0 : 100.0 * tp / (tp + fp);
            const double want_r = (tp + fn == 0) ? 0.0 : 100.0 * tp / (tp + fn);
            if (pr.precision != want_p || pr.recall != want_r) {
                detail = "precision/recall diverge from brute force";
                return false;
            }
        }
    }
    const double dt = seconds_since(t0);
    char buf[96];
    std::snprintf(buf, sizeof buf, "262144 mask pairs, exact, %.1fs", dt);
    detail = buf;
    return dt < 10.0;
}

// --- criterion 2: PIR vs an independent flood fill --------------------------

int oracle_included(const BinaryMask& pred, const BinaryMask& gt, double fraction, int& n_comp) {
    std::vector<int> label(gt.bits.size(), 0);
    n_comp = 0;
    int included = 0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c) {
            if (!gt.get(r, c) || label[r * gt.width + c]) continue;
            ++n_comp;
            std::size_t size = 0, covered = 0;
            std::vector<std::pair<int, int>> stack{{r, c}};
            label[r * gt.width + c] = n_comp;
            while (!stack.empty()) {
                const auto [cr, cc] = stack.back();
                stack.pop_back();
                ++size;
                if (pred.get(cr, cc)) ++covered;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= gt.height || nc < 0 || nc >= gt.width) continue;
                        if (!gt.get(nr, nc) || label[nr * gt.width + nc]) continue;
                        label[nr * gt.width + nc] = n_comp;
                        stack.emplace_back(nr, nc);
                    }
            }
            if (static_cast<double>(covered) >= fraction * static_cast<double>(size)) ++included;
        }
    return included;
}

bool criterion_pir(std::string& detail) {
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(mix_seed(seed, "pir-acceptance"));
        BinaryMask gt(24, 24), pred(24, 24);
        for (auto& b : gt.bits) b = rng.bernoulli(0.25);
        for (auto& b : pred.bits) b = rng.bernoulli(0.5);
        if (gt.count() == 0) gt.set(0, 0, true);
        for (double fraction : {0.5, 1.0}) {
            int n_comp = 0;
            const int want = oracle_included(pred, gt, fraction, n_comp);
            const PirResult got = pir(pred, gt, fraction);
            if (got.n_gt != n_comp || got.n_included != want ||
                got.pir != 100.0 * want / n_comp) {
                detail = "mismatch at seed " + std::to_string(seed);
                return false;
            }
            ++checked;
        }
    }
    detail = std::to_string(checked) + " mask pairs exact";
    return true;
}

// --- criterion 3: stitch round trip -----------------------------------------

bool criterion_stitch(std::string& detail) {
    PipelineConfig cfg; // tile 224, stride 112
    Rng rng(2718);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 150 + static_cast<int>(rng.uniform_int(851));
        const int w = 150 + static_cast<int>(rng.uniform_int(851));
        RasterImage mask_img(w, h, 1);
        for (auto& v : mask_img.data) v = rng.bernoulli(0.5) ? 255 : 0;

        const TileGrid grid = inference_grid({h, w}, cfg);
        std::vector<BinaryMask> maps;
        maps.reserve(grid.origins.size());
        for (std::size_t i = 0; i < grid.origins.size(); ++i) {
            const RasterImage tile = cut_tile(mask_img, grid, i);
            BinaryMask tm(cfg.tile_size, cfg.tile_size);
            for (std::size_t j = 0; j < tm.bits.size(); ++j) tm.bits[j] = tile.data[j] == 255;
            maps.push_back(std::move(tm));
        }
        const BinaryMask out = stitch(grid, maps, {h, w});
        for (std::size_t j = 0; j < out.bits.size(); ++j)
            if (out.bits[j] != (mask_img.data[j] == 255)) {
                detail = "bit mismatch at " + std::to_string(w) + "x" + std::to_string(h);
                return false;
            }
    }
    detail = "20 random slide sizes, bit exact";
    return true;
}

// --- criteria 4 and 5: gradients and the forward oracle ---------------------

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

RasterImage random_tile(int side, std::uint64_t seed) {
    RasterImage img(side, side, 3);
    Rng rng(seed);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(256));
    return img;
}

double ce_loss(const VitParamsT<double>& params, const RasterImage& tile,
               const BinaryMask& label) {
    const LogitMapT<double> map = vit_forward(params, tile);
    const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l0 = map.logits[i * 2], l1 = map.logits[i * 2 + 1];
        const double mx = std::max(l0, l1);
        loss += mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx)) - (label.bits[i] ? l1 : l0);
    }
    return loss / static_cast<double>(n);
}

bool criterion_gradients(std::string& detail) {
    const auto t0 = Clock::now();
    const PipelineConfig cfg = tiny_config();
    double worst = 0.0;
    for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
        VitParamsT<double> params = cast_params<double>(init_params(cfg, seed));
        const RasterImage tile = random_tile(cfg.tile_size, seed + 1);
        BinaryMask label(cfg.tile_size, cfg.tile_size);
        Rng rng(seed + 2);
        for (auto& b : label.bits) b = rng.bernoulli(0.5);

        VitParamsT<double> grads = VitParamsT<double>::shaped(cfg);
        vit_backward(params, tile, label, grads);

        auto pt = params.tensor_list();
        auto gt = grads.tensor_list();
        const double eps = 1e-4;
        for (std::size_t t = 0; t < pt.size(); ++t) {
            Mat<double>& m = *pt[t].second;
            for (std::size_t i = 0; i < m.a.size(); ++i) {
                const double saved = m.a[i];
                m.a[i] = saved + eps;
                const double lp = ce_loss(params, tile, label);
                m.a[i] = saved - eps;
                const double lm = ce_loss(params, tile, label);
                m.a[i] = saved;
                const double fd = (lp - lm) / (2.0 * eps);
                const double a = gt[t].second->a[i];
                const double rel =
                    std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
                worst = std::max(worst, rel);
                if (rel > 1e-4) {
                    detail = "tensor " + pt[t].first + " rel err " + std::to_string(rel);
                    return false;
                }
            }
        }
    }
    const double dt = seconds_since(t0);
    char buf[96];
    std::snprintf(buf, sizeof buf, "3 seeds, worst rel err %.2e, %.1fs", worst, dt);
    detail = buf;
    return dt < 60.0;
}

bool criterion_forward_oracle(std::string& detail) {
    const PipelineConfig cfg = tiny_config();
    double worst = 0.0;
    for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
        const VitParamsT<double> params = cast_params<double>(init_params(cfg, seed));
        const RasterImage tile = random_tile(cfg.tile_size, seed + 7);
        const LogitMapT<double> got = vit_forward(params, tile);
        const std::vector<double> want = hdms::test::oracle_forward(params, tile);
        for (std::size_t i = 0; i < want.size(); ++i)
            worst = std::max(worst, std::abs(got.logits[i] - want[i]));
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "max |logit diff| %.2e", worst);
    detail = buf;
    return worst < 1e-10;
}

// --- criterion 6: stain recovery --------------------------------------------

bool criterion_stain(std::string& detail) {
    const auto unit = [](std::array<double, 3> v) {
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        return std::array<double, 3>{v[0] / n, v[1] / n, v[2] / n};
    };
    const auto s0 = unit({0.65, 0.70, 0.29});
    const auto s1 = unit({0.07, 0.99, 0.11});

    RasterImage img(96, 96, 3);
    Rng rng(60221);
    for (int i = 0; i < 96 * 96; ++i) {
        double c0, c1;
        const double mode = rng.uniform();
        if (mode < 0.4) {
            c0 = rng.uniform(0.3, 1.2);
            c1 = rng.uniform(0.0, 0.01);
        } else if (mode < 0.8) {
            c0 = rng.uniform(0.0, 0.01);
            c1 = rng.uniform(0.3, 1.2);
        } else {
            c0 = rng.uniform(0.2, 0.8);
            c1 = rng.uniform(0.2, 0.8);
        }
        for (int ch = 0; ch < 3; ++ch) {
            const double od = s0[ch] * c0 + s1[ch] * c1;
            img.data[i * 3 + ch] = static_cast<std::uint8_t>(
                std::clamp(std::lround(255.0 * std::pow(10.0, -od)), 0L, 255L));
        }
    }

    const StainProfile profile = estimate_stain_profile(img, MacenkoParams{});
    double worst_deg = 0.0;
    const std::array<std::array<double, 3>, 2> truth{s0, s1};
    for (int c = 0; c < 2; ++c) {
        double dot = 0.0;
        for (int r = 0; r < 3; ++r) dot += profile.stain_matrix[r][c] * truth[c][r];
        worst_deg = std::max(worst_deg,
                             std::acos(std::clamp(dot, -1.0, 1.0)) * 180.0 / M_PI);
    }
    if (worst_deg >= 2.0) {
        detail = "stain column off by " + std::to_string(worst_deg) + " deg";
        return false;
    }

    const RasterImage self = normalize_to_reference(img, profile, profile);
    int max_diff = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i)
        max_diff = std::max(max_diff, std::abs(int(img.data[i]) - int(self.data[i])));
    char buf[96];
    std::snprintf(buf, sizeof buf, "worst column %.3f deg, self-normalization diff %d/255",
                  worst_deg, max_diff);
    detail = buf;
    return max_diff <= 2;
}

// --- criterion 7: schedule and optimizer ------------------------------------

bool criterion_schedule(std::string& detail) {
    TrainConfig cfg; // base_lr 5e-4, 50 epochs, 5 warmup
    if (std::abs(lr_at(49, 10, cfg) - 5e-4) > 1e-12) {
        detail = "end-of-warmup lr off";
        return false;
    }
    TrainConfig mid = cfg;
    mid.epochs = 52; // span 46 steps at 1/epoch -> midpoint at step 28
    if (std::abs(lr_at(28, 1, mid) - 2.5e-4) > 1e-12) {
        detail = "cosine midpoint lr off";
        return false;
    }
    if (lr_at(499, 10, cfg) != 0.0) {
        detail = "final lr not exactly 0";
        return false;
    }

    const PipelineConfig pc = tiny_config();
    TrainConfig tc;
    tc.weight_decay = 0.0;
    VitParamsT<double> params = VitParamsT<double>::shaped(pc);
    VitParamsT<double> grads = VitParamsT<double>::shaped(pc);
    for (auto& v : grads.head.a) v = 1.0;
    auto state = OptimizerStateT<double>::shaped(pc);
    adamw_step(params, grads, state, 0.1, tc);
    const double expect = -0.1 / (1.0 + 1e-8);
    for (double v : params.head.a)
        if (std::abs(v - expect) > 1e-12) {
            detail = "first Adam step off";
            return false;
        }

    TrainConfig wd;
    wd.weight_decay = 0.1;
    VitParamsT<double> p2 = VitParamsT<double>::shaped(pc);
    for (auto& v : p2.head.a) v = 1.0;
    auto state2 = OptimizerStateT<double>::shaped(pc);
    adamw_step(p2, VitParamsT<double>::shaped(pc), state2, 0.1, wd);
    for (double v : p2.head.a)
        if (std::abs(v - 0.99) > 1e-12) {
            detail = "decay-only step off";
            return false;
        }
    detail = "warmup/midpoint/final lr and scalar Adam updates exact to 1e-12";
    return true;
}

// --- criterion 8: threshold monotonicity ------------------------------------

bool criterion_monotonicity(std::string& detail) {
    PipelineConfig cfg;
    cfg.tile_size = 64;
    cfg.stride = 32;
    cfg.patch_size = 8;
    cfg.embed_dim = 64;
    cfg.depth = 2;
    cfg.heads = 4;
    cfg.downsample_factor = 1;
    cfg.tiles_per_slide = 4;

    PhantomConfig pcfg;
    pcfg.width = 128;
    pcfg.height = 128;
    pcfg.seed = 9;
    const SlideRecord slide = generate_phantom(pcfg);
    const VitParams params = init_params(cfg, 404);
    const ProbMap probs = segment_slide(params, slide, cfg);

    std::size_t prev_count = probs.prob.size() + 1;
    double prev_recall = 101.0;
    int prev_included = 1 << 20;
    for (double t : default_sweep_thresholds()) {
        const BinaryMask pred = threshold_prob_map(probs, t);
        if (pred.count() > prev_count) {
            detail = "positive count increased at threshold " + std::to_string(t);
            return false;
        }
        const PrecisionRecall pr = precision_recall(confusion(pred, slide.muscularis_gt));
        if (pr.recall > prev_recall + 1e-12) {
            detail = "recall increased at threshold " + std::to_string(t);
            return false;
        }
        const PirResult pres = pir(pred, slide.plexus_gt, 1.0);
        if (pres.n_included > prev_included) {
            detail = "PIR increased at threshold " + std::to_string(t);
            return false;
        }
        prev_count = pred.count();
        prev_recall = pr.recall;
        prev_included = pres.n_included;
    }
    detail = "count/recall/PIR non-increasing across the 13-threshold grid";
    return true;
}

// --- criterion 9: desk-scale end-to-end -------------------------------------

bool criterion_end_to_end(std::string& detail) {
    const auto t0 = Clock::now();
    const fs::path dir = g_work / "e2e";
    const std::string overrides =
        " --set tile_size=64 --set stride=32 --set patch_size=8 --set embed_dim=64"
        " --set depth=4 --set heads=4 --set downsample_factor=1"
        " --set tiles_per_slide=200 --set epochs=15 --set warmup_epochs=2"
        " --set batch_size=64 --set seed=7";
    // metrics.csv uses the default confidence threshold (0.5); the 0.01
    // operating point is checked through the sweep below.
    if (run_cli("crossval --out " + dir.string() + overrides) != 0) {
        detail = "crossval exited non-zero";
        return false;
    }

    const auto metrics = csv_rows(dir / "metrics.csv");
    if (metrics.size() != 13) { // header + 12 slides
        detail = "expected 12 metric rows, got " + std::to_string(metrics.size() - 1);
        return false;
    }
    double dice_sum = 0.0;
    bool pir_all_100 = true;
    for (std::size_t i = 1; i < metrics.size(); ++i) {
        dice_sum += std::stod(metrics[i][1]);
        if (std::stod(metrics[i][4]) < 100.0) pir_all_100 = false;
    }
    const double mean_dice = dice_sum / 12.0;

    const auto sweep = csv_rows(dir / "sweep.csv");
    if (sweep.size() != 14) {
        detail = "expected 13 sweep rows";
        return false;
    }
    // PIR saturates at the lowest threshold (0.01)
    const double pir_at_001 = std::stod(sweep[1][2]);
    // DICE peaks at an intermediate threshold
    std::size_t best = 1;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (std::stod(sweep[i][1]) > std::stod(sweep[best][1])) best = i;
    const double best_threshold = std::stod(sweep[best][0]);
    const bool interior = best_threshold >= 0.05 && best_threshold <= 0.95;

    const double dt = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "mean dice %.2f, PIR@0.01 %.1f, dice peak at %.2f, %.0fs",
                  mean_dice, pir_at_001, best_threshold, dt);
    detail = buf;
    return mean_dice >= 90.0 && pir_all_100 && pir_at_001 == 100.0 && interior;
}

// --- criterion 10: determinism ----------------------------------------------

bool criterion_determinism(std::string& detail) {
    const std::string overrides =
        " --set tile_size=32 --set stride=16 --set patch_size=8 --set embed_dim=16"
        " --set depth=1 --set heads=2 --set downsample_factor=1"
        " --set tiles_per_slide=8 --set epochs=2 --set warmup_epochs=1 --set batch_size=8"
        " --set phantom_width=96 --set phantom_height=96"
        " --set band_thickness_min=40 --set band_thickness_max=60"
        " --set n_slides=6 --set n_folds=3 --set seed=12345";
    const fs::path a = g_work / "det_a";
    const fs::path b = g_work / "det_b";
    if (run_cli("crossval --out " + a.string() + overrides) != 0 ||
        run_cli("crossval --out " + b.string() + overrides) != 0) {
        detail = "crossval exited non-zero";
        return false;
    }
    if (file_bytes(a / "metrics.csv") != file_bytes(b / "metrics.csv")) {
        detail = "metrics.csv differs between runs";
        return false;
    }
    for (int f = 0; f < 3; ++f) {
        const std::string name = "fold_" + std::to_string(f) + ".ckpt";
        if (file_bytes(a / name) != file_bytes(b / name)) {
            detail = name + " differs between runs";
            return false;
        }
    }
    detail = "metrics.csv and all fold checkpoints byte-identical";
    return true;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-hdms-binary>\n");
        return 2;
    }
    g_cli = argv[1];
    g_work = fs::temp_directory_path() / ("hdms_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(g_work);

    struct Criterion {
        const char* name;
        std::function<bool(std::string&)> fn;
    };
    const std::vector<Criterion> criteria = {
        {"metric oracle equivalence", criterion_metric_oracle},
        {"plexus inclusion rate vs flood-fill oracle", criterion_pir},
        {"stitch round-trip", criterion_stitch},
        {"gradient fidelity", criterion_gradients},
        {"forward oracle", criterion_forward_oracle},
        {"stain vector recovery", criterion_stain},
        {"schedule and optimizer", criterion_schedule},
        {"threshold monotonicity", criterion_monotonicity},
        {"desk-scale end-to-end", criterion_end_to_end},
        {"cross-validation determinism", criterion_determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string detail;
        bool ok = false;
        try {
            ok = criteria[i].fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %2zu [%s] %s — %s\n", i + 1, ok ? "PASS" : "FAIL",
                    criteria[i].name, detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    fs::remove_all(g_work);
    if (failures) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    else std::printf("all %zu criteria passed\n", criteria.size());
    return failures == 0 ? 0 : 1;
}
