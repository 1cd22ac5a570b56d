// hdms — muscularis segmentation pipeline driver.
//
// Subcommands: synth, normalize, tile, train, segment, evaluate, sweep,
// crossval, baseline. Each reads a flat key=value config (--config PATH)
// plus overrides (--set key=value) and writes outputs under --out DIR.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hdms/io.hpp"
#include "hdms/phantom.hpp"
#include "hdms/stain.hpp"
#include "hdms/tiler.hpp"
#include "hdms/train.hpp"
#include "hdms/vit.hpp"

namespace fs = std::filesystem;
using namespace hdms;

namespace {

struct CliArgs {
    std::string subcommand;
    std::map<std::string, std::string> options; // --key value
    std::vector<std::string> overrides;         // --set key=value
};

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

const char* kUsage =
    "usage: hdms <subcommand> [options]\n"
    "\n"
    "subcommands:\n"
    "  synth      generate a phantom slide corpus            (--out DIR)\n"
    "  normalize  Macenko-normalize a corpus to a reference  (--in DIR --out DIR [--reference ID])\n"
    "  tile       write the training-tile cache for a slide  (--in DIR --slide ID --out DIR)\n"
    "  train      train one model on a whole corpus          (--in DIR --out DIR)\n"
    "  segment    segment a corpus with a checkpoint         (--in DIR --checkpoint FILE --out DIR)\n"
    "  evaluate   score predicted masks against ground truth (--in DIR --pred DIR --out DIR)\n"
    "  sweep      threshold sweep over stored probability maps (--in DIR --probs DIR --out DIR)\n"
    "  crossval   k-fold cross-validation end to end         (--out DIR)\n"
    "  baseline   print the published comparison table\n"
    "\n"
    "common options:\n"
    "  --config PATH     flat key=value run configuration\n"
    "  --set key=value   single config override (repeatable)\n"
    "  --out DIR         output directory\n";

CliArgs parse_args(int argc, char** argv) {
    if (argc < 2) throw UsageError("missing subcommand");
    CliArgs args;
    args.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string flag = argv[i];
        if (flag.rfind("--", 0) != 0) throw UsageError("unexpected argument: " + flag);
        if (i + 1 >= argc) throw UsageError("flag " + flag + " needs a value");
        const std::string value = argv[++i];
        if (flag == "--set") args.overrides.push_back(value);
        else args.options[flag.substr(2)] = value;
    }
    return args;
}

RunConfig load_config(const CliArgs& args) {
    RunConfig config;
    const auto it = args.options.find("config");
    if (it != args.options.end()) config = read_run_config(it->second);
    for (const auto& kv : args.overrides) apply_override(config, kv);
    return config;
}

std::string require_option(const CliArgs& args, const std::string& name) {
    const auto it = args.options.find(name);
    if (it == args.options.end()) throw UsageError("missing required --" + name);
    return it->second;
}

fs::path out_dir(const CliArgs& args) {
    const fs::path dir = require_option(args, "out");
    fs::create_directories(dir);
    return dir;
}

int cmd_synth(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const auto corpus = generate_corpus(config.n_slides, config.phantom, config.train.seed);
    const fs::path dir = out_dir(args);
    write_corpus(dir, corpus);
    std::printf("synth: wrote %d phantom slides (%dx%d) to %s\n", config.n_slides,
                config.phantom.width, config.phantom.height, dir.c_str());
    return 0;
}

int cmd_normalize(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const fs::path in = require_option(args, "in");
    const fs::path dir = out_dir(args);
    auto corpus = read_corpus(in);
    if (corpus.empty()) throw PipelineError("empty corpus at " + in.string());

    StainProfile reference;
    const auto prof_it = args.options.find("ref-profile");
    if (prof_it != args.options.end()) {
        reference = read_stain_profile(prof_it->second);
    } else {
        std::string ref_id = corpus.front().slide_id;
        const auto ref_it = args.options.find("reference");
        if (ref_it != args.options.end()) ref_id = ref_it->second;
        const SlideRecord* ref_slide = nullptr;
        for (const auto& s : corpus)
            if (s.slide_id == ref_id) ref_slide = &s;
        if (!ref_slide) throw PipelineError("reference slide not in corpus: " + ref_id);
        reference = estimate_stain_profile(ref_slide->image, config.macenko);
    }
    write_stain_profile(dir / "reference_profile.txt", reference);

    for (auto& slide : corpus) {
        const StainProfile source = estimate_stain_profile(slide.image, config.macenko);
        slide.image = normalize_to_reference(slide.image, source, reference, config.macenko);
    }
    write_corpus(dir, corpus);
    std::printf("normalize: %zu slides normalized to reference, written to %s\n", corpus.size(),
                dir.c_str());
    return 0;
}

int cmd_tile(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const fs::path in = require_option(args, "in");
    const std::string slide_id = require_option(args, "slide");
    const fs::path dir = out_dir(args);
    const SlideRecord slide = read_slide(in, slide_id);
    const auto tiles = sample_training_tiles(slide, config.pipeline, config.train.seed);
    for (const auto& tile : tiles) {
        const std::string stem = slide_id + "_" + std::to_string(tile.origin.first) + "_" +
                                 std::to_string(tile.origin.second);
        write_image(dir / (stem + ".ppm"), tile.pixels);
        if (tile.label) write_mask(dir / (stem + ".pgm"), *tile.label);
    }
    std::printf("tile: wrote %zu tiles for %s to %s\n", tiles.size(), slide_id.c_str(),
                dir.c_str());
    return 0;
}

int cmd_train(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const fs::path in = require_option(args, "in");
    const fs::path dir = out_dir(args);
    const auto corpus = read_corpus(in);
    std::vector<const SlideRecord*> slides;
    for (const auto& s : corpus) slides.push_back(&s);
    std::vector<EpochLogEntry> log;
    const VitParams params = train_fold(slides, config.train, config.pipeline, &log);
    save_checkpoint(dir / "checkpoint.ckpt", params);
    write_text_file(dir / "train_log.csv", train_log_csv(log));
    std::printf("train: %zu slides, %d epochs, final loss %.6f -> %s\n", corpus.size(),
                config.train.epochs, log.empty() ? 0.0 : log.back().mean_loss,
                (dir / "checkpoint.ckpt").c_str());
    return 0;
}

int cmd_segment(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const fs::path in = require_option(args, "in");
    const fs::path dir = out_dir(args);
    auto [params, ckpt_cfg] = load_checkpoint(require_option(args, "checkpoint"));
    PipelineConfig cfg = ckpt_cfg;
    cfg.tiles_per_slide = config.pipeline.tiles_per_slide;
    cfg.confidence_threshold = config.pipeline.confidence_threshold;
    const auto corpus = read_corpus(in);
    for (const auto& slide : corpus) {
        const ProbMap probs = segment_slide(params, slide, cfg);
        const fs::path prob_path = dir / (slide.slide_id + "_prob.pgm");
        write_prob_map(prob_path, probs);
        // Threshold the persisted (quantized) map so that a later sweep over
        // the same file reproduces these masks exactly.
        const BinaryMask pred =
            threshold_prob_map(read_prob_map(prob_path), cfg.confidence_threshold);
        write_mask(dir / (slide.slide_id + "_pred.pgm"), pred);
    }
    std::printf("segment: %zu slides at threshold %.4f -> %s\n", corpus.size(),
                cfg.confidence_threshold, dir.c_str());
    return 0;
}

int cmd_evaluate(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const fs::path in = require_option(args, "in");
    const fs::path pred_dir = require_option(args, "pred");
    const fs::path dir = out_dir(args);
    const auto corpus = read_corpus(in);
    std::vector<MetricReport> reports;
    for (const auto& slide : corpus) {
        const BinaryMask pred = read_mask(pred_dir / (slide.slide_id + "_pred.pgm"));
        const BinaryMask gt = downsample(slide.muscularis_gt, config.pipeline.downsample_factor);
        const BinaryMask plexus = downsample(slide.plexus_gt, config.pipeline.downsample_factor);
        reports.push_back(
            evaluate_slide(slide.slide_id, pred, gt, plexus, config.inclusion_fraction));
    }
    write_text_file(dir / "metrics.csv", metrics_csv(reports));
    double mean_dice = 0, mean_pir = 0;
    for (const auto& r : reports) {
        mean_dice += r.dice;
        mean_pir += r.pir;
    }
    std::printf("evaluate: %zu slides, mean dice %.4f, mean pir %.4f -> %s\n", reports.size(),
                mean_dice / reports.size(), mean_pir / reports.size(),
                (dir / "metrics.csv").c_str());
    return 0;
}

int cmd_sweep(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const fs::path in = require_option(args, "in");
    const fs::path probs_dir = require_option(args, "probs");
    const fs::path dir = out_dir(args);
    const auto corpus = read_corpus(in);
    std::vector<ProbMap> maps;
    std::vector<BinaryMask> gts, plexuses;
    for (const auto& slide : corpus) {
        maps.push_back(read_prob_map(probs_dir / (slide.slide_id + "_prob.pgm")));
        gts.push_back(downsample(slide.muscularis_gt, config.pipeline.downsample_factor));
        plexuses.push_back(downsample(slide.plexus_gt, config.pipeline.downsample_factor));
    }
    const auto points = threshold_sweep(maps, gts, plexuses, default_sweep_thresholds(),
                                        config.inclusion_fraction);
    write_text_file(dir / "sweep.csv", sweep_csv(points));
    std::printf("sweep: %zu slides x %zu thresholds -> %s\n", corpus.size(), points.size(),
                (dir / "sweep.csv").c_str());
    return 0;
}

int cmd_crossval(const CliArgs& args) {
    const RunConfig config = load_config(args);
    const fs::path dir = out_dir(args);

    std::vector<SlideRecord> corpus;
    const auto in_it = args.options.find("in");
    if (in_it != args.options.end()) {
        corpus = read_corpus(in_it->second);
    } else {
        corpus = generate_corpus(config.n_slides, config.phantom, config.train.seed);
    }
    for (const auto& slide : corpus) validate_slide(slide);

    const FoldPlan plan = make_fold_plan(corpus, config.n_folds, config.train.seed);
    const CrossValResult result = run_cross_validation(corpus, plan, config.train,
                                                       config.pipeline,
                                                       config.inclusion_fraction);

    std::vector<MetricReport> all_reports;
    std::vector<ProbMap> all_maps;
    std::vector<BinaryMask> all_gts, all_plexuses;
    for (const auto& fold : result.folds) {
        save_checkpoint(dir / ("fold_" + std::to_string(fold.fold) + ".ckpt"), fold.params);
        write_text_file(dir / ("train_log_fold_" + std::to_string(fold.fold) + ".csv"),
                        train_log_csv(fold.train_log));
        for (std::size_t i = 0; i < fold.prob_maps.size(); ++i) {
            write_prob_map(dir / (fold.test_slide_ids[i] + "_prob.pgm"), fold.prob_maps[i]);
            all_maps.push_back(fold.prob_maps[i]);
            all_gts.push_back(fold.test_muscularis_gt[i]);
            all_plexuses.push_back(fold.test_plexus_gt[i]);
        }
        for (const auto& rep : fold.reports) all_reports.push_back(rep);
    }
    write_text_file(dir / "metrics.csv", metrics_csv(all_reports));
    const auto points = threshold_sweep(all_maps, all_gts, all_plexuses,
                                        default_sweep_thresholds(), config.inclusion_fraction);
    write_text_file(dir / "sweep.csv", sweep_csv(points));

    std::printf(
        "crossval: %zu slides, %d folds, threshold %.4f: mean dice %.4f, precision %.4f, "
        "recall %.4f, pir %.4f\n",
        corpus.size(), config.n_folds, config.pipeline.confidence_threshold, result.mean_dice,
        result.mean_precision, result.mean_recall, result.mean_pir);
    return 0;
}

int cmd_baseline(const CliArgs&) {
    std::printf("%-10s %8s %10s %8s %8s\n", "model", "dice", "precision", "recall", "pir");
    for (const auto& row : baseline_table())
        std::printf("%-10s %8.1f %10.1f %8.1f %8.1f\n", row.model.c_str(), row.dice,
                    row.precision, row.recall, row.pir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        const CliArgs args = parse_args(argc, argv);
        if (args.subcommand == "synth") return cmd_synth(args);
        if (args.subcommand == "normalize") return cmd_normalize(args);
        if (args.subcommand == "tile") return cmd_tile(args);
        if (args.subcommand == "train") return cmd_train(args);
        if (args.subcommand == "segment") return cmd_segment(args);
        if (args.subcommand == "evaluate") return cmd_evaluate(args);
        if (args.subcommand == "sweep") return cmd_sweep(args);
        if (args.subcommand == "crossval") return cmd_crossval(args);
        if (args.subcommand == "baseline") return cmd_baseline(args);
        throw UsageError("unknown subcommand: " + args.subcommand);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n\n%s", e.what(), kUsage);
        return 2;
    } catch (const PipelineError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}
