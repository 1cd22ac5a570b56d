#include "hdms/metrics.hpp"

#include <algorithm>
#include <queue>

namespace hdms {

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionMismatch("mask dimensions differ: " + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) +
                                "x" + std::to_string(b.height));
}

} // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_dims(pred, gt);
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits[i] != 0;
        const bool g = gt.bits[i] != 0;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_dims(pred, gt);
    std::size_t inter = 0, px = 0, gx = 0;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits[i] != 0;
        const bool g = gt.bits[i] != 0;
        px += p;
        gx += g;
        inter += p && g;
    }
    if (px + gx == 0) return 100.0; // agreement on emptiness
    return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(px + gx);
}

PrecisionRecall precision_recall(const ConfusionCounts& c) {
    PrecisionRecall pr;
    if (c.tp + c.fp == 0) {
        pr.precision_degenerate = true;
    } else {
        pr.precision = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        pr.recall_degenerate = true;
    } else {
        pr.recall = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    return pr;
}

ComponentLabels connected_components(const BinaryMask& mask) {
    ComponentLabels out;
    out.labels.assign(mask.bits.size(), 0);
    const int w = mask.width, h = mask.height;
    std::queue<int> frontier;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int idx = r * w + c;
            if (!mask.bits[idx] || out.labels[idx]) continue;
            const int label = ++out.count;
            out.labels[idx] = label;
            frontier.push(idx);
            while (!frontier.empty()) {
                const int cur = frontier.front();
                frontier.pop();
                const int cr = cur / w, cc = cur % w;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                        const int nidx = nr * w + nc;
                        if (mask.bits[nidx] && !out.labels[nidx]) {
                            out.labels[nidx] = label;
                            frontier.push(nidx);
                        }
                    }
                }
            }
        }
    }
    return out;
}

PirResult pir(const BinaryMask& pred_muscularis, const BinaryMask& plexus_gt,
              double inclusion_fraction) {
    require_same_dims(pred_muscularis, plexus_gt);
    if (inclusion_fraction <= 0.0 || inclusion_fraction > 1.0)
        throw InvalidConfig("inclusion_fraction must be in (0,1]");
    const ComponentLabels comps = connected_components(plexus_gt);
    if (comps.count == 0)
        throw NoPlexusRegions("plexus ground truth has no regions");

    std::vector<std::size_t> size(comps.count + 1, 0), inside(comps.count + 1, 0);
    for (std::size_t i = 0; i < comps.labels.size(); ++i) {
        const int lbl = comps.labels[i];
        if (!lbl) continue;
        ++size[lbl];
        if (pred_muscularis.bits[i]) ++inside[lbl];
    }
    PirResult res;
    res.n_gt = comps.count;
    for (int lbl = 1; lbl <= comps.count; ++lbl) {
        if (static_cast<double>(inside[lbl]) >=
            inclusion_fraction * static_cast<double>(size[lbl]))
            ++res.n_included;
    }
    res.pir = 100.0 * static_cast<double>(res.n_included) / static_cast<double>(res.n_gt);
    return res;
}

BinaryMask threshold_prob_map(const ProbMap& map, double threshold) {
    BinaryMask out(map.width, map.height);
    for (std::size_t i = 0; i < map.prob.size(); ++i)
        out.bits[i] = map.prob[i] >= threshold ? 1 : 0;
    return out;
}

MetricReport evaluate_slide(const std::string& slide_id, const BinaryMask& pred,
                            const BinaryMask& muscularis_gt, const BinaryMask& plexus_gt,
                            double inclusion_fraction) {
    MetricReport rep;
    rep.slide_id = slide_id;
    rep.counts = confusion(pred, muscularis_gt);
    rep.dice = dice(pred, muscularis_gt);
    const PrecisionRecall pr = precision_recall(rep.counts);
    rep.precision = pr.precision;
    rep.recall = pr.recall;
    const PirResult p = pir(pred, plexus_gt, inclusion_fraction);
    rep.pir = p.pir;
    rep.n_gt_regions = p.n_gt;
    rep.n_included = p.n_included;
    return rep;
}

std::vector<SweepPoint> threshold_sweep(const std::vector<ProbMap>& prob_maps,
                                        const std::vector<BinaryMask>& muscularis_gts,
                                        const std::vector<BinaryMask>& plexus_gts,
                                        const std::vector<double>& thresholds,
                                        double inclusion_fraction) {
    if (prob_maps.size() != muscularis_gts.size() || prob_maps.size() != plexus_gts.size())
        throw CountMismatch("sweep inputs must align 1:1 with slides");
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw InvalidConfig("sweep thresholds must be sorted ascending");

    std::vector<SweepPoint> points;
    points.reserve(thresholds.size());
    for (double t : thresholds) {
        SweepPoint pt;
        pt.threshold = t;
        for (std::size_t s = 0; s < prob_maps.size(); ++s) {
            const BinaryMask pred = threshold_prob_map(prob_maps[s], t);
            const MetricReport rep =
                evaluate_slide("", pred, muscularis_gts[s], plexus_gts[s], inclusion_fraction);
            pt.mean_dice += rep.dice;
            pt.mean_pir += rep.pir;
            pt.mean_precision += rep.precision;
            pt.mean_recall += rep.recall;
        }
        const double n = static_cast<double>(prob_maps.size());
        pt.mean_dice /= n;
        pt.mean_pir /= n;
        pt.mean_precision /= n;
        pt.mean_recall /= n;
        points.push_back(pt);
    }
    return points;
}

std::vector<double> default_sweep_thresholds() {
    return {0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
}

std::vector<BaselineRow> baseline_table() {
    return {
        {"k-means", 70.7, 70.6, 78.9, 77.4},
        {"CNN", 89.2, 81.9, 96.2, 96.0},
        {"ViT", 89.9, 82.4, 99.7, 100.0},
    };
}

} // namespace hdms
