#include "hdms/core.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "hdms/rng.hpp"

namespace hdms {

const SlideRecord& validate_slide(const SlideRecord& record) {
    const auto& img = record.image;
    if (!img.valid() || img.channels != 3)
        throw DimensionMismatch("slide " + record.slide_id + ": image is not a valid 3-channel raster");
    if (record.microns_per_pixel <= 0.0)
        throw NonPositiveResolution("slide " + record.slide_id + ": microns_per_pixel must be > 0");
    if (record.muscularis_gt.width != img.width || record.muscularis_gt.height != img.height)
        throw DimensionMismatch("slide " + record.slide_id + ": muscularis mask size != image size");
    if (record.plexus_gt.width != img.width || record.plexus_gt.height != img.height)
        throw DimensionMismatch("slide " + record.slide_id + ": plexus mask size != image size");
    for (std::size_t i = 0; i < record.plexus_gt.bits.size(); ++i) {
        if (record.plexus_gt.bits[i] && !record.muscularis_gt.bits[i])
            throw PlexusOutsideMuscularis("slide " + record.slide_id +
                                          ": plexus pixel outside muscularis");
    }
    return record;
}

FoldPlan make_fold_plan(const std::vector<SlideRecord>& slides, int n_folds,
                        std::uint64_t seed) {
    const int n = static_cast<int>(slides.size());
    if (n_folds < 1 || n < n_folds)
        throw TooFewSlides("need at least " + std::to_string(n_folds) + " slides, got " +
                           std::to_string(n));

    // Group slides by patient, preserving first-appearance order.
    std::vector<std::pair<std::string, std::vector<int>>> groups;
    std::map<std::string, std::size_t> group_index;
    for (int i = 0; i < n; ++i) {
        auto it = group_index.find(slides[i].patient_id);
        if (it == group_index.end()) {
            group_index.emplace(slides[i].patient_id, groups.size());
            groups.push_back({slides[i].patient_id, {i}});
        } else {
            groups[it->second].second.push_back(i);
        }
    }

    // Deterministic shuffle, then largest groups first so they fit while
    // capacity is still available.
    Rng rng(seed);
    for (std::size_t i = groups.size(); i > 1; --i) {
        std::swap(groups[i - 1], groups[rng.uniform_int(i)]);
    }
    std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
        return a.second.size() > b.second.size();
    });

    // Fold capacities differ by at most 1.
    std::vector<int> capacity(n_folds, n / n_folds);
    for (int f = 0; f < n % n_folds; ++f) capacity[f] += 1;

    std::vector<int> fold_of(n, -1);
    for (const auto& [patient, members] : groups) {
        int best = -1;
        for (int f = 0; f < n_folds; ++f) {
            if (capacity[f] >= static_cast<int>(members.size()) &&
                (best < 0 || capacity[f] > capacity[best]))
                best = f;
        }
        if (best >= 0) {
            for (int idx : members) fold_of[idx] = best;
            capacity[best] -= static_cast<int>(members.size());
        } else {
            // Group cannot fit whole without breaking balance: fall back to
            // slide-level assignment.
            std::fprintf(stderr,
                         "warning: patient %s (%zu slides) split across folds to keep balance\n",
                         patient.c_str(), members.size());
            for (int idx : members) {
                int f = 0;
                for (int g = 1; g < n_folds; ++g)
                    if (capacity[g] > capacity[f]) f = g;
                fold_of[idx] = f;
                capacity[f] -= 1;
            }
        }
    }

    FoldPlan plan;
    plan.n_folds = n_folds;
    plan.assignments.reserve(n);
    for (int i = 0; i < n; ++i)
        plan.assignments.emplace_back(slides[i].slide_id, fold_of[i]);
    return plan;
}

} // namespace hdms
