#pragma once

#include <array>
#include <vector>

#include "hdms/core.hpp"

namespace hdms {

// 3x2 matrix whose unit columns are the optical-density directions of the
// two stains, plus per-stain reference concentrations.
struct StainProfile {
    std::array<std::array<double, 2>, 3> stain_matrix{}; // [row][stain]
    std::array<double, 2> max_concentrations{};
};

struct MacenkoParams {
    double io_white = 255.0;
    double beta_od_floor = 0.15;
    double alpha_percentile = 1.0;
    double concentration_percentile = 99.0;
    bool nonnegative_solve = true; // unconstrained least squares when false

    void validate() const {
        if (alpha_percentile <= 0.0 || alpha_percentile >= 50.0)
            throw InvalidConfig("alpha_percentile must be in (0,50)");
        if (beta_od_floor <= 0.0) throw InvalidConfig("beta_od_floor must be > 0");
        if (io_white <= 0.0) throw InvalidConfig("io_white must be > 0");
    }
};

// OD_c = -log10(max(I_c,1)/io_white) per channel. Total by clamping.
std::vector<std::array<double, 3>> to_optical_density(const RasterImage& image,
                                                      double io_white);

// Macenko's procedure: OD floor, top-2 principal plane, percentile angles,
// stain vectors, per-pixel concentration percentiles.
StainProfile estimate_stain_profile(const RasterImage& image, const MacenkoParams& params);

// Re-expresses each tissue pixel in the reference stain basis with
// concentrations rescaled by reference.max/source.max. Background pixels
// (below the OD floor) pass through unchanged.
RasterImage normalize_to_reference(const RasterImage& image, const StainProfile& source,
                                   const StainProfile& reference,
                                   const MacenkoParams& params = {});

// Per-pixel concentration solve against a 3x2 stain matrix. Projected
// gradient, 50 iterations, tolerance 1e-8; plain least squares when
// nonnegative is false.
std::array<double, 2> solve_concentrations(const std::array<std::array<double, 2>, 3>& stains,
                                           const std::array<double, 3>& od, bool nonnegative);

} // namespace hdms
