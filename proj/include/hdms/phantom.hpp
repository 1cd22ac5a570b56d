#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hdms/core.hpp"

namespace hdms {

// Synthetic slide: a curved muscularis band crossing the image with
// elliptical plexus blobs strictly inside it. Stands in for the private
// clinical data at desk scale.
struct PhantomConfig {
    int width = 256;
    int height = 256;
    int n_plexus = 3;
    int band_thickness_min = 80;
    int band_thickness_max = 120;
    int blob_radius_min = 6;
    int blob_radius_max = 12;
    std::array<std::uint8_t, 3> background_color{235, 230, 225};
    std::array<std::uint8_t, 3> muscularis_color{160, 120, 90};
    std::array<std::uint8_t, 3> plexus_color{100, 70, 50};
    double noise_std = 8.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (width < 16 || height < 16) throw InvalidConfig("phantom dimensions too small");
        if (n_plexus < 0) throw InvalidConfig("n_plexus must be >= 0");
        if (band_thickness_min < 4 || band_thickness_max < band_thickness_min ||
            band_thickness_max > height)
            throw InvalidConfig("bad band thickness range");
        if (blob_radius_min < 1 || blob_radius_max < blob_radius_min)
            throw InvalidConfig("bad blob radius range");
        if (2 * blob_radius_max + 4 >= band_thickness_min)
            throw InvalidConfig("blobs too large to fit strictly inside the band");
        if (noise_std < 0.0) throw InvalidConfig("noise_std must be >= 0");
    }
};

SlideRecord generate_phantom(const PhantomConfig& config, const std::string& slide_id = "phantom",
                             const std::string& patient_id = "patient");

// n_slides phantoms with per-slide derived seeds and jittered geometry.
// Patient ids repeat occasionally so fold grouping gets exercised.
std::vector<SlideRecord> generate_corpus(int n_slides, const PhantomConfig& base_config,
                                         std::uint64_t seed);

} // namespace hdms
