#pragma once

#include "hdms/core.hpp"

namespace hdms::test {

inline SlideRecord make_slide(const std::string& id, const std::string& patient, int w, int h) {
    SlideRecord s;
    s.slide_id = id;
    s.patient_id = patient;
    s.image = RasterImage(w, h, 3, 200);
    s.microns_per_pixel = 5.0;
    s.muscularis_gt = BinaryMask(w, h);
    s.plexus_gt = BinaryMask(w, h);
    return s;
}

inline BinaryMask mask_from_bits(int w, int h, const std::vector<int>& bits) {
    BinaryMask m(w, h);
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = bits[i] ? 1 : 0;
    return m;
}

} // namespace hdms::test
