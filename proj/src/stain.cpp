#include "hdms/stain.hpp"

#include <algorithm>
#include <cmath>

namespace hdms {

namespace {

using Vec3 = std::array<double, 3>;

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized3(const Vec3& a) {
    const double n = norm3(a);
    return {a[0] / n, a[1] / n, a[2] / n};
}

// Eigenvalues of a symmetric 3x3, descending (trigonometric closed form).
std::array<double, 3> sym3_eigenvalues(const std::array<std::array<double, 3>, 3>& a) {
    const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if (p1 < 1e-30) {
        std::array<double, 3> ev{a[0][0], a[1][1], a[2][2]};
        std::sort(ev.begin(), ev.end(), std::greater<>());
        return ev;
    }
    const double p2 = (a[0][0] - q) * (a[0][0] - q) + (a[1][1] - q) * (a[1][1] - q) +
                      (a[2][2] - q) * (a[2][2] - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    std::array<std::array<double, 3>, 3> b;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
    const double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                        b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                        b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    const double r = std::clamp(detb / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    return {e1, 3.0 * q - e1 - e3, e3};
}

// Eigenvector of (a - lambda I) via the largest row cross product.
Vec3 sym3_eigenvector(const std::array<std::array<double, 3>, 3>& a, double lambda) {
    std::array<Vec3, 3> rows;
    for (int i = 0; i < 3; ++i)
        rows[i] = {a[i][0] - (i == 0 ? lambda : 0.0), a[i][1] - (i == 1 ? lambda : 0.0),
                   a[i][2] - (i == 2 ? lambda : 0.0)};
    Vec3 best{0, 0, 0};
    double best_norm = 0.0;
    const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& pr : pairs) {
        const Vec3 c = cross3(rows[pr[0]], rows[pr[1]]);
        const double n = norm3(c);
        if (n > best_norm) {
            best_norm = n;
            best = c;
        }
    }
    if (best_norm < 1e-18) return {1, 0, 0}; // fully degenerate direction
    return normalized3(best);
}

double percentile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

} // namespace

std::vector<std::array<double, 3>> to_optical_density(const RasterImage& image,
                                                      double io_white) {
    if (image.channels != 3) throw DimensionMismatch("optical density requires a 3-channel image");
    std::vector<Vec3> od(image.pixel_count());
    for (std::size_t i = 0; i < od.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::max<double>(image.data[i * 3 + c], 1.0);
            od[i][c] = -std::log10(v / io_white);
        }
    }
    return od;
}

std::array<double, 2> solve_concentrations(const std::array<std::array<double, 2>, 3>& s,
                                           const std::array<double, 3>& od, bool nonnegative) {
    // Normal equations of the 3x2 system.
    double m00 = 0, m01 = 0, m11 = 0, b0 = 0, b1 = 0;
    for (int r = 0; r < 3; ++r) {
        m00 += s[r][0] * s[r][0];
        m01 += s[r][0] * s[r][1];
        m11 += s[r][1] * s[r][1];
        b0 += s[r][0] * od[r];
        b1 += s[r][1] * od[r];
    }
    if (!nonnegative) {
        const double det = m00 * m11 - m01 * m01;
        if (std::abs(det) < 1e-18) return {0.0, 0.0};
        return {(m11 * b0 - m01 * b1) / det, (m00 * b1 - m01 * b0) / det};
    }
    // Two variables admit an exact non-negative solution: the optimum is
    // either the unconstrained minimizer or lies on one of the axes, so
    // enumerating the three candidates is both exact and cheap.
    const double det = m00 * m11 - m01 * m01;
    std::array<std::array<double, 2>, 3> candidates{{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}};
    int n_candidates = 0;
    if (std::abs(det) > 1e-18) {
        const double u0 = (m11 * b0 - m01 * b1) / det;
        const double u1 = (m00 * b1 - m01 * b0) / det;
        if (u0 >= 0.0 && u1 >= 0.0) candidates[n_candidates++] = {u0, u1};
    }
    if (m00 > 1e-18) candidates[n_candidates++] = {std::max(0.0, b0 / m00), 0.0};
    if (m11 > 1e-18) candidates[n_candidates++] = {0.0, std::max(0.0, b1 / m11)};
    auto objective = [&](const std::array<double, 2>& c) {
        return 0.5 * (m00 * c[0] * c[0] + 2.0 * m01 * c[0] * c[1] + m11 * c[1] * c[1]) -
               b0 * c[0] - b1 * c[1];
    };
    std::array<double, 2> best{0.0, 0.0};
    double best_obj = 0.0;
    for (int i = 0; i < n_candidates; ++i) {
        const double obj = objective(candidates[i]);
        if (obj < best_obj) {
            best_obj = obj;
            best = candidates[i];
        }
    }
    return best;
}

StainProfile estimate_stain_profile(const RasterImage& image, const MacenkoParams& params) {
    params.validate();
    const auto od = to_optical_density(image, params.io_white);

    std::vector<Vec3> tissue;
    tissue.reserve(od.size());
    for (const auto& v : od)
        if (norm3(v) >= params.beta_od_floor) tissue.push_back(v);
    if (tissue.size() < 2)
        throw NoTissue("fewer than 2 pixels above the OD floor");

    // Second-moment matrix of the tissue OD vectors (plane through the origin).
    std::array<std::array<double, 3>, 3> cov{};
    Vec3 mean{0, 0, 0};
    for (const auto& v : tissue) {
        for (int i = 0; i < 3; ++i) {
            mean[i] += v[i];
            for (int j = 0; j < 3; ++j) cov[i][j] += v[i] * v[j];
        }
    }
    const double n = static_cast<double>(tissue.size());
    for (int i = 0; i < 3; ++i) {
        mean[i] /= n;
        for (int j = 0; j < 3; ++j) cov[i][j] /= n;
    }

    const auto evals = sym3_eigenvalues(cov);
    Vec3 e1 = sym3_eigenvector(cov, evals[0]);
    Vec3 e2 = sym3_eigenvector(cov, evals[1]);
    // Orthogonalize the second direction against the first.
    const double d12 = dot3(e2, e1);
    for (int i = 0; i < 3; ++i) e2[i] -= d12 * e1[i];
    if (norm3(e2) < 1e-12) {
        // Degenerate pair; pick any direction orthogonal to e1.
        e2 = std::abs(e1[0]) < 0.9 ? cross3(e1, {1, 0, 0}) : cross3(e1, {0, 1, 0});
    }
    e2 = normalized3(e2);
    // Orient both axes toward the data so projected angles stay unwrapped.
    if (dot3(e1, mean) < 0)
        for (auto& x : e1) x = -x;
    if (dot3(e2, mean) < 0)
        for (auto& x : e2) x = -x;

    std::vector<double> angles(tissue.size());
    for (std::size_t i = 0; i < tissue.size(); ++i)
        angles[i] = std::atan2(dot3(tissue[i], e2), dot3(tissue[i], e1));

    const double phi_min = percentile(angles, params.alpha_percentile);
    const double phi_max = percentile(angles, 100.0 - params.alpha_percentile);
    // 8-bit quantization alone produces ~0.01 rad of angular jitter on a
    // perfectly collinear (single-stain) image, so the degeneracy cutoff sits
    // well above that but far below any separable stain pair.
    if (phi_max - phi_min < 0.05)
        throw DegenerateStains("projected angle spread below 0.05 rad");

    auto direction = [&](double phi) {
        Vec3 v;
        for (int i = 0; i < 3; ++i) v[i] = std::cos(phi) * e1[i] + std::sin(phi) * e2[i];
        for (auto& x : v) x = std::max(x, 0.0); // OD components cannot be negative
        return normalized3(v);
    };
    const Vec3 va = direction(phi_min);
    const Vec3 vb = direction(phi_max);

    // Column 0 = stain with the larger red OD component (tie-break: green).
    const bool a_first =
        va[0] > vb[0] || (va[0] == vb[0] && va[1] >= vb[1]);
    const Vec3 col0 = a_first ? va : vb;
    const Vec3 col1 = a_first ? vb : va;

    StainProfile profile;
    for (int r = 0; r < 3; ++r) {
        profile.stain_matrix[r][0] = col0[r];
        profile.stain_matrix[r][1] = col1[r];
    }

    std::vector<double> conc0, conc1;
    conc0.reserve(tissue.size());
    conc1.reserve(tissue.size());
    for (const auto& v : tissue) {
        const auto c = solve_concentrations(profile.stain_matrix, v, params.nonnegative_solve);
        conc0.push_back(c[0]);
        conc1.push_back(c[1]);
    }
    profile.max_concentrations[0] =
        std::max(percentile(conc0, params.concentration_percentile), 1e-12);
    profile.max_concentrations[1] =
        std::max(percentile(conc1, params.concentration_percentile), 1e-12);
    return profile;
}

RasterImage normalize_to_reference(const RasterImage& image, const StainProfile& source,
                                   const StainProfile& reference, const MacenkoParams& params) {
    params.validate();
    if (image.channels != 3) throw DimensionMismatch("normalization requires a 3-channel image");
    const auto od = to_optical_density(image, params.io_white);

    RasterImage out(image.width, image.height, 3);
    const double scale0 = reference.max_concentrations[0] / source.max_concentrations[0];
    const double scale1 = reference.max_concentrations[1] / source.max_concentrations[1];
    for (std::size_t i = 0; i < od.size(); ++i) {
        if (norm3(od[i]) < params.beta_od_floor) {
            for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = image.data[i * 3 + c];
            continue;
        }
        auto conc = solve_concentrations(source.stain_matrix, od[i], params.nonnegative_solve);
        conc[0] *= scale0;
        conc[1] *= scale1;
        for (int c = 0; c < 3; ++c) {
            const double od_c = reference.stain_matrix[c][0] * conc[0] +
                                reference.stain_matrix[c][1] * conc[1];
            const double intensity = params.io_white * std::pow(10.0, -od_c);
            out.data[i * 3 + c] =
                static_cast<std::uint8_t>(std::clamp(std::lround(intensity), 0L, 255L));
        }
    }
    return out;
}

} // namespace hdms
