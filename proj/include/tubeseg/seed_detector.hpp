#pragma once

// Automatic seed detection on one axial reference slice: closed Sobel
// boundaries give candidate ROIs, each centroid is scored by vesselness (F),
// cross-sectional shape similarity over three orthogonal planes (GF) and
// intensity (I).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/morphology.hpp"
#include "tubeseg/vesselness.hpp"
#include "tubeseg/volume.hpp"

namespace tubeseg {

struct PixelBox {
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

struct Roi2D {
    Point2 centroid;
    /// Moore-traced outer boundary, clockwise from the first pixel in scan order.
    std::vector<std::array<int, 2>> boundary;
    PixelBox bbox;
    bool closed = false;
    std::size_t area = 0;
};

enum class RayPairing { rank, direction };

struct RayProfile {
    std::array<std::vector<double>, 3> lengths;
    std::array<std::vector<double>, 3> kept;
};

struct GeometricFeature {
    double gf = 0.0;
    Vec3 direction;
    RayProfile rays;
};

struct SeedParams {
    double cr = 0.5;
    double t_f = 0.1;
    double t_gf = 0.2;
    double v_t = -std::numeric_limits<double>::infinity();
    double plane_gap = 2.0;
    double plane_half_extent = 6.0;
    double plane_spacing = 0.5;
    int n_rays = 16;
    int trim = 3;
    double r_max = 5.0;
    double ray_step = 0.1;
    double k = 1.0;
    RayPairing pairing = RayPairing::rank;
    /// GF is measured on the volume smoothed by this sigma (mm); 0 disables.
    double gf_smoothing = 1.0;
    double roi_r_min = 0.5;
    double roi_r_max = 3.0;

    void validate() const
    {
        if (!(cr > 0.0 && cr < 1.0))
            throw UsageError("seeds: cr must lie in (0, 1)");
        if (!(plane_gap > 0.0) || !(plane_half_extent > 0.0) || !(plane_spacing > 0.0))
            throw UsageError("seeds: plane geometry must be > 0");
        if (n_rays < 1 || trim < 0 || 2 * trim >= n_rays)
            throw UsageError("seeds: need n_rays > 2 * trim");
        if (!(r_max > 0.0) || !(ray_step > 0.0) || !(k > 0.0))
            throw UsageError("seeds: r_max, ray_step and k must be > 0");
        if (!(gf_smoothing >= 0.0))
            throw UsageError("seeds: gf_smoothing must be >= 0");
        if (!(roi_r_min > 0.0) || !(roi_r_max > roi_r_min))
            throw UsageError("seeds: need 0 < roi_r_min < roi_r_max");
    }
};

struct SeedCandidate {
    /// Continuous voxel coordinates (the ROI centroid on the reference slice).
    Vec3 point;
    Index3 voxel;
    double frangi = 0.0;
    double gf = 0.0;
    double intensity = 0.0;
    bool accepted = false;
};

class NoSeedError : public DataError {
public:
    explicit NoSeedError(std::vector<SeedCandidate> candidates)
        : DataError("no seed: none of " + std::to_string(candidates.size()) + " candidates passed all thresholds"),
          candidates_(std::move(candidates))
    {
    }
    const std::vector<SeedCandidate>& candidates() const { return candidates_; }

private:
    std::vector<SeedCandidate> candidates_;
};

/// floor(cr * nz), clamped so that slices above and below exist.
inline int select_reference_slice(int nz, double cr)
{
    if (!(cr > 0.0 && cr < 1.0))
        throw UsageError("reference slice: cr must lie in (0, 1)");
    if (nz < 3)
        throw DataError("reference slice: need at least 3 slices");
    const int p = static_cast<int>(std::floor(cr * nz));
    return std::clamp(p, 1, nz - 2);
}

/// Largest region above -200 HU with holes filled.
inline Mask2D body_region_mask(const Image2D& slice, double threshold = -200.0)
{
    Mask2D m = slice.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < m.size(); ++n)
        m[n] = slice[n] > threshold ? 1 : 0;
    m = fill_holes(largest_component(m));
    if (std::none_of(m.values().begin(), m.values().end(), [](std::uint8_t x) { return x != 0; }))
        throw DataError("body mask is empty: slice has no tissue above " + std::to_string(threshold) + " HU");
    return m;
}

/// Sobel gradient magnitude in HU/mm.
inline Image2D sobel_magnitude(const Image2D& img)
{
    Image2D out = img.like<double>(0.0);
    for (int j = 0; j < img.nv(); ++j)
        for (int i = 0; i < img.nu(); ++i) {
            auto at = [&](int di, int dj) { return img.clamped(i + di, j + dj); };
            const double gx = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
            const double gy = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
            out(i, j) = std::hypot(gx / (8.0 * img.su()), gy / (8.0 * img.sv()));
        }
    return out;
}

/// Otsu threshold of `values` over `bins` equal bins spanning [min, max].
inline double otsu_threshold(const std::vector<double>& values, int bins = 256)
{
    if (values.empty())
        throw DataError("otsu: no values");
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn_it, hi = *mx_it;
    if (!(hi > lo))
        return hi;
    const double w = (hi - lo) / bins;
    std::vector<double> hist(bins, 0.0);
    for (double v : values)
        hist[std::min(bins - 1, static_cast<int>((v - lo) / w))] += 1.0;
    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (int b = 0; b < bins; ++b)
        sum_all += b * hist[b];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_b = 0;
    for (int b = 0; b < bins - 1; ++b) {
        w0 += hist[b];
        sum0 += b * hist[b];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0)
            continue;
        const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_b = b;
        }
    }
    return lo + (best_b + 1) * w;
}

namespace detail {

/// Moore-neighbour tracing of the component `label` starting at its first
/// scan-order pixel; stops on re-entering the start from the same side.
inline std::vector<std::array<int, 2>> moore_trace(const Grid2<std::int32_t>& labels, std::int32_t label)
{
    static constexpr std::array<std::array<int, 2>, 8> dirs{
        {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}}};
    int si = -1, sj = -1;
    for (int j = 0; j < labels.nv() && si < 0; ++j)
        for (int i = 0; i < labels.nu(); ++i)
            if (labels(i, j) == label) {
                si = i;
                sj = j;
                break;
            }
    std::vector<std::array<int, 2>> chain;
    if (si < 0)
        return chain;
    auto inside = [&](int i, int j) { return labels.contains(i, j) && labels(i, j) == label; };
    chain.push_back({si, sj});
    int ci = si, cj = sj;
    int back = 0; // west of the start is outside by scan order
    const std::size_t limit = 4 * labels.size() + 8;
    while (chain.size() < limit) {
        int found = -1;
        for (int t = 1; t <= 8; ++t) {
            const int d = (back + t) % 8;
            if (inside(ci + dirs[d][0], cj + dirs[d][1])) {
                found = d;
                break;
            }
        }
        if (found < 0)
            break; // isolated pixel
        const int ni = ci + dirs[found][0], nj = cj + dirs[found][1];
        // The neighbour examined just before `found` is outside; it becomes the new backtrack.
        const int prev = (found + 7) % 8;
        const int bi = ci + dirs[prev][0], bj = cj + dirs[prev][1];
        ci = ni;
        cj = nj;
        int nb = 0;
        for (int d = 0; d < 8; ++d)
            if (ci + dirs[d][0] == bi && cj + dirs[d][1] == bj)
                nb = d;
        if (ci == si && cj == sj && nb == 0)
            break;
        back = nb;
        chain.push_back({ci, cj});
    }
    return chain;
}

inline bool chain_closed(const std::vector<std::array<int, 2>>& c)
{
    if (c.empty())
        return false;
    const auto& a = c.front();
    const auto& b = c.back();
    return std::abs(a[0] - b[0]) <= 1 && std::abs(a[1] - b[1]) <= 1;
}

} // namespace detail

/// Regions fully enclosed by Sobel edge pixels inside `mask`, with area in
/// [pi r_min^2, pi r_max^2] (mm^2, converted to pixels).
inline std::vector<Roi2D> detect_closed_rois(const Image2D& slice, const Mask2D& mask, double r_min_mm = 0.5,
                                             double r_max_mm = 3.0)
{
    if (!slice.same_shape(mask))
        throw DataError("detect_closed_rois: mask shape mismatch");
    const Image2D mag = sobel_magnitude(slice);
    std::vector<double> inside;
    for (std::size_t n = 0; n < mag.size(); ++n)
        if (mask[n])
            inside.push_back(mag[n]);
    std::vector<Roi2D> rois;
    if (inside.empty())
        return rois;
    const double thr = otsu_threshold(inside);
    const double max_mag = *std::max_element(inside.begin(), inside.end());
    if (!(max_mag > 0.0))
        return rois;

    Mask2D open_px = mask.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < mag.size(); ++n)
        open_px[n] = (mask[n] && !(mag[n] > thr)) ? 1 : 0;
    const Components2D cc = connected_components(open_px, Connectivity2D::four);

    // A region is enclosed when it touches neither the image border nor the outside of the mask.
    std::vector<char> leaks(cc.count() + 1, 0);
    for (int j = 0; j < mask.nv(); ++j)
        for (int i = 0; i < mask.nu(); ++i) {
            const std::int32_t l = cc.labels(i, j);
            if (l == 0)
                continue;
            if (i == 0 || j == 0 || i == mask.nu() - 1 || j == mask.nv() - 1) {
                leaks[l] = 1;
                continue;
            }
            for (auto [di, dj] : {std::array{1, 0}, std::array{-1, 0}, std::array{0, 1}, std::array{0, -1}})
                if (!mask(i + di, j + dj))
                    leaks[l] = 1;
        }

    const double px_area = slice.su() * slice.sv();
    const double a_min = std::numbers::pi * r_min_mm * r_min_mm / px_area;
    const double a_max = std::numbers::pi * r_max_mm * r_max_mm / px_area;
    for (std::size_t l = 1; l <= cc.count(); ++l) {
        const double area = static_cast<double>(cc.sizes[l - 1]);
        if (leaks[l] || area < a_min || area > a_max)
            continue;
        Roi2D r;
        r.area = cc.sizes[l - 1];
        r.bbox = {mask.nu(), mask.nv(), -1, -1};
        double sx = 0.0, sy = 0.0;
        for (int j = 0; j < mask.nv(); ++j)
            for (int i = 0; i < mask.nu(); ++i)
                if (cc.labels(i, j) == static_cast<std::int32_t>(l)) {
                    sx += i;
                    sy += j;
                    r.bbox.min_x = std::min(r.bbox.min_x, i);
                    r.bbox.min_y = std::min(r.bbox.min_y, j);
                    r.bbox.max_x = std::max(r.bbox.max_x, i);
                    r.bbox.max_y = std::max(r.bbox.max_y, j);
                }
        r.centroid = {sx / area, sy / area};
        r.boundary = detail::moore_trace(cc.labels, static_cast<std::int32_t>(l));
        r.closed = detail::chain_closed(r.boundary);
        if (r.closed)
            rois.push_back(std::move(r));
    }
    return rois;
}

/// Unit e1 of the Hessian at voxel p and scale s.
inline Vec3 vessel_direction(const Volume3D& vol, Index3 p, double s, double gamma = 1.0)
{
    return eigen_symmetric3(hessian_at_voxel(vol, p, s, gamma)).e1;
}

/// Deterministic in-plane axes for a plane with the given normal.
inline Frame orthogonal_frame(const Vec3& center, const Vec3& normal)
{
    const Vec3 n = normalized(normal);
    const Vec3 a = std::abs(n.z) > 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 0.0, 1.0};
    const Vec3 u = normalized(cross(n, a));
    return Frame{center, u, cross(n, u)};
}

/// Square plane of (2 * round(half / spacing) + 1)^2 trilinear samples.
inline Image2D extract_orthogonal_plane(const Volume3D& vol, const Vec3& center, const Vec3& normal,
                                        double half_extent, double spacing)
{
    if (std::abs(norm(normal) - 1.0) > 1e-6)
        throw UsageError("extract_orthogonal_plane: normal must be unit length");
    if (!(half_extent > 0.0) || !(spacing > 0.0))
        throw UsageError("extract_orthogonal_plane: extent and spacing must be > 0");
    const int n = 2 * static_cast<int>(std::lround(half_extent / spacing)) + 1;
    Image2D img(n, n, spacing, spacing);
    img.frame = orthogonal_frame(center, normal);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            img(i, j) = trilinear_sample(vol, img.world(i, j));
    return img;
}

/// Half-max ray lengths (mm) from `center` (pixel coordinates) in n uniform directions.
inline std::vector<double> cast_rays(const Image2D& plane, Point2 center, int n = 16, double r_max = 5.0,
                                     double step = 0.1)
{
    if (n < 1 || !(r_max > 0.0) || !(step > 0.0))
        throw UsageError("cast_rays: need n >= 1, r_max > 0, step > 0");
    std::vector<double> sorted(plane.values().begin(), plane.values().end());
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double bg = sorted[sorted.size() / 2];
    const double ic = bilinear_sample(plane, center.x, center.y);
    const double half = 0.5 * (ic + bg);
    std::vector<double> out(n, r_max);
    for (int r = 0; r < n; ++r) {
        const double th = 2.0 * std::numbers::pi * r / n;
        const double dx = std::cos(th) / plane.su(), dy = std::sin(th) / plane.sv();
        double prev = ic;
        for (int s = 1;; ++s) {
            const double t = std::min(s * step, r_max);
            const double v = bilinear_sample(plane, center.x + t * dx, center.y + t * dy);
            if (v < half) {
                const double t0 = t - step;
                out[r] = prev > v ? t0 + step * (prev - half) / (prev - v) : t;
                break;
            }
            if (t >= r_max)
                break;
            prev = v;
        }
    }
    return out;
}

/// GF from the raw ray lengths of the three planes: with rank pairing each
/// plane is sorted and trimmed, then B_min/B_max are taken per rank; with
/// direction pairing the per-direction spread is trimmed instead.
inline double gf_from_rays(RayProfile& rays, int trim, double k, RayPairing pairing)
{
    const std::size_t n = rays.lengths[0].size();
    if (n == 0 || rays.lengths[1].size() != n || rays.lengths[2].size() != n || 2 * static_cast<std::size_t>(trim) >= n)
        throw UsageError("gf: three planes with equal ray counts above 2 * trim are required");
    for (int t = 0; t < 3; ++t) {
        std::vector<double> s_len = rays.lengths[t];
        std::sort(s_len.begin(), s_len.end());
        rays.kept[t].assign(s_len.begin() + trim, s_len.end() - trim);
    }
    std::vector<double> spreads;
    if (pairing == RayPairing::rank) {
        for (std::size_t j = 0; j < rays.kept[0].size(); ++j) {
            const auto [mn, mx] = std::minmax({rays.kept[0][j], rays.kept[1][j], rays.kept[2][j]});
            spreads.push_back(mx - mn);
        }
    } else {
        for (std::size_t r = 0; r < n; ++r) {
            const auto [mn, mx] = std::minmax({rays.lengths[0][r], rays.lengths[1][r], rays.lengths[2][r]});
            spreads.push_back(mx - mn);
        }
        std::sort(spreads.begin(), spreads.end());
        spreads.assign(spreads.begin() + trim, spreads.end() - trim);
    }
    double gf = 1.0;
    for (double s : spreads)
        gf *= k / (s + 1.0);
    return gf;
}

/// Shape similarity of cross-sections at -D, 0, +D along the vessel direction.
/// `p` is a continuous voxel coordinate; the direction comes from the Hessian
/// of `dir_vol` at scale s, the cross-sections from `vol`.
inline GeometricFeature geometric_feature(const Volume3D& vol, const Volume3D& dir_vol, const Vec3& p, double s,
                                          const SeedParams& prm)
{
    const Index3 v{static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)),
                   static_cast<int>(std::lround(p.z))};
    if (!vol.contains(v))
        throw DataError("geometric_feature: point outside volume");
    GeometricFeature out;
    out.direction = vessel_direction(dir_vol, v, s);
    const Vec3 c = vol.world(p.x, p.y, p.z);
    for (int t = 0; t < 3; ++t) {
        const Image2D pl = extract_orthogonal_plane(vol, c + ((t - 1) * prm.plane_gap) * out.direction,
                                                    out.direction, prm.plane_half_extent, prm.plane_spacing);
        const double mid = 0.5 * (pl.nu() - 1);
        out.rays.lengths[t] = cast_rays(pl, {mid, mid}, prm.n_rays, prm.r_max, prm.ray_step);
    }
    out.gf = gf_from_rays(out.rays, prm.trim, prm.k, prm.pairing);
    return out;
}

inline GeometricFeature geometric_feature(const Volume3D& vol, const Vec3& p, double s, const SeedParams& prm)
{
    return geometric_feature(vol, vol, p, s, prm);
}

inline bool seed_passes(const SeedCandidate& c, const SeedParams& p)
{
    return c.frangi >= p.t_f && c.gf >= p.t_gf && c.intensity >= p.v_t;
}

/// Orders candidates by intensity (descending), ties by (y, x) ascending.
inline void rank_candidates(std::vector<SeedCandidate>& c)
{
    std::stable_sort(c.begin(), c.end(), [](const SeedCandidate& a, const SeedCandidate& b) {
        if (a.intensity != b.intensity)
            return a.intensity > b.intensity;
        if (a.point.y != b.point.y)
            return a.point.y < b.point.y;
        return a.point.x < b.point.x;
    });
}

/// Scores every ROI centroid on slice `k`. The result holds all candidates,
/// ranked; the accepted ones are flagged. Throws NoSeedError when none pass.
inline std::vector<SeedCandidate> score_candidates(const Volume3D& vol, const VesselnessField& vf,
                                                   const std::vector<Roi2D>& rois, int k, const SeedParams& p)
{
    p.validate();
    if (!vf.score.same_geometry(vol))
        throw DataError("select_seeds: vesselness geometry mismatch");
    const Volume3D gf_vol = p.gf_smoothing > 0.0 ? gaussian_smooth(vol, p.gf_smoothing) : vol;
    std::vector<SeedCandidate> out;
    for (const Roi2D& r : rois) {
        SeedCandidate c;
        c.point = {r.centroid.x, r.centroid.y, static_cast<double>(k)};
        c.voxel = {static_cast<int>(std::lround(r.centroid.x)), static_cast<int>(std::lround(r.centroid.y)), k};
        c.frangi = vf.score[vol.index(c.voxel)];
        c.intensity = vol[vol.index(c.voxel)];
        c.gf = geometric_feature(gf_vol, vol, c.point, vf.best_scale[vol.index(c.voxel)], p).gf;
        c.accepted = seed_passes(c, p);
        out.push_back(c);
    }
    rank_candidates(out);
    return out;
}

inline std::vector<SeedCandidate> select_seeds(const Volume3D& vol, const VesselnessField& vf,
                                               const std::vector<Roi2D>& rois, int k, const SeedParams& p)
{
    std::vector<SeedCandidate> all = score_candidates(vol, vf, rois, k, p);
    if (std::none_of(all.begin(), all.end(), [](const SeedCandidate& c) { return c.accepted; }))
        throw NoSeedError(std::move(all));
    return all;
}

/// Reference slice, body mask, ROIs and scoring in one call.
inline std::vector<SeedCandidate> detect_seeds(const Volume3D& vol, const VesselnessField& vf, const SeedParams& p)
{
    p.validate();
    const int k = select_reference_slice(vol.nz(), p.cr);
    const Image2D slice = extract_axial_slice(vol, k);
    const Mask2D body = body_region_mask(slice);
    return select_seeds(vol, vf, detect_closed_rois(slice, body, p.roi_r_min, p.roi_r_max), k, p);
}

inline std::vector<SeedCandidate> accepted_only(const std::vector<SeedCandidate>& c)
{
    std::vector<SeedCandidate> out;
    std::copy_if(c.begin(), c.end(), std::back_inserter(out), [](const SeedCandidate& s) { return s.accepted; });
    return out;
}

} // namespace tubeseg
