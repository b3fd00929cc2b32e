#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/levelset.hpp"
#include "tubeseg/morphology.hpp"
#include "tubeseg/vesselness.hpp"
#include "tubeseg/volume.hpp"

namespace tubeseg {

enum class Direction { forward, backward };

inline std::string to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

struct PropagationParams {
    EvolutionParams evo;
    /// HU gate, normally the blood model's [lo, hi].
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    /// Vesselness gate during evolution.
    double t_v = 0.0;
    /// Vesselness gate for branch capture, stricter than t_v.
    double capture_t_v = 0.1;
    double capture_radius = 3.0; // mm
    double init_radius = 1.0;    // mm, seed disc
    double dilation = 1.0;       // voxels, inter-slice
    double aorta_overlap = 0.5;
    bool capture = true;

    void validate() const
    {
        evo.validate();
        if (!(lo <= hi))
            throw UsageError("propagation: HU gate needs lo <= hi");
        if (!(capture_radius >= 0.0) || !(init_radius > 0.0) || !(dilation >= 0.0))
            throw UsageError("propagation: radii must be >= 0 (init radius > 0)");
        if (!(aorta_overlap > 0.0 && aorta_overlap <= 1.0))
            throw UsageError("propagation: aorta overlap must be in (0, 1]");
    }
};

struct SliceLog {
    int slice = 0;
    int iterations = 0;
    bool converged = false;
    std::size_t area = 0;
    std::size_t contours = 0;
    std::size_t captured = 0;
};

struct PropagationResult {
    BinaryMask mask;
    std::vector<SliceLog> slices;
    std::string stop_reason;
};

struct SegmentationResult {
    BinaryMask mask;
    /// 8-connected components per axial slice of the final mask.
    std::vector<std::size_t> contours_per_slice;
    /// Bit 0: reached by the forward pass, bit 1: by the backward pass.
    Grid3<std::uint8_t> provenance;
    PropagationResult forward;
    PropagationResult backward;
};

/// Pixels passing the HU gate and, with a vesselness slice, v >= t_v.
inline Mask2D slice_gate(const Image2D& img, const Image2D* ves, double lo, double hi, double t_v)
{
    Mask2D g = img.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < g.size(); ++n)
        g[n] = (img[n] >= lo && img[n] <= hi && (!ves || (*ves)[n] >= t_v)) ? 1 : 0;
    return g;
}

/// Adds qualifying pixels (HU gate and vesselness >= t_v) within `radius_mm`
/// of the current mask, so branches leaving the trunk get seeded.
inline Mask2D adjust_mask_for_branches(const Mask2D& mask, const Image2D* ves, const Image2D& img, double lo,
                                       double hi, double t_v, double radius_mm, std::size_t* added = nullptr)
{
    if (!mask.same_shape(img) || (ves && !ves->same_shape(img)))
        throw DataError("adjust_mask_for_branches: shape mismatch");
    Mask2D out = mask;
    std::size_t count = 0;
    if (std::none_of(mask.values().begin(), mask.values().end(), [](std::uint8_t v) { return v != 0; })) {
        if (added)
            *added = 0;
        return out;
    }
    const Image2D d2 = squared_distance_to(mask);
    const double r2 = radius_mm * radius_mm + 1e-9;
    for (std::size_t n = 0; n < out.size(); ++n) {
        if (out[n] || d2[n] > r2)
            continue;
        if (img[n] >= lo && img[n] <= hi && (!ves || (*ves)[n] >= t_v)) {
            out[n] = 1;
            ++count;
        }
    }
    if (added)
        *added = count;
    return out;
}

namespace detail {

struct PixelRect {
    int i0, j0, i1, j1; // inclusive
};

template <class T>
Grid2<T> crop2(const Grid2<T>& g, const PixelRect& r)
{
    Grid2<T> out(r.i1 - r.i0 + 1, r.j1 - r.j0 + 1, g.su(), g.sv());
    for (int j = r.j0; j <= r.j1; ++j)
        for (int i = r.i0; i <= r.i1; ++i)
            out(i - r.i0, j - r.j0) = g(i, j);
    return out;
}

struct SliceOutcome {
    Mask2D mask;
    int iterations = 0;
    bool converged = false;
};

/// Evolves one slice from `init` on a crop around it; the crop grows when the
/// result touches its edge.
inline SliceOutcome evolve_slice(const Image2D& img, const Mask2D& init, const Mask2D& gate, const EvolutionParams& p)
{
    SliceOutcome res{img.like<std::uint8_t>(0), 0, false};
    int i0 = img.nu(), j0 = img.nv(), i1 = -1, j1 = -1;
    for (int j = 0; j < img.nv(); ++j)
        for (int i = 0; i < img.nu(); ++i)
            if (init(i, j)) {
                i0 = std::min(i0, i);
                i1 = std::max(i1, i);
                j0 = std::min(j0, j);
                j1 = std::max(j1, j);
            }
    if (i1 < 0)
        return res;
    int margin = static_cast<int>(std::ceil(std::max(p.ball_radius / std::min(img.su(), img.sv()), p.band))) + 4;
    for (;;) {
        const PixelRect r{std::max(0, i0 - margin), std::max(0, j0 - margin), std::min(img.nu() - 1, i1 + margin),
                          std::min(img.nv() - 1, j1 + margin)};
        const bool full = r.i0 == 0 && r.j0 == 0 && r.i1 == img.nu() - 1 && r.j1 == img.nv() - 1;
        const Image2D sub = crop2(img, r);
        const Mask2D sub_init = crop2(init, r), sub_gate = crop2(gate, r);
        const bool all_in = std::all_of(sub_init.values().begin(), sub_init.values().end(),
                                        [](std::uint8_t v) { return v != 0; });
        if (all_in && full)
            throw DataError("slice evolution: initial mask covers the whole slice");
        if (all_in) {
            margin *= 2;
            continue;
        }
        const EvolveResult ev = evolve(init_sdf_from_mask(sub_init, p.band), sub, p, &sub_gate);
        const Mask2D in = inside_mask(ev.phi);
        bool touches = false;
        for (int j = 0; j < in.nv() && !touches; ++j)
            for (int i = 0; i < in.nu(); ++i)
                if (in(i, j) && (i == 0 || j == 0 || i == in.nu() - 1 || j == in.nv() - 1) &&
                    !(i + r.i0 == 0 || j + r.j0 == 0 || i + r.i0 == img.nu() - 1 || j + r.j0 == img.nv() - 1)) {
                    touches = true;
                    break;
                }
        if (touches && !full) {
            margin *= 2;
            continue;
        }
        for (int j = 0; j < in.nv(); ++j)
            for (int i = 0; i < in.nu(); ++i)
                res.mask(i + r.i0, j + r.j0) = in(i, j) && sub_gate(i, j) ? 1 : 0;
        res.iterations = ev.iterations;
        res.converged = ev.converged;
        return res;
    }
}

inline bool any_set(const Mask2D& m)
{
    return std::any_of(m.values().begin(), m.values().end(), [](std::uint8_t v) { return v != 0; });
}

inline std::size_t count_set(const Mask2D& m)
{
    return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

} // namespace detail

/// Slice-by-slice localized evolution from `seed` towards +z (forward) or -z
/// (backward). The seed slice is included. Backward propagation stops when the
/// slice mask falls mostly inside `aorta`.
inline PropagationResult slice_propagate(const Volume3D& vol, const Volume3D* vesselness, Index3 seed, Direction dir,
                                         const PropagationParams& p, const BinaryMask* aorta = nullptr)
{
    p.validate();
    if (!vol.contains(seed.i, seed.j, seed.k))
        throw DataError("slice_propagate: seed outside the volume");
    if (vesselness && !vesselness->same_geometry(vol))
        throw DataError("slice_propagate: vesselness geometry mismatch");
    if (aorta && !aorta->same_geometry(vol))
        throw DataError("slice_propagate: aorta mask geometry mismatch");
    const double hu = vol(seed.i, seed.j, seed.k);
    if (!(hu >= p.lo && hu <= p.hi))
        throw DataError("slice_propagate: seed intensity " + std::to_string(hu) + " outside the HU gate [" +
                        std::to_string(p.lo) + ", " + std::to_string(p.hi) + "]");

    PropagationResult out{vol.like<std::uint8_t>(0), {}, "volume end"};
    const int step = dir == Direction::forward ? 1 : -1;
    Mask2D prev;
    for (int k = seed.k; k >= 0 && k < vol.nz(); k += step) {
        const Image2D img = extract_axial_slice(vol, k);
        Image2D ves;
        if (vesselness)
            ves = extract_axial_slice(*vesselness, k);
        const Image2D* vp = vesselness ? &ves : nullptr;
        const Mask2D gate = slice_gate(img, vp, p.lo, p.hi, p.t_v);

        Mask2D init = img.like<std::uint8_t>(0);
        SliceLog log{k, 0, false, 0, 0, 0};
        if (k == seed.k) {
            const double r2 = p.init_radius * p.init_radius + 1e-9;
            for (int j = 0; j < img.nv(); ++j)
                for (int i = 0; i < img.nu(); ++i) {
                    const double dx = (i - seed.i) * img.su(), dy = (j - seed.j) * img.sv();
                    init(i, j) = dx * dx + dy * dy <= r2 ? 1 : 0;
                }
            // A few-pixel disc is all corners; its curvature would outweigh the
            // data term. Grow it over gated pixels near the seed first.
            init = adjust_mask_for_branches(init, vp, img, p.lo, p.hi, p.t_v, p.capture_radius);
            for (std::size_t n = 0; n < init.size(); ++n)
                init[n] = init[n] && gate[n] ? 1 : 0;
            init(seed.i, seed.j) = 1;
            const Components2D cc = connected_components(init);
            init = component_mask(cc, cc.labels(seed.i, seed.j));
        } else {
            init = dilate(prev, p.dilation * std::min(img.su(), img.sv()));
            if (p.capture)
                init = adjust_mask_for_branches(init, vp, img, p.lo, p.hi, p.capture_t_v, p.capture_radius,
                                                &log.captured);
        }
        for (std::size_t n = 0; n < init.size(); ++n)
            init[n] = init[n] && gate[n] ? 1 : 0;

        if (!detail::any_set(init)) {
            out.stop_reason = "empty mask";
            break;
        }
        const detail::SliceOutcome s = detail::evolve_slice(img, init, gate, p.evo);
        log.iterations = s.iterations;
        log.converged = s.converged;
        log.area = detail::count_set(s.mask);
        if (log.area == 0) {
            out.slices.push_back(log);
            out.stop_reason = "empty mask";
            break;
        }
        if (aorta && dir == Direction::backward && k != seed.k) {
            std::size_t overlap = 0;
            for (int j = 0; j < img.nv(); ++j)
                for (int i = 0; i < img.nu(); ++i)
                    overlap += (s.mask(i, j) && (*aorta)(i, j, k)) ? 1 : 0;
            if (static_cast<double>(overlap) > p.aorta_overlap * static_cast<double>(log.area)) {
                out.slices.push_back(log);
                out.stop_reason = "joined aorta";
                break;
            }
        }
        log.contours = connected_components(s.mask).count();
        for (int j = 0; j < img.nv(); ++j)
            for (int i = 0; i < img.nu(); ++i)
                out.mask(i, j, k) = s.mask(i, j);
        out.slices.push_back(log);
        prev = s.mask;
    }
    return out;
}

/// Union of both directional passes, cut to the HU gate and to the
/// 26-connected component holding the seed (or nearest to it).
inline SegmentationResult segment_tree(const Volume3D& vol, const Volume3D* vesselness, Index3 seed,
                                       const PropagationParams& p, const BinaryMask* aorta = nullptr)
{
    SegmentationResult r;
    r.forward = slice_propagate(vol, vesselness, seed, Direction::forward, p, aorta);
    r.backward = slice_propagate(vol, vesselness, seed, Direction::backward, p, aorta);
    r.provenance = vol.like<std::uint8_t>(0);
    BinaryMask uni = vol.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < uni.size(); ++n) {
        r.provenance[n] = static_cast<std::uint8_t>((r.forward.mask[n] ? 1 : 0) | (r.backward.mask[n] ? 2 : 0));
        uni[n] = (r.provenance[n] && vol[n] >= p.lo && vol[n] <= p.hi) ? 1 : 0;
    }
    const Components cc = connected_components(uni);
    std::int32_t keep = cc.labels(seed.i, seed.j, seed.k);
    if (keep == 0) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < uni.size(); ++n) {
            if (!cc.labels[n])
                continue;
            const Index3 q = uni.coords(n);
            const double d = distance(uni.world(q), vol.world(seed));
            if (d < best) {
                best = d;
                keep = cc.labels[n];
            }
        }
    }
    r.mask = vol.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < uni.size(); ++n) {
        r.mask[n] = keep != 0 && cc.labels[n] == keep ? 1 : 0;
        if (!r.mask[n])
            r.provenance[n] = 0;
    }
    r.contours_per_slice.assign(static_cast<std::size_t>(vol.nz()), 0);
    for (int k = 0; k < vol.nz(); ++k)
        r.contours_per_slice[static_cast<std::size_t>(k)] = connected_components(extract_axial_slice(r.mask, k)).count();
    return r;
}

} // namespace tubeseg
