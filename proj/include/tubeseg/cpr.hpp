#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <thread>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/skeleton.hpp"
#include "tubeseg/volume.hpp"

namespace tubeseg {

/// Orthonormal frame at a centreline point: tangent t, plane axes u and v = t x u.
struct PathFrame {
    Vec3 center;
    Vec3 t, u, v;
};

namespace detail {

inline Vec3 unit_or_throw(const Vec3& d, const char* what)
{
    const double n = norm(d);
    if (!(n > 0.0))
        throw DataError(what);
    return (1.0 / n) * d;
}

/// u perpendicular to t, from a preferred direction or the world axis least aligned with t.
inline Vec3 initial_normal(const Vec3& t, const std::optional<Vec3>& preferred)
{
    Vec3 a;
    if (preferred) {
        a = *preferred;
    } else {
        const Vec3 m{std::abs(t.x), std::abs(t.y), std::abs(t.z)};
        a = m.x <= m.y && m.x <= m.z ? Vec3{1.0, 0.0, 0.0} : (m.y <= m.z ? Vec3{0.0, 1.0, 0.0} : Vec3{0.0, 0.0, 1.0});
    }
    const Vec3 p = a - dot(a, t) * t;
    if (!(norm(p) > 1e-9))
        throw UsageError("rm_frames: initial normal is parallel to the tangent");
    return normalized(p);
}

} // namespace detail

/// Rotation-minimizing frames by double reflection. Tangents are central
/// differences (one-sided at the ends).
inline std::vector<PathFrame> rm_frames(const std::vector<Vec3>& pts, const std::optional<Vec3>& initial_u = std::nullopt)
{
    const std::size_t n = pts.size();
    if (n < 2)
        throw DataError("rm_frames: need at least 2 points");
    for (std::size_t q = 1; q < n; ++q)
        if (!(distance(pts[q - 1], pts[q]) > 0.0))
            throw DataError("rm_frames: duplicate consecutive points at index " + std::to_string(q));
    std::vector<PathFrame> f(n);
    for (std::size_t q = 0; q < n; ++q) {
        const Vec3 d = pts[std::min(n - 1, q + 1)] - pts[q == 0 ? 0 : q - 1];
        f[q].center = pts[q];
        f[q].t = detail::unit_or_throw(d, "rm_frames: zero tangent");
    }
    f[0].u = detail::initial_normal(f[0].t, initial_u);
    f[0].v = cross(f[0].t, f[0].u);
    for (std::size_t q = 0; q + 1 < n; ++q) {
        const Vec3 v1 = pts[q + 1] - pts[q];
        const double c1 = dot(v1, v1);
        const Vec3 rl = f[q].u - (2.0 / c1) * dot(v1, f[q].u) * v1;
        const Vec3 tl = f[q].t - (2.0 / c1) * dot(v1, f[q].t) * v1;
        const Vec3 v2 = f[q + 1].t - tl;
        const double c2 = dot(v2, v2);
        Vec3 u = c2 > 1e-300 ? rl - (2.0 / c2) * dot(v2, rl) * v2 : rl;
        u = normalized(u - dot(u, f[q + 1].t) * f[q + 1].t);
        f[q + 1].u = u;
        f[q + 1].v = cross(f[q + 1].t, u);
    }
    return f;
}

struct CprParams {
    double half_extent = 10.0; // mm
    double spacing = 0.25;     // mm; with the default extent gives 81 x 81 planes
    std::optional<Vec3> initial_u;
    /// Worker threads over planes; 0 uses the hardware concurrency.
    int threads = 0;

    int size() const { return static_cast<int>(std::lround(2.0 * half_extent / spacing)) + 1; }

    void validate() const
    {
        if (!(half_extent > 0.0) || !(spacing > 0.0))
            throw UsageError("cpr: half extent and spacing must be > 0");
        if (size() > 4097)
            throw UsageError("cpr: plane grid too large");
        if (threads < 0)
            throw UsageError("cpr: threads must be >= 0");
    }
};

struct StraightenedVolume {
    /// Planes stacked along z: x, y index the plane grid, z the centreline point.
    Volume3D volume;
    std::vector<PathFrame> frames;
    double spacing = 0.0; // in-plane (mm)
    double step = 0.0;    // mean centreline point spacing (mm)
};

/// World point of plane sample (i, j) for an n x n grid of spacing sp.
inline Vec3 plane_point(const PathFrame& f, int i, int j, int n, double sp)
{
    return f.center + ((i - 0.5 * (n - 1)) * sp) * f.u + ((j - 0.5 * (n - 1)) * sp) * f.v;
}

/// One trilinearly sampled plane per centreline point, orthogonal to the path.
inline StraightenedVolume cpr_straighten(const Volume3D& vol, const std::vector<Vec3>& pts, const CprParams& p = {})
{
    p.validate();
    StraightenedVolume out;
    out.frames = rm_frames(pts, p.initial_u);
    const int n = p.size();
    const int nk = static_cast<int>(pts.size());
    double len = 0.0;
    for (std::size_t q = 1; q < pts.size(); ++q)
        len += distance(pts[q - 1], pts[q]);
    out.spacing = p.spacing;
    out.step = len / (nk - 1);
    out.volume = Volume3D(Dims3{n, n, nk}, {p.spacing, p.spacing, out.step}, {}, 0.0);
    auto work = [&](int k0, int k1) {
        for (int k = k0; k < k1; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    out.volume(i, j, k) = trilinear_sample(vol, plane_point(out.frames[k], i, j, n, p.spacing));
    };
    const int want = p.threads > 0 ? p.threads : static_cast<int>(std::thread::hardware_concurrency());
    const int nt = std::clamp(want, 1, std::max(1, nk));
    if (nt == 1) {
        work(0, nk);
        return out;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
        pool.emplace_back(work, nk * t / nt, nk * (t + 1) / nt);
    for (auto& th : pool)
        th.join();
    return out;
}

inline StraightenedVolume cpr_straighten(const Volume3D& vol, const CentrelineBranch& b, const CprParams& p = {})
{
    return cpr_straighten(vol, b.points, p);
}

} // namespace tubeseg
