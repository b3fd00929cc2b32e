#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/edt.hpp"
#include "tubeseg/morphology.hpp"
#include "tubeseg/volume.hpp"

namespace tubeseg {

/// Distance (mm) from each inside voxel centre to the nearest outside voxel
/// centre, minus half the smallest spacing (a lone voxel gets sp/2). Voxels
/// beyond the grid count as outside. Zero outside the mask.
inline Volume3D distance_field(const BinaryMask& mask)
{
    if (std::none_of(mask.values().begin(), mask.values().end(), [](std::uint8_t v) { return v != 0; }))
        throw DataError("distance_field: empty mask");
    const Dims3 pd{mask.nx() + 2, mask.ny() + 2, mask.nz() + 2};
    BinaryMask outside(pd, mask.spacing(), {}, 1);
    for (int k = 0; k < mask.nz(); ++k)
        for (int j = 0; j < mask.ny(); ++j)
            for (int i = 0; i < mask.nx(); ++i)
                outside(i + 1, j + 1, k + 1) = mask(i, j, k) ? 0 : 1;
    const Volume3D d2 = squared_distance_to(outside);
    const Vec3& sp = mask.spacing();
    const double half = 0.5 * std::min(sp.x, std::min(sp.y, sp.z));
    Volume3D d = mask.like<double>(0.0);
    for (int k = 0; k < mask.nz(); ++k)
        for (int j = 0; j < mask.ny(); ++j)
            for (int i = 0; i < mask.nx(); ++i)
                if (mask(i, j, k))
                    d(i, j, k) = std::sqrt(d2(i + 1, j + 1, k + 1)) - half;
    return d;
}

struct ArrivalField {
    Volume3D T;
    /// Voxel indices in the order they were accepted.
    std::vector<std::size_t> order;
    std::vector<Index3> sources;
};

namespace detail {

/// Upwind solution of sum_a ((T - t_a) / h_a)^2 = 1 / F^2 over the axes with
/// a known neighbour, dropping the largest t_a while the root falls below it.
inline double eikonal_update(std::array<double, 3> t, std::array<double, 3> h, double f)
{
    std::array<int, 3> ord{0, 1, 2};
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return t[a] < t[b]; });
    const double rhs = 1.0 / (f * f);
    double best = std::numeric_limits<double>::infinity();
    double A = 0.0, B = 0.0, C = -rhs;
    for (int m = 0; m < 3; ++m) {
        const int a = ord[m];
        if (!std::isfinite(t[a]))
            break;
        const double w = 1.0 / (h[a] * h[a]);
        A += w;
        B += -2.0 * w * t[a];
        C += w * t[a] * t[a];
        const double disc = B * B - 4.0 * A * C;
        if (disc < 0.0)
            break;
        const double root = (-B + std::sqrt(disc)) / (2.0 * A);
        if (root < t[a])
            break;
        best = root;
        if (m + 1 < 3 && root <= t[ord[m + 1]])
            break;
    }
    return best;
}

} // namespace detail

/// Fast marching for |grad T| = 1 / speed (spacing-aware, min-heap, upwind
/// quadratic update; second-order one-sided stencils where available).
/// Voxels with speed 0 are never reached.
inline ArrivalField fast_march(const Volume3D& speed, const std::vector<Index3>& sources)
{
    if (sources.empty())
        throw UsageError("fast_march: no sources");
    if (std::none_of(speed.values().begin(), speed.values().end(), [](double v) { return v > 0.0; }))
        throw DataError("fast_march: speed is zero everywhere");
    constexpr double inf = std::numeric_limits<double>::infinity();
    ArrivalField out{speed.like<double>(inf), {}, sources};
    std::vector<std::uint8_t> state(speed.size(), 0); // 0 far, 1 trial, 2 accepted
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    for (const Index3& s : sources) {
        if (!speed.contains(s))
            throw DataError("fast_march: source outside the grid");
        if (!(speed(s.i, s.j, s.k) > 0.0))
            throw DataError("fast_march: source has zero speed");
        const std::size_t n = speed.index(s.i, s.j, s.k);
        out.T[n] = 0.0;
        state[n] = 1;
        heap.push({0.0, n});
    }
    const Vec3& sp = speed.spacing();
    const std::array<double, 3> h{sp.x, sp.y, sp.z};
    out.order.reserve(speed.size() / 8);
    while (!heap.empty()) {
        const auto [t, n] = heap.top();
        heap.pop();
        if (state[n] == 2 || t > out.T[n])
            continue;
        state[n] = 2;
        out.order.push_back(n);
        const Index3 p = speed.coords(n);
        static constexpr int nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
        for (const auto& d : nb) {
            const int i = p.i + d[0], j = p.j + d[1], k = p.k + d[2];
            if (!speed.contains(i, j, k))
                continue;
            const std::size_t q = speed.index(i, j, k);
            if (state[q] == 2 || !(speed[q] > 0.0))
                continue;
            auto known = [&](int a, int b, int c) {
                if (!speed.contains(a, b, c))
                    return inf;
                const std::size_t r = speed.index(a, b, c);
                return state[r] == 2 ? out.T[r] : inf;
            };
            // Per axis: the smaller accepted neighbour, upgraded to the
            // second-order one-sided stencil when the next one out is accepted
            // and not larger: (3T - 4T1 + T2) / 2h.
            std::array<double, 3> ta{inf, inf, inf}, ha = h;
            for (int ax = 0; ax < 3; ++ax) {
                const int di = ax == 0, dj = ax == 1, dk = ax == 2;
                const double lo1 = known(i - di, j - dj, k - dk), hi1 = known(i + di, j + dj, k + dk);
                const bool use_lo = lo1 <= hi1;
                const double t1 = use_lo ? lo1 : hi1;
                if (!std::isfinite(t1))
                    continue;
                const int sg = use_lo ? -1 : 1;
                const double t2 = known(i + 2 * sg * di, j + 2 * sg * dj, k + 2 * sg * dk);
                if (std::isfinite(t2) && t2 <= t1) {
                    ta[ax] = (4.0 * t1 - t2) / 3.0;
                    ha[ax] = 2.0 * h[ax] / 3.0;
                } else {
                    ta[ax] = t1;
                }
            }
            const double tn = detail::eikonal_update(ta, ha, speed[q]);
            if (tn < out.T[q]) {
                out.T[q] = tn;
                state[q] = 1;
                heap.push({tn, q});
            }
        }
    }
    return out;
}

/// Backtracking failure; carries the path walked so far.
class BacktrackError : public NumericError {
public:
    BacktrackError(const std::string& what, std::vector<Vec3> partial)
        : NumericError(what), partial_(std::move(partial))
    {
    }
    const std::vector<Vec3>& partial() const { return partial_; }

private:
    std::vector<Vec3> partial_;
};

namespace detail {

/// Descent direction of T at a voxel from upwind one-sided differences.
inline Vec3 upwind_descent(const Volume3D& T, int i, int j, int k)
{
    const double t = T(i, j, k);
    Vec3 d{};
    const std::array<double, 3> h{T.spacing().x, T.spacing().y, T.spacing().z};
    for (int a = 0; a < 3; ++a) {
        const int di = a == 0, dj = a == 1, dk = a == 2;
        const double lo = T.contains(i - di, j - dj, k - dk) ? T(i - di, j - dj, k - dk) : std::numeric_limits<double>::infinity();
        const double hi = T.contains(i + di, j + dj, k + dk) ? T(i + di, j + dj, k + dk) : std::numeric_limits<double>::infinity();
        const double m = std::min(lo, hi);
        if (!(m < t))
            continue;
        d[a] = (lo <= hi ? -(t - lo) : (t - hi)) / h[a];
    }
    return d;
}

/// Trilinear blend of voxel descent directions, skipping unreached corners.
inline Vec3 descent_at(const Volume3D& T, const Vec3& p_mm)
{
    const Vec3 c = T.to_voxel(p_mm);
    const int i0 = static_cast<int>(std::floor(c.x)), j0 = static_cast<int>(std::floor(c.y)),
              k0 = static_cast<int>(std::floor(c.z));
    Vec3 acc{};
    double wsum = 0.0;
    for (int dk = 0; dk <= 1; ++dk)
        for (int dj = 0; dj <= 1; ++dj)
            for (int di = 0; di <= 1; ++di) {
                const int i = i0 + di, j = j0 + dj, k = k0 + dk;
                if (!T.contains(i, j, k) || !std::isfinite(T(i, j, k)))
                    continue;
                const double w = (di ? c.x - i0 : 1.0 - (c.x - i0)) * (dj ? c.y - j0 : 1.0 - (c.y - j0)) *
                                 (dk ? c.z - k0 : 1.0 - (c.z - k0));
                const Vec3 g = upwind_descent(T, i, j, k);
                const double gn = norm(g);
                if (gn > 0.0) {
                    acc = acc + (w / gn) * g;
                    wsum += w;
                }
            }
    return wsum > 0.0 ? (1.0 / wsum) * acc : Vec3{};
}

inline Index3 nearest_voxel(const Grid3<double>& g, const Vec3& p_mm)
{
    const Vec3 c = g.to_voxel(p_mm);
    return {std::clamp(static_cast<int>(std::lround(c.x)), 0, g.nx() - 1),
            std::clamp(static_cast<int>(std::lround(c.y)), 0, g.ny() - 1),
            std::clamp(static_cast<int>(std::lround(c.z)), 0, g.nz() - 1)};
}

} // namespace detail

/// Heun descent on T from `start` (mm) until the nearest voxel is a source;
/// the source centre closes the path. Step defaults to half the smallest spacing.
inline std::vector<Vec3> backtrack(const ArrivalField& a, const Vec3& start, double step = 0.0)
{
    const Volume3D& T = a.T;
    const Vec3& sp = T.spacing();
    const double h = step > 0.0 ? step : 0.5 * std::min(sp.x, std::min(sp.y, sp.z));
    const Index3 s0 = detail::nearest_voxel(T, start);
    if (!std::isfinite(T(s0.i, s0.j, s0.k)))
        throw DataError("backtrack: start is not reached by the arrival field");
    std::vector<std::uint8_t> is_source(T.size(), 0);
    for (const Index3& s : a.sources)
        is_source[T.index(s.i, s.j, s.k)] = 1;

    std::vector<Vec3> path{start};
    Vec3 p = start;
    double best_t = T(s0.i, s0.j, s0.k);
    int since_best = 0;
    const int max_steps = 8 * (T.nx() + T.ny() + T.nz()) * static_cast<int>(std::ceil(std::min(sp.x, std::min(sp.y, sp.z)) / h)) + 100;
    for (int n = 0; n < max_steps; ++n) {
        const Index3 v = detail::nearest_voxel(T, p);
        if (is_source[T.index(v.i, v.j, v.k)]) {
            const Vec3 w = T.world(v);
            if (distance(w, path.back()) > 1e-12)
                path.push_back(w);
            return path;
        }
        const double tv = T(v.i, v.j, v.k);
        if (tv < best_t) {
            best_t = tv;
            since_best = 0;
        } else if (++since_best > static_cast<int>(std::ceil(8.0 * std::max(sp.x, std::max(sp.y, sp.z)) / h))) {
            throw BacktrackError("backtrack: descent stagnated", path);
        }
        const Vec3 k1 = detail::descent_at(T, p);
        const Vec3 k2 = detail::descent_at(T, p + h * k1);
        const Vec3 d = k1 + k2;
        const double dn = norm(d);
        if (dn < 1e-9)
            throw BacktrackError("backtrack: zero gradient", path);
        p = p + (h / dn) * d;
        path.push_back(p);
    }
    throw BacktrackError("backtrack: step limit reached", path);
}

struct CentrelineParams {
    int n_branches = 4;
    double exponent = 4.0;
    double min_branch_length = 5.0; // mm
    /// Output point spacing (mm); 0 means half the smallest voxel spacing.
    double step = 0.0;
    double medialness = 0.6;

    void validate() const
    {
        if (n_branches < 1)
            throw UsageError("centreline: n_branches must be >= 1");
        if (!(exponent > 0.0) || !(min_branch_length >= 0.0) || !(step >= 0.0))
            throw UsageError("centreline: exponent > 0, floor >= 0, step >= 0 required");
        if (!(medialness > 0.0 && medialness <= 1.0))
            throw UsageError("centreline: medialness must be in (0, 1]");
    }
};

struct CentrelineBranch {
    std::vector<Vec3> points; // mm, root to tip
    std::vector<double> radii;
    int parent = -1;
    int attach_index = -1;

    double length() const
    {
        double l = 0.0;
        for (std::size_t n = 1; n < points.size(); ++n)
            l += distance(points[n - 1], points[n]);
        return l;
    }
};

struct Centreline {
    std::vector<CentrelineBranch> branches;
};

namespace detail {

/// D at p against D on a ring of radius one voxel in the plane normal to t.
inline bool is_medial(const Volume3D& D, const Vec3& p, const Vec3& t, double ratio)
{
    const double d = trilinear_sample(D, p);
    if (!(d > 0.0))
        return false;
    const Vec3 n = normalized(t);
    const Vec3 a = std::abs(n.z) > 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 0.0, 1.0};
    const Vec3 u = normalized(cross(n, a)), v = cross(n, u);
    const Vec3& sp = D.spacing();
    const double r = std::min(sp.x, std::min(sp.y, sp.z));
    double mx = d;
    for (int q = 0; q < 8; ++q) {
        const double ang = q * std::numbers::pi / 4.0;
        mx = std::max(mx, trilinear_sample(D, p + (r * std::cos(ang)) * u + (r * std::sin(ang)) * v));
    }
    return d >= ratio * mx;
}

inline Vec3 path_tangent(const std::vector<Vec3>& pts, std::size_t n, std::size_t reach = 2)
{
    const std::size_t a = n >= reach ? n - reach : 0, b = std::min(pts.size() - 1, n + reach);
    const Vec3 d = pts[b] - pts[a];
    return norm(d) > 0.0 ? normalized(d) : Vec3{0.0, 0.0, 1.0};
}

inline bool inside(const BinaryMask& m, const Vec3& p)
{
    const Vec3 c = m.to_voxel(p);
    const int i = static_cast<int>(std::lround(c.x)), j = static_cast<int>(std::lround(c.y)),
              k = static_cast<int>(std::lround(c.z));
    return m.contains(i, j, k) && m(i, j, k) != 0;
}

inline std::vector<Vec3> resample(const std::vector<Vec3>& pts, double s)
{
    if (pts.size() < 2)
        return pts;
    std::vector<Vec3> out{pts.front()};
    double carry = 0.0;
    for (std::size_t n = 1; n < pts.size(); ++n) {
        const Vec3 a = pts[n - 1], b = pts[n];
        const double len = distance(a, b);
        double pos = s - carry;
        while (pos <= len + 1e-12) {
            out.push_back(a + (pos / len) * (b - a));
            pos += s;
        }
        carry = len - (pos - s);
    }
    if (carry > 0.5 * s)
        out.push_back(pts.back());
    else if (out.size() > 1)
        out.back() = pts.back();
    return out;
}

/// Moves each point to the mask centroid of its cross-section, a disc of
/// radius D + 1.5 voxels normal to the path. D is flat across the one or two
/// central voxels, so minimal paths alone wander by up to a voxel.
inline void recentre(std::vector<Vec3>& pts, const BinaryMask& mask, const Volume3D& D, int passes)
{
    if (pts.size() < 2)
        return;
    const Vec3& sp = mask.spacing();
    const double vox = std::min(sp.x, std::min(sp.y, sp.z));
    const double ds = 0.25 * vox;
    for (int it = 0; it < passes; ++it) {
        std::vector<Vec3> nxt = pts;
        for (std::size_t n = 0; n < pts.size(); ++n) {
            const Vec3 t = path_tangent(pts, n);
            const Vec3 a = std::abs(t.z) > 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 0.0, 1.0};
            const Vec3 u = normalized(cross(t, a)), v = cross(t, u);
            const double R = trilinear_sample(D, pts[n]) + 1.5 * vox;
            const int m = static_cast<int>(std::ceil(R / ds));
            double w = 0.0, cu = 0.0, cv = 0.0;
            for (int b = -m; b <= m; ++b)
                for (int c = -m; c <= m; ++c) {
                    const double x = c * ds, y = b * ds;
                    if (x * x + y * y > R * R)
                        continue;
                    const double q = trilinear_sample(mask, pts[n] + x * u + y * v);
                    w += q;
                    cu += q * x;
                    cv += q * y;
                }
            if (w > 0.0)
                nxt[n] = pts[n] + (cu / w) * u + (cv / w) * v;
        }
        pts = std::move(nxt);
    }
}

inline constexpr double kExtendChordMm = 2.0;

/// Walks from the path end along its outward tangent while inside the mask
/// and medial.
inline void extend_end(std::vector<Vec3>& pts, const BinaryMask& m, const Volume3D& D, double ratio, double h)
{
    if (pts.size() < 2)
        return;
    // Direction from the chord over the last few mm (at most half the path).
    std::size_t back = 0;
    double arc = 0.0;
    while (back < (pts.size() - 1) / 2 + 1 && back + 1 < pts.size() && arc < kExtendChordMm) {
        arc += distance(pts[pts.size() - 1 - back], pts[pts.size() - 2 - back]);
        ++back;
    }
    const Vec3 d = pts.back() - pts[pts.size() - 1 - back];
    if (!(norm(d) > 0.0))
        return;
    const Vec3 t = normalized(d);
    for (int n = 0; n < 10000; ++n) {
        const Vec3 q = pts.back() + h * t;
        if (!inside(m, q) || !is_medial(D, q, t, ratio))
            break;
        pts.push_back(q);
    }
}

/// Removes one tube radius of path from the back end, where trimming leaves
/// points whose cross-sections clip the cap or the grid border.
inline void drop_end_radius(std::vector<Vec3>& pts, const Volume3D& D)
{
    if (pts.size() < 3)
        return;
    // Local tube radius: deepest point within 4 mm of the end.
    double r = 0.0, arc = 0.0;
    for (std::size_t n = pts.size(); n-- > 0 && arc <= 4.0;) {
        r = std::max(r, trilinear_sample(D, pts[n]));
        if (n)
            arc += distance(pts[n], pts[n - 1]);
    }
    double acc = 0.0;
    while (pts.size() > 2 && acc < r) {
        acc += distance(pts[pts.size() - 1], pts[pts.size() - 2]);
        pts.pop_back();
    }
}

/// Light three-point smoothing of interior points; ends stay fixed.
inline void smooth(std::vector<Vec3>& pts, int passes)
{
    for (int it = 0; it < passes && pts.size() > 2; ++it) {
        std::vector<Vec3> nxt = pts;
        for (std::size_t n = 1; n + 1 < pts.size(); ++n)
            nxt[n] = 0.25 * pts[n - 1] + 0.5 * pts[n] + 0.25 * pts[n + 1];
        pts = std::move(nxt);
    }
}

/// Drops end points that are off-axis: not medial in their cross-section, or
/// shallower than `ratio` times the deepest path point within 4 mm. Paths
/// start on the surface at geodesic extremities; extension restores the ends.
inline void trim_ends(std::vector<Vec3>& pts, const Volume3D& D, double ratio, bool both)
{
    if (pts.size() < 3)
        return;
    std::vector<double> d(pts.size()), arc(pts.size(), 0.0);
    for (std::size_t n = 0; n < pts.size(); ++n) {
        d[n] = trilinear_sample(D, pts[n]);
        if (n)
            arc[n] = arc[n - 1] + distance(pts[n - 1], pts[n]);
    }
    auto off_axis = [&](std::size_t n) {
        double ref = 0.0;
        for (std::size_t q = 0; q < pts.size(); ++q)
            if (std::abs(arc[q] - arc[n]) <= 4.0)
                ref = std::max(ref, d[q]);
        return d[n] < ratio * ref || !is_medial(D, pts[n], path_tangent(pts, n), ratio);
    };
    std::size_t lo = 0, hi = pts.size();
    while (lo + 1 < hi && off_axis(lo))
        ++lo;
    if (both)
        while (hi > lo + 1 && off_axis(hi - 1))
            --hi;
    if (lo + 1 >= hi) {
        // Nothing medial (a blob): keep the deepest point.
        std::size_t best = 0;
        for (std::size_t n = 1; n < pts.size(); ++n)
            if (trilinear_sample(D, pts[n]) > trilinear_sample(D, pts[best]))
                best = n;
        pts = {pts[best]};
        return;
    }
    pts = std::vector<Vec3>(pts.begin() + static_cast<std::ptrdiff_t>(lo), pts.begin() + static_cast<std::ptrdiff_t>(hi));
}

/// Arc length from index `from` to every point.
inline std::vector<double> arc_from(const std::vector<Vec3>& pts, std::size_t from)
{
    std::vector<double> a(pts.size(), 0.0);
    for (std::size_t n = from + 1; n < pts.size(); ++n)
        a[n] = a[n - 1] + distance(pts[n - 1], pts[n]);
    for (std::size_t n = from; n-- > 0;)
        a[n] = a[n + 1] + distance(pts[n + 1], pts[n]);
    return a;
}

/// Axis line (centroid, direction) through the points whose arc lies in [lo, hi].
inline std::optional<std::pair<Vec3, Vec3>> leg_line(const std::vector<Vec3>& pts, const std::vector<double>& arc,
                                                     std::size_t first, std::size_t last, double lo, double hi)
{
    std::vector<Vec3> q;
    for (std::size_t n = first; n <= last && n < pts.size(); ++n)
        if (arc[n] >= lo && arc[n] <= hi)
            q.push_back(pts[n]);
    if (q.size() < 3 || !(distance(q.front(), q.back()) > 0.0))
        return std::nullopt;
    Vec3 c{};
    for (const Vec3& v : q)
        c = c + v;
    return std::pair{(1.0 / static_cast<double>(q.size())) * c, normalized(q.back() - q.front())};
}

/// Point closest to a set of lines in the least-squares sense.
inline std::optional<Vec3> intersect_lines(const std::vector<std::pair<Vec3, Vec3>>& lines)
{
    std::array<Vec3, 3> col{};
    Vec3 rhs{};
    for (const auto& [c, d] : lines)
        for (int a = 0; a < 3; ++a) {
            Vec3 e{};
            e[a] = 1.0;
            const Vec3 pe = e - d[a] * d; // (I - d d^T) e
            col[a] = col[a] + pe;
            rhs[a] += dot(pe, c);
        }
    const double det = dot(col[0], cross(col[1], col[2]));
    if (!(std::abs(det) > 1e-6))
        return std::nullopt;
    return Vec3{dot(rhs, cross(col[1], col[2])) / det, dot(col[0], cross(rhs, col[2])) / det,
                dot(col[0], cross(col[1], rhs)) / det};
}

/// Straight samples from a towards b at spacing h, excluding b.
inline void append_segment(std::vector<Vec3>& out, const Vec3& a, const Vec3& b, double h)
{
    const double len = distance(a, b);
    const int n = std::max(1, static_cast<int>(std::ceil(len / h)));
    for (int q = 0; q < n; ++q)
        out.push_back(a + (static_cast<double>(q) / n) * (b - a));
}

inline std::size_t nearest_point(const std::vector<Vec3>& pts, const Vec3& p)
{
    std::size_t best = 0;
    for (std::size_t n = 1; n < pts.size(); ++n)
        if (distance(pts[n], p) < distance(pts[best], p))
            best = n;
    return best;
}

/// Minimal paths cut the corner at a fork. Moves the junction of branch `bi`
/// to the least-squares meeting point of the three leg axes, each fitted
/// beyond the junction zone, and reroutes parent and branch through it.
inline void refine_junction(std::vector<CentrelineBranch>& br, std::size_t bi, const BinaryMask& mask,
                            const Volume3D& D, double h)
{
    CentrelineBranch& b = br[bi];
    auto& par = br[static_cast<std::size_t>(b.parent)].points;
    const std::size_t k = static_cast<std::size_t>(b.attach_index);
    const double rho = 1.5 * std::max(trilinear_sample(D, par[k]), 2.0 * h);
    const double span = std::max(3.0, 2.0 * rho);
    const std::vector<double> pa = arc_from(par, k), ba = arc_from(b.points, 0);
    std::vector<std::pair<Vec3, Vec3>> legs;
    for (auto leg : {leg_line(par, pa, 0, k, rho, rho + span), leg_line(par, pa, k, par.size() - 1, rho, rho + span),
                     leg_line(b.points, ba, 0, b.points.size() - 1, rho, rho + span)})
        if (leg)
            legs.push_back(*leg);
    if (legs.size() < 3)
        return;
    const auto J = intersect_lines(legs);
    if (!J || !inside(mask, *J) || distance(*J, par[k]) > rho)
        return;
    std::size_t i0 = k, i1 = k, j0 = 0;
    while (i0 > 0 && pa[i0] < rho)
        --i0;
    while (i1 + 1 < par.size() && pa[i1] < rho)
        ++i1;
    while (j0 + 1 < b.points.size() && ba[j0] < rho)
        ++j0;
    std::vector<Vec3> np(par.begin(), par.begin() + static_cast<std::ptrdiff_t>(i0));
    append_segment(np, par[i0], *J, h);
    const std::size_t jk = np.size();
    append_segment(np, *J, par[i1], h);
    np.insert(np.end(), par.begin() + static_cast<std::ptrdiff_t>(i1), par.end());
    std::vector<Vec3> nb;
    append_segment(nb, *J, b.points[j0], h);
    nb.insert(nb.end(), b.points.begin() + static_cast<std::ptrdiff_t>(j0), b.points.end());
    for (const Vec3& p : np)
        if (!inside(mask, p))
            return;
    for (const Vec3& p : nb)
        if (!inside(mask, p))
            return;
    par = std::move(np);
    b.points = std::move(nb);
    b.attach_index = static_cast<int>(jk);
    for (std::size_t q = 0; q < br.size(); ++q)
        if (q != bi && br[q].parent == b.parent)
            br[q].attach_index = static_cast<int>(nearest_point(par, br[q].points.front()));
}

inline std::size_t argmax_finite(const Volume3D& T)
{
    std::size_t best = 0;
    double bv = -1.0;
    for (std::size_t n = 0; n < T.size(); ++n)
        if (std::isfinite(T[n]) && T[n] > bv) {
            bv = T[n];
            best = n;
        }
    return best;
}

} // namespace detail

/// Sub-voxel centreline: D^p-weighted minimal paths between geodesic extremities,
/// then side branches from the voxel farthest from the current skeleton.
inline Centreline extract_centreline(const BinaryMask& mask, const CentrelineParams& prm = {})
{
    prm.validate();
    const Components cc = connected_components(mask);
    if (cc.count() == 0)
        throw DataError("extract_centreline: empty mask");
    if (cc.count() > 1)
        throw DataError("extract_centreline: mask is disconnected (" + std::to_string(cc.count()) + " components)");
    const Volume3D D = distance_field(mask);
    const double dmax = *std::max_element(D.values().begin(), D.values().end());
    Volume3D speed = D.like<double>(0.0), uniform = D.like<double>(0.0);
    for (std::size_t n = 0; n < D.size(); ++n)
        if (mask[n]) {
            speed[n] = std::pow(D[n] / dmax, prm.exponent);
            uniform[n] = 1.0;
        }
    const Vec3& sp = mask.spacing();
    const double h = prm.step > 0.0 ? prm.step : 0.5 * std::min(sp.x, std::min(sp.y, sp.z));

    // Two-pass farthest point under geodesic (uniform-speed) distance.
    const std::size_t start = detail::argmax_finite(D);
    const std::size_t a = detail::argmax_finite(fast_march(uniform, {mask.coords(start)}).T);
    const ArrivalField from_a = fast_march(uniform, {mask.coords(a)});
    const std::size_t b = detail::argmax_finite(from_a.T);

    auto finish = [&](std::vector<Vec3> pts, bool both) {
        detail::trim_ends(pts, D, prm.medialness, both);
        if (pts.size() >= 2) {
            detail::recentre(pts, mask, D, 2);
            detail::smooth(pts, 2);
            detail::drop_end_radius(pts, D);
            detail::extend_end(pts, mask, D, prm.medialness, h);
            if (both) {
                std::reverse(pts.begin(), pts.end());
                detail::drop_end_radius(pts, D);
                detail::extend_end(pts, mask, D, prm.medialness, h);
                std::reverse(pts.begin(), pts.end());
            }
            pts = detail::resample(pts, h);
        }
        return pts;
    };

    Centreline out;
    {
        std::vector<Vec3> main;
        if (a == b) {
            main = {mask.world(mask.coords(a))};
        } else {
            const ArrivalField f = fast_march(speed, {mask.coords(a)});
            main = backtrack(f, mask.world(mask.coords(b)), h);
        }
        std::reverse(main.begin(), main.end()); // a -> b
        main = finish(main, true);
        // Root first: the end with the larger radius over its first 2 mm.
        auto end_radius = [&](bool front) {
            double acc = 0.0;
            int cnt = 0;
            for (std::size_t n = 0; n < main.size() && n * h <= 2.0; ++n, ++cnt)
                acc += trilinear_sample(D, front ? main[n] : main[main.size() - 1 - n]);
            return cnt ? acc / cnt : 0.0;
        };
        if (end_radius(false) > end_radius(true) + 1e-9)
            std::reverse(main.begin(), main.end());
        CentrelineBranch br;
        br.points = std::move(main);
        out.branches.push_back(std::move(br));
    }

    while (static_cast<int>(out.branches.size()) < prm.n_branches) {
        std::vector<Index3> src;
        std::vector<std::uint8_t> seen(mask.size(), 0);
        for (const auto& br : out.branches)
            for (const Vec3& p : br.points) {
                const Index3 v = detail::nearest_voxel(D, p);
                const std::size_t n = mask.index(v.i, v.j, v.k);
                if (mask[n] && !seen[n]) {
                    seen[n] = 1;
                    src.push_back(v);
                }
            }
        if (src.empty())
            break;
        const ArrivalField geo = fast_march(uniform, src);
        const std::size_t far = detail::argmax_finite(geo.T);
        if (!(geo.T[far] >= prm.min_branch_length))
            break;
        std::vector<Vec3> path = backtrack(fast_march(speed, src), mask.world(mask.coords(far)), h);
        // path runs tip -> skeleton; the tip end alone is trimmed and extended.
        detail::trim_ends(path, D, prm.medialness, false);
        if (path.size() < 2)
            break;
        detail::recentre(path, mask, D, 2);
        detail::smooth(path, 2);
        std::reverse(path.begin(), path.end());
        detail::drop_end_radius(path, D);
        detail::extend_end(path, mask, D, prm.medialness, h);
        path = detail::resample(path, h); // root (attachment) -> tip
        if (path.size() < 2)
            break;
        CentrelineBranch br;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < out.branches.size(); ++q)
            for (std::size_t n = 0; n < out.branches[q].points.size(); ++n) {
                const double d = distance(out.branches[q].points[n], path.front());
                if (d < best) {
                    best = d;
                    br.parent = static_cast<int>(q);
                    br.attach_index = static_cast<int>(n);
                }
            }
        br.points = std::move(path);
        out.branches.push_back(std::move(br));
        detail::refine_junction(out.branches, out.branches.size() - 1, mask, D, h);
    }
    for (auto& br : out.branches) {
        br.radii.resize(br.points.size());
        for (std::size_t n = 0; n < br.points.size(); ++n)
            br.radii[n] = std::max(trilinear_sample(D, br.points[n]), 1e-6);
    }
    return out;
}

} // namespace tubeseg
