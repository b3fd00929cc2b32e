#pragma once

// Synthetic vascular phantoms with analytic ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"

namespace tubeseg {

enum class PhantomKind { tube, helix, y_bifurcation, ball, plate, aorta_plus_coronary };
enum class Profile { hard, gaussian };

inline std::string to_string(PhantomKind k)
{
    switch (k) {
    case PhantomKind::tube: return "tube";
    case PhantomKind::helix: return "helix";
    case PhantomKind::y_bifurcation: return "y_bifurcation";
    case PhantomKind::ball: return "ball";
    case PhantomKind::plate: return "plate";
    case PhantomKind::aorta_plus_coronary: return "aorta_plus_coronary";
    }
    return "tube";
}

inline PhantomKind phantom_kind_from_string(const std::string& s)
{
    for (auto k : {PhantomKind::tube, PhantomKind::helix, PhantomKind::y_bifurcation, PhantomKind::ball,
                   PhantomKind::plate, PhantomKind::aorta_plus_coronary})
        if (to_string(k) == s)
            return k;
    throw UsageError("unknown phantom kind '" + s + "'");
}

/// Polyline tube. Interior joints are rounded, the two free ends are cut flat.
struct TubePrimitive {
    std::vector<Vec3> points;
    double radius = 2.0;
    bool vessel = true;
};

struct BallPrimitive {
    Vec3 center;
    double radius = 4.0;
};

/// Axis-aligned box; a plate is a box that is thin along one axis.
struct BoxPrimitive {
    Vec3 center;
    Vec3 half{1.0, 1.0, 1.0};
};

/// Circular arc in the xy-plane extruded over [z0, z1]: an open curved wall.
struct ArcWallPrimitive {
    Vec3 center;
    double radius = 6.0;
    double half_thickness = 0.5;
    double angle0 = 0.0;
    double angle1 = 1.5 * std::numbers::pi;
    double z0 = 0.0;
    double z1 = 0.0;
};

using Primitive = std::variant<TubePrimitive, BallPrimitive, BoxPrimitive, ArcWallPrimitive>;

struct PhantomSpec {
    PhantomKind kind = PhantomKind::tube;
    Dims3 dims{64, 64, 64};
    Vec3 spacing{0.5, 0.5, 0.5};
    Vec3 origin{};

    /// Tube radius, ball radius, or plate half-thickness (mm).
    double radius = 2.0;
    /// Length of the main axis (mm); 0 picks 80% of the volume extent along it.
    double length = 0.0;
    /// Main axis for tube and plate normal.
    Vec3 direction{0.0, 0.0, 1.0};
    /// Centre of the primitive; unset means the volume centre.
    std::optional<Vec3> center;

    double helix_radius = 5.0;
    double helix_pitch = 12.0;
    /// Half-angle between the two daughter branches (radians).
    double branch_angle = 0.45;
    double branch_radius = 1.5;
    double aorta_radius = 15.0;

    double foreground = 495.0;
    double background = 40.0;
    Profile profile = Profile::hard;
    double edge_sigma = 0.5;
    double noise = 0.0;
    double ramp = 1.0;
    std::uint64_t seed = 1;

    /// Additional distractor or vessel primitives.
    std::vector<Primitive> extras;

    void validate() const
    {
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
            throw UsageError("phantom: dims must be >= 1");
        if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0))
            throw UsageError("phantom: spacing must be > 0");
        if (foreground == background)
            throw UsageError("phantom: foreground must differ from background");
        if (!(radius > 0.0) || !(branch_radius > 0.0) || !(aorta_radius > 0.0) || !(helix_radius > 0.0))
            throw UsageError("phantom: radii must be > 0");
        if (!(length >= 0.0) || !(helix_pitch > 0.0))
            throw UsageError("phantom: length must be >= 0 and pitch > 0");
        if (!(noise >= 0.0) || !(ramp > 0.0) || !(edge_sigma > 0.0))
            throw UsageError("phantom: noise >= 0, ramp > 0, edge sigma > 0 required");
        if (!(norm(direction) > 0.0))
            throw UsageError("phantom: direction must be non-zero");
    }
};

enum class VoxelLabel : std::uint8_t { background = 0, interior = 1, edge = 2, axis = 3 };

struct GroundTruth {
    /// Union of all primitives.
    BinaryMask mask;
    /// Union of vessel tubes only.
    BinaryMask vessel_mask;
    /// One polyline per branch, root to tip (mm).
    std::vector<std::vector<Vec3>> centrelines;
    /// Free tube ends (mm).
    std::vector<Vec3> endpoints;
    Grid3<std::uint8_t> labels;
    std::vector<Primitive> primitives;
};

struct Phantom {
    Volume3D volume;
    GroundTruth truth;
};

namespace detail {

inline double sd_segment(const Vec3& p, const Vec3& a, const Vec3& b, double r, bool cap_a, bool cap_b)
{
    const Vec3 ab = b - a;
    const double len = norm(ab);
    if (len == 0.0)
        return distance(p, a) - r;
    const Vec3 d = ab / len;
    const double t = dot(p - a, d);
    const double perp = norm(p - a - t * d);
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    const double ax = std::max(cap_a ? -t : ninf, cap_b ? t - len : ninf);
    if (ax > 0.0)
        return perp <= r ? ax : std::hypot(perp - r, ax);
    const double tc = std::clamp(t, 0.0, len);
    return std::max(distance(p, a + tc * d) - r, ax);
}

inline double distance_to_segment(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double l2 = dot(ab, ab);
    const double t = l2 > 0.0 ? std::clamp(dot(p - a, ab) / l2, 0.0, 1.0) : 0.0;
    return distance(p, a + t * ab);
}

inline double sd_box(const Vec3& p, const BoxPrimitive& b)
{
    const Vec3 q{std::abs(p.x - b.center.x) - b.half.x, std::abs(p.y - b.center.y) - b.half.y,
                 std::abs(p.z - b.center.z) - b.half.z};
    const Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    return norm(qp) + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
}

inline double sd_arc_wall(const Vec3& p, const ArcWallPrimitive& w)
{
    const double dx = p.x - w.center.x, dy = p.y - w.center.y;
    double ang = std::atan2(dy, dx);
    const double two_pi = 2.0 * std::numbers::pi;
    while (ang < w.angle0)
        ang += two_pi;
    double in_plane;
    if (ang <= w.angle1) {
        in_plane = std::abs(std::hypot(dx, dy) - w.radius);
    } else {
        auto end = [&](double a) {
            return std::hypot(dx - w.radius * std::cos(a), dy - w.radius * std::sin(a));
        };
        in_plane = std::min(end(w.angle0), end(w.angle1));
    }
    const double radial = in_plane - w.half_thickness;
    const double axial = std::max(w.z0 - p.z, p.z - w.z1);
    if (axial > 0.0 && radial > 0.0)
        return std::hypot(radial, axial);
    return std::max(radial, axial);
}

struct AabbMm {
    Vec3 lo, hi;
};

inline AabbMm bounds_of(const Primitive& prim)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    AabbMm b{{inf, inf, inf}, {-inf, -inf, -inf}};
    auto grow = [&](const Vec3& p, double r) {
        for (int a = 0; a < 3; ++a) {
            b.lo[a] = std::min(b.lo[a], p[a] - r);
            b.hi[a] = std::max(b.hi[a], p[a] + r);
        }
    };
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, TubePrimitive>) {
                const std::size_t n = x.points.size();
                for (std::size_t q = 0; q < n; ++q) {
                    if (n >= 2 && (q == 0 || q + 1 == n)) {
                        // Flat cap: a disc of the tube radius orthogonal to the end segment.
                        const Vec3 d = normalized(q == 0 ? x.points[1] - x.points[0] : x.points[n - 1] - x.points[n - 2]);
                        for (int a = 0; a < 3; ++a) {
                            const double ext = x.radius * std::sqrt(std::max(0.0, 1.0 - d[a] * d[a]));
                            b.lo[a] = std::min(b.lo[a], x.points[q][a] - ext);
                            b.hi[a] = std::max(b.hi[a], x.points[q][a] + ext);
                        }
                    } else {
                        grow(x.points[q], x.radius);
                    }
                }
            } else if constexpr (std::is_same_v<T, BallPrimitive>) {
                grow(x.center, x.radius);
            } else if constexpr (std::is_same_v<T, BoxPrimitive>) {
                grow(x.center - x.half, 0.0);
                grow(x.center + x.half, 0.0);
            } else {
                const double r = x.radius + x.half_thickness;
                grow({x.center.x - r, x.center.y - r, x.z0}, 0.0);
                grow({x.center.x + r, x.center.y + r, x.z1}, 0.0);
            }
        },
        prim);
    return b;
}

/// Visits every voxel of `g` inside the world box [lo - pad, hi + pad].
template <class G, class F>
void for_voxels_in(const G& g, const AabbMm& box, double pad, F&& f)
{
    const Vec3 lo = g.to_voxel(box.lo - Vec3{pad, pad, pad});
    const Vec3 hi = g.to_voxel(box.hi + Vec3{pad, pad, pad});
    const int i0 = std::max(0, static_cast<int>(std::floor(lo.x))), i1 = std::min(g.nx() - 1, static_cast<int>(std::ceil(hi.x)));
    const int j0 = std::max(0, static_cast<int>(std::floor(lo.y))), j1 = std::min(g.ny() - 1, static_cast<int>(std::ceil(hi.y)));
    const int k0 = std::max(0, static_cast<int>(std::floor(lo.z))), k1 = std::min(g.nz() - 1, static_cast<int>(std::ceil(hi.z)));
    for (int k = k0; k <= k1; ++k)
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i)
                f(i, j, k);
}

inline Vec3 volume_center(const PhantomSpec& s)
{
    return s.origin + Vec3{0.5 * (s.dims.nx - 1) * s.spacing.x, 0.5 * (s.dims.ny - 1) * s.spacing.y,
                           0.5 * (s.dims.nz - 1) * s.spacing.z};
}

inline Vec3 volume_extent(const PhantomSpec& s)
{
    return {(s.dims.nx - 1) * s.spacing.x, (s.dims.ny - 1) * s.spacing.y, (s.dims.nz - 1) * s.spacing.z};
}

inline double default_length(const PhantomSpec& s, const Vec3& dir)
{
    if (s.length > 0.0)
        return s.length;
    const Vec3 e = volume_extent(s);
    // Extent of the volume box along `dir` through its centre.
    double t = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a)
        if (std::abs(dir[a]) > 1e-12)
            t = std::min(t, e[a] / std::abs(dir[a]));
    return 0.8 * t;
}

} // namespace detail

/// The primitive list a spec expands to (kind geometry followed by extras).
inline std::vector<Primitive> phantom_primitives(const PhantomSpec& s)
{
    const Vec3 c = s.center.value_or(detail::volume_center(s));
    const Vec3 ext = detail::volume_extent(s);
    std::vector<Primitive> prims;
    switch (s.kind) {
    case PhantomKind::tube: {
        const Vec3 d = normalized(s.direction);
        const double half = 0.5 * detail::default_length(s, d);
        prims.push_back(TubePrimitive{{c - half * d, c + half * d}, s.radius, true});
        break;
    }
    case PhantomKind::helix: {
        const double len = s.length > 0.0 ? s.length : 0.8 * ext.z;
        const double z0 = c.z - 0.5 * len;
        const double turns = len / s.helix_pitch;
        const int n = std::max(16, static_cast<int>(std::ceil(turns * 128)));
        TubePrimitive t{{}, s.radius, true};
        for (int q = 0; q <= n; ++q) {
            const double a = 2.0 * std::numbers::pi * turns * q / n;
            t.points.push_back({c.x + s.helix_radius * std::cos(a), c.y + s.helix_radius * std::sin(a),
                                z0 + len * q / n});
        }
        prims.push_back(std::move(t));
        break;
    }
    case PhantomKind::y_bifurcation: {
        const double len = s.length > 0.0 ? s.length : 0.8 * ext.z;
        const Vec3 root{c.x, c.y, c.z - 0.5 * len};
        const Vec3 fork{c.x, c.y, c.z - 0.1 * len};
        const double arm = 0.6 * len / std::cos(s.branch_angle);
        const Vec3 tip_a = fork + arm * Vec3{std::sin(s.branch_angle), 0.0, std::cos(s.branch_angle)};
        const Vec3 tip_b = fork + arm * Vec3{-std::sin(s.branch_angle), 0.0, std::cos(s.branch_angle)};
        prims.push_back(TubePrimitive{{root, fork}, s.radius, true});
        prims.push_back(TubePrimitive{{fork, tip_a}, s.branch_radius, true});
        prims.push_back(TubePrimitive{{fork, tip_b}, s.branch_radius, true});
        break;
    }
    case PhantomKind::ball: prims.push_back(BallPrimitive{c, s.radius}); break;
    case PhantomKind::plate: {
        const Vec3 d = normalized(s.direction);
        Vec3 half = 0.4 * ext;
        int axis = 0;
        for (int a = 1; a < 3; ++a)
            if (std::abs(d[a]) > std::abs(d[axis]))
                axis = a;
        half[axis] = s.radius;
        prims.push_back(BoxPrimitive{c, half});
        break;
    }
    case PhantomKind::aorta_plus_coronary: {
        // Aorta along z in the upper part of the volume; the coronary leaves
        // its wall with a short slanted segment and then runs down z.
        const double r_ao = s.aorta_radius;
        const double ax = s.origin.x + r_ao + 0.1 * ext.x;
        const double z_top = s.origin.z;
        const double z_ao = s.origin.z + 0.4 * ext.z;
        prims.push_back(TubePrimitive{{{ax, c.y, z_top}, {ax, c.y, z_ao}}, r_ao, false});
        const double x_run = ax + r_ao + 0.5 * (ext.x - (ax - s.origin.x) - r_ao);
        const Vec3 p0{ax + r_ao - 2.0 * s.radius, c.y, z_ao - 3.0 * s.radius};
        const Vec3 p1{x_run, c.y, z_ao + 2.0 * s.radius};
        const Vec3 p2{x_run, c.y, s.origin.z + ext.z - 2.0 * s.radius};
        prims.push_back(TubePrimitive{{p0, p1, p2}, s.radius, true});
        break;
    }
    }
    prims.insert(prims.end(), s.extras.begin(), s.extras.end());
    return prims;
}

/// Signed distance (mm, negative inside) from p to one primitive.
inline double signed_distance(const Primitive& prim, const Vec3& p)
{
    return std::visit(
        [&](const auto& x) -> double {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, TubePrimitive>) {
                double best = std::numeric_limits<double>::infinity();
                const std::size_t n = x.points.size();
                for (std::size_t q = 0; q + 1 < n; ++q)
                    best = std::min(best, detail::sd_segment(p, x.points[q], x.points[q + 1], x.radius, q == 0,
                                                             q + 2 == n));
                // Interior joints are rounded; near a flat end the rounding of
                // the neighbouring segments must not poke through the cap.
                if (n >= 3)
                    for (const auto& [e, d] : {std::pair{x.points[0], x.points[0] - x.points[1]},
                                               std::pair{x.points[n - 1], x.points[n - 1] - x.points[n - 2]}}) {
                        const double ax = dot(p - e, normalized(d));
                        if (ax > 0.0 && distance(p, e) <= 2.0 * x.radius)
                            best = std::max(best, ax);
                    }
                return best;
            } else if constexpr (std::is_same_v<T, BallPrimitive>) {
                return distance(p, x.center) - x.radius;
            } else if constexpr (std::is_same_v<T, BoxPrimitive>) {
                return detail::sd_box(p, x);
            } else {
                return detail::sd_arc_wall(p, x);
            }
        },
        prim);
}

/// Multiplies the deviation from `background` by a linear ramp 1 -> factor over z.
inline Volume3D apply_ramp(const Volume3D& vol, double factor, double background)
{
    if (!(factor > 0.0))
        throw UsageError("apply_ramp: factor must be > 0");
    Volume3D out = vol;
    if (factor == 1.0)
        return out;
    for (int k = 0; k < vol.nz(); ++k) {
        const double r = vol.nz() > 1 ? 1.0 + (factor - 1.0) * k / (vol.nz() - 1) : 1.0;
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i)
                out(i, j, k) = background + (vol(i, j, k) - background) * r;
    }
    return out;
}

inline Phantom generate(const PhantomSpec& s)
{
    s.validate();
    const auto prims = phantom_primitives(s);
    Volume3D sd(s.dims, s.spacing, s.origin, std::numeric_limits<double>::infinity());
    Volume3D sd_vessel = sd.like<double>(std::numeric_limits<double>::infinity());
    Volume3D axis_dist = sd.like<double>(std::numeric_limits<double>::infinity());

    // Primitives may touch the volume faces but not cross them.
    const double slack = 0.5 * std::max(s.spacing.x, std::max(s.spacing.y, s.spacing.z)) + 1e-9;
    const Vec3 vlo = s.origin, vhi = s.origin + detail::volume_extent(s);
    const double pad = s.profile == Profile::gaussian ? 5.0 * s.edge_sigma : 0.0;
    const double vox = std::max(s.spacing.x, std::max(s.spacing.y, s.spacing.z));
    GroundTruth truth;
    for (const Primitive& prim : prims) {
        const auto box = detail::bounds_of(prim);
        for (int a = 0; a < 3; ++a)
            if (box.lo[a] < vlo[a] - slack || box.hi[a] > vhi[a] + slack)
                throw DataError("phantom: primitive exceeds the volume bounds");
        const auto* tube = std::get_if<TubePrimitive>(&prim);
        detail::for_voxels_in(sd, box, pad + vox, [&](int i, int j, int k) {
            const Vec3 p = sd.world(i, j, k);
            const double d = signed_distance(prim, p);
            double& cur = sd(i, j, k);
            cur = std::min(cur, d);
            if (tube && tube->vessel) {
                double& cv = sd_vessel(i, j, k);
                cv = std::min(cv, d);
                double& ca = axis_dist(i, j, k);
                for (std::size_t q = 0; q + 1 < tube->points.size(); ++q)
                    ca = std::min(ca, detail::distance_to_segment(p, tube->points[q], tube->points[q + 1]));
            }
        });
        if (tube && tube->vessel && tube->points.size() >= 2) {
            truth.centrelines.push_back(tube->points);
            truth.endpoints.push_back(tube->points.front());
            truth.endpoints.push_back(tube->points.back());
        }
    }
    // A polyline start that coincides with another tube's point is a joint, not a free end.
    std::vector<Vec3> free_ends;
    for (const Vec3& e : truth.endpoints) {
        int hits = 0;
        for (const auto& cl : truth.centrelines)
            for (const Vec3& p : cl)
                hits += distance(p, e) < 1e-9 ? 1 : 0;
        if (hits == 1)
            free_ends.push_back(e);
    }
    truth.endpoints = std::move(free_ends);
    truth.primitives = prims;

    Volume3D vol = sd.like<double>(s.background);
    truth.mask = sd.like<std::uint8_t>(0);
    truth.vessel_mask = sd.like<std::uint8_t>(0);
    const double contrast = s.foreground - s.background;
    for (std::size_t n = 0; n < sd.size(); ++n) {
        truth.mask[n] = sd[n] <= 0.0 ? 1 : 0;
        truth.vessel_mask[n] = sd_vessel[n] <= 0.0 ? 1 : 0;
        double prof = 0.0;
        if (s.profile == Profile::hard)
            prof = sd[n] <= 0.0 ? 1.0 : 0.0;
        else if (std::isfinite(sd[n]))
            prof = 0.5 * std::erfc(sd[n] / (std::numbers::sqrt2 * s.edge_sigma));
        vol[n] = s.background + contrast * prof;
    }
    vol = apply_ramp(vol, s.ramp, s.background);
    if (s.noise > 0.0) {
        std::mt19937_64 rng(s.seed);
        std::normal_distribution<double> nd(0.0, s.noise);
        for (std::size_t n = 0; n < vol.size(); ++n)
            vol[n] += nd(rng);
    }

    truth.labels = sd.like<std::uint8_t>(static_cast<std::uint8_t>(VoxelLabel::background));
    const double axis_tol = 0.75 * vox;
    for (int k = 0; k < sd.nz(); ++k)
        for (int j = 0; j < sd.ny(); ++j)
            for (int i = 0; i < sd.nx(); ++i) {
                const std::uint8_t m = truth.mask(i, j, k);
                bool edge = false;
                const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
                for (const auto& o : nb) {
                    const int a = i + o[0], b = j + o[1], c = k + o[2];
                    if (truth.mask.contains(a, b, c) && truth.mask(a, b, c) != m) {
                        edge = true;
                        break;
                    }
                }
                VoxelLabel l = VoxelLabel::background;
                if (edge)
                    l = VoxelLabel::edge;
                else if (m && truth.vessel_mask(i, j, k) && axis_dist(i, j, k) <= axis_tol)
                    l = VoxelLabel::axis;
                else if (m)
                    l = VoxelLabel::interior;
                truth.labels(i, j, k) = static_cast<std::uint8_t>(l);
            }
    return {std::move(vol), std::move(truth)};
}

/// 2|A and B| / (|A| + |B|); two empty masks score 1.
template <class G>
double dice(const G& a, const G& b)
{
    if (a.size() != b.size())
        throw DataError("dice: geometry mismatch");
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const bool x = a[n] != 0, y = b[n] != 0;
        inter += (x && y) ? 1 : 0;
        na += x ? 1 : 0;
        nb += y ? 1 : 0;
    }
    return na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

/// RMS over `points` of the distance to the nearest truth polyline (mm).
inline double centreline_rmse(const std::vector<Vec3>& points, const std::vector<std::vector<Vec3>>& truth)
{
    if (points.empty())
        throw DataError("centreline_rmse: no points");
    double acc = 0.0;
    for (const Vec3& p : points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& line : truth) {
            if (line.size() == 1)
                best = std::min(best, distance(p, line[0]));
            for (std::size_t q = 0; q + 1 < line.size(); ++q)
                best = std::min(best, detail::distance_to_segment(p, line[q], line[q + 1]));
        }
        acc += best * best;
    }
    return std::sqrt(acc / static_cast<double>(points.size()));
}

/// True when every endpoint lies within `tol_mm` of some mask voxel centre.
inline bool endpoint_hit(const BinaryMask& mask, const std::vector<Vec3>& endpoints, double tol_mm)
{
    if (endpoints.empty())
        return true;
    for (const Vec3& e : endpoints) {
        const Vec3 v = mask.to_voxel(e);
        bool hit = false;
        const int ci = static_cast<int>(std::lround(v.x)), cj = static_cast<int>(std::lround(v.y)),
                  ck = static_cast<int>(std::lround(v.z));
        const int ri = static_cast<int>(std::ceil(tol_mm / mask.spacing().x)) + 1;
        const int rj = static_cast<int>(std::ceil(tol_mm / mask.spacing().y)) + 1;
        const int rk = static_cast<int>(std::ceil(tol_mm / mask.spacing().z)) + 1;
        for (int k = ck - rk; k <= ck + rk && !hit; ++k)
            for (int j = cj - rj; j <= cj + rj && !hit; ++j)
                for (int i = ci - ri; i <= ci + ri && !hit; ++i)
                    if (mask.contains(i, j, k) && mask(i, j, k) && distance(mask.world(i, j, k), e) <= tol_mm)
                        hit = true;
        if (!hit)
            return false;
    }
    return true;
}

} // namespace tubeseg
