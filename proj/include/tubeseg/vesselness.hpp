#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/volume.hpp"

namespace tubeseg {

/// Symmetric 3x3 matrix of second derivatives (HU/mm^2, times s^gamma).
struct HessianSample {
    double xx = 0.0, yy = 0.0, zz = 0.0;
    double xy = 0.0, xz = 0.0, yz = 0.0;

    double trace() const { return xx + yy + zz; }
    double det() const
    {
        return xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz);
    }
    double frobenius() const
    {
        return std::sqrt(xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz));
    }
};

/// Eigenvalues ordered |l1| <= |l2| <= |l3|; e1 is the unit eigenvector of l1.
struct EigenTriple {
    std::array<double, 3> lambda{};
    Vec3 e1{1.0, 0.0, 0.0};
};

struct FrangiParams {
    double alpha = 0.5;
    double beta = 0.35;
    /// Structureness constant; unset means half the maximum Frobenius norm per scale.
    std::optional<double> c;
    std::vector<double> scales{1.0, 1.5, 2.0, 2.5};
    double gamma = 1.0;

    void validate() const
    {
        if (!(alpha > 0.0) || !(beta > 0.0))
            throw UsageError("frangi: alpha and beta must be > 0");
        if (c && !(*c > 0.0))
            throw UsageError("frangi: c must be > 0");
        if (scales.empty())
            throw UsageError("frangi: at least one scale is required");
        for (std::size_t n = 0; n < scales.size(); ++n) {
            if (!(scales[n] > 0.0))
                throw UsageError("frangi: scales must be > 0");
            if (n > 0 && !(scales[n] > scales[n - 1]))
                throw UsageError("frangi: scales must be strictly increasing");
        }
    }
};

struct VesselnessField {
    Volume3D score;
    Volume3D best_scale;
};

/// Cyclic Jacobi diagonalization, then |.|-ordering (ties: signed ascending).
/// e1's sign makes its largest-magnitude component positive.
inline EigenTriple eigen_symmetric3(const HessianSample& h)
{
    double a[3][3] = {{h.xx, h.xy, h.xz}, {h.xy, h.yy, h.yz}, {h.xz, h.yz, h.zz}};
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const double scale = h.frobenius();
    for (int sweep = 0; sweep < 64 && scale > 0.0; ++sweep) {
        const double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off <= 1e-18 * scale)
            break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0)
                    continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int r = 0; r < 3; ++r) {
                    const double arp = a[r][p], arq = a[r][q];
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for (int r = 0; r < 3; ++r) {
                    const double apr = a[p][r], aqr = a[q][r];
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
                for (int r = 0; r < 3; ++r) {
                    const double vrp = v[r][p], vrq = v[r][q];
                    v[r][p] = c * vrp - s * vrq;
                    v[r][q] = s * vrp + c * vrq;
                }
            }
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        const double ax = std::abs(a[x][x]), ay = std::abs(a[y][y]);
        if (ax != ay)
            return ax < ay;
        return a[x][x] < a[y][y];
    });
    EigenTriple t;
    for (int n = 0; n < 3; ++n)
        t.lambda[n] = a[order[n]][order[n]];
    Vec3 e{v[0][order[0]], v[1][order[0]], v[2][order[0]]};
    e = normalized(e);
    int big = 0;
    for (int n = 1; n < 3; ++n)
        if (std::abs(e[n]) > std::abs(e[big]))
            big = n;
    if (e[big] < 0.0)
        e = -e;
    t.e1 = e;
    return t;
}

/// Frangi tubularity for bright tubes on a dark background. `c` is the
/// structureness constant in the same units as the eigenvalues.
inline double frangi_measure(const EigenTriple& t, double alpha, double beta, double c)
{
    const double l1 = t.lambda[0], l2 = t.lambda[1], l3 = t.lambda[2];
    if (l2 > 0.0 || l3 > 0.0)
        return 0.0;
    if (l3 == 0.0 || l2 == 0.0 || !(c > 0.0))
        return 0.0;
    const double ra = std::abs(l2) / std::abs(l3);
    const double rb = std::abs(l1) / std::sqrt(l2 * l3);
    const double s2 = l1 * l1 + l2 * l2 + l3 * l3;
    const double v = (1.0 - std::exp(-ra * ra / (2.0 * alpha * alpha))) * std::exp(-rb * rb / (2.0 * beta * beta)) *
                     (1.0 - std::exp(-s2 / (2.0 * c * c)));
    return std::clamp(v, 0.0, 1.0);
}

inline double frangi_measure(const EigenTriple& t, const FrangiParams& p, double c)
{
    return frangi_measure(t, p.alpha, p.beta, p.c.value_or(c));
}

namespace detail {

/// Central-difference Hessian of an already smoothed volume, scaled by `sgam`.
inline HessianSample hessian_from_smoothed(const Volume3D& L, int i, int j, int k, double sgam)
{
    const Vec3 sp = L.spacing();
    const double c = L(i, j, k);
    auto at = [&](int di, int dj, int dk) { return L.clamped(i + di, j + dj, k + dk); };
    HessianSample h;
    h.xx = (at(1, 0, 0) - 2.0 * c + at(-1, 0, 0)) / (sp.x * sp.x);
    h.yy = (at(0, 1, 0) - 2.0 * c + at(0, -1, 0)) / (sp.y * sp.y);
    h.zz = (at(0, 0, 1) - 2.0 * c + at(0, 0, -1)) / (sp.z * sp.z);
    h.xy = (at(1, 1, 0) - at(1, -1, 0) - at(-1, 1, 0) + at(-1, -1, 0)) / (4.0 * sp.x * sp.y);
    h.xz = (at(1, 0, 1) - at(1, 0, -1) - at(-1, 0, 1) + at(-1, 0, -1)) / (4.0 * sp.x * sp.z);
    h.yz = (at(0, 1, 1) - at(0, 1, -1) - at(0, -1, 1) + at(0, -1, -1)) / (4.0 * sp.y * sp.z);
    h.xx *= sgam;
    h.yy *= sgam;
    h.zz *= sgam;
    h.xy *= sgam;
    h.xz *= sgam;
    h.yz *= sgam;
    return h;
}

inline Vec3 gradient_from_smoothed(const Volume3D& L, int i, int j, int k)
{
    const Vec3 sp = L.spacing();
    return {(L.clamped(i + 1, j, k) - L.clamped(i - 1, j, k)) / (2.0 * sp.x),
            (L.clamped(i, j + 1, k) - L.clamped(i, j - 1, k)) / (2.0 * sp.y),
            (L.clamped(i, j, k + 1) - L.clamped(i, j, k - 1)) / (2.0 * sp.z)};
}

inline void check_scale(double s)
{
    if (!(s > 0.0))
        throw UsageError("scale must be > 0");
}

} // namespace detail

/// Hessian of the sigma = s Gaussian-smoothed volume, each entry times s^gamma.
inline Grid3<HessianSample> hessian_at_scale(const Volume3D& vol, double s, double gamma = 1.0)
{
    detail::check_scale(s);
    const Volume3D L = gaussian_smooth(vol, s);
    const double sgam = std::pow(s, gamma);
    Grid3<HessianSample> out = vol.like<HessianSample>();
    for (int k = 0; k < vol.nz(); ++k)
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i)
                out(i, j, k) = detail::hessian_from_smoothed(L, i, j, k, sgam);
    return out;
}

/// Hessian at one voxel, smoothing only a local window.
inline HessianSample hessian_at_voxel(const Volume3D& vol, Index3 p, double s, double gamma = 1.0)
{
    detail::check_scale(s);
    const Vec3 sp = vol.spacing();
    const Index3 margin{static_cast<int>(std::ceil(4.0 * s / sp.x)) + 2, static_cast<int>(std::ceil(4.0 * s / sp.y)) + 2,
                        static_cast<int>(std::ceil(4.0 * s / sp.z)) + 2};
    const Box3 box = clip_box(vol, Box3{{p.i - margin.i, p.j - margin.j, p.k - margin.k},
                                        {p.i + margin.i + 1, p.j + margin.j + 1, p.k + margin.k + 1}});
    // Windows clipped by the volume border would see a different replicate
    // padding than the full volume does; keeping the window to the border
    // reproduces exactly what hessian_at_scale computes there.
    const Volume3D L = gaussian_smooth(crop(vol, box), s);
    return detail::hessian_from_smoothed(L, p.i - box.lo.i, p.j - box.lo.j, p.k - box.lo.k, std::pow(s, gamma));
}

/// Vesselness of one scale into `score`/`best_scale` (running max).
namespace detail {

inline void accumulate_scale(const Volume3D& vol, const FrangiParams& p, double s, bool first, VesselnessField& out)
{
    const Volume3D L = gaussian_smooth(vol, s);
    const double sgam = std::pow(s, p.gamma);
    double c = 0.0;
    if (p.c) {
        c = *p.c;
    } else {
        double max_norm = 0.0;
        for (int k = 0; k < vol.nz(); ++k)
            for (int j = 0; j < vol.ny(); ++j)
                for (int i = 0; i < vol.nx(); ++i)
                    max_norm = std::max(max_norm, hessian_from_smoothed(L, i, j, k, sgam).frobenius());
        c = 0.5 * max_norm;
    }
    for (int k = 0; k < vol.nz(); ++k)
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i) {
                const HessianSample h = hessian_from_smoothed(L, i, j, k, sgam);
                // Positive diagonal entries bound an eigenvalue > 0 only loosely, so no shortcut here.
                const double v = frangi_measure(eigen_symmetric3(h), p.alpha, p.beta, c);
                const std::size_t n = out.score.index(i, j, k);
                if (first || v > out.score[n]) {
                    out.score[n] = v;
                    out.best_scale[n] = s;
                }
            }
}

} // namespace detail

/// Per-voxel maximum of the Frangi response over the scale set; best_scale is
/// the smallest arg-max scale.
inline VesselnessField multiscale_vesselness(const Volume3D& vol, const FrangiParams& p)
{
    p.validate();
    VesselnessField out{vol.like<double>(0.0), vol.like<double>(p.scales.front())};
    for (std::size_t n = 0; n < p.scales.size(); ++n)
        detail::accumulate_scale(vol, p, p.scales[n], n == 0, out);
    return out;
}

/// Vesselness restricted to the slab z in [z_lo, z_hi). The slab is computed
/// on a sub-volume padded by 4 times the largest scale; voxels outside it are 0.
inline VesselnessField multiscale_vesselness_slab(const Volume3D& vol, const FrangiParams& p, int z_lo, int z_hi)
{
    p.validate();
    z_lo = std::clamp(z_lo, 0, vol.nz());
    z_hi = std::clamp(z_hi, z_lo, vol.nz());
    VesselnessField out{vol.like<double>(0.0), vol.like<double>(p.scales.front())};
    if (z_lo == z_hi)
        return out;
    const int pad = static_cast<int>(std::ceil(4.0 * p.scales.back() / vol.spacing().z)) + 2;
    const Box3 box = clip_box(vol, Box3{{0, 0, z_lo - pad}, {vol.nx(), vol.ny(), z_hi + pad}});
    const Volume3D sub = crop(vol, box);
    const VesselnessField part = multiscale_vesselness(sub, p);
    const Box3 region{{0, 0, z_lo}, {vol.nx(), vol.ny(), z_hi}};
    paste(out.score, part.score, box.lo, region);
    paste(out.best_scale, part.best_scale, box.lo, region);
    return out;
}

inline constexpr double kEdgeSentinel = 1e12;

/// Intensity-weighted edge indicator E = k f |grad f_s| / (s |l2 + l3|), where
/// l2, l3 are the two largest-magnitude Hessian eigenvalues at scale s.
/// E = 0 where the numerator vanishes; E = kEdgeSentinel where the denominator
/// is below 1e-6 of the largest Hessian norm.
inline Volume3D edge_measure(const Volume3D& vol, double s, double k_gain = 1.0, double gamma = 1.0)
{
    detail::check_scale(s);
    if (!(k_gain > 0.0))
        throw UsageError("edge_measure: gain must be > 0");
    const Volume3D L = gaussian_smooth(vol, s);
    const double sgam = std::pow(s, gamma);
    double max_norm = 0.0;
    for (int k = 0; k < vol.nz(); ++k)
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i)
                max_norm = std::max(max_norm, detail::hessian_from_smoothed(L, i, j, k, sgam).frobenius());
    const double eps_den = 1e-6 * max_norm;
    Volume3D e = vol.like<double>(0.0);
    for (int k = 0; k < vol.nz(); ++k)
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i) {
                const double num = k_gain * vol(i, j, k) * norm(detail::gradient_from_smoothed(L, i, j, k));
                if (num == 0.0)
                    continue;
                const EigenTriple t = eigen_symmetric3(detail::hessian_from_smoothed(L, i, j, k, sgam));
                const double den = std::abs(t.lambda[1] + t.lambda[2]);
                e(i, j, k) = den < eps_den ? kEdgeSentinel : num / (s * den);
            }
    return e;
}

/// Zeroes vesselness where E > threshold.
inline VesselnessField suppress_edges(const VesselnessField& vf, const Volume3D& e, double threshold)
{
    if (!vf.score.same_geometry(e))
        throw DataError("suppress_edges: geometry mismatch");
    VesselnessField out = vf;
    for (std::size_t n = 0; n < e.size(); ++n)
        if (e[n] > threshold)
            out.score[n] = 0.0;
    return out;
}

} // namespace tubeseg
