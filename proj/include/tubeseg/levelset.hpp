#pragma once

// 2D level-set machinery: phi is a signed distance in pixel units, negative
// inside. Intensities enter the region forces divided by the image's dynamic
// range, so lambda is expressed in units of (dynamic range)^2.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/edt.hpp"
#include "tubeseg/volume.hpp"

namespace tubeseg {

enum class Energy { geodesic, chan_vese_global, chan_vese_localized };

inline const char* to_string(Energy e)
{
    switch (e) {
    case Energy::geodesic: return "geodesic";
    case Energy::chan_vese_global: return "chan_vese_global";
    case Energy::chan_vese_localized: return "chan_vese_localized";
    }
    return "?";
}

inline Energy energy_from_string(const std::string& s)
{
    for (Energy e : {Energy::geodesic, Energy::chan_vese_global, Energy::chan_vese_localized})
        if (s == to_string(e))
            return e;
    throw UsageError("unknown energy '" + s + "'");
}

struct EvolutionParams {
    Energy energy = Energy::chan_vese_localized;
    double lambda = 0.2;
    /// Ball kernel radius (mm) for the localized energy.
    double ball_radius = 4.0;
    double dt = 0.25;
    /// Heaviside width (pixels).
    double eps = 1.5;
    int max_iters = 300;
    /// Converged when the sign changes over the last `window` iterations stay
    /// at or below tol * band cells.
    double tol = 0.001;
    int window = 10;
    double band = 6.0;
    int reinit_every = 10;
    /// 0 means the image's max - min.
    double intensity_scale = 0.0;
    // Geodesic energy.
    double g_sigma = 1.0;
    double g_contrast = 1.0;
    double balloon = 0.0;

    void validate() const
    {
        if (!(dt > 0.0))
            throw UsageError("levelset: dt must be > 0");
        if (!(eps > 0.0))
            throw UsageError("levelset: eps must be > 0");
        if (energy == Energy::chan_vese_localized && !(ball_radius > 0.0))
            throw UsageError("levelset: ball radius must be > 0");
        if (!(lambda >= 0.0))
            throw UsageError("levelset: lambda must be >= 0");
        if (max_iters < 1 || window < 1 || reinit_every < 1)
            throw UsageError("levelset: iteration counts must be >= 1");
        if (!(band > 1.0))
            throw UsageError("levelset: band half-width must exceed 1 pixel");
        if (!(tol >= 0.0) || !(intensity_scale >= 0.0))
            throw UsageError("levelset: tol and intensity_scale must be >= 0");
        if (energy == Energy::geodesic && (!(g_sigma > 0.0) || !(g_contrast > 0.0)))
            throw UsageError("levelset: g_sigma and g_contrast must be > 0");
    }
};

inline double heaviside(double t, double eps)
{
    return 0.5 * (1.0 + (2.0 / std::numbers::pi) * std::atan(t / eps));
}

inline double dirac(double t, double eps)
{
    return eps / (std::numbers::pi * (eps * eps + t * t));
}

/// Signed Euclidean distance (pixels) with the zero level halfway between
/// boundary pixels; clamped to +-band.
inline Image2D init_sdf_from_mask(const Mask2D& mask, double band = std::numeric_limits<double>::infinity())
{
    Mask2D unit(mask.nu(), mask.nv(), 1.0, 1.0);
    Mask2D inv = unit;
    bool any_in = false, any_out = false;
    for (std::size_t n = 0; n < mask.size(); ++n) {
        unit[n] = mask[n] ? 1 : 0;
        inv[n] = mask[n] ? 0 : 1;
        any_in |= mask[n] != 0;
        any_out |= mask[n] == 0;
    }
    if (!any_in)
        throw DataError("init_sdf: empty mask");
    const Image2D d_in = squared_distance_to(inv);  // for inside pixels
    const Image2D d_out = squared_distance_to(unit); // for outside pixels
    Image2D phi = mask.like<double>(0.0);
    for (std::size_t n = 0; n < phi.size(); ++n) {
        double v;
        if (mask[n])
            v = any_out ? -(std::sqrt(d_in[n]) - 0.5) : -band;
        else
            v = std::sqrt(d_out[n]) - 0.5;
        phi[n] = std::clamp(v, -band, band);
    }
    return phi;
}

/// div(grad phi / |grad phi|) by central differences; 0 where |grad phi| < eps_g.
inline double curvature(const Image2D& phi, int i, int j, double eps_g = 1e-8)
{
    auto f = [&](int di, int dj) { return phi.clamped(i + di, j + dj); };
    const double px = 0.5 * (f(1, 0) - f(-1, 0));
    const double py = 0.5 * (f(0, 1) - f(0, -1));
    const double pxx = f(1, 0) - 2.0 * f(0, 0) + f(-1, 0);
    const double pyy = f(0, 1) - 2.0 * f(0, 0) + f(0, -1);
    const double pxy = 0.25 * (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1));
    const double g2 = px * px + py * py;
    if (g2 < eps_g * eps_g)
        return 0.0;
    return (pyy * px * px + pxx * py * py - 2.0 * px * py * pxy) / std::pow(g2, 1.5);
}

inline double central_gradient_norm(const Image2D& phi, int i, int j)
{
    const double px = 0.5 * (phi.clamped(i + 1, j) - phi.clamped(i - 1, j));
    const double py = 0.5 * (phi.clamped(i, j + 1) - phi.clamped(i, j - 1));
    return std::hypot(px, py);
}

/// (c1, c2): Heaviside-weighted means inside (phi < 0) and outside.
/// eps = 0 takes the sharp split {phi < 0} / {phi >= 0}.
inline std::pair<double, double> region_means(const Image2D& img, const Image2D& phi, double eps)
{
    if (!img.same_shape(phi))
        throw DataError("region_means: shape mismatch");
    double si = 0.0, wi = 0.0, so = 0.0, wo = 0.0;
    for (std::size_t n = 0; n < img.size(); ++n) {
        const double h = eps > 0.0 ? heaviside(phi[n], eps) : (phi[n] < 0.0 ? 0.0 : 1.0);
        si += img[n] * (1.0 - h);
        wi += 1.0 - h;
        so += img[n] * h;
        wo += h;
    }
    if (wi < 1e-6 || wo < 1e-6)
        throw DataError("region_means: empty region");
    return {si / wi, so / wo};
}

namespace detail {

inline double dynamic_range(const Image2D& img, const EvolutionParams& p)
{
    if (p.intensity_scale > 0.0)
        return p.intensity_scale;
    const auto [mn, mx] = std::minmax_element(img.values().begin(), img.values().end());
    return *mx > *mn ? *mx - *mn : 1.0;
}

inline std::vector<std::size_t> band_cells(const Image2D& phi, double w)
{
    std::vector<std::size_t> b;
    for (std::size_t n = 0; n < phi.size(); ++n)
        if (std::abs(phi[n]) < w)
            b.push_back(n);
    return b;
}

/// Applies update u at cell n, blocking outward motion outside the gate.
inline void apply_update(Image2D& out, const Image2D& phi, std::size_t n, double u, const Mask2D* gate, double w)
{
    if (gate && !(*gate)[n] && u < 0.0)
        u = 0.0;
    out[n] = std::clamp(phi[n] + u, -w, w);
}

/// Applies forces f (one per band cell) scaled so the fastest cell moves dt pixels.
/// A positive rescaling keeps the step a descent direction.
inline Image2D apply_forces(const Image2D& phi, const std::vector<std::size_t>& cells, const std::vector<double>& f,
                            const EvolutionParams& p, const Mask2D* gate)
{
    double fmax = 0.0;
    for (double v : f)
        fmax = std::max(fmax, std::abs(v));
    Image2D out = phi;
    if (!(fmax > 0.0))
        return out;
    const double d0 = dirac(0.0, p.eps);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::size_t n = cells[c];
        apply_update(out, phi, n, p.dt * dirac(phi[n], p.eps) / d0 * f[c] / fmax, gate, p.band);
    }
    return out;
}

} // namespace detail

/// One explicit Chan-Vese step on the band:
/// phi += dt * delta(phi) / delta(0) * F / max_band|F|, F = lambda * kappa + ((I - c1)^2 - (I - c2)^2) / range^2.
/// Positive force raises phi, i.e. shrinks the inside.
inline Image2D cv_global_step(const Image2D& phi, const Image2D& img, const EvolutionParams& p,
                              const Mask2D* gate = nullptr)
{
    // Sharp region split for the means: the arctan tails would otherwise
    // pull a small region's mean towards the background.
    const auto [c1, c2] = region_means(img, phi, 0.0);
    const double s2 = std::pow(detail::dynamic_range(img, p), 2);
    const int nu = phi.nu();
    const auto cells = detail::band_cells(phi, p.band);
    std::vector<double> f(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::size_t n = cells[c];
        const int i = static_cast<int>(n % nu), j = static_cast<int>(n / nu);
        const double I = img[n];
        const double data = ((I - c1) * (I - c1) - (I - c2) * (I - c2)) / s2;
        f[c] = p.lambda * curvature(phi, i, j) + data;
    }
    return detail::apply_forces(phi, cells, f, p, gate);
}

/// Pixel offsets of a ball of radius r (mm).
inline std::vector<std::array<int, 2>> ball_offsets(double r, double su, double sv)
{
    std::vector<std::array<int, 2>> off;
    const int ru = static_cast<int>(std::floor(r / su)), rv = static_cast<int>(std::floor(r / sv));
    for (int dj = -rv; dj <= rv; ++dj)
        for (int di = -ru; di <= ru; ++di)
            if ((di * su) * (di * su) + (dj * sv) * (dj * sv) <= r * r + 1e-9)
                off.push_back({di, dj});
    return off;
}

/// Ball-local means (c1, c2) around pixel (i, j) with weights 1 - h and h; NaN when a side is empty.
inline std::pair<double, double> local_means(const Image2D& img, const Image2D& h,
                                             const std::vector<std::array<int, 2>>& off, int i, int j)
{
    double si = 0.0, wi = 0.0, so = 0.0, wo = 0.0;
    for (const auto& o : off) {
        const int a = i + o[0], b = j + o[1];
        if (!img.contains(a, b))
            continue;
        const std::size_t q = img.index(a, b);
        si += img[q] * (1.0 - h[q]);
        wi += 1.0 - h[q];
        so += img[q] * h[q];
        wo += h[q];
    }
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    return {wi < 1e-6 ? nan : si / wi, wo < 1e-6 ? nan : so / wo};
}

/// Chan-Vese step with means taken over a ball around each band cell.
inline Image2D localized_step(const Image2D& phi, const Image2D& img, const EvolutionParams& p,
                              const Mask2D* gate = nullptr)
{
    if (!(p.ball_radius > 0.0))
        throw UsageError("localized_step: ball radius must be > 0");
    if (!img.same_shape(phi))
        throw DataError("localized_step: shape mismatch");
    const double s2 = std::pow(detail::dynamic_range(img, p), 2);
    Image2D h = phi;
    for (std::size_t n = 0; n < h.size(); ++n)
        h[n] = phi[n] < 0.0 ? 0.0 : 1.0;
    const auto off = ball_offsets(p.ball_radius, img.su(), img.sv());
    const int nu = phi.nu();
    const auto cells = detail::band_cells(phi, p.band);
    std::vector<double> f(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::size_t n = cells[c];
        const int i = static_cast<int>(n % nu), j = static_cast<int>(n / nu);
        const auto [c1, c2] = local_means(img, h, off, i, j);
        double data = 0.0;
        if (!std::isnan(c1) && !std::isnan(c2)) {
            const double I = img[n];
            data = ((I - c1) * (I - c1) - (I - c2) * (I - c2)) / s2;
        }
        f[c] = p.lambda * curvature(phi, i, j) + data;
    }
    return detail::apply_forces(phi, cells, f, p, gate);
}

/// Discretized Chan-Vese energy (normalized intensities) with the
/// Heaviside-weighted region means of phi (the minimizing c for this phi).
inline double cv_energy(const Image2D& phi, const Image2D& img, const EvolutionParams& p)
{
    const auto [c1, c2] = region_means(img, phi, p.eps);
    const double s2 = std::pow(detail::dynamic_range(img, p), 2);
    double e = 0.0;
    for (int j = 0; j < phi.nv(); ++j)
        for (int i = 0; i < phi.nu(); ++i) {
            const std::size_t n = phi.index(i, j);
            const double h = heaviside(phi[n], p.eps);
            const double I = img[n];
            e += ((I - c1) * (I - c1) * (1.0 - h) + (I - c2) * (I - c2) * h) / s2;
            e += p.lambda * dirac(phi[n], p.eps) * central_gradient_norm(phi, i, j);
        }
    return e;
}

/// g = 1 / (1 + |grad(G_sigma * I)|^2 / contrast^2), gradient in units per mm.
inline Image2D conformal_factor(const Image2D& img, double sigma, double contrast = 1.0)
{
    if (!(sigma > 0.0) || !(contrast > 0.0))
        throw UsageError("conformal_factor: sigma and contrast must be > 0");
    const Image2D s = gaussian_smooth(img, sigma);
    Image2D g = img.like<double>(1.0);
    for (int j = 0; j < img.nv(); ++j)
        for (int i = 0; i < img.nu(); ++i) {
            const double gx = (s.clamped(i + 1, j) - s.clamped(i - 1, j)) / (2.0 * img.su());
            const double gy = (s.clamped(i, j + 1) - s.clamped(i, j - 1)) / (2.0 * img.sv());
            g(i, j) = 1.0 / (1.0 + (gx * gx + gy * gy) / (contrast * contrast));
        }
    return g;
}

/// Explicit geodesic active contour step (pixel units):
/// phi_t = g kappa |grad phi| + grad g . grad phi - v g |grad phi|, v > 0 inflates.
/// Propagation and advection are upwinded, curvature uses central differences.
/// Requires dt * max(|v g| + |grad g|) <= 0.45 and dt * max g <= 0.5.
inline Image2D geodesic_step(const Image2D& phi, const Image2D& g, double v, double dt,
                             double band = std::numeric_limits<double>::infinity())
{
    if (!phi.same_shape(g))
        throw DataError("geodesic_step: shape mismatch");
    if (!(dt > 0.0))
        throw UsageError("geodesic_step: dt must be > 0");
    const int nu = phi.nu(), nv = phi.nv();
    Image2D gx = g, gy = g;
    double adv = 0.0, gmax = 0.0;
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            gx(i, j) = 0.5 * (g.clamped(i + 1, j) - g.clamped(i - 1, j));
            gy(i, j) = 0.5 * (g.clamped(i, j + 1) - g.clamped(i, j - 1));
            adv = std::max(adv, std::abs(v * g(i, j)) + std::hypot(gx(i, j), gy(i, j)));
            gmax = std::max(gmax, g(i, j));
        }
    if (dt * adv > 0.45 || dt * gmax > 0.5)
        throw NumericError("geodesic_step: CFL condition violated (dt * speed = " + std::to_string(dt * adv) + ")");
    Image2D out = phi;
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            const double c = phi(i, j);
            if (!(std::abs(c) < band))
                continue;
            const double dmx = c - phi.clamped(i - 1, j), dpx = phi.clamped(i + 1, j) - c;
            const double dmy = c - phi.clamped(i, j - 1), dpy = phi.clamped(i, j + 1) - c;
            const double grad_plus = std::sqrt(std::pow(std::max(dmx, 0.0), 2) + std::pow(std::min(dpx, 0.0), 2) +
                                               std::pow(std::max(dmy, 0.0), 2) + std::pow(std::min(dpy, 0.0), 2));
            const double grad_minus = std::sqrt(std::pow(std::min(dmx, 0.0), 2) + std::pow(std::max(dpx, 0.0), 2) +
                                                std::pow(std::min(dmy, 0.0), 2) + std::pow(std::max(dpy, 0.0), 2));
            const double speed = v * g(i, j); // outward normal speed
            const double prop = std::max(speed, 0.0) * grad_plus + std::min(speed, 0.0) * grad_minus;
            // phi_t + u . grad phi = 0 with u = -grad g
            const double ux = -gx(i, j), uy = -gy(i, j);
            const double advect = ux * (ux > 0.0 ? dmx : dpx) + uy * (uy > 0.0 ? dmy : dpy);
            const double curv = g(i, j) * curvature(phi, i, j) * central_gradient_norm(phi, i, j);
            const double next = c + dt * (curv - prop - advect);
            out(i, j) = std::isfinite(band) ? std::clamp(next, -band, band) : next;
        }
    return out;
}

namespace detail {

struct Segment2 {
    double ax, ay, bx, by;
};

/// Marching-squares zero contour of phi (inside = phi < 0) in pixel coordinates.
inline std::vector<Segment2> zero_contour(const Image2D& phi)
{
    std::vector<Segment2> segs;
    auto cross = [](double a, double b) { return a / (a - b); };
    for (int j = 0; j + 1 < phi.nv(); ++j)
        for (int i = 0; i + 1 < phi.nu(); ++i) {
            // Corners counter-clockwise: (i,j) (i+1,j) (i+1,j+1) (i,j+1).
            const std::array<double, 4> v{phi(i, j), phi(i + 1, j), phi(i + 1, j + 1), phi(i, j + 1)};
            const std::array<std::array<double, 2>, 4> c{{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}};
            std::array<std::array<double, 2>, 4> pts{};
            int np = 0;
            for (int e = 0; e < 4; ++e) {
                const int f = (e + 1) % 4;
                if ((v[e] < 0.0) != (v[f] < 0.0)) {
                    const double t = cross(v[e], v[f]);
                    pts[np++] = {i + c[e][0] + t * (c[f][0] - c[e][0]), j + c[e][1] + t * (c[f][1] - c[e][1])};
                }
            }
            if (np == 2) {
                segs.push_back({pts[0][0], pts[0][1], pts[1][0], pts[1][1]});
            } else if (np == 4) {
                // Saddle: the cell centre decides which corners connect.
                const bool centre_in = (v[0] + v[1] + v[2] + v[3]) < 0.0;
                const bool first_in = v[0] < 0.0;
                if (centre_in == first_in) {
                    segs.push_back({pts[0][0], pts[0][1], pts[1][0], pts[1][1]});
                    segs.push_back({pts[2][0], pts[2][1], pts[3][0], pts[3][1]});
                } else {
                    segs.push_back({pts[3][0], pts[3][1], pts[0][0], pts[0][1]});
                    segs.push_back({pts[1][0], pts[1][1], pts[2][0], pts[2][1]});
                }
            }
        }
    return segs;
}

inline double point_segment_distance(double px, double py, const Segment2& s)
{
    const double dx = s.bx - s.ax, dy = s.by - s.ay;
    const double l2 = dx * dx + dy * dy;
    double t = l2 > 0.0 ? ((px - s.ax) * dx + (py - s.ay) * dy) / l2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (s.ax + t * dx), py - (s.ay + t * dy));
}

} // namespace detail

/// Redistancing: phi becomes the signed Euclidean distance (pixels) to the
/// piecewise-linear zero contour of its input, clamped to +-band. Pixels
/// beyond the band only need to know they are far and get +-band.
inline Image2D reinitialize(const Image2D& phi, double band = std::numeric_limits<double>::infinity())
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto segs = detail::zero_contour(phi);
    bool has_zero = !segs.empty();
    for (std::size_t n = 0; n < phi.size() && !has_zero; ++n)
        has_zero = phi[n] == 0.0;
    if (!has_zero)
        throw DataError("reinitialize: empty zero level set");
    Image2D d = phi.like<double>(inf);
    for (std::size_t n = 0; n < phi.size(); ++n)
        if (phi[n] == 0.0)
            d[n] = 0.0;
    const int reach = std::isfinite(band) ? static_cast<int>(std::ceil(band)) + 1 : std::max(phi.nu(), phi.nv());
    for (const auto& s : segs) {
        const int i0 = std::max(0, static_cast<int>(std::floor(std::min(s.ax, s.bx))) - reach);
        const int i1 = std::min(phi.nu() - 1, static_cast<int>(std::ceil(std::max(s.ax, s.bx))) + reach);
        const int j0 = std::max(0, static_cast<int>(std::floor(std::min(s.ay, s.by))) - reach);
        const int j1 = std::min(phi.nv() - 1, static_cast<int>(std::ceil(std::max(s.ay, s.by))) + reach);
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                double& cur = d(i, j);
                cur = std::min(cur, detail::point_segment_distance(i, j, s));
            }
    }
    // Pixels next to the front keep their own crossing: phi / |grad phi|. The
    // polygonal contour lies on chords and would shrink convex shapes each pass.
    const int nu = phi.nu(), nv = phi.nv();
    auto at = [&](int i, int j) { return phi(std::clamp(i, 0, nu - 1), std::clamp(j, 0, nv - 1)); };
    Image2D out = phi;
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            const double v0 = phi(i, j);
            double v = d(i, j);
            const bool near = (at(i - 1, j) < 0.0) != (v0 < 0.0) || (at(i + 1, j) < 0.0) != (v0 < 0.0) ||
                              (at(i, j - 1) < 0.0) != (v0 < 0.0) || (at(i, j + 1) < 0.0) != (v0 < 0.0);
            if (near) {
                const double gx = 0.5 * (at(i + 1, j) - at(i - 1, j)), gy = 0.5 * (at(i, j + 1) - at(i, j - 1));
                const double gn = std::hypot(gx, gy);
                if (gn > 0.2 && gn < 5.0)
                    v = std::min(std::abs(v0) / gn, 1.5);
            }
            v = std::min(v, band);
            out(i, j) = v0 < 0.0 ? -v : v;
        }
    return out;
}

inline Mask2D inside_mask(const Image2D& phi)
{
    Mask2D m = phi.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < m.size(); ++n)
        m[n] = phi[n] < 0.0 ? 1 : 0;
    return m;
}

struct EvolveResult {
    Image2D phi;
    int iterations = 0;
    bool converged = false;
};

/// Iterates the chosen energy from phi0 until sign changes settle or max_iters.
inline EvolveResult evolve(const Image2D& phi0, const Image2D& img, const EvolutionParams& p,
                           const Mask2D* gate = nullptr)
{
    p.validate();
    if (!img.same_shape(phi0))
        throw DataError("evolve: shape mismatch");
    EvolveResult r{reinitialize(phi0, p.band), 0, false};
    Image2D g;
    if (p.energy == Energy::geodesic)
        g = conformal_factor(img, p.g_sigma, p.g_contrast);
    std::deque<std::size_t> changes;
    std::size_t window_sum = 0;
    for (int it = 1; it <= p.max_iters; ++it) {
        Image2D next;
        switch (p.energy) {
        case Energy::chan_vese_global: next = cv_global_step(r.phi, img, p, gate); break;
        case Energy::chan_vese_localized: next = localized_step(r.phi, img, p, gate); break;
        case Energy::geodesic: next = geodesic_step(r.phi, g, p.balloon, p.dt, p.band); break;
        }
        std::size_t flips = 0, band = 0;
        for (std::size_t n = 0; n < next.size(); ++n) {
            band += std::abs(r.phi[n]) < p.band ? 1 : 0;
            flips += (r.phi[n] < 0.0) != (next[n] < 0.0) ? 1 : 0;
        }
        r.phi = std::move(next);
        r.iterations = it;
        if (std::none_of(r.phi.values().begin(), r.phi.values().end(), [](double v) { return v < 0.0; }))
            break; // contour vanished
        if (it % p.reinit_every == 0)
            r.phi = reinitialize(r.phi, p.band);
        changes.push_back(flips);
        window_sum += flips;
        if (changes.size() > static_cast<std::size_t>(p.window)) {
            window_sum -= changes.front();
            changes.pop_front();
        }
        if (changes.size() == static_cast<std::size_t>(p.window) &&
            static_cast<double>(window_sum) <= p.tol * static_cast<double>(band)) {
            r.converged = true;
            break;
        }
    }
    return r;
}

} // namespace tubeseg
