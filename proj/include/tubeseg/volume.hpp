#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/core/vec.hpp"

namespace tubeseg {

/// Lowest and highest representable CT value in Hounsfield units.
inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 3071.0;

/// Trilinear interpolation at a world point (mm). Points outside the grid
/// are clamped onto the nearest boundary voxel.
template <class T>
double trilinear_sample(const Grid3<T>& vol, const Vec3& p)
{
    const Vec3 c = vol.to_voxel(p);
    auto axis = [](double x, int n, int& i0, double& f) {
        if (n == 1 || x <= 0.0) {
            i0 = 0;
            f = 0.0;
            return;
        }
        if (x >= n - 1) {
            i0 = n - 2;
            f = 1.0;
            return;
        }
        i0 = static_cast<int>(std::floor(x));
        f = x - i0;
    };
    int i0 = 0, j0 = 0, k0 = 0;
    double fx = 0.0, fy = 0.0, fz = 0.0;
    axis(c.x, vol.nx(), i0, fx);
    axis(c.y, vol.ny(), j0, fy);
    axis(c.z, vol.nz(), k0, fz);
    const int i1 = std::min(i0 + 1, vol.nx() - 1);
    const int j1 = std::min(j0 + 1, vol.ny() - 1);
    const int k1 = std::min(k0 + 1, vol.nz() - 1);

    auto v = [&](int i, int j, int k) { return static_cast<double>(vol(i, j, k)); };
    const double c00 = v(i0, j0, k0) * (1.0 - fx) + v(i1, j0, k0) * fx;
    const double c10 = v(i0, j1, k0) * (1.0 - fx) + v(i1, j1, k0) * fx;
    const double c01 = v(i0, j0, k1) * (1.0 - fx) + v(i1, j0, k1) * fx;
    const double c11 = v(i0, j1, k1) * (1.0 - fx) + v(i1, j1, k1) * fx;
    const double c0 = c00 * (1.0 - fy) + c10 * fy;
    const double c1 = c01 * (1.0 - fy) + c11 * fy;
    return c0 * (1.0 - fz) + c1 * fz;
}

/// Bilinear interpolation at continuous pixel coordinates, clamped at the border.
template <class T>
double bilinear_sample(const Grid2<T>& img, double x, double y)
{
    auto axis = [](double t, int n, int& i0, double& f) {
        if (n == 1 || t <= 0.0) {
            i0 = 0;
            f = 0.0;
            return;
        }
        if (t >= n - 1) {
            i0 = n - 2;
            f = 1.0;
            return;
        }
        i0 = static_cast<int>(std::floor(t));
        f = t - i0;
    };
    int i0 = 0, j0 = 0;
    double fx = 0.0, fy = 0.0;
    axis(x, img.nu(), i0, fx);
    axis(y, img.nv(), j0, fy);
    const int i1 = std::min(i0 + 1, img.nu() - 1);
    const int j1 = std::min(j0 + 1, img.nv() - 1);
    const double a = static_cast<double>(img(i0, j0)) * (1.0 - fx) + static_cast<double>(img(i1, j0)) * fx;
    const double b = static_cast<double>(img(i0, j1)) * (1.0 - fx) + static_cast<double>(img(i1, j1)) * fx;
    return a * (1.0 - fy) + b * fy;
}

namespace detail {

/// Sampled Gaussian truncated at +-4 sigma and renormalized to unit sum.
inline std::vector<double> gaussian_kernel(double sigma_vox)
{
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_vox)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        const double w = std::exp(-0.5 * (t * t) / (sigma_vox * sigma_vox));
        k[t + radius] = w;
        sum += w;
    }
    for (double& w : k)
        w /= sum;
    return k;
}

/// Convolves `line` in place with `kernel`, replicating the end samples.
inline void convolve_line(std::vector<double>& line, const std::vector<double>& kernel, std::vector<double>& scratch)
{
    const int n = static_cast<int>(line.size());
    const int r = static_cast<int>(kernel.size() / 2);
    scratch.resize(n + 2 * r);
    for (int t = 0; t < n + 2 * r; ++t)
        scratch[t] = line[std::clamp(t - r, 0, n - 1)];
    for (int t = 0; t < n; ++t) {
        double acc = 0.0;
        const double* s = scratch.data() + t;
        for (std::size_t q = 0; q < kernel.size(); ++q)
            acc += kernel[q] * s[q];
        line[t] = acc;
    }
}

} // namespace detail

/// Separable Gaussian smoothing; sigma in mm, converted per axis to voxels.
template <class T>
Volume3D gaussian_smooth(const Grid3<T>& vol, double sigma_mm)
{
    if (!(sigma_mm >= 0.0))
        throw UsageError("gaussian_smooth: sigma must be >= 0");
    Volume3D out = vol.template like<double>();
    for (std::size_t n = 0; n < vol.size(); ++n)
        out[n] = static_cast<double>(vol[n]);
    if (sigma_mm == 0.0)
        return out;

    std::vector<double> line, scratch;
    const Dims3 d = vol.dims();
    for (int axis = 0; axis < 3; ++axis) {
        const double sv = sigma_mm / vol.spacing()[axis];
        const int len = axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz);
        if (len == 1)
            continue;
        const auto kernel = detail::gaussian_kernel(sv);
        line.resize(len);
        const int na = axis == 0 ? d.ny : d.nx;
        const int nb = axis == 2 ? d.ny : d.nz;
        for (int b = 0; b < nb; ++b) {
            for (int a = 0; a < na; ++a) {
                auto at = [&](int t) -> double& {
                    if (axis == 0)
                        return out(t, a, b);
                    if (axis == 1)
                        return out(a, t, b);
                    return out(a, b, t);
                };
                for (int t = 0; t < len; ++t)
                    line[t] = at(t);
                detail::convolve_line(line, kernel, scratch);
                for (int t = 0; t < len; ++t)
                    at(t) = line[t];
            }
        }
    }
    return out;
}

/// 2D separable Gaussian smoothing; sigma in mm.
template <class T>
Image2D gaussian_smooth(const Grid2<T>& img, double sigma_mm)
{
    if (!(sigma_mm >= 0.0))
        throw UsageError("gaussian_smooth: sigma must be >= 0");
    Image2D out = img.template like<double>();
    for (std::size_t n = 0; n < img.size(); ++n)
        out[n] = static_cast<double>(img[n]);
    if (sigma_mm == 0.0)
        return out;
    std::vector<double> line, scratch;
    if (img.nu() > 1) {
        const auto kernel = detail::gaussian_kernel(sigma_mm / img.su());
        line.resize(img.nu());
        for (int j = 0; j < img.nv(); ++j) {
            for (int i = 0; i < img.nu(); ++i)
                line[i] = out(i, j);
            detail::convolve_line(line, kernel, scratch);
            for (int i = 0; i < img.nu(); ++i)
                out(i, j) = line[i];
        }
    }
    if (img.nv() > 1) {
        const auto kernel = detail::gaussian_kernel(sigma_mm / img.sv());
        line.resize(img.nv());
        for (int i = 0; i < img.nu(); ++i) {
            for (int j = 0; j < img.nv(); ++j)
                line[j] = out(i, j);
            detail::convolve_line(line, kernel, scratch);
            for (int j = 0; j < img.nv(); ++j)
                out(i, j) = line[j];
        }
    }
    return out;
}

/// Copy of plane z = k with an axial embedding frame.
template <class T>
Grid2<T> extract_axial_slice(const Grid3<T>& vol, int k)
{
    if (k < 0 || k >= vol.nz())
        throw UsageError("extract_axial_slice: index " + std::to_string(k) + " outside [0, " +
                         std::to_string(vol.nz()) + ")");
    Grid2<T> s(vol.nx(), vol.ny(), vol.spacing().x, vol.spacing().y);
    for (int j = 0; j < vol.ny(); ++j)
        for (int i = 0; i < vol.nx(); ++i)
            s(i, j) = vol(i, j, k);
    s.frame = Frame{vol.world(0.5 * (vol.nx() - 1), 0.5 * (vol.ny() - 1), k), {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
    return s;
}

template <class T>
void insert_axial_slice(Grid3<T>& vol, int k, const Grid2<T>& slice)
{
    if (k < 0 || k >= vol.nz() || slice.nu() != vol.nx() || slice.nv() != vol.ny())
        throw DataError("insert_axial_slice: geometry mismatch");
    for (int j = 0; j < vol.ny(); ++j)
        for (int i = 0; i < vol.nx(); ++i)
            vol(i, j, k) = slice(i, j);
}

/// Reorders the axes: output axis a is input axis perm[a]. Spacing follows the axes.
template <class T>
Grid3<T> permute_axes(const Grid3<T>& vol, std::array<int, 3> perm)
{
    const std::array<int, 3> n{vol.nx(), vol.ny(), vol.nz()};
    Dims3 d{n[perm[0]], n[perm[1]], n[perm[2]]};
    Vec3 sp{vol.spacing()[perm[0]], vol.spacing()[perm[1]], vol.spacing()[perm[2]]};
    Vec3 org{vol.origin()[perm[0]], vol.origin()[perm[1]], vol.origin()[perm[2]]};
    Grid3<T> out(d, sp, org);
    for (int k = 0; k < vol.nz(); ++k)
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i) {
                const std::array<int, 3> src{i, j, k};
                out(src[perm[0]], src[perm[1]], src[perm[2]]) = vol(i, j, k);
            }
    return out;
}

/// Rotation by 90 degrees about z: (i, j, k) -> (ny-1-j, i, k). Requires sx == sy.
template <class T>
Grid3<T> rotate90_z(const Grid3<T>& vol)
{
    Grid3<T> out(Dims3{vol.ny(), vol.nx(), vol.nz()},
                 Vec3{vol.spacing().y, vol.spacing().x, vol.spacing().z}, vol.origin());
    for (int k = 0; k < vol.nz(); ++k)
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i)
                out(vol.ny() - 1 - j, i, k) = vol(i, j, k);
    return out;
}

/// Axis-aligned voxel box [lo, hi) clipped to a grid.
struct Box3 {
    Index3 lo{};
    Index3 hi{};
    bool empty() const { return hi.i <= lo.i || hi.j <= lo.j || hi.k <= lo.k; }
};

template <class T>
Box3 clip_box(const Grid3<T>& g, Box3 b)
{
    b.lo = {std::max(b.lo.i, 0), std::max(b.lo.j, 0), std::max(b.lo.k, 0)};
    b.hi = {std::min(b.hi.i, g.nx()), std::min(b.hi.j, g.ny()), std::min(b.hi.k, g.nz())};
    return b;
}

/// Sub-grid copy; the origin is shifted so world positions are preserved.
template <class T>
Grid3<T> crop(const Grid3<T>& g, Box3 b)
{
    b = clip_box(g, b);
    if (b.empty())
        throw DataError("crop: empty box");
    Grid3<T> out(Dims3{b.hi.i - b.lo.i, b.hi.j - b.lo.j, b.hi.k - b.lo.k}, g.spacing(), g.world(b.lo));
    for (int k = b.lo.k; k < b.hi.k; ++k)
        for (int j = b.lo.j; j < b.hi.j; ++j)
            for (int i = b.lo.i; i < b.hi.i; ++i)
                out(i - b.lo.i, j - b.lo.j, k - b.lo.k) = g(i, j, k);
    return out;
}

/// Writes `part` (cropped at `lo`) back into `g`, restricted to voxels of `region` when given.
template <class T>
void paste(Grid3<T>& g, const Grid3<T>& part, Index3 lo, Box3 region)
{
    region = clip_box(g, region);
    for (int k = region.lo.k; k < region.hi.k; ++k)
        for (int j = region.lo.j; j < region.hi.j; ++j)
            for (int i = region.lo.i; i < region.hi.i; ++i)
                g(i, j, k) = part(i - lo.i, j - lo.j, k - lo.k);
}

} // namespace tubeseg
