#pragma once

// Exact squared Euclidean distance transform (Felzenszwalb & Huttenlocher
// lower envelope of parabolas), separable over axes with per-axis spacing.

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "tubeseg/core/grid.hpp"

namespace tubeseg {

namespace detail {

inline void edt_1d(const double* f, double* d, int n, double w, std::vector<int>& v, std::vector<double>& z)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.resize(n);
    z.resize(n + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == inf)
            continue;
        const double fq = f[q] + (q * w) * (q * w);
        while (k >= 0) {
            const int p = v[k];
            const double fp = f[p] + (p * w) * (p * w);
            const double s = (fq - fp) / (2.0 * w * w * (q - p));
            if (s <= z[k]) {
                --k;
                continue;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
            break;
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
        }
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q)
            d[q] = inf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q)
            ++j;
        const double dq = (q - v[j]) * w;
        d[q] = dq * dq + f[v[j]];
    }
}

inline void edt_inplace(std::vector<double>& f, std::array<int, 3> n, std::array<double, 3> sp)
{
    std::vector<double> in, out;
    std::vector<int> v;
    std::vector<double> z;
    const std::size_t sx = 1, sy = static_cast<std::size_t>(n[0]), sz = sy * static_cast<std::size_t>(n[1]);
    const std::array<std::size_t, 3> stride{sx, sy, sz};
    for (int axis = 0; axis < 3; ++axis) {
        const int len = n[axis];
        if (len == 1)
            continue;
        in.resize(len);
        out.resize(len);
        const int a_axis = axis == 0 ? 1 : 0;
        const int b_axis = axis == 2 ? 1 : 2;
        for (int b = 0; b < n[b_axis]; ++b)
            for (int a = 0; a < n[a_axis]; ++a) {
                const std::size_t base = a * stride[a_axis] + b * stride[b_axis];
                for (int t = 0; t < len; ++t)
                    in[t] = f[base + t * stride[axis]];
                edt_1d(in.data(), out.data(), len, sp[axis], v, z);
                for (int t = 0; t < len; ++t)
                    f[base + t * stride[axis]] = out[t];
            }
    }
}

} // namespace detail

/// Squared distance (mm^2) from every voxel centre to the nearest voxel where
/// `features` is non-zero; +inf when there are no features.
template <class T>
Volume3D squared_distance_to(const Grid3<T>& features)
{
    Volume3D d = features.template like<double>();
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < d.size(); ++n)
        d[n] = features[n] != T{} ? 0.0 : inf;
    detail::edt_inplace(d.storage(), {d.nx(), d.ny(), d.nz()}, {d.spacing().x, d.spacing().y, d.spacing().z});
    return d;
}

template <class T>
Image2D squared_distance_to(const Grid2<T>& features)
{
    Image2D d = features.template like<double>();
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < d.size(); ++n)
        d[n] = features[n] != T{} ? 0.0 : inf;
    detail::edt_inplace(d.storage(), {d.nu(), d.nv(), 1}, {d.su(), d.sv(), 1.0});
    return d;
}

} // namespace tubeseg
