#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/edt.hpp"

namespace tubeseg {

enum class Connectivity { six = 6, twentysix = 26 };
enum class Connectivity2D { four = 4, eight = 8 };

/// Labels 1..n in scan order of each component's first voxel; 0 is background.
/// sizes[l - 1] is the voxel count of label l.
struct Components {
    Grid3<std::int32_t> labels;
    std::vector<std::size_t> sizes;
    std::size_t count() const { return sizes.size(); }
};

struct Components2D {
    Grid2<std::int32_t> labels;
    std::vector<std::size_t> sizes;
    std::size_t count() const { return sizes.size(); }
};

namespace detail {

inline std::vector<Index3> neighbour_offsets(Connectivity c)
{
    std::vector<Index3> off;
    for (int dk = -1; dk <= 1; ++dk)
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                const int l1 = std::abs(di) + std::abs(dj) + std::abs(dk);
                if (l1 == 0)
                    continue;
                if (c == Connectivity::six && l1 != 1)
                    continue;
                off.push_back({di, dj, dk});
            }
    return off;
}

} // namespace detail

template <class T>
Components connected_components(const Grid3<T>& mask, Connectivity conn = Connectivity::twentysix)
{
    Components out{mask.template like<std::int32_t>(0), {}};
    const auto off = detail::neighbour_offsets(conn);
    std::deque<std::size_t> queue;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (mask[start] == T{} || out.labels[start] != 0)
            continue;
        const auto label = static_cast<std::int32_t>(out.sizes.size() + 1);
        std::size_t size = 0;
        out.labels[start] = label;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            ++size;
            const Index3 p = mask.coords(cur);
            for (const Index3& d : off) {
                const int i = p.i + d.i, j = p.j + d.j, k = p.k + d.k;
                if (!mask.contains(i, j, k))
                    continue;
                const std::size_t n = mask.index(i, j, k);
                if (mask[n] != T{} && out.labels[n] == 0) {
                    out.labels[n] = label;
                    queue.push_back(n);
                }
            }
        }
        out.sizes.push_back(size);
    }
    return out;
}

template <class T>
Components2D connected_components(const Grid2<T>& mask, Connectivity2D conn = Connectivity2D::eight)
{
    Components2D out{mask.template like<std::int32_t>(0), {}};
    std::deque<std::size_t> queue;
    const int nu = mask.nu();
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (mask[start] == T{} || out.labels[start] != 0)
            continue;
        const auto label = static_cast<std::int32_t>(out.sizes.size() + 1);
        std::size_t size = 0;
        out.labels[start] = label;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            ++size;
            const int i = static_cast<int>(cur % nu), j = static_cast<int>(cur / nu);
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    if ((di == 0 && dj == 0) || (conn == Connectivity2D::four && di != 0 && dj != 0))
                        continue;
                    if (!mask.contains(i + di, j + dj))
                        continue;
                    const std::size_t n = mask.index(i + di, j + dj);
                    if (mask[n] != T{} && out.labels[n] == 0) {
                        out.labels[n] = label;
                        queue.push_back(n);
                    }
                }
        }
        out.sizes.push_back(size);
    }
    return out;
}

/// Keeps only the component with the given label.
inline BinaryMask component_mask(const Components& c, std::int32_t label)
{
    BinaryMask m = c.labels.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < m.size(); ++n)
        m[n] = c.labels[n] == label ? 1 : 0;
    return m;
}

inline Mask2D component_mask(const Components2D& c, std::int32_t label)
{
    Mask2D m = c.labels.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < m.size(); ++n)
        m[n] = c.labels[n] == label ? 1 : 0;
    return m;
}

/// Largest component (first in scan order on ties); empty mask stays empty.
template <class G>
auto largest_component(const G& mask)
{
    const auto cc = connected_components(mask);
    std::int32_t best = 0;
    std::size_t best_size = 0;
    for (std::size_t l = 0; l < cc.sizes.size(); ++l)
        if (cc.sizes[l] > best_size) {
            best_size = cc.sizes[l];
            best = static_cast<std::int32_t>(l + 1);
        }
    if (best == 0)
        return mask.template like<std::uint8_t>(0);
    return component_mask(cc, best);
}

namespace detail {
inline constexpr double kRadiusSlack = 1e-9;
}

/// Dilation by a ball of `radius_mm` (world units).
template <class G>
G dilate(const G& mask, double radius_mm)
{
    if (!(radius_mm >= 0.0))
        throw UsageError("dilate: radius must be >= 0");
    if (radius_mm == 0.0)
        return mask;
    const auto d2 = squared_distance_to(mask);
    const double r2 = (radius_mm + detail::kRadiusSlack) * (radius_mm + detail::kRadiusSlack);
    G out = mask;
    for (std::size_t n = 0; n < out.size(); ++n)
        out[n] = d2[n] <= r2 ? 1 : 0;
    return out;
}

/// Erosion by a ball of `radius_mm`: keeps voxels whose ball holds no in-grid background.
template <class G>
G erode(const G& mask, double radius_mm)
{
    if (!(radius_mm >= 0.0))
        throw UsageError("erode: radius must be >= 0");
    if (radius_mm == 0.0)
        return mask;
    G background = mask;
    for (std::size_t n = 0; n < background.size(); ++n)
        background[n] = mask[n] ? 0 : 1;
    const auto d2 = squared_distance_to(background);
    const double r2 = (radius_mm + detail::kRadiusSlack) * (radius_mm + detail::kRadiusSlack);
    G out = mask;
    for (std::size_t n = 0; n < out.size(); ++n)
        out[n] = (mask[n] && d2[n] > r2) ? 1 : 0;
    return out;
}

/// Fills background regions (4-connected) that do not touch the image border.
inline Mask2D fill_holes(const Mask2D& mask)
{
    Mask2D inv = mask.like<std::uint8_t>(0);
    for (std::size_t n = 0; n < mask.size(); ++n)
        inv[n] = mask[n] ? 0 : 1;
    const auto cc = connected_components(inv, Connectivity2D::four);
    std::vector<bool> touches(cc.count() + 1, false);
    for (int j = 0; j < mask.nv(); ++j)
        for (int i = 0; i < mask.nu(); ++i)
            if (i == 0 || j == 0 || i == mask.nu() - 1 || j == mask.nv() - 1)
                touches[cc.labels(i, j)] = true;
    Mask2D out = mask;
    for (std::size_t n = 0; n < out.size(); ++n)
        if (cc.labels[n] != 0 && !touches[cc.labels[n]])
            out[n] = 1;
    return out;
}

} // namespace tubeseg
