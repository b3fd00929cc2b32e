#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/vec.hpp"

namespace tubeseg {

struct Dims3 {
    int nx = 1;
    int ny = 1;
    int nz = 1;
    std::size_t count() const
    {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    friend constexpr bool operator==(const Dims3&, const Dims3&) = default;
};

/// Regular 3D grid with physical spacing (mm) and origin (mm). x-fastest layout.
template <class T>
class Grid3 {
public:
    using value_type = T;

    Grid3() = default;

    explicit Grid3(Dims3 dims, Vec3 spacing = {1.0, 1.0, 1.0}, Vec3 origin = {}, T fill = T{})
        : dims_(dims), spacing_(spacing), origin_(origin)
    {
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
            throw DataError("grid dimensions must be >= 1");
        if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
            throw DataError("grid spacing must be > 0");
        data_.assign(dims.count(), fill);
    }

    /// Same geometry, new element type and fill.
    template <class U>
    Grid3<U> like(U fill = U{}) const
    {
        return Grid3<U>(dims_, spacing_, origin_, fill);
    }

    template <class U>
    bool same_geometry(const Grid3<U>& o) const
    {
        return dims_ == o.dims() && spacing_ == o.spacing() && origin_ == o.origin();
    }

    const Dims3& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    int nx() const { return dims_.nx; }
    int ny() const { return dims_.ny; }
    int nz() const { return dims_.nz; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    double min_spacing() const { return std::min(spacing_.x, std::min(spacing_.y, spacing_.z)); }
    double voxel_volume() const { return spacing_.x * spacing_.y * spacing_.z; }

    std::size_t index(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims_.ny) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(dims_.nx) +
               static_cast<std::size_t>(i);
    }
    std::size_t index(const Index3& p) const { return index(p.i, p.j, p.k); }

    Index3 coords(std::size_t idx) const
    {
        const auto nx = static_cast<std::size_t>(dims_.nx);
        const auto ny = static_cast<std::size_t>(dims_.ny);
        return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
    }

    bool contains(int i, int j, int k) const
    {
        return i >= 0 && j >= 0 && k >= 0 && i < dims_.nx && j < dims_.ny && k < dims_.nz;
    }
    bool contains(const Index3& p) const { return contains(p.i, p.j, p.k); }

    T& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
    const T& operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
    T& operator[](std::size_t idx) { return data_[idx]; }
    const T& operator[](std::size_t idx) const { return data_[idx]; }

    /// Value at (i,j,k) with indices clamped into the grid.
    const T& clamped(int i, int j, int k) const
    {
        i = i < 0 ? 0 : (i >= dims_.nx ? dims_.nx - 1 : i);
        j = j < 0 ? 0 : (j >= dims_.ny ? dims_.ny - 1 : j);
        k = k < 0 ? 0 : (k >= dims_.nz ? dims_.nz - 1 : k);
        return data_[index(i, j, k)];
    }

    Vec3 world(double i, double j, double k) const
    {
        return {origin_.x + i * spacing_.x, origin_.y + j * spacing_.y, origin_.z + k * spacing_.z};
    }
    Vec3 world(const Index3& p) const { return world(p.i, p.j, p.k); }

    /// Continuous voxel coordinates of a world point.
    Vec3 to_voxel(const Vec3& p) const
    {
        return {(p.x - origin_.x) / spacing_.x, (p.y - origin_.y) / spacing_.y, (p.z - origin_.z) / spacing_.z};
    }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

private:
    Dims3 dims_{};
    Vec3 spacing_{1.0, 1.0, 1.0};
    Vec3 origin_{};
    std::vector<T> data_;
};

using Volume3D = Grid3<double>;
/// Values are 0 or 1.
using BinaryMask = Grid3<std::uint8_t>;

/// World embedding of a 2D image: pixel (i, j) sits at
/// center + (i - (nu-1)/2) su u + (j - (nv-1)/2) sv v.
struct Frame {
    Vec3 center{};
    Vec3 u{1.0, 0.0, 0.0};
    Vec3 v{0.0, 1.0, 0.0};
};

template <class T>
class Grid2 {
public:
    using value_type = T;

    Grid2() = default;
    Grid2(int nu, int nv, double su = 1.0, double sv = 1.0, T fill = T{}) : nu_(nu), nv_(nv), su_(su), sv_(sv)
    {
        if (nu < 1 || nv < 1)
            throw DataError("image dimensions must be >= 1");
        if (!(su > 0.0) || !(sv > 0.0))
            throw DataError("image spacing must be > 0");
        data_.assign(static_cast<std::size_t>(nu) * static_cast<std::size_t>(nv), fill);
    }

    template <class U>
    Grid2<U> like(U fill = U{}) const
    {
        Grid2<U> g(nu_, nv_, su_, sv_, fill);
        g.frame = frame;
        return g;
    }

    int nu() const { return nu_; }
    int nv() const { return nv_; }
    double su() const { return su_; }
    double sv() const { return sv_; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(int i, int j) const
    {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nu_) + static_cast<std::size_t>(i);
    }
    bool contains(int i, int j) const { return i >= 0 && j >= 0 && i < nu_ && j < nv_; }

    T& operator()(int i, int j) { return data_[index(i, j)]; }
    const T& operator()(int i, int j) const { return data_[index(i, j)]; }
    T& operator[](std::size_t idx) { return data_[idx]; }
    const T& operator[](std::size_t idx) const { return data_[idx]; }

    const T& clamped(int i, int j) const
    {
        i = i < 0 ? 0 : (i >= nu_ ? nu_ - 1 : i);
        j = j < 0 ? 0 : (j >= nv_ ? nv_ - 1 : j);
        return data_[index(i, j)];
    }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    template <class U>
    bool same_shape(const Grid2<U>& o) const
    {
        return nu_ == o.nu() && nv_ == o.nv();
    }

    /// World position of pixel (i, j); requires a frame.
    Vec3 world(double i, double j) const
    {
        const Frame& f = frame.value();
        return f.center + ((i - 0.5 * (nu_ - 1)) * su_) * f.u + ((j - 0.5 * (nv_ - 1)) * sv_) * f.v;
    }

    std::optional<Frame> frame;

private:
    int nu_ = 0;
    int nv_ = 0;
    double su_ = 1.0;
    double sv_ = 1.0;
    std::vector<T> data_;
};

using Image2D = Grid2<double>;
using Mask2D = Grid2<std::uint8_t>;

template <class T>
std::size_t count_nonzero(std::span<const T> values)
{
    std::size_t n = 0;
    for (const T& v : values)
        n += v != T{} ? 1u : 0u;
    return n;
}

} // namespace tubeseg
