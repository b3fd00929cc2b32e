#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/skeleton.hpp"

namespace tubeseg {

inline constexpr const char* kCentrelineHeader = "branch_id,point_index,x_mm,y_mm,z_mm,radius_mm";

/// One row per point, points ordered root to tip. Topology is not stored;
/// readers recover attachment as the nearest point of an earlier branch.
inline void write_centreline_csv(std::ostream& os, const Centreline& c)
{
    os << kCentrelineHeader << '\n' << std::setprecision(17);
    for (std::size_t b = 0; b < c.branches.size(); ++b) {
        const auto& br = c.branches[b];
        for (std::size_t n = 0; n < br.points.size(); ++n) {
            const Vec3& p = br.points[n];
            os << b << ',' << n << ',' << p.x << ',' << p.y << ',' << p.z << ','
               << (n < br.radii.size() ? br.radii[n] : 0.0) << '\n';
        }
    }
}

inline void write_centreline_csv(const std::string& path, const Centreline& c)
{
    std::ofstream os(path);
    if (!os)
        throw DataError("cannot write " + path);
    write_centreline_csv(os, c);
    if (!os)
        throw DataError("write failed: " + path);
}

inline Centreline read_centreline_csv(std::istream& is, const std::string& name = "centreline")
{
    std::string line;
    if (!std::getline(is, line))
        throw DataError(name + ": empty file");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kCentrelineHeader)
        throw DataError(name + ": bad header '" + line + "'");
    Centreline c;
    int row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::istringstream ss(line);
        long b = -1, n = -1;
        double x = 0.0, y = 0.0, z = 0.0, r = 0.0;
        char c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0;
        if (!(ss >> b >> c1 >> n >> c2 >> x >> c3 >> y >> c4 >> z >> c5 >> r) || c1 != ',' || c2 != ',' ||
            c3 != ',' || c4 != ',' || c5 != ',')
            throw DataError(name + ": malformed row " + std::to_string(row));
        if (b < 0 || n < 0 || static_cast<std::size_t>(b) > c.branches.size())
            throw DataError(name + ": branch ids must start at 0 and be contiguous (row " + std::to_string(row) + ")");
        if (static_cast<std::size_t>(b) == c.branches.size())
            c.branches.emplace_back();
        auto& br = c.branches[static_cast<std::size_t>(b)];
        if (static_cast<std::size_t>(n) != br.points.size())
            throw DataError(name + ": point indices must be consecutive (row " + std::to_string(row) + ")");
        br.points.push_back({x, y, z});
        br.radii.push_back(r);
    }
    if (c.branches.empty())
        throw DataError(name + ": no points");
    for (std::size_t b = 1; b < c.branches.size(); ++b) {
        auto& br = c.branches[b];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < b; ++q)
            for (std::size_t n = 0; n < c.branches[q].points.size(); ++n) {
                const double d = distance(c.branches[q].points[n], br.points.front());
                if (d < best) {
                    best = d;
                    br.parent = static_cast<int>(q);
                    br.attach_index = static_cast<int>(n);
                }
            }
    }
    return c;
}

inline Centreline read_centreline_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw DataError("cannot read " + path);
    return read_centreline_csv(is, path);
}

} // namespace tubeseg
