#pragma once

// MetaImage (.mhd + .raw) reader/writer. Only the subset used by this
// toolkit: 3D, uncompressed, little-endian, MET_SHORT / MET_UCHAR / MET_FLOAT.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"

namespace tubeseg {

enum class ElementType { met_short, met_uchar, met_float };

inline std::string to_string(ElementType t)
{
    switch (t) {
    case ElementType::met_short: return "MET_SHORT";
    case ElementType::met_uchar: return "MET_UCHAR";
    case ElementType::met_float: return "MET_FLOAT";
    }
    return "MET_FLOAT";
}

inline std::size_t element_size(ElementType t)
{
    switch (t) {
    case ElementType::met_short: return 2;
    case ElementType::met_uchar: return 1;
    case ElementType::met_float: return 4;
    }
    return 4;
}

struct MetaHeader {
    Dims3 dims{};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{};
    ElementType type = ElementType::met_float;
    std::filesystem::path data_file;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
std::vector<T> parse_numbers(const std::string& key, const std::string& value, std::size_t expected)
{
    std::istringstream is(value);
    std::vector<T> out;
    T x{};
    while (is >> x)
        out.push_back(x);
    if (out.size() != expected)
        throw DataError("metaimage: key " + key + " expects " + std::to_string(expected) + " values, got '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& v)
{
    return v == "True" || v == "true" || v == "1";
}

template <class T>
T byteswap_value(T v)
{
    if constexpr (std::endian::native == std::endian::little)
        return v;
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
}

template <class T>
void read_raw(std::ifstream& in, std::size_t count, const std::filesystem::path& path, std::vector<double>& out)
{
    std::vector<T> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(T)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T))
        throw DataError("metaimage: raw file " + path.string() + " holds fewer than " + std::to_string(count) +
                        " elements");
    out.resize(count);
    for (std::size_t n = 0; n < count; ++n)
        out[n] = static_cast<double>(byteswap_value(buf[n]));
}

} // namespace detail

inline MetaHeader read_meta_header(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("metaimage: cannot open header " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    auto get = [&](const std::string& k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };

    MetaHeader h;
    if (const auto* nd = get("NDims"); !nd || *nd != "3")
        throw DataError("metaimage: NDims must be 3 in " + path.string());
    const auto* dim = get("DimSize");
    if (!dim)
        throw DataError("metaimage: missing DimSize");
    const auto d = detail::parse_numbers<long long>("DimSize", *dim, 3);
    if (d[0] < 1 || d[1] < 1 || d[2] < 1)
        throw DataError("metaimage: DimSize entries must be >= 1");
    h.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
    if (const auto* sp = get("ElementSpacing")) {
        const auto s = detail::parse_numbers<double>("ElementSpacing", *sp, 3);
        h.spacing = {s[0], s[1], s[2]};
    }
    for (const char* key : {"Offset", "Origin", "Position"}) {
        if (const auto* o = get(key)) {
            const auto s = detail::parse_numbers<double>(key, *o, 3);
            h.origin = {s[0], s[1], s[2]};
            break;
        }
    }
    for (const char* key : {"ElementByteOrderMSB", "BinaryDataByteOrderMSB"}) {
        if (const auto* v = get(key); v && detail::parse_bool(*v))
            throw DataError("metaimage: big-endian payloads are not supported");
    }
    if (const auto* c = get("CompressedData"); c && detail::parse_bool(*c))
        throw DataError("metaimage: compressed payloads are not supported");
    const auto* et = get("ElementType");
    if (!et)
        throw DataError("metaimage: missing ElementType");
    if (*et == "MET_SHORT")
        h.type = ElementType::met_short;
    else if (*et == "MET_UCHAR")
        h.type = ElementType::met_uchar;
    else if (*et == "MET_FLOAT")
        h.type = ElementType::met_float;
    else
        throw DataError("metaimage: unsupported ElementType " + *et);
    const auto* df = get("ElementDataFile");
    if (!df)
        throw DataError("metaimage: missing ElementDataFile");
    if (*df == "LOCAL" || *df == "LIST")
        throw DataError("metaimage: ElementDataFile = " + *df + " is not supported");
    h.data_file = path.parent_path() / *df;
    return h;
}

/// Reads a volume; all element types widen to double.
inline Volume3D load_volume(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw DataError("metaimage: no such file " + path.string());
    const MetaHeader h = read_meta_header(path);
    std::ifstream in(h.data_file, std::ios::binary);
    if (!in)
        throw DataError("metaimage: cannot open raw file " + h.data_file.string());
    Volume3D vol(h.dims, h.spacing, h.origin);
    const std::size_t count = h.dims.count();
    std::vector<double> values;
    switch (h.type) {
    case ElementType::met_short: detail::read_raw<std::int16_t>(in, count, h.data_file, values); break;
    case ElementType::met_uchar: detail::read_raw<std::uint8_t>(in, count, h.data_file, values); break;
    case ElementType::met_float: detail::read_raw<float>(in, count, h.data_file, values); break;
    }
    vol.storage() = std::move(values);
    return vol;
}

/// Reads a mask; every non-zero element becomes 1.
inline BinaryMask load_mask(const std::filesystem::path& path)
{
    const Volume3D v = load_volume(path);
    BinaryMask m = v.like<std::uint8_t>();
    for (std::size_t n = 0; n < v.size(); ++n)
        m[n] = v[n] != 0.0 ? 1 : 0;
    return m;
}

namespace detail {

template <class T, class G>
void write_raw(std::ofstream& out, const G& g)
{
    std::vector<T> buf(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) {
        const double v = static_cast<double>(g[n]);
        if constexpr (std::is_integral_v<T>) {
            const double lo = static_cast<double>(std::numeric_limits<T>::min());
            const double hi = static_cast<double>(std::numeric_limits<T>::max());
            buf[n] = byteswap_value(static_cast<T>(std::clamp(std::round(v), lo, hi)));
        } else {
            buf[n] = byteswap_value(static_cast<T>(v));
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(T)));
}

template <class G>
void save_grid(const G& g, const std::filesystem::path& path, ElementType type)
{
    std::filesystem::path raw = path;
    raw.replace_extension(".raw");
    std::ofstream hdr(path);
    if (!hdr)
        throw DataError("metaimage: cannot write " + path.string());
    hdr.precision(17);
    hdr << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "Offset = " << g.origin().x << ' ' << g.origin().y << ' ' << g.origin().z << '\n'
        << "ElementSpacing = " << g.spacing().x << ' ' << g.spacing().y << ' ' << g.spacing().z << '\n'
        << "DimSize = " << g.nx() << ' ' << g.ny() << ' ' << g.nz() << '\n'
        << "ElementByteOrderMSB = False\n"
        << "ElementType = " << to_string(type) << '\n'
        << "ElementDataFile = " << raw.filename().string() << '\n';
    if (!hdr)
        throw DataError("metaimage: failed writing " + path.string());
    std::ofstream out(raw, std::ios::binary);
    if (!out)
        throw DataError("metaimage: cannot write " + raw.string());
    switch (type) {
    case ElementType::met_short: write_raw<std::int16_t>(out, g); break;
    case ElementType::met_uchar: write_raw<std::uint8_t>(out, g); break;
    case ElementType::met_float: write_raw<float>(out, g); break;
    }
    if (!out)
        throw DataError("metaimage: failed writing " + raw.string());
}

} // namespace detail

/// Writes `<path>` (header) and the payload next to it with a .raw extension.
inline void save_volume(const Volume3D& vol, const std::filesystem::path& path,
                        ElementType type = ElementType::met_float)
{
    detail::save_grid(vol, path, type);
}

/// Masks are always written as MET_UCHAR with values in {0, 1}.
inline void save_volume(const BinaryMask& mask, const std::filesystem::path& path)
{
    detail::save_grid(mask, path, ElementType::met_uchar);
}

} // namespace tubeseg
