#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tubeseg/blood_model.hpp"
#include "tubeseg/core/error.hpp"
#include "tubeseg/cpr.hpp"
#include "tubeseg/propagation.hpp"
#include "tubeseg/seed_detector.hpp"
#include "tubeseg/skeleton.hpp"
#include "tubeseg/vesselness.hpp"

namespace tubeseg {

/// Every tunable of the chain plus input and output paths.
struct PipelineConfig {
    std::string input;
    std::string output_dir = "tubeseg_out";

    FrangiParams frangi;
    /// Vesselness is zeroed where the edge measure exceeds this; unset disables.
    std::optional<double> edge_suppress;
    double edge_gain = 1.0;
    double edge_scale = 1.0;

    AortaParams aorta;
    double bin_width = 8.0;
    /// Manual blood model; both or neither.
    std::optional<double> blood_mu, blood_sigma;
    /// Manual HU gate; both or neither. Overrides the blood model's range.
    std::optional<double> hu_lo, hu_hi;

    SeedParams seeds;
    /// Seed intensity floor; unset takes the blood model's lower bound.
    std::optional<double> vt;
    /// Manual seed voxel; unset picks the top-ranked accepted candidate.
    std::optional<Index3> seed;

    PropagationParams propagation;
    CentrelineParams centreline;
    CprParams cpr;

    PipelineConfig() { cpr.threads = 1; }

    void validate() const
    {
        frangi.validate();
        seeds.validate();
        aorta.validate();
        propagation.validate();
        centreline.validate();
        cpr.validate();
        if (edge_suppress && !(*edge_suppress > 0.0))
            throw UsageError("config: edge_suppress must be > 0");
        if (!(edge_gain > 0.0) || !(edge_scale > 0.0))
            throw UsageError("config: edge_gain and edge_scale must be > 0");
        if (!(bin_width > 0.0))
            throw UsageError("config: bin_width must be > 0");
        if (blood_mu.has_value() != blood_sigma.has_value())
            throw UsageError("config: blood_mu and blood_sigma must be given together");
        if (blood_sigma && !(*blood_sigma >= 0.0))
            throw UsageError("config: blood_sigma must be >= 0");
        if (hu_lo.has_value() != hu_hi.has_value())
            throw UsageError("config: hu_lo and hu_hi must be given together");
        if (hu_lo && !(*hu_lo <= *hu_hi))
            throw UsageError("config: need hu_lo <= hu_hi");
    }
};

namespace detail {

inline std::string trim_ws(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ','))
        out.push_back(trim_ws(cur));
    return out;
}

inline double parse_number(const std::string& key, const std::string& v)
{
    double x = 0.0;
    const char* e = v.data() + v.size();
    const auto r = std::from_chars(v.data(), e, x);
    if (v.empty() || r.ec != std::errc{} || r.ptr != e || std::isnan(x))
        throw UsageError("config: " + key + ": malformed number '" + v + "'");
    return x;
}

inline int parse_int(const std::string& key, const std::string& v)
{
    int x = 0;
    const char* e = v.data() + v.size();
    const auto r = std::from_chars(v.data(), e, x);
    if (v.empty() || r.ec != std::errc{} || r.ptr != e)
        throw UsageError("config: " + key + ": malformed integer '" + v + "'");
    return x;
}

inline bool parse_flag(const std::string& key, const std::string& v)
{
    if (v == "true")
        return true;
    if (v == "false")
        return false;
    throw UsageError("config: " + key + ": expected true or false, got '" + v + "'");
}

/// Shortest text that parses back to the same double.
inline std::string format_number(double x)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string format_list(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t n = 0; n < v.size(); ++n)
        s += (n ? "," : "") + format_number(v[n]);
    return s;
}

} // namespace detail

struct ConfigField {
    std::string key;
    std::string help;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

namespace detail {

template <class T>
using Accessor = T& (*)(PipelineConfig&);

template <class T>
const T& read(Accessor<T> a, const PipelineConfig& c)
{
    return a(const_cast<PipelineConfig&>(c));
}

inline ConfigField number_field(std::string key, Accessor<double> a, std::string help)
{
    return {key, std::move(help), [a](const PipelineConfig& c) { return format_number(read(a, c)); },
            [a, key](PipelineConfig& c, const std::string& v) { a(c) = parse_number(key, v); }};
}

inline ConfigField int_field(std::string key, Accessor<int> a, std::string help)
{
    return {key, std::move(help), [a](const PipelineConfig& c) { return std::to_string(read(a, c)); },
            [a, key](PipelineConfig& c, const std::string& v) { a(c) = parse_int(key, v); }};
}

inline ConfigField flag_field(std::string key, Accessor<bool> a, std::string help)
{
    return {key, std::move(help), [a](const PipelineConfig& c) { return std::string(read(a, c) ? "true" : "false"); },
            [a, key](PipelineConfig& c, const std::string& v) { a(c) = parse_flag(key, v); }};
}

inline ConfigField text_field(std::string key, Accessor<std::string> a, std::string help)
{
    return {key, std::move(help), [a](const PipelineConfig& c) { return read(a, c); },
            [a](PipelineConfig& c, const std::string& v) { a(c) = v; }};
}

/// Unset is written as `none`.
inline ConfigField optional_field(std::string key, Accessor<std::optional<double>> a, std::string none, std::string help)
{
    return {key, std::move(help),
            [a, none](const PipelineConfig& c) {
                const auto& o = read(a, c);
                return o ? format_number(*o) : none;
            },
            [a, key, none](PipelineConfig& c, const std::string& v) {
                if (v == none)
                    a(c).reset();
                else
                    a(c) = parse_number(key, v);
            }};
}

} // namespace detail

/// The config schema in serialization order.
inline const std::vector<ConfigField>& config_fields()
{
    using namespace detail;
    using C = PipelineConfig;
    static const std::vector<ConfigField> fields = [] {
        std::vector<ConfigField> f;
        f.push_back(text_field("input", [](C& c) -> std::string& { return c.input; }, "input volume (.mhd)"));
        f.push_back(text_field("output_dir", [](C& c) -> std::string& { return c.output_dir; }, "artifact directory"));
        f.push_back(int_field("threads", [](C& c) -> int& { return c.cpr.threads; }, "CPR worker threads, 0 = all cores"));
        // vesselness
        f.push_back({"scales", "Frangi scales (mm), increasing",
                     [](const C& c) { return format_list(c.frangi.scales); },
                     [](C& c, const std::string& v) {
                         std::vector<double> s;
                         for (const std::string& t : split_list(v))
                             s.push_back(parse_number("scales", t));
                         c.frangi.scales = s;
                     }});
        f.push_back(number_field("alpha", [](C& c) -> double& { return c.frangi.alpha; }, "Frangi plate/line weight"));
        f.push_back(number_field("beta", [](C& c) -> double& { return c.frangi.beta; }, "Frangi blob weight"));
        f.push_back(optional_field("c", [](C& c) -> std::optional<double>& { return c.frangi.c; }, "auto",
                                   "Frangi structureness constant"));
        f.push_back(number_field("gamma", [](C& c) -> double& { return c.frangi.gamma; }, "scale normalization"));
        f.push_back(optional_field("edge_suppress", [](C& c) -> std::optional<double>& { return c.edge_suppress; },
                                   "off", "edge measure threshold"));
        f.push_back(number_field("edge_gain", [](C& c) -> double& { return c.edge_gain; }, "edge measure gain"));
        f.push_back(number_field("edge_scale", [](C& c) -> double& { return c.edge_scale; }, "edge measure scale (mm)"));
        // blood model
        f.push_back(number_field("aorta_z_band", [](C& c) -> double& { return c.aorta.z_band; }, "scanned z fraction"));
        f.push_back(number_field("aorta_threshold", [](C& c) -> double& { return c.aorta.bright_threshold; },
                                 "bright voxel threshold (HU)"));
        f.push_back(number_field("aorta_r_min", [](C& c) -> double& { return c.aorta.r_min; }, "aorta radius min (mm)"));
        f.push_back(number_field("aorta_r_max", [](C& c) -> double& { return c.aorta.r_max; }, "aorta radius max (mm)"));
        f.push_back(number_field("aorta_max_drift", [](C& c) -> double& { return c.aorta.max_drift; },
                                 "centre drift per slice (mm)"));
        f.push_back(number_field("aorta_min_support", [](C& c) -> double& { return c.aorta.min_support; },
                                 "perimeter vote fraction"));
        f.push_back(number_field("aorta_inset", [](C& c) -> double& { return c.aorta.inset; }, "mask inset (mm)"));
        f.push_back(number_field("bin_width", [](C& c) -> double& { return c.bin_width; }, "histogram bin (HU)"));
        f.push_back(optional_field("blood_mu", [](C& c) -> std::optional<double>& { return c.blood_mu; }, "auto",
                                   "manual blood mean (HU)"));
        f.push_back(optional_field("blood_sigma", [](C& c) -> std::optional<double>& { return c.blood_sigma; }, "auto",
                                   "manual blood sigma (HU)"));
        f.push_back(optional_field("hu_lo", [](C& c) -> std::optional<double>& { return c.hu_lo; }, "auto",
                                   "HU gate low"));
        f.push_back(optional_field("hu_hi", [](C& c) -> std::optional<double>& { return c.hu_hi; }, "auto",
                                   "HU gate high"));
        // seeds
        f.push_back(number_field("cr", [](C& c) -> double& { return c.seeds.cr; }, "reference slice ratio in (0, 1)"));
        f.push_back(number_field("tf", [](C& c) -> double& { return c.seeds.t_f; }, "vesselness threshold"));
        f.push_back(number_field("tgf", [](C& c) -> double& { return c.seeds.t_gf; }, "geometric feature threshold"));
        f.push_back(optional_field("vt", [](C& c) -> std::optional<double>& { return c.vt; }, "auto",
                                   "seed intensity floor (HU)"));
        f.push_back(number_field("plane_gap", [](C& c) -> double& { return c.seeds.plane_gap; }, "GF plane gap (mm)"));
        f.push_back(number_field("plane_half_extent", [](C& c) -> double& { return c.seeds.plane_half_extent; },
                                 "GF plane half extent (mm)"));
        f.push_back(number_field("plane_spacing", [](C& c) -> double& { return c.seeds.plane_spacing; },
                                 "GF plane spacing (mm)"));
        f.push_back(int_field("n_rays", [](C& c) -> int& { return c.seeds.n_rays; }, "rays per plane"));
        f.push_back(int_field("ray_trim", [](C& c) -> int& { return c.seeds.trim; }, "rays trimmed per side"));
        f.push_back(number_field("ray_r_max", [](C& c) -> double& { return c.seeds.r_max; }, "ray length (mm)"));
        f.push_back(number_field("ray_step", [](C& c) -> double& { return c.seeds.ray_step; }, "ray step (mm)"));
        f.push_back(number_field("gf_k", [](C& c) -> double& { return c.seeds.k; }, "GF decay constant"));
        f.push_back({"ray_pairing", "rank or direction",
                     [](const C& c) { return std::string(c.seeds.pairing == RayPairing::rank ? "rank" : "direction"); },
                     [](C& c, const std::string& v) {
                         if (v == "rank")
                             c.seeds.pairing = RayPairing::rank;
                         else if (v == "direction")
                             c.seeds.pairing = RayPairing::direction;
                         else
                             throw UsageError("config: ray_pairing: expected rank or direction, got '" + v + "'");
                     }});
        f.push_back(number_field("gf_smoothing", [](C& c) -> double& { return c.seeds.gf_smoothing; },
                                 "GF pre-smoothing sigma (mm)"));
        f.push_back(number_field("roi_r_min", [](C& c) -> double& { return c.seeds.roi_r_min; }, "ROI radius min (mm)"));
        f.push_back(number_field("roi_r_max", [](C& c) -> double& { return c.seeds.roi_r_max; }, "ROI radius max (mm)"));
        f.push_back({"seed", "seed voxel i,j,k or auto",
                     [](const C& c) {
                         return c.seed ? std::to_string(c.seed->i) + "," + std::to_string(c.seed->j) + "," +
                                             std::to_string(c.seed->k)
                                       : std::string("auto");
                     },
                     [](C& c, const std::string& v) {
                         if (v == "auto") {
                             c.seed.reset();
                             return;
                         }
                         const auto t = split_list(v);
                         if (t.size() != 3)
                             throw UsageError("config: seed: expected i,j,k, got '" + v + "'");
                         c.seed = Index3{parse_int("seed", t[0]), parse_int("seed", t[1]), parse_int("seed", t[2])};
                     }});
        // level set
        f.push_back({"energy", "geodesic, chan_vese_global or chan_vese_localized",
                     [](const C& c) { return std::string(to_string(c.propagation.evo.energy)); },
                     [](C& c, const std::string& v) {
                         try {
                             c.propagation.evo.energy = energy_from_string(v);
                         } catch (const Error&) {
                             throw UsageError("config: energy: unknown energy '" + v + "'");
                         }
                     }});
        f.push_back(number_field("lambda", [](C& c) -> double& { return c.propagation.evo.lambda; }, "curvature weight"));
        f.push_back(number_field("ball_radius", [](C& c) -> double& { return c.propagation.evo.ball_radius; },
                                 "localizing ball radius (mm)"));
        f.push_back(number_field("dt", [](C& c) -> double& { return c.propagation.evo.dt; }, "time step"));
        f.push_back(number_field("eps", [](C& c) -> double& { return c.propagation.evo.eps; }, "Heaviside width (px)"));
        f.push_back(int_field("max_iters", [](C& c) -> int& { return c.propagation.evo.max_iters; }, "iteration cap"));
        f.push_back(number_field("tol", [](C& c) -> double& { return c.propagation.evo.tol; }, "convergence tolerance"));
        f.push_back(int_field("window", [](C& c) -> int& { return c.propagation.evo.window; }, "convergence window"));
        f.push_back(number_field("band", [](C& c) -> double& { return c.propagation.evo.band; }, "narrow band (px)"));
        f.push_back(int_field("reinit_every", [](C& c) -> int& { return c.propagation.evo.reinit_every; },
                              "reinitialization period"));
        f.push_back(number_field("intensity_scale", [](C& c) -> double& { return c.propagation.evo.intensity_scale; },
                                 "force normalization, 0 = slice range"));
        f.push_back(number_field("g_sigma", [](C& c) -> double& { return c.propagation.evo.g_sigma; },
                                 "geodesic edge smoothing (px)"));
        f.push_back(number_field("g_contrast", [](C& c) -> double& { return c.propagation.evo.g_contrast; },
                                 "geodesic edge contrast"));
        f.push_back(number_field("balloon", [](C& c) -> double& { return c.propagation.evo.balloon; },
                                 "geodesic balloon force"));
        // propagation
        f.push_back(number_field("t_v", [](C& c) -> double& { return c.propagation.t_v; }, "evolution vesselness gate"));
        f.push_back(number_field("capture_t_v", [](C& c) -> double& { return c.propagation.capture_t_v; },
                                 "branch capture vesselness gate"));
        f.push_back(number_field("capture_radius", [](C& c) -> double& { return c.propagation.capture_radius; },
                                 "branch capture radius (mm)"));
        f.push_back(number_field("init_radius", [](C& c) -> double& { return c.propagation.init_radius; },
                                 "seed disc radius (mm)"));
        f.push_back(number_field("dilation", [](C& c) -> double& { return c.propagation.dilation; },
                                 "inter-slice dilation (voxels)"));
        f.push_back(number_field("aorta_overlap", [](C& c) -> double& { return c.propagation.aorta_overlap; },
                                 "backward stop overlap"));
        f.push_back(flag_field("capture", [](C& c) -> bool& { return c.propagation.capture; }, "branch capture"));
        // skeleton
        f.push_back(int_field("n_branches", [](C& c) -> int& { return c.centreline.n_branches; }, "branch cap"));
        f.push_back(number_field("exponent", [](C& c) -> double& { return c.centreline.exponent; },
                                 "medial speed exponent"));
        f.push_back(number_field("min_branch_length", [](C& c) -> double& { return c.centreline.min_branch_length; },
                                 "branch length floor (mm)"));
        f.push_back(number_field("centreline_step", [](C& c) -> double& { return c.centreline.step; },
                                 "point spacing (mm), 0 = half voxel"));
        f.push_back(number_field("medialness", [](C& c) -> double& { return c.centreline.medialness; },
                                 "medial ratio"));
        // cpr
        f.push_back(number_field("cpr_half_extent", [](C& c) -> double& { return c.cpr.half_extent; },
                                 "CPR plane half extent (mm)"));
        f.push_back(number_field("cpr_spacing", [](C& c) -> double& { return c.cpr.spacing; }, "CPR plane spacing (mm)"));
        return f;
    }();
    return fields;
}

inline const ConfigField* find_config_field(const std::string& key)
{
    for (const ConfigField& f : config_fields())
        if (f.key == key)
            return &f;
    return nullptr;
}

inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value)
{
    const ConfigField* f = find_config_field(key);
    if (!f)
        throw UsageError("config: unknown key '" + key + "'");
    f->set(c, detail::trim_ws(value));
}

/// Flat `key = value` lines; `#` starts a comment line. Keys may appear once.
inline PipelineConfig parse_config(std::istream& is, const std::string& name = "config",
                                   const std::vector<std::pair<std::string, std::string>>& overrides = {})
{
    PipelineConfig c;
    std::set<std::string> seen;
    std::string line;
    int row = 0;
    while (std::getline(is, line)) {
        ++row;
        const std::string t = detail::trim_ws(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError(name + ":" + std::to_string(row) + ": expected key = value");
        const std::string key = detail::trim_ws(t.substr(0, eq));
        if (!seen.insert(key).second)
            throw UsageError(name + ":" + std::to_string(row) + ": duplicate key '" + key + "'");
        set_config_value(c, key, t.substr(eq + 1));
    }
    for (const auto& [k, v] : overrides)
        set_config_value(c, k, v);
    c.validate();
    return c;
}

inline PipelineConfig parse_config_text(const std::string& text,
                                        const std::vector<std::pair<std::string, std::string>>& overrides = {})
{
    std::istringstream is(text);
    return parse_config(is, "config", overrides);
}

inline PipelineConfig load_config(const std::string& path,
                                  const std::vector<std::pair<std::string, std::string>>& overrides = {})
{
    std::ifstream is(path);
    if (!is)
        throw UsageError("config: cannot read " + path);
    return parse_config(is, path, overrides);
}

inline std::string serialize_config(const PipelineConfig& c)
{
    std::string s;
    for (const ConfigField& f : config_fields())
        s += f.key + " = " + f.get(c) + "\n";
    return s;
}

} // namespace tubeseg
