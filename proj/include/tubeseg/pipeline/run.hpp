#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tubeseg/blood_model.hpp"
#include "tubeseg/centreline_io.hpp"
#include "tubeseg/cpr.hpp"
#include "tubeseg/metaimage.hpp"
#include "tubeseg/morphology.hpp"
#include "tubeseg/pipeline/config.hpp"
#include "tubeseg/pipeline/report.hpp"
#include "tubeseg/propagation.hpp"
#include "tubeseg/seed_detector.hpp"
#include "tubeseg/skeleton.hpp"
#include "tubeseg/vesselness.hpp"

namespace tubeseg {

namespace detail {

[[noreturn]] inline void throw_kind(ErrorKind k, const std::string& what)
{
    switch (k) {
    case ErrorKind::usage: throw UsageError(what);
    case ErrorKind::numeric: throw NumericError(what);
    case ErrorKind::data: break;
    }
    throw DataError(what);
}

inline nlohmann::json seed_json(const SeedCandidate& c, const Volume3D& vol)
{
    const Vec3 w = vol.world(c.point.x, c.point.y, c.point.z);
    return {{"x", c.point.x},          {"y", c.point.y},   {"z", c.point.z},
            {"voxel", {c.voxel.i, c.voxel.j, c.voxel.k}},  {"world_mm", {w.x, w.y, w.z}},
            {"frangi", c.frangi},      {"gf", c.gf},       {"intensity", c.intensity},
            {"accepted", c.accepted}};
}

inline void write_seeds_jsonl(const std::filesystem::path& path, const std::vector<SeedCandidate>& c,
                              const Volume3D& vol)
{
    std::ofstream os(path);
    if (!os)
        throw DataError("cannot write " + path.string());
    for (const SeedCandidate& s : c)
        os << seed_json(s, vol).dump() << '\n';
    if (!os)
        throw DataError("write failed: " + path.string());
}

inline double polyline_length(const std::vector<Vec3>& p)
{
    double s = 0.0;
    for (std::size_t n = 1; n < p.size(); ++n)
        s += distance(p[n - 1], p[n]);
    return s;
}

inline nlohmann::json pass_json(const PropagationResult& r)
{
    nlohmann::json slices = nlohmann::json::array();
    for (const SliceLog& s : r.slices)
        slices.push_back({{"slice", s.slice},
                          {"iterations", s.iterations},
                          {"converged", s.converged},
                          {"area", s.area},
                          {"contours", s.contours},
                          {"captured", s.captured}});
    return {{"stop_reason", r.stop_reason}, {"slices", slices}};
}

inline void write_segment_log(const std::filesystem::path& path, const SegmentationResult& s)
{
    std::ofstream os(path);
    if (!os)
        throw DataError("cannot write " + path.string());
    os << "direction,slice,iterations,converged,area,contours,captured\n";
    for (const auto* r : {&s.forward, &s.backward})
        for (const SliceLog& l : r->slices)
            os << (r == &s.forward ? "forward" : "backward") << ',' << l.slice << ',' << l.iterations << ','
               << (l.converged ? 1 : 0) << ',' << l.area << ',' << l.contours << ',' << l.captured << '\n';
    os << "# forward stop: " << s.forward.stop_reason << '\n' << "# backward stop: " << s.backward.stop_reason << '\n';
    if (!os)
        throw DataError("write failed: " + path.string());
}

} // namespace detail

/// Blood model, vesselness, seeds, segmentation, skeleton and CPR in turn.
/// Every intermediate lands in `output_dir` and is listed in the report. A
/// stage failure writes the report with the failing stage, then rethrows with
/// the same error kind.
inline RunReport run_pipeline(const PipelineConfig& cfg)
{
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;
    cfg.validate();
    if (cfg.input.empty())
        throw UsageError("pipeline: no input volume given");
    const fs::path out(cfg.output_dir);
    RunReport rep;
    for (const ConfigField& f : config_fields())
        rep.put("config", f.key, f.get(cfg));

    std::string stage = "setup";
    auto t0 = clock::now();
    auto done = [&](const std::string& name) {
        const auto t1 = clock::now();
        rep.timing(name, std::chrono::duration<double>(t1 - t0).count());
        t0 = t1;
    };
    auto path_for = [&](const std::string& name) {
        rep.artifact(name);
        return out / name;
    };
    auto save_mhd = [&](const auto& grid, const std::string& stem) {
        save_volume(grid, path_for(stem + ".mhd"));
        rep.artifact(stem + ".raw");
    };

    try {
        fs::create_directories(out);

        stage = "load";
        const Volume3D vol = load_volume(cfg.input);
        rep.put("input", "dims", {vol.nx(), vol.ny(), vol.nz()});
        rep.put("input", "spacing", {vol.spacing().x, vol.spacing().y, vol.spacing().z});
        done(stage);

        stage = "blood_model";
        BinaryMask aorta;
        bool have_aorta = false;
        BloodIntensityModel bm;
        if (cfg.blood_mu) {
            bm = make_blood_model(*cfg.blood_mu, *cfg.blood_sigma);
        } else {
            aorta = detect_aorta(vol, cfg.aorta);
            have_aorta = true;
            save_mhd(aorta, "aorta_mask");
            bm = estimate_blood_model(vol, aorta, cfg.bin_width);
        }
        const nlohmann::json bj{{"mu", bm.mu},   {"sigma", bm.sigma},       {"lo", bm.lo},
                                {"hi", bm.hi},   {"residual", bm.residual}, {"source", cfg.blood_mu ? "manual" : "aorta"}};
        {
            std::ofstream os(path_for("blood_model.json"));
            os << bj.dump(2) << '\n';
            if (!os)
                throw DataError("cannot write blood_model.json");
        }
        for (const auto& [k, v] : bj.items())
            rep.put("blood_model", k, v);
        const double lo = cfg.hu_lo.value_or(bm.lo), hi = cfg.hu_hi.value_or(bm.hi);
        rep.put("blood_model", "gate", {lo, hi});
        done(stage);

        stage = "vesselness";
        VesselnessField vf = multiscale_vesselness(vol, cfg.frangi);
        if (cfg.edge_suppress)
            vf = suppress_edges(vf, edge_measure(vol, cfg.edge_scale, cfg.edge_gain, cfg.frangi.gamma),
                                *cfg.edge_suppress);
        save_mhd(vf.score, "vesselness");
        rep.put("vesselness", "max", *std::max_element(vf.score.values().begin(), vf.score.values().end()));
        done(stage);

        stage = "seeds";
        Index3 seed{};
        if (cfg.seed) {
            if (!vol.contains(cfg.seed->i, cfg.seed->j, cfg.seed->k))
                throw UsageError("seed voxel outside the volume");
            seed = *cfg.seed;
            rep.put("seeds", "source", "manual");
        } else {
            SeedParams sp = cfg.seeds;
            sp.v_t = cfg.vt.value_or(bm.lo);
            rep.put("seeds", "source", "auto");
            rep.put("seeds", "v_t", sp.v_t);
            rep.put("seeds", "reference_slice", select_reference_slice(vol.nz(), sp.cr));
            std::vector<SeedCandidate> cands;
            auto record = [&] {
                detail::write_seeds_jsonl(path_for("seeds.jsonl"), cands, vol);
                nlohmann::json cj = nlohmann::json::array();
                for (const SeedCandidate& c : cands)
                    cj.push_back(detail::seed_json(c, vol));
                rep.put("seeds", "candidates", cj);
                rep.put("seeds", "accepted", accepted_only(cands).size());
            };
            try {
                cands = detect_seeds(vol, vf, sp);
            } catch (const NoSeedError& e) {
                cands = e.candidates();
                record();
                throw;
            }
            record();
            seed = accepted_only(cands).front().voxel;
        }
        rep.put("seeds", "seed", {seed.i, seed.j, seed.k});
        done(stage);

        stage = "segmentation";
        PropagationParams pp = cfg.propagation;
        pp.lo = lo;
        pp.hi = hi;
        const SegmentationResult seg = segment_tree(vol, &vf.score, seed, pp, have_aorta ? &aorta : nullptr);
        save_mhd(seg.mask, "mask");
        detail::write_segment_log(path_for("segment_log.csv"), seg);
        const auto voxels = static_cast<std::size_t>(
            std::count_if(seg.mask.values().begin(), seg.mask.values().end(), [](std::uint8_t v) { return v != 0; }));
        rep.put("segmentation", "voxel_count", voxels);
        rep.put("segmentation", "volume_mm3", voxels * vol.voxel_volume());
        rep.put("segmentation", "component_count", connected_components(seg.mask).count());
        rep.put("segmentation", "forward", detail::pass_json(seg.forward));
        rep.put("segmentation", "backward", detail::pass_json(seg.backward));
        if (voxels == 0)
            throw DataError("segmentation produced an empty mask");
        done(stage);

        stage = "skeleton";
        const Centreline cl = extract_centreline(seg.mask, cfg.centreline);
        write_centreline_csv(path_for("centreline.csv").string(), cl);
        nlohmann::json branches = nlohmann::json::array();
        for (std::size_t b = 0; b < cl.branches.size(); ++b) {
            const auto& br = cl.branches[b];
            branches.push_back({{"id", b},
                                {"parent", br.parent},
                                {"attach_index", br.attach_index},
                                {"points", br.points.size()},
                                {"length_mm", detail::polyline_length(br.points)}});
        }
        rep.put("centreline", "branches", branches);
        done(stage);

        stage = "cpr";
        nlohmann::json cj = nlohmann::json::array();
        for (std::size_t b = 0; b < cl.branches.size(); ++b) {
            const StraightenedVolume sv = cpr_straighten(vol, cl.branches[b], cfg.cpr);
            save_mhd(sv.volume, "cpr_branch" + std::to_string(b));
            cj.push_back({{"branch", b},
                          {"dims", {sv.volume.nx(), sv.volume.ny(), sv.volume.nz()}},
                          {"step_mm", sv.step}});
        }
        rep.put("cpr", "volumes", cj);
        done(stage);

        rep.put("run", "status", "ok");
        rep.write(path_for("report.json").string());
        return rep;
    } catch (const Error& e) {
        rep.put("run", "status", "failed");
        rep.put("run", "failed_stage", stage);
        rep.put("run", "error", e.what());
        try {
            fs::create_directories(out);
            rep.write(path_for("report.json").string());
        } catch (const std::exception&) {
        }
        detail::throw_kind(e.kind(), "stage " + stage + ": " + e.what());
    } catch (const fs::filesystem_error& e) {
        throw DataError("stage " + stage + ": " + e.what());
    }
}

} // namespace tubeseg
