#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "tubeseg/tubeseg.hpp"

using namespace tubeseg;
namespace fs = std::filesystem;

namespace {

std::string flag_for(const std::string& key)
{
    std::string f = key;
    for (char& c : f)
        if (c == '_')
            c = '-';
    return "--" + f;
}

/// Flags that map onto config keys. Values stay text and go through the
/// config parser, so the CLI and config files share one validator.
class ConfigFlags {
public:
    explicit ConfigFlags(CLI::App* app) : app_(app) { app->add_option("--config", file_, "key = value config file"); }

    void bind(const std::string& key, const std::string& names = "")
    {
        const ConfigField* f = find_config_field(key);
        if (!f)
            throw std::logic_error("no config key " + key);
        Slot& s = values_[key];
        s.opt = app_->add_option(names.empty() ? flag_for(key) : names, s.text, f->help);
    }

    void bind(std::initializer_list<const char*> keys)
    {
        for (const char* k : keys)
            bind(k);
    }

    void bind_all()
    {
        for (const ConfigField& f : config_fields()) {
            if (f.key == "input")
                bind(f.key, "-i,--input");
            else if (f.key == "output_dir")
                bind(f.key, "-o,--output-dir");
            else
                bind(f.key);
        }
    }

    /// Overrides derived from non-config flags; applied before the bound flags.
    void extra(const std::string& key, const std::string& value) { extra_.emplace_back(key, value); }

    PipelineConfig resolve() const
    {
        std::vector<std::pair<std::string, std::string>> ov = extra_;
        for (const ConfigField& f : config_fields()) {
            const auto it = values_.find(f.key);
            if (it != values_.end() && it->second.opt->count() > 0)
                ov.emplace_back(f.key, it->second.text);
        }
        return file_.empty() ? parse_config_text("", ov) : load_config(file_, ov);
    }

private:
    struct Slot {
        std::string text;
        CLI::Option* opt = nullptr;
    };
    CLI::App* app_;
    std::string file_;
    std::map<std::string, Slot> values_;
    std::vector<std::pair<std::string, std::string>> extra_;
};

std::pair<std::string, std::string> split_pair(const std::string& s, const std::string& what)
{
    const auto c = s.find(',');
    if (c == std::string::npos)
        throw UsageError(what + ": expected lo,hi");
    return {s.substr(0, c), s.substr(c + 1)};
}

VesselnessField compute_vesselness(const Volume3D& vol, const PipelineConfig& c, const std::string& file)
{
    if (!file.empty()) {
        VesselnessField vf{load_volume(file), vol.like<double>(c.frangi.scales.front())};
        if (!vf.score.same_geometry(vol))
            throw DataError("vesselness volume geometry differs from the input");
        return vf;
    }
    VesselnessField vf = multiscale_vesselness(vol, c.frangi);
    if (c.edge_suppress)
        vf = suppress_edges(vf, edge_measure(vol, c.edge_scale, c.edge_gain, c.frangi.gamma), *c.edge_suppress);
    return vf;
}

void require_input(const PipelineConfig& c)
{
    if (c.input.empty())
        throw UsageError("no input volume given (--input)");
}

void make_parent(const fs::path& p)
{
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Tubular structure segmentation, centreline extraction and curved planar reformation"};
    app.require_subcommand(1);
    std::function<void()> action;

    // ---- phantom
    auto* ph = app.add_subcommand("phantom", "Write a synthetic volume, its truth mask and truth centreline");
    PhantomSpec spec;
    std::string ph_out, ph_kind = "tube";
    std::vector<int> ph_dims;
    std::vector<double> ph_spacing;
    ph->add_option("-o,--out", ph_out, "output stem: <stem>.mhd, <stem>_truth.mhd, <stem>_centreline.csv")
        ->required();
    ph->add_option("--kind", ph_kind, "tube, helix, y_bifurcation, ball, plate or aorta_plus_coronary");
    ph->add_option("--radius", spec.radius, "tube or ball radius, plate half thickness (mm)");
    ph->add_option("--length", spec.length, "main axis length (mm), 0 = 80% of the extent");
    ph->add_option("--fg", spec.foreground, "foreground intensity");
    ph->add_option("--bg", spec.background, "background intensity");
    ph->add_option("--noise", spec.noise, "Gaussian noise sigma");
    ph->add_option("--ramp", spec.ramp, "intensity ramp factor along z");
    ph->add_option("--seed", spec.seed, "noise RNG seed");
    ph->add_option("--dims", ph_dims, "n or nx,ny,nz")->delimiter(',')->expected(1, 3);
    ph->add_option("--spacing", ph_spacing, "s or sx,sy,sz (mm)")->delimiter(',')->expected(1, 3);
    ph->callback([&] {
        action = [&] {
            spec.kind = phantom_kind_from_string(ph_kind);
            if (ph_dims.size() == 1)
                spec.dims = {ph_dims[0], ph_dims[0], ph_dims[0]};
            else if (ph_dims.size() == 3)
                spec.dims = {ph_dims[0], ph_dims[1], ph_dims[2]};
            else if (!ph_dims.empty())
                throw UsageError("--dims: expected 1 or 3 values");
            if (ph_spacing.size() == 1)
                spec.spacing = {ph_spacing[0], ph_spacing[0], ph_spacing[0]};
            else if (ph_spacing.size() == 3)
                spec.spacing = {ph_spacing[0], ph_spacing[1], ph_spacing[2]};
            else if (!ph_spacing.empty())
                throw UsageError("--spacing: expected 1 or 3 values");
            const Phantom p = generate(spec);
            make_parent(ph_out);
            save_volume(p.volume, ph_out + ".mhd");
            save_volume(p.truth.mask, ph_out + "_truth.mhd");
            // Radius column: distance to the truth boundary along the axis.
            const Volume3D D = distance_field(p.truth.mask);
            Centreline c;
            for (const auto& line : p.truth.centrelines) {
                CentrelineBranch b;
                b.points = line;
                for (const Vec3& q : line)
                    b.radii.push_back(trilinear_sample(D, q));
                c.branches.push_back(b);
            }
            write_centreline_csv(ph_out + "_centreline.csv", c);
        };
    });

    // ---- vesselness
    auto* ve = app.add_subcommand("vesselness", "Multiscale Frangi vesselness");
    ConfigFlags ve_cfg(ve);
    std::string ve_out, ve_scale_out;
    ve_cfg.bind("input", "-i,--input");
    ve->add_option("-o,--out", ve_out, "vesselness volume (.mhd)")->required();
    ve->add_option("--scale-out", ve_scale_out, "best-scale volume (.mhd)");
    ve_cfg.bind({"scales", "alpha", "beta", "c", "gamma", "edge_suppress", "edge_gain", "edge_scale"});
    ve->callback([&] {
        action = [&] {
            const PipelineConfig c = ve_cfg.resolve();
            require_input(c);
            const Volume3D vol = load_volume(c.input);
            const VesselnessField vf = compute_vesselness(vol, c, "");
            make_parent(ve_out);
            save_volume(vf.score, ve_out);
            if (!ve_scale_out.empty())
                save_volume(vf.best_scale, ve_scale_out);
        };
    });

    // ---- seeds
    auto* se = app.add_subcommand("seeds", "Automatic seed detection on the reference slice");
    ConfigFlags se_cfg(se);
    std::string se_jsonl, se_ves;
    bool se_auto_blood = false;
    se_cfg.bind("input", "-i,--input");
    se->add_option("--jsonl", se_jsonl, "write every candidate as JSON lines");
    se->add_option("--vesselness", se_ves, "precomputed vesselness volume (.mhd)");
    se->add_flag("--auto-blood", se_auto_blood, "take the intensity floor from the aorta blood model");
    se_cfg.bind({"cr", "tf", "tgf", "vt", "plane_gap", "plane_half_extent", "plane_spacing", "n_rays", "ray_trim",
                 "ray_r_max", "ray_step", "gf_k", "ray_pairing", "gf_smoothing", "roi_r_min", "roi_r_max", "scales",
                 "alpha", "beta", "c", "gamma"});
    se->callback([&] {
        action = [&] {
            const PipelineConfig c = se_cfg.resolve();
            require_input(c);
            const Volume3D vol = load_volume(c.input);
            SeedParams sp = c.seeds;
            if (c.vt)
                sp.v_t = *c.vt;
            else if (se_auto_blood)
                sp.v_t = estimate_blood_model(vol, c.aorta, c.bin_width).lo;
            // Only the reference slice is scored, so vesselness is needed there alone.
            const int k = select_reference_slice(vol.nz(), sp.cr);
            const VesselnessField vf =
                se_ves.empty() ? multiscale_vesselness_slab(vol, c.frangi, k, k + 1) : compute_vesselness(vol, c, se_ves);
            std::vector<SeedCandidate> cands;
            try {
                cands = detect_seeds(vol, vf, sp);
            } catch (const NoSeedError& e) {
                if (!se_jsonl.empty())
                    detail::write_seeds_jsonl(se_jsonl, e.candidates(), vol);
                throw;
            }
            if (!se_jsonl.empty())
                detail::write_seeds_jsonl(se_jsonl, cands, vol);
            for (const SeedCandidate& s : accepted_only(cands))
                std::printf("%.3f %.3f %.3f %.6g %.6g %.6g\n", s.point.x, s.point.y, s.point.z, s.frangi, s.gf,
                            s.intensity);
        };
    });

    // ---- blood-model
    auto* bm = app.add_subcommand("blood-model", "Aorta blood intensity model");
    ConfigFlags bm_cfg(bm);
    std::string bm_mask;
    bm_cfg.bind("input", "-i,--input");
    bm_cfg.bind("blood_mu", "--mu");
    bm_cfg.bind("blood_sigma", "--sigma");
    bm->add_option("--mask-out", bm_mask, "write the aorta mask (.mhd)");
    bm_cfg.bind({"bin_width", "aorta_z_band", "aorta_threshold", "aorta_r_min", "aorta_r_max", "aorta_max_drift",
                 "aorta_min_support", "aorta_inset"});
    bm->callback([&] {
        action = [&] {
            const PipelineConfig c = bm_cfg.resolve();
            BloodIntensityModel m;
            if (c.blood_mu) {
                m = make_blood_model(*c.blood_mu, *c.blood_sigma);
            } else {
                require_input(c);
                const Volume3D vol = load_volume(c.input);
                const BinaryMask aorta = detect_aorta(vol, c.aorta);
                if (!bm_mask.empty())
                    save_volume(aorta, bm_mask);
                m = estimate_blood_model(vol, aorta, c.bin_width);
            }
            std::printf("%.6g %.6g %.6g %.6g %.6g\n", m.mu, m.sigma, m.lo, m.hi, m.residual);
        };
    });

    // ---- segment
    auto* sg = app.add_subcommand("segment", "Bidirectional slice-by-slice level set segmentation");
    ConfigFlags sg_cfg(sg);
    std::string sg_out, sg_log, sg_ves, sg_gate;
    bool sg_auto_seed = false, sg_auto_blood = false;
    sg_cfg.bind("input", "-i,--input");
    sg->add_option("-o,--out", sg_out, "mask (.mhd)")->required();
    sg->add_option("--log", sg_log, "run log (CSV), default <out stem>_log.csv");
    sg->add_option("--vesselness", sg_ves, "precomputed vesselness volume (.mhd)");
    sg_cfg.bind("seed", "--seed");
    sg->add_flag("--auto-seed", sg_auto_seed, "detect the seed automatically");
    auto* gate_opt = sg->add_option("--hu-gate", sg_gate, "HU gate lo,hi");
    sg->add_flag("--auto-blood", sg_auto_blood, "HU gate from the aorta blood model")->excludes(gate_opt);
    sg_cfg.bind({"energy", "ball_radius", "lambda", "dt", "eps", "max_iters", "tol", "window", "band",
                 "reinit_every", "intensity_scale", "g_sigma", "g_contrast", "balloon", "t_v", "capture_t_v",
                 "capture_radius", "init_radius", "dilation", "aorta_overlap", "capture", "cr", "tf", "tgf", "vt",
                 "scales", "alpha", "beta", "c", "gamma"});
    sg->callback([&] {
        action = [&] {
            if (!gate_opt->empty()) {
                const auto [lo, hi] = split_pair(sg_gate, "--hu-gate");
                sg_cfg.extra("hu_lo", lo);
                sg_cfg.extra("hu_hi", hi);
            }
            const PipelineConfig c = sg_cfg.resolve();
            require_input(c);
            if (c.seed.has_value() == sg_auto_seed)
                throw UsageError("segment: give exactly one of --seed and --auto-seed");
            const Volume3D vol = load_volume(c.input);
            PropagationParams pp = c.propagation;
            BinaryMask aorta;
            std::optional<BloodIntensityModel> blood;
            if (sg_auto_blood) {
                aorta = detect_aorta(vol, c.aorta);
                blood = estimate_blood_model(vol, aorta, c.bin_width);
                pp.lo = blood->lo;
                pp.hi = blood->hi;
            } else if (c.hu_lo) {
                pp.lo = *c.hu_lo;
                pp.hi = *c.hu_hi;
            }
            const VesselnessField vf = compute_vesselness(vol, c, sg_ves);
            Index3 seed{};
            if (c.seed) {
                if (!vol.contains(c.seed->i, c.seed->j, c.seed->k))
                    throw UsageError("segment: seed voxel outside the volume");
                seed = *c.seed;
            } else {
                SeedParams sp = c.seeds;
                sp.v_t = c.vt ? *c.vt : (blood ? blood->lo : pp.lo);
                seed = accepted_only(detect_seeds(vol, vf, sp)).front().voxel;
            }
            const SegmentationResult r = segment_tree(vol, &vf.score, seed, pp, blood ? &aorta : nullptr);
            make_parent(sg_out);
            save_volume(r.mask, sg_out);
            const fs::path out(sg_out);
            detail::write_segment_log(
                sg_log.empty() ? out.parent_path() / (out.stem().string() + "_log.csv") : fs::path(sg_log), r);
        };
    });

    // ---- skeleton
    auto* sk = app.add_subcommand("skeleton", "Centreline of a binary mask");
    ConfigFlags sk_cfg(sk);
    std::string sk_out;
    sk_cfg.bind("input", "-i,--input");
    sk->add_option("-o,--out", sk_out, "centreline (CSV)")->required();
    sk_cfg.bind({"n_branches", "exponent", "min_branch_length", "medialness"});
    sk_cfg.bind("centreline_step", "--step");
    sk->callback([&] {
        action = [&] {
            const PipelineConfig c = sk_cfg.resolve();
            require_input(c);
            const Centreline cl = extract_centreline(load_mask(c.input), c.centreline);
            make_parent(sk_out);
            write_centreline_csv(sk_out, cl);
        };
    });

    // ---- cpr
    auto* cp = app.add_subcommand("cpr", "Straightened curved planar reformation along each branch");
    ConfigFlags cp_cfg(cp);
    std::string cp_csv, cp_out;
    int cp_branch = -1;
    cp_cfg.bind("input", "-i,--input");
    cp->add_option("--centreline", cp_csv, "centreline (CSV)")->required();
    cp->add_option("-o,--out", cp_out, "output stem: <stem>_branch<b>.mhd")->required();
    cp->add_option("--branch", cp_branch, "only this branch");
    cp_cfg.bind("cpr_half_extent", "--half-extent");
    cp_cfg.bind("cpr_spacing", "--spacing");
    cp_cfg.bind("threads");
    cp->callback([&] {
        action = [&] {
            const PipelineConfig c = cp_cfg.resolve();
            require_input(c);
            const Volume3D vol = load_volume(c.input);
            const Centreline cl = read_centreline_csv(cp_csv);
            if (cp_branch >= static_cast<int>(cl.branches.size()))
                throw UsageError("cpr: no branch " + std::to_string(cp_branch));
            make_parent(cp_out);
            for (std::size_t b = 0; b < cl.branches.size(); ++b)
                if (cp_branch < 0 || static_cast<int>(b) == cp_branch)
                    save_volume(cpr_straighten(vol, cl.branches[b], c.cpr).volume,
                                cp_out + "_branch" + std::to_string(b) + ".mhd");
        };
    });

    // ---- pipeline
    auto* pl = app.add_subcommand("pipeline", "Full chain with a run report");
    ConfigFlags pl_cfg(pl);
    pl_cfg.bind_all();
    pl->callback([&] {
        action = [&] {
            const RunReport r = run_pipeline(pl_cfg.resolve());
            std::printf("report: %s\n", (fs::path(r.doc()["config"]["output_dir"].get<std::string>()) / "report.json")
                                            .string()
                                            .c_str());
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    try {
        action();
        return 0;
    } catch (const Error& e) {
        std::cerr << "tubeseg: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "tubeseg: " << e.what() << '\n';
        return 2;
    }
}
