#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "tubeseg/centreline_io.hpp"
#include "tubeseg/cpr.hpp"
#include "tubeseg/phantom.hpp"

using namespace tubeseg;

namespace {

std::vector<Vec3> arc_xy(double r, double turn, int n)
{
    std::vector<Vec3> p;
    for (int q = 0; q < n; ++q) {
        const double a = turn * q / (n - 1);
        p.push_back({r * std::cos(a), r * std::sin(a), 0.0});
    }
    return p;
}

std::vector<Vec3> helix_points(double r, double pitch, double turns, int n)
{
    std::vector<Vec3> p;
    for (int q = 0; q < n; ++q) {
        const double a = 2.0 * std::numbers::pi * turns * q / (n - 1);
        p.push_back({r * std::cos(a), r * std::sin(a), pitch * a / (2.0 * std::numbers::pi)});
    }
    return p;
}

void expect_orthonormal(const std::vector<PathFrame>& f)
{
    for (const PathFrame& x : f) {
        EXPECT_NEAR(norm(x.t), 1.0, 1e-9);
        EXPECT_NEAR(norm(x.u), 1.0, 1e-9);
        EXPECT_NEAR(norm(x.v), 1.0, 1e-9);
        EXPECT_NEAR(dot(x.t, x.u), 0.0, 1e-9);
        EXPECT_NEAR(dot(x.t, x.v), 0.0, 1e-9);
        EXPECT_NEAR(dot(x.u, x.v), 0.0, 1e-9);
        EXPECT_NEAR(dot(cross(x.t, x.u), x.v), 1.0, 1e-9); // right-handed
    }
}

// z tube that runs through the whole volume, so every plane cuts the same disc.
Phantom through_tube()
{
    PhantomSpec s;
    s.dims = {40, 40, 60};
    s.spacing = {0.5, 0.5, 0.5};
    s.center = Vec3{9.75, 9.75, 14.75};
    s.length = 30.0; // touches both z faces
    s.radius = 2.0;
    return generate(s);
}

} // namespace

// ---- rm_frames --------------------------------------------------------------

TEST(RmFrames, StraightLineFrameIsConstant)
{
    std::vector<Vec3> p;
    const Vec3 d = normalized(Vec3{1.0, -2.0, 0.5});
    for (int q = 0; q < 30; ++q)
        p.push_back(Vec3{3.0, 1.0, -2.0} + (0.4 * q) * d);
    const auto f = rm_frames(p);
    for (const PathFrame& x : f) {
        EXPECT_NEAR(distance(x.t, d), 0.0, 1e-12);
        EXPECT_NEAR(distance(x.u, f[0].u), 0.0, 1e-12);
        EXPECT_NEAR(distance(x.v, f[0].v), 0.0, 1e-12);
    }
}

TEST(RmFrames, PlanarArcHasNoAxialSpin)
{
    const double turn = 0.75 * std::numbers::pi;
    const auto p = arc_xy(12.0, turn, 200);
    const auto f = rm_frames(p, Vec3{0.0, 0.0, 1.0});
    for (const PathFrame& x : f)
        EXPECT_NEAR(std::abs(x.u.z), 1.0, 1e-3);
    // v lies in the plane and turns with the tangent.
    const double ang = std::acos(std::clamp(dot(f.front().v, f.back().v), -1.0, 1.0));
    const double tang = std::acos(std::clamp(dot(f.front().t, f.back().t), -1.0, 1.0));
    EXPECT_NEAR(ang, tang, 1e-9);
    EXPECT_NEAR(tang, turn, 0.02);
}

TEST(RmFrames, OrthonormalOnRandomCurves)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec3> p{{0.0, 0.0, 0.0}};
        Vec3 dir{1.0, 0.0, 0.0};
        for (int q = 0; q < 80; ++q) {
            dir = normalized(dir + 0.3 * Vec3{g(rng), g(rng), g(rng)});
            p.push_back(p.back() + 0.5 * dir);
        }
        expect_orthonormal(rm_frames(p));
    }
}

TEST(RmFrames, HelixTwistPerStepIsSmall)
{
    const auto f = rm_frames(helix_points(5.0, 12.0, 2.0, 800));
    expect_orthonormal(f);
    // Rotation about the tangent between neighbours is second order in the step.
    for (std::size_t q = 0; q + 1 < f.size(); ++q)
        EXPECT_LE(std::abs(dot(f[q + 1].u, f[q].v) - dot(f[q + 1].v, f[q].u)) * 0.5, 1e-3);
}

TEST(RmFrames, Errors)
{
    EXPECT_THROW(rm_frames({{0.0, 0.0, 0.0}}), DataError);
    EXPECT_THROW(rm_frames({{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}}), DataError);
    EXPECT_THROW(rm_frames({{0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}}, Vec3{0.0, 0.0, 2.0}), UsageError);
}

// ---- cpr_straighten ---------------------------------------------------------

TEST(Cpr, DefaultPlaneGridIs81By81)
{
    EXPECT_EQ(CprParams{}.size(), 81);
    const Volume3D vol(Dims3{8, 8, 8}, {1.0, 1.0, 1.0}, {}, 7.0);
    const auto s = cpr_straighten(vol, std::vector<Vec3>{{3.0, 3.0, 1.0}, {3.0, 3.0, 2.0}, {3.0, 3.0, 3.0}});
    EXPECT_EQ(s.volume.nx(), 81);
    EXPECT_EQ(s.volume.ny(), 81);
    EXPECT_EQ(s.volume.nz(), 3);
    EXPECT_EQ(s.frames.size(), 3u);
    EXPECT_DOUBLE_EQ(s.volume.spacing().x, 0.25);
    EXPECT_DOUBLE_EQ(s.volume.spacing().y, 0.25);
    EXPECT_DOUBLE_EQ(s.step, 1.0);
}

TEST(Cpr, StraightTubeSlicesAreTheSameDisc)
{
    const Phantom ph = through_tube();
    const Centreline c = extract_centreline(ph.truth.mask);
    ASSERT_EQ(c.branches.size(), 1u);
    const auto s = cpr_straighten(ph.volume, c.branches[0]);
    const int n = s.volume.nx(), nk = s.volume.nz();
    const double contrast = 495.0 - 40.0;
    double worst = 0.0;
    for (int a = 0; a < nk; ++a)
        for (int b = a + 1; b < nk; b += 3) {
            double ss = 0.0;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double d = s.volume(i, j, a) - s.volume(i, j, b);
                    ss += d * d;
                }
            worst = std::max(worst, std::sqrt(ss / (n * n)));
        }
    EXPECT_LE(worst, 0.02 * contrast);
    // The disc is centred: the middle sample is lumen, the corner background.
    EXPECT_NEAR(s.volume(n / 2, n / 2, nk / 2), 495.0, 1.0);
    EXPECT_NEAR(s.volume(0, 0, nk / 2), 40.0, 1.0);
}

TEST(Cpr, HelixStraightenedLengthMatchesArc)
{
    PhantomSpec spec;
    spec.kind = PhantomKind::helix;
    spec.dims = {64, 64, 96};
    spec.radius = 1.5;
    const Phantom ph = generate(spec);
    const Centreline c = extract_centreline(ph.truth.mask);
    ASSERT_EQ(c.branches.size(), 1u);
    CprParams p;
    p.half_extent = 4.0;
    const auto s = cpr_straighten(ph.volume, c.branches[0], p);
    // Helix length 0.8 * 48 mm along z; arc = len * sqrt(1 + (2 pi R / pitch)^2).
    const double len = 0.8 * 48.0;
    const double arc = len * std::hypot(1.0, 2.0 * std::numbers::pi * 5.0 / 12.0);
    EXPECT_NEAR(s.volume.nz() * s.step, arc, 0.03 * arc);
}

TEST(Cpr, SamplesMatchTrilinearAtFramePointsExactly)
{
    PhantomSpec spec;
    spec.kind = PhantomKind::helix;
    spec.dims = {48, 48, 64};
    spec.noise = 30.0;
    const Phantom ph = generate(spec);
    const auto pts = helix_points(4.0, 10.0, 1.2, 150);
    std::vector<Vec3> shifted;
    for (const Vec3& q : pts)
        shifted.push_back(q + Vec3{12.0, 12.0, 4.0});
    const auto s = cpr_straighten(ph.volume, shifted);
    const int n = s.volume.nx();
    std::mt19937_64 rng(9);
    for (int t = 0; t < 1000; ++t) {
        const int i = static_cast<int>(rng() % n), j = static_cast<int>(rng() % n),
                  k = static_cast<int>(rng() % s.volume.nz());
        const PathFrame& f = s.frames[k];
        const Vec3 w = f.center + ((i - 0.5 * (n - 1)) * 0.25) * f.u + ((j - 0.5 * (n - 1)) * 0.25) * f.v;
        ASSERT_EQ(s.volume(i, j, k), trilinear_sample(ph.volume, w));
    }
}

TEST(Cpr, InvalidParamsAreUsageErrors)
{
    const Volume3D vol(Dims3{4, 4, 4});
    CprParams p;
    p.spacing = 0.0;
    EXPECT_THROW(cpr_straighten(vol, std::vector<Vec3>{{0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}}, p), UsageError);
}

// ---- centreline CSV ---------------------------------------------------------

TEST(CentrelineCsv, RoundTripIsExact)
{
    PhantomSpec spec;
    spec.kind = PhantomKind::y_bifurcation;
    spec.dims = {64, 64, 96};
    spec.radius = 2.0;
    spec.branch_radius = 1.5;
    const Centreline c = extract_centreline(generate(spec).truth.mask);
    std::stringstream ss;
    write_centreline_csv(ss, c);
    EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "branch_id,point_index,x_mm,y_mm,z_mm,radius_mm");
    const Centreline r = read_centreline_csv(ss);
    ASSERT_EQ(r.branches.size(), c.branches.size());
    for (std::size_t b = 0; b < c.branches.size(); ++b) {
        ASSERT_EQ(r.branches[b].points.size(), c.branches[b].points.size());
        for (std::size_t n = 0; n < c.branches[b].points.size(); ++n) {
            EXPECT_EQ(r.branches[b].points[n].x, c.branches[b].points[n].x);
            EXPECT_EQ(r.branches[b].points[n].z, c.branches[b].points[n].z);
            EXPECT_EQ(r.branches[b].radii[n], c.branches[b].radii[n]);
        }
        EXPECT_EQ(r.branches[b].parent, c.branches[b].parent);
        EXPECT_EQ(r.branches[b].attach_index, c.branches[b].attach_index);
    }
}

TEST(CentrelineCsv, MalformedInputIsDataError)
{
    for (const char* text : {"", "x,y\n", "branch_id,point_index,x_mm,y_mm,z_mm,radius_mm\n0,0,1,2\n",
                             "branch_id,point_index,x_mm,y_mm,z_mm,radius_mm\n1,0,1,2,3,4\n",
                             "branch_id,point_index,x_mm,y_mm,z_mm,radius_mm\n0,1,1,2,3,4\n",
                             "branch_id,point_index,x_mm,y_mm,z_mm,radius_mm\n"}) {
        std::stringstream ss(text);
        EXPECT_THROW(read_centreline_csv(ss), DataError) << text;
    }
}
