#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tubeseg/blood_model.hpp"
#include "tubeseg/phantom.hpp"
#include "tubeseg/propagation.hpp"

using namespace tubeseg;

namespace {

PropagationParams gated_params()
{
    PropagationParams p;
    const auto bm = make_blood_model(495.0, 42.0);
    p.lo = bm.lo;
    p.hi = bm.hi;
    return p;
}

// z tube covering slices 10..90 of a 101-slice volume.
Phantom z_tube(double noise = 20.0, std::uint64_t seed = 1)
{
    PhantomSpec s;
    s.dims = {40, 40, 101};
    s.spacing = {0.5, 0.5, 0.5};
    s.center = Vec3{9.75, 9.75, 25.0};
    s.length = 40.0;
    s.radius = 2.0;
    s.noise = noise;
    s.seed = seed;
    return generate(s);
}

double dice(const BinaryMask& a, const BinaryMask& b, int k0 = 0, int k1 = -1)
{
    if (k1 < 0)
        k1 = a.nz() - 1;
    double inter = 0, sa = 0, sb = 0;
    for (int k = k0; k <= k1; ++k)
        for (int j = 0; j < a.ny(); ++j)
            for (int i = 0; i < a.nx(); ++i) {
                inter += (a(i, j, k) && b(i, j, k)) ? 1 : 0;
                sa += a(i, j, k) ? 1 : 0;
                sb += b(i, j, k) ? 1 : 0;
            }
    return sa + sb > 0 ? 2 * inter / (sa + sb) : 1.0;
}

std::size_t slice_count(const BinaryMask& m, int k)
{
    std::size_t n = 0;
    for (int j = 0; j < m.ny(); ++j)
        for (int i = 0; i < m.nx(); ++i)
            n += m(i, j, k) ? 1 : 0;
    return n;
}

} // namespace

TEST(AdjustMask, NoQualifyingPixelsIsIdentity)
{
    Mask2D m(30, 30, 0.5, 0.5);
    m(15, 15) = 1;
    const Image2D img(30, 30, 0.5, 0.5, 40.0);
    std::size_t added = 99;
    const Mask2D out = adjust_mask_for_branches(m, nullptr, img, 369, 621, 0.1, 3.0, &added);
    EXPECT_EQ(added, 0u);
    EXPECT_EQ(out.storage(), m.storage());
}

TEST(AdjustMask, RadiusAndVesselnessRules)
{
    Mask2D m(40, 40, 0.5, 0.5);
    m(10, 20) = 1;
    Image2D img(40, 40, 0.5, 0.5, 40.0);
    Image2D ves(40, 40, 0.5, 0.5, 0.5);
    img(16, 20) = 495; // 3 mm away
    img(17, 20) = 495; // 3.5 mm away
    img(10, 26) = 495; // 3 mm away, but not vessel-like
    ves(10, 26) = 0.05;
    const Mask2D out = adjust_mask_for_branches(m, &ves, img, 369, 621, 0.1, 3.0);
    EXPECT_TRUE(out(16, 20));
    EXPECT_FALSE(out(17, 20));
    EXPECT_FALSE(out(10, 26));
    EXPECT_TRUE(out(10, 20));
}

TEST(AdjustMask, SideBranchSeedsNextSlice)
{
    // Y phantom: at the first slice where a daughter separates from the
    // other, capturing around the previous slice's mask reaches both.
    PhantomSpec s;
    s.kind = PhantomKind::y_bifurcation;
    s.dims = {64, 64, 96};
    s.spacing = {0.5, 0.5, 0.5};
    const Phantom ph = generate(s);
    const auto vf = multiscale_vesselness(ph.volume, FrangiParams{});
    const int mid_i = 32;
    for (int k = 1; k < ph.volume.nz(); ++k) {
        const Mask2D prev = extract_axial_slice(ph.truth.mask, k - 1);
        const Mask2D cur = extract_axial_slice(ph.truth.mask, k);
        const auto cc = connected_components(cur);
        if (cc.count() != 2 || connected_components(prev).count() != 1)
            continue;
        const Image2D img = extract_axial_slice(ph.volume, k);
        const Image2D ves = extract_axial_slice(vf.score, k);
        const Mask2D init = adjust_mask_for_branches(dilate(prev, 0.5), &ves, img, 369, 621, 0.1, 3.0);
        bool left = false, right = false;
        for (int j = 0; j < init.nv(); ++j)
            for (int i = 0; i < init.nu(); ++i)
                if (init(i, j) && cur(i, j)) {
                    left = left || i < mid_i;
                    right = right || i > mid_i;
                }
        EXPECT_TRUE(left && right) << "slice " << k;
        return;
    }
    FAIL() << "no separation slice found";
}

TEST(SlicePropagate, ForwardAndBackwardFromMidSlice)
{
    const Phantom ph = z_tube();
    const PropagationParams p = gated_params();
    const auto fw = slice_propagate(ph.volume, nullptr, {20, 20, 50}, Direction::forward, p);
    const auto bw = slice_propagate(ph.volume, nullptr, {20, 20, 50}, Direction::backward, p);
    EXPECT_EQ(fw.stop_reason, "empty mask");
    EXPECT_EQ(bw.stop_reason, "empty mask");
    for (int k = 50; k <= 90; ++k)
        EXPECT_GE(dice(fw.mask, ph.truth.mask, k, k), 0.9) << "forward slice " << k;
    for (int k = 10; k <= 50; ++k)
        EXPECT_GE(dice(bw.mask, ph.truth.mask, k, k), 0.9) << "backward slice " << k;
    for (int k = 0; k < 50; ++k)
        EXPECT_EQ(slice_count(fw.mask, k), 0u);
    for (int k = 51; k < 101; ++k)
        EXPECT_EQ(slice_count(bw.mask, k), 0u);
    ASSERT_FALSE(fw.slices.empty());
    EXPECT_EQ(fw.slices.front().slice, 50);
}

TEST(SlicePropagate, SeedOnLastSlice)
{
    PhantomSpec s;
    s.dims = {40, 40, 40};
    s.spacing = {0.5, 0.5, 0.5};
    s.length = 19.5;
    s.center = Vec3{9.75, 9.75, 9.75};
    const Phantom ph = generate(s);
    const auto fw = slice_propagate(ph.volume, nullptr, {20, 20, 39}, Direction::forward, gated_params());
    ASSERT_EQ(fw.slices.size(), 1u);
    EXPECT_EQ(fw.stop_reason, "volume end");
    EXPECT_GT(slice_count(fw.mask, 39), 0u);
}

TEST(SlicePropagate, SeedOutsideGateIsError)
{
    const Phantom ph = z_tube(0.0);
    EXPECT_THROW(slice_propagate(ph.volume, nullptr, {2, 2, 50}, Direction::forward, gated_params()), DataError);
    EXPECT_THROW(slice_propagate(ph.volume, nullptr, {20, 20, 500}, Direction::forward, gated_params()), DataError);
}

TEST(SlicePropagate, BackwardStopsAtAorta)
{
    const Phantom ph = z_tube();
    BinaryMask aorta = ph.volume.like<std::uint8_t>(0);
    for (int k = 0; k < 30; ++k)
        for (int j = 10; j < 30; ++j)
            for (int i = 10; i < 30; ++i)
                aorta(i, j, k) = 1;
    const auto bw = slice_propagate(ph.volume, nullptr, {20, 20, 50}, Direction::backward, gated_params(), &aorta);
    EXPECT_EQ(bw.stop_reason, "joined aorta");
    EXPECT_EQ(bw.slices.back().slice, 29);
    EXPECT_EQ(slice_count(bw.mask, 29), 0u);
    EXPECT_GT(slice_count(bw.mask, 30), 0u);
}

TEST(SegmentTree, StraightTubeFromAnySeedSlice)
{
    const Phantom ph = z_tube();
    const PropagationParams p = gated_params();
    const auto ref = segment_tree(ph.volume, nullptr, {20, 20, 50}, p);
    EXPECT_GE(dice(ref.mask, ph.truth.mask), 0.9);
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> k(11, 89);
    for (int t = 0; t < 4; ++t) {
        const int ks = k(rng);
        const auto r = segment_tree(ph.volume, nullptr, {20, 20, ks}, p);
        EXPECT_GE(dice(r.mask, ph.truth.mask), 0.9) << "seed slice " << ks;
        EXPECT_GE(dice(r.mask, ref.mask), 0.95) << "seed slice " << ks;
    }
    EXPECT_EQ(ref.contours_per_slice[50], 1u);
    EXPECT_EQ(ref.contours_per_slice[5], 0u);
    EXPECT_EQ(ref.provenance(20, 20, 50), 3);
    EXPECT_EQ(ref.provenance(20, 20, 70), 1);
    EXPECT_EQ(ref.provenance(20, 20, 30), 2);
}

TEST(SegmentTree, YBifurcationReachesBothTips)
{
    PhantomSpec s;
    s.kind = PhantomKind::y_bifurcation;
    s.dims = {64, 64, 96};
    s.spacing = {0.5, 0.5, 0.5};
    s.noise = 20.0;
    const Phantom ph = generate(s);
    const auto vf = multiscale_vesselness(ph.volume, FrangiParams{});
    const auto r = segment_tree(ph.volume, &vf.score, {32, 32, 20}, gated_params());
    ASSERT_GE(ph.truth.endpoints.size(), 3u);
    const Volume3D d2 = squared_distance_to(r.mask);
    for (const Vec3& e : ph.truth.endpoints) {
        const Vec3 v = ph.volume.to_voxel(e);
        const Index3 q{static_cast<int>(std::lround(v.x)), static_cast<int>(std::lround(v.y)),
                       std::clamp(static_cast<int>(std::lround(v.z)), 0, ph.volume.nz() - 1)};
        EXPECT_LE(std::sqrt(d2(q.i, q.j, q.k)), 2 * 0.5 + 1e-9) << e.x << "," << e.y << "," << e.z;
    }
    EXPECT_GE(dice(r.mask, ph.truth.mask), 0.85);
}

TEST(SegmentTree, ParallelTubeIsExcluded)
{
    PhantomSpec s;
    s.dims = {64, 40, 81};
    s.spacing = {0.5, 0.5, 0.5};
    s.center = Vec3{8.0, 9.75, 20.0};
    s.length = 30.0;
    s.radius = 2.0;
    s.noise = 20.0;
    s.extras.push_back(TubePrimitive{{{22.0, 9.75, 5.0}, {22.0, 9.75, 35.0}}, 2.0, true}); // 10 mm gap
    const Phantom ph = generate(s);
    const auto r = segment_tree(ph.volume, nullptr, {16, 20, 40}, gated_params());
    std::size_t in_b = 0, in_a = 0;
    for (int k = 0; k < r.mask.nz(); ++k)
        for (int j = 0; j < r.mask.ny(); ++j)
            for (int i = 0; i < r.mask.nx(); ++i)
                if (r.mask(i, j, k))
                    (i > 32 ? in_b : in_a) += 1;
    EXPECT_EQ(in_b, 0u);
    EXPECT_GT(in_a, 1000u);
}

TEST(SegmentTree, EveryVoxelInsideHuGate)
{
    for (std::uint64_t seed : {3u, 4u}) {
        const Phantom ph = z_tube(42.0, seed);
        const PropagationParams p = gated_params();
        const auto r = segment_tree(ph.volume, nullptr, {20, 20, 50}, p);
        for (std::size_t n = 0; n < r.mask.size(); ++n)
            if (r.mask[n]) {
                ASSERT_GE(ph.volume[n], p.lo);
                ASSERT_LE(ph.volume[n], p.hi);
            }
        EXPECT_GE(dice(r.mask, ph.truth.mask), 0.85);
    }
}

TEST(SegmentTree, BrightNeighbourOutsideGateIsNotEntered)
{
    PhantomSpec s;
    s.dims = {40, 40, 60};
    s.spacing = {0.5, 0.5, 0.5};
    s.center = Vec3{9.75, 9.75, 14.75};
    s.length = 20.0;
    s.noise = 10.0;
    const Phantom ph = generate(s);
    Volume3D vol = ph.volume;
    // Calcium-like block touching the tube wall.
    for (int k = 25; k < 35; ++k)
        for (int j = 14; j < 26; ++j)
            for (int i = 24; i < 30; ++i)
                vol(i, j, k) = 1000.0;
    const auto r = segment_tree(vol, nullptr, {20, 20, 30}, gated_params());
    for (int k = 25; k < 35; ++k)
        for (int j = 14; j < 26; ++j)
            for (int i = 24; i < 30; ++i)
                EXPECT_FALSE(r.mask(i, j, k));
    EXPECT_GE(dice(r.mask, ph.truth.mask), 0.85);
}
