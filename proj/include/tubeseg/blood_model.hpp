#pragma once

// Contrast-blood intensity model: aorta isolation by a slice-wise circle
// Hough transform, an intensity histogram of the aorta voxels and a
// least-squares Gaussian fit. The accepted HU range is mu +- 3 sigma.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tubeseg/core/error.hpp"
#include "tubeseg/core/grid.hpp"
#include "tubeseg/volume.hpp"

namespace tubeseg {

struct Histogram {
    /// nbins + 1 strictly increasing edges; bin b is [edges[b], edges[b+1]).
    std::vector<double> edges;
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    std::size_t bins() const { return counts.size(); }
    double center(std::size_t b) const { return 0.5 * (edges[b] + edges[b + 1]); }
    std::size_t occupied() const
    {
        return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
    }
};

struct GaussianFit {
    double amplitude = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    /// Sum of squared residuals divided by the sum of squared counts.
    double residual = 0.0;
    int iterations = 0;
};

struct BloodIntensityModel {
    double mu = 0.0;
    double sigma = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double residual = 0.0;
};

struct AortaParams {
    /// Fraction of the z extent scanned, starting at slice 0.
    double z_band = 0.25;
    double bright_threshold = 150.0;
    double r_min = 10.0;
    double r_max = 20.0;
    /// Largest accepted centre displacement between consecutive slices (mm).
    double max_drift = 5.0;
    /// Fraction of a circle's perimeter that must carry edge votes.
    double min_support = 0.5;
    /// The mask keeps voxels within (radius - inset) of the fitted centre.
    double inset = 1.0;

    void validate() const
    {
        if (!(z_band > 0.0 && z_band <= 1.0))
            throw UsageError("aorta: z band must be in (0, 1]");
        if (!(r_min > 0.0) || !(r_max >= r_min))
            throw UsageError("aorta: need 0 < r_min <= r_max");
        if (!(max_drift >= 0.0) || !(min_support > 0.0 && min_support <= 1.0) || !(inset >= 0.0))
            throw UsageError("aorta: invalid drift, support or inset");
    }
};

struct CircleFit {
    int slice = 0;
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
    double support = 0.0;
};

/// Left-closed bins of `width`, starting at the minimum value.
inline Histogram build_histogram(std::span<const double> values, double width)
{
    if (values.empty())
        throw DataError("histogram: no values");
    if (!(width > 0.0))
        throw UsageError("histogram: bin width must be > 0");
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn;
    const auto nbins = static_cast<std::size_t>(std::floor((*mx - lo) / width)) + 1;
    Histogram h;
    h.edges.resize(nbins + 1);
    for (std::size_t b = 0; b <= nbins; ++b)
        h.edges[b] = lo + static_cast<double>(b) * width;
    h.counts.assign(nbins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
        h.counts[std::min(b, nbins - 1)] += 1;
    }
    h.total = values.size();
    return h;
}

namespace detail {

inline bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b, std::array<double, 3>& x)
{
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c]))
                piv = r;
        if (a[piv][c] == 0.0)
            return false;
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (int r = c + 1; r < 3; ++r) {
            const double f = a[r][c] / a[c][c];
            for (int q = c; q < 3; ++q)
                a[r][q] -= f * a[c][q];
            b[r] -= f * b[c];
        }
    }
    for (int c = 2; c >= 0; --c) {
        double s = b[c];
        for (int q = c + 1; q < 3; ++q)
            s -= a[c][q] * x[q];
        x[c] = s / a[c][c];
    }
    return true;
}

} // namespace detail

/// Gauss-Newton fit of A exp(-(b - mu)^2 / 2 sigma^2) to the bin counts,
/// started from the histogram moments. Throws DataError below 5 occupied
/// bins and NumericError on non-convergence or a runaway sigma.
inline GaussianFit fit_gaussian_lsq(const Histogram& h, int max_iterations = 100)
{
    if (h.occupied() < 5)
        throw DataError("gaussian fit: fewer than 5 occupied bins");
    const std::size_t n = h.bins();
    std::vector<double> x(n), y(n);
    double sw = 0.0, m1 = 0.0, ymax = 0.0, yy = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        x[b] = h.center(b);
        y[b] = static_cast<double>(h.counts[b]);
        sw += y[b];
        m1 += y[b] * x[b];
        ymax = std::max(ymax, y[b]);
        yy += y[b] * y[b];
    }
    const double x0 = m1 / sw;
    double m2 = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        x[b] -= x0; // centred coordinates keep the normal equations well scaled
        m2 += y[b] * x[b] * x[b];
    }
    const double span = x.back() - x.front();
    const double sigma_cap = std::max(span, h.edges[1] - h.edges[0]);

    double A = ymax, mu = 0.0, sigma = std::sqrt(m2 / sw);
    if (!(sigma > 0.0))
        throw NumericError("gaussian fit: zero spread");
    auto sse = [&](double a, double m, double s) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            const double r = a * std::exp(-(x[b] - m) * (x[b] - m) / (2.0 * s * s)) - y[b];
            acc += r * r;
        }
        return acc;
    };
    double cur = sse(A, mu, sigma);
    for (int it = 1; it <= max_iterations; ++it) {
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        for (std::size_t b = 0; b < n; ++b) {
            const double d = x[b] - mu;
            const double g = std::exp(-d * d / (2.0 * sigma * sigma));
            const double r = A * g - y[b];
            const std::array<double, 3> j{g, A * g * d / (sigma * sigma), A * g * d * d / (sigma * sigma * sigma)};
            for (int p = 0; p < 3; ++p) {
                jtr[p] += j[p] * r;
                for (int q = 0; q < 3; ++q)
                    jtj[p][q] += j[p] * j[q];
            }
        }
        std::array<double, 3> step{};
        if (!detail::solve3(jtj, {-jtr[0], -jtr[1], -jtr[2]}, step))
            throw NumericError("gaussian fit: singular normal equations");
        // Step halving keeps the iteration descending; the direction is pure Gauss-Newton.
        double t = 1.0, next = 0.0;
        double nA = A, nmu = mu, ns = sigma;
        for (int half = 0; half < 30; ++half, t *= 0.5) {
            nA = A + t * step[0];
            nmu = mu + t * step[1];
            ns = sigma + t * step[2];
            if (ns > 0.0 && (next = sse(nA, nmu, ns)) <= cur)
                break;
        }
        if (!(ns > 0.0) || ns > sigma_cap)
            throw NumericError("gaussian fit: sigma diverged (histogram not bell-shaped)");
        const double rel = std::abs(t * step[1]) + std::abs(t * step[2]);
        const bool done = rel <= 1e-10 * sigma || std::abs(cur - next) <= 1e-14 * std::max(cur, 1.0);
        A = nA;
        mu = nmu;
        sigma = ns;
        cur = std::min(cur, next);
        if (done)
            return {A, mu + x0, sigma, yy > 0.0 ? cur / yy : 0.0, it};
    }
    throw NumericError("gaussian fit: no convergence in " + std::to_string(max_iterations) +
                       " iterations (normalized residual " + std::to_string(cur / yy) + ")");
}

inline std::pair<double, double> blood_range(double mu, double sigma)
{
    if (!(sigma >= 0.0))
        throw UsageError("blood range: sigma must be >= 0");
    return {mu - 3.0 * sigma, mu + 3.0 * sigma};
}

inline BloodIntensityModel make_blood_model(double mu, double sigma, double residual = 0.0)
{
    const auto [lo, hi] = blood_range(mu, sigma);
    return {mu, sigma, lo, hi, residual};
}

namespace detail {

/// Best circle in one slice: edge pixels of the bright region vote on circle
/// centres for each radius in the band; support is votes / perimeter samples.
inline std::optional<CircleFit> hough_best_circle(const Volume3D& vol, int k, const AortaParams& p)
{
    const int nx = vol.nx(), ny = vol.ny();
    const double sx = vol.spacing().x, sy = vol.spacing().y;
    auto bright = [&](int i, int j) { return vol(i, j, k) > p.bright_threshold; };
    std::vector<std::pair<int, int>> edges;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            if (!bright(i, j))
                continue;
            const bool border = (i > 0 && !bright(i - 1, j)) || (i + 1 < nx && !bright(i + 1, j)) ||
                                (j > 0 && !bright(i, j - 1)) || (j + 1 < ny && !bright(i, j + 1));
            if (border)
                edges.emplace_back(i, j);
        }
    if (edges.empty())
        return std::nullopt;
    const double step = std::min(sx, sy);
    std::vector<double> radii;
    for (double r = p.r_min; r <= p.r_max + 1e-9; r += step)
        radii.push_back(r);
    std::optional<CircleFit> best;
    std::vector<std::int32_t> acc(static_cast<std::size_t>(nx) * ny);
    std::vector<std::int32_t> stamp(acc.size(), -1);
    for (double r : radii) {
        std::fill(acc.begin(), acc.end(), 0);
        std::fill(stamp.begin(), stamp.end(), -1);
        const int nang = std::max(16, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / (0.5 * step))));
        std::vector<std::pair<double, double>> dirs(nang);
        for (int a = 0; a < nang; ++a) {
            const double th = 2.0 * std::numbers::pi * a / nang;
            dirs[a] = {r * std::cos(th) / sx, r * std::sin(th) / sy};
        }
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [ei, ej] = edges[e];
            for (const auto& [dx, dy] : dirs) {
                const int ci = static_cast<int>(std::lround(ei + dx));
                const int cj = static_cast<int>(std::lround(ej + dy));
                if (ci < 0 || cj < 0 || ci >= nx || cj >= ny)
                    continue;
                const std::size_t c = static_cast<std::size_t>(cj) * nx + ci;
                if (stamp[c] == static_cast<std::int32_t>(e))
                    continue; // one vote per edge pixel and centre
                stamp[c] = static_cast<std::int32_t>(e);
                ++acc[c];
            }
        }
        // Perimeter length in pixels of a circle of radius r (mm), for the support fraction.
        const double perim = 2.0 * std::numbers::pi * r / step;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double sup = acc[static_cast<std::size_t>(j) * nx + i] / perim;
                if (!best || sup > best->support)
                    best = CircleFit{k, static_cast<double>(i), static_cast<double>(j), r, sup};
            }
    }
    if (!best || best->support < p.min_support)
        return std::nullopt;
    return best;
}

} // namespace detail

/// Per-slice circle fits of the longest run of consecutive slices whose
/// centres drift by at most max_drift mm per slice.
inline std::vector<CircleFit> detect_aorta_circles(const Volume3D& vol, const AortaParams& p = {})
{
    p.validate();
    const int kmax = std::max(1, static_cast<int>(std::ceil(p.z_band * vol.nz())));
    std::vector<std::optional<CircleFit>> fits(kmax);
    for (int k = 0; k < kmax; ++k)
        fits[k] = detail::hough_best_circle(vol, k, p);
    std::vector<CircleFit> best, run;
    for (int k = 0; k < kmax; ++k) {
        if (!fits[k]) {
            run.clear();
            continue;
        }
        if (!run.empty()) {
            const CircleFit& prev = run.back();
            const double d = std::hypot((fits[k]->cx - prev.cx) * vol.spacing().x, (fits[k]->cy - prev.cy) * vol.spacing().y);
            if (d > p.max_drift)
                run.clear();
        }
        run.push_back(*fits[k]);
        if (run.size() > best.size())
            best = run;
    }
    if (best.empty())
        throw DataError("aorta not found");
    return best;
}

/// Bright voxels inside the accepted circles (radius reduced by the inset).
inline BinaryMask detect_aorta(const Volume3D& vol, const AortaParams& p = {})
{
    const auto circles = detect_aorta_circles(vol, p);
    BinaryMask m = vol.like<std::uint8_t>(0);
    const double sx = vol.spacing().x, sy = vol.spacing().y;
    for (const CircleFit& c : circles) {
        const double r = std::max(0.0, c.radius - p.inset);
        for (int j = 0; j < vol.ny(); ++j)
            for (int i = 0; i < vol.nx(); ++i)
                if (std::hypot((i - c.cx) * sx, (j - c.cy) * sy) <= r && vol(i, j, c.slice) > p.bright_threshold)
                    m(i, j, c.slice) = 1;
    }
    return m;
}

/// Gaussian fit to the intensities under an aorta mask.
inline BloodIntensityModel estimate_blood_model(const Volume3D& vol, const BinaryMask& m, double bin_width)
{
    if (!m.same_geometry(vol))
        throw DataError("blood model: aorta mask geometry mismatch");
    std::vector<double> values;
    for (std::size_t n = 0; n < m.size(); ++n)
        if (m[n])
            values.push_back(vol[n]);
    const GaussianFit f = fit_gaussian_lsq(build_histogram(values, bin_width));
    return make_blood_model(f.mu, f.sigma, f.residual);
}

inline BloodIntensityModel estimate_blood_model(const Volume3D& vol, const AortaParams& p = {},
                                                double bin_width = 8.0)
{
    return estimate_blood_model(vol, detect_aorta(vol, p), bin_width);
}

} // namespace tubeseg
