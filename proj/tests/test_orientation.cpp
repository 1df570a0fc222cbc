#include <gtest/gtest.h>

#include <complex>
#include <numbers>
#include <random>

#include "wdd/orientation.hpp"
#include "wdd/synth.hpp"

using namespace wdd;
using namespace wdd::orientation;

namespace {

// O(N^4) 2-D DFT
Image<Complex> naive_dft2(const Image<double>& img) {
    const int w = img.width(), h = img.height();
    Image<Complex> out(w, h);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            Complex s = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double a = -2 * std::numbers::pi * (static_cast<double>(u) * x / w + static_cast<double>(v) * y / h);
                    s += img(x, y) * Complex(std::cos(a), std::sin(a));
                }
            out(u, v) = s;
        }
    return out;
}

// weighted centroid and covariance of positive (or negative) values
struct Lobe {
    double cx = 0, cy = 0, vxx = 0, vyy = 0;
};

Lobe lobe(const Image<int>& d, int sign) {
    Lobe l;
    double sw = 0;
    for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x) {
            const double m = sign * d(x, y);
            if (m <= 0) continue;
            sw += m;
            l.cx += m * x;
            l.cy += m * y;
        }
    l.cx /= sw;
    l.cy /= sw;
    for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x) {
            const double m = sign * d(x, y);
            if (m <= 0) continue;
            l.vxx += m * (x - l.cx) * (x - l.cx) / sw;
            l.vyy += m * (y - l.cy) * (y - l.cy) / sw;
        }
    return l;
}

// spectrum with two Gaussian blobs at +-r along compass direction deg (lateral motion)
Image<double> two_blob_spectrum(double deg, double r, int n = 50) {
    double ux = 0, uy = 0;
    compass_vector(deg, ux, uy);
    Image<double> s(n, n, 0.0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            for (int sgn : {1, -1}) {
                const double dx = x - n / 2 - sgn * r * ux, dy = y - n / 2 - sgn * r * uy;
                s(x, y) += std::exp(-(dx * dx + dy * dy) / (2 * 0.8 * 0.8));
            }
    return s;
}

struct RunSample {
    std::vector<GrayImage> snippets;
    std::vector<Point2d> trace;
    double direction = 0;
};

// renders one waggle run and crops snippets along the smoothed body path,
// as the detector's cluster centroids do
std::vector<RunSample> render_runs(double direction, int runs, double noise, std::uint64_t seed,
                                   double divergence = 0.0) {
    synth::Scene sc;
    sc.width = 200;
    sc.height = 200;
    sc.noise_sigma = noise;
    sc.seed = seed;
    synth::DanceScript d;
    d.x = 100;
    d.y = 100;
    d.direction_deg = direction;
    d.runs = runs;
    d.divergence_sd_deg = divergence;
    d.seed = seed;
    d.return_ms = 300;
    sc.dancers.push_back(d);
    synth::Renderer r(sc);
    std::vector<RunSample> out;
    for (const auto& tr : r.truth().runs) {
        RunSample s;
        s.direction = tr.direction_deg;
        const int n = static_cast<int>(tr.trace.size());
        for (int i = 0; i < n; ++i) {
            Point2d c;
            int m = 0;
            for (int j = std::max(0, i - 4); j <= std::min(n - 1, i + 3); ++j, ++m) {
                c.x += tr.trace[j].x;
                c.y += tr.trace[j].y;
            }
            c.x /= m;
            c.y /= m;
            s.trace.push_back(c);
            s.snippets.push_back(crop_centered(r.render(tr.trace[i].frame), c, 50));
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

TEST(Fft, MatchesNaiveDftOnRandomImages) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-255, 255);
    for (auto [w, h] : std::vector<std::pair<int, int>>{{8, 8}, {8, 8}, {8, 8}, {7, 13}, {12, 10}, {1, 5}, {50, 50}}) {
        Image<double> img(w, h);
        for (auto& p : img.pixels()) p = u(rng);
        const auto a = fft2(img), b = naive_dft2(img);
        const double tol = (w * h > 100 ? 1e-7 : 1e-9) * w * h * 255;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ASSERT_NEAR(a.data()[i].real(), b.data()[i].real(), tol) << w << "x" << h;
            ASSERT_NEAR(a.data()[i].imag(), b.data()[i].imag(), tol) << w << "x" << h;
        }
    }
}

TEST(Fft, EightByEightToOneInTenBillion) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        Image<double> img(8, 8);
        for (auto& p : img.pixels()) p = u(rng);
        const auto a = fft2(img), b = naive_dft2(img);
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_LT(std::abs(a.data()[i] - b.data()[i]), 1e-9);
    }
}

TEST(Fft, ShiftMovesDcToCenter) {
    Image<int> img(6, 4);
    img(0, 0) = 9;
    const auto s = fft_shift(img);
    EXPECT_EQ(s(3, 2), 9);
}

TEST(DiffImage, ZerosAndAntisymmetry) {
    std::mt19937_64 rng(3);
    GrayImage a(20, 15), b(20, 15);
    for (auto& p : a.pixels()) p = static_cast<std::uint8_t>(rng() % 256);
    for (auto& p : b.pixels()) p = static_cast<std::uint8_t>(rng() % 256);
    const auto same = diff_image(a, a);
    for (int v : same.pixels()) EXPECT_EQ(v, 0);
    const auto ab = diff_image(a, b), ba = diff_image(b, a);
    for (std::size_t i = 0; i < ab.size(); ++i) {
        EXPECT_EQ(ab.data()[i], -ba.data()[i]);
        EXPECT_EQ(ab.data()[i], int(a.data()[i]) - int(b.data()[i]));
    }
    EXPECT_THROW(diff_image(a, GrayImage(15, 20)), DimensionMismatchError);
}

TEST(DiffImage, LateralShiftGivesLobePairAlongBody) {
    auto render = [](double x) {
        Image<float> c(50, 50, 40.0f);
        synth::draw_ellipse(c, {x, 25.0, 0.0}, 20, 8, 200);
        GrayImage g(50, 50);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = static_cast<std::uint8_t>(std::lround(c.data()[i]));
        return g;
    };
    const auto d = diff_image(render(27.5), render(22.5));
    const auto pos = lobe(d, 1), neg = lobe(d, -1);
    EXPECT_NEAR(pos.cx - neg.cx, 8.0, 3.0);  // lobes sit on the leading and trailing flanks
    EXPECT_NEAR(pos.cy, neg.cy, 0.5);
    EXPECT_GT(pos.vyy, 2 * pos.vxx);  // each lobe elongated along the vertical body
    EXPECT_GT(neg.vyy, 2 * neg.vxx);
}

TEST(Spectrum, IdenticalFramesGiveZero) {
    std::vector<GrayImage> s(5, GrayImage(50, 50, 77));
    const auto spec = accumulate_spectrum(s);
    for (double v : spec.pixels()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(accumulate_spectrum(std::vector<GrayImage>(1, GrayImage(50, 50))), NoSignalError);
}

TEST(Spectrum, GratingGivesSymmetricPeaks) {
    const int n = 50, fx = 3, fy = 4;
    std::vector<GrayImage> s;
    for (int t = 0; t < 2; ++t) {
        GrayImage g(n, n);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double ph = 2 * std::numbers::pi * (fx * x + fy * y) / n + t * std::numbers::pi / 2;
                g(x, y) = static_cast<std::uint8_t>(std::lround(128 + 100 * std::cos(ph)));
            }
        s.push_back(g);
    }
    const auto spec = accumulate_spectrum(s);
    // oracle: naive DFT power of the difference image, shifted
    Image<double> d(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) d(x, y) = static_cast<double>(s[1](x, y)) - s[0](x, y);
    const auto ref = naive_dft2(d);
    double peak = 0;
    int px = 0, py = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double want = std::norm(ref((x + n / 2) % n, (y + n / 2) % n));
            ASSERT_NEAR(spec(x, y), want, 1e-6 * std::max(1.0, want));
            if (spec(x, y) > peak) peak = spec(x, y), px = x, py = y;
        }
    // maxima at +-(fx, fy) around DC, orthogonal to the stripes
    const int ax = std::abs(px - n / 2), ay = std::abs(py - n / 2);
    EXPECT_EQ(ax, fx);
    EXPECT_EQ(ay, fy);
    EXPECT_NEAR(spec(n / 2 + (px - n / 2), n / 2 + (py - n / 2)), spec(n / 2 - (px - n / 2), n / 2 - (py - n / 2)),
                1e-6 * peak);
}

TEST(Spectrum, InvariantToTranslation) {
    auto stack_at = [](double cx, double cy) {
        std::vector<GrayImage> s;
        for (int t = 0; t < 6; ++t) {
            Image<float> c(50, 50, 0.0f);
            synth::draw_ellipse(c, {cx + 5 * std::sin(t * 1.3), cy, 30.0}, 16, 6, 200);
            GrayImage g(50, 50);
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = static_cast<std::uint8_t>(std::lround(c.data()[i]));
            s.push_back(g);
        }
        return s;
    };
    const auto a = accumulate_spectrum(stack_at(20, 22)), b = accumulate_spectrum(stack_at(28, 27));
    double peak = 0;
    for (double v : a.pixels()) peak = std::max(peak, v);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a.data()[i], b.data()[i], 1e-6 * peak);
}

TEST(Bandpass, RingRadius) {
    BandpassConfig c;
    c.displacement_px = 5;
    EXPECT_DOUBLE_EQ(c.expected_frequency(), 5.0);
    c.displacement_px = 7;
    EXPECT_NEAR(c.expected_frequency(), 3.571, 1e-3);
    c.displacement_px = 6;
    EXPECT_DOUBLE_EQ(c.expected_frequency(), 50.0 / 12.0);
    EXPECT_DOUBLE_EQ(c.inner(), c.expected_frequency() / 2);
    EXPECT_DOUBLE_EQ(c.outer(), c.expected_frequency());
}

TEST(Bandpass, PeakAtRingAndDcSuppressed) {
    for (double x : {5.0, 6.0, 7.0}) {
        BandpassConfig c;
        c.displacement_px = x;
        const double k = c.expected_frequency();
        EXPECT_NEAR(dog_gain(k, c), 1.0, 1e-12);
        for (double r = 0; r < 25; r += 0.05) EXPECT_LE(dog_gain(r, c), 1.0 + 1e-12);
        EXPECT_LE(std::max(0.0, dog_gain(0.0, c)), 0.01);
    }
}

TEST(Bandpass, ClampsNegativeLobes) {
    BandpassConfig c;
    const Image<double> ones(50, 50, 1.0);
    const auto f = dog_bandpass(ones, c);
    for (int y = 0; y < 50; ++y)
        for (int x = 0; x < 50; ++x) {
            EXPECT_GE(f(x, y), 0.0);
            EXPECT_NEAR(f(x, y), std::max(0.0, dog_gain(std::hypot(x - 25, y - 25), c)), 1e-12);
        }
}

TEST(Bandpass, ConfigValidation) {
    BandpassConfig c;
    c.sigma_inner = 3;
    c.sigma_outer = 2;
    EXPECT_THROW(c.validate(), ConfigError);
    BandpassConfig d;
    d.displacement_px = 0.4;  // ring radius 62.5 beyond I/2
    EXPECT_THROW(d.validate(), ConfigError);
    BandpassConfig e;
    e.displacement_px = -1;
    EXPECT_THROW(e.validate(), ConfigError);
}

TEST(PrincipalAxis, ImpulsesOnFrequencyAxes) {
    Image<double> h(50, 50, 0.0), v(50, 50, 0.0);
    h(25 + 4, 25) = h(25 - 4, 25) = 1.0;
    v(25, 25 + 4) = v(25, 25 - 4) = 1.0;
    // horizontal lateral motion means a vertical body
    EXPECT_NEAR(principal_axis(h).axis_deg, 0.0, 1e-9);
    EXPECT_NEAR(principal_axis(v).axis_deg, 90.0, 1e-9);
    EXPECT_FALSE(principal_axis(h).low_confidence);
    EXPECT_GE(principal_axis(h).confidence, 1.0);
}

TEST(PrincipalAxis, ZeroAndIsotropic) {
    EXPECT_THROW(principal_axis(Image<double>(50, 50, 0.0)), NoSignalError);
    Image<double> ring(50, 50, 0.0);
    for (int y = 0; y < 50; ++y)
        for (int x = 0; x < 50; ++x) ring(x, y) = std::exp(-std::pow(std::hypot(x - 25, y - 25) - 6, 2));
    const auto e = principal_axis(ring);
    EXPECT_TRUE(e.low_confidence);
    EXPECT_NEAR(e.confidence, 1.0, 0.05);
}

TEST(PrincipalAxis, RotationEquivariance) {
    for (double lat = 0; lat < 360; lat += 7) {
        const auto e = principal_axis(two_blob_spectrum(lat, 6));
        EXPECT_LT(angular_distance(2 * e.axis_deg, 2 * wrap180(lat + 90)) / 2, 1.0) << lat;
    }
}

TEST(PrincipalAxis, WeightedCovarianceOracle) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        Image<double> s(50, 50);
        for (auto& p : s.pixels()) p = u(rng) * u(rng) * u(rng);
        s(30, 21) += 40;
        s(20, 29) += 40;
        double sw = 0, a = 0, b = 0, c = 0;
        for (int y = 0; y < 50; ++y)
            for (int x = 0; x < 50; ++x) {
                sw += s(x, y);
                a += s(x, y) * (x - 25) * (x - 25);
                b += s(x, y) * (x - 25) * (y - 25);
                c += s(x, y) * (y - 25) * (y - 25);
            }
        // largest eigenvector of [[a b][b c]]: repeated squaring, then the longer column
        double m00 = a, m01 = b, m11 = c;
        for (int it = 0; it < 60; ++it) {
            const double n00 = m00 * m00 + m01 * m01, n01 = m00 * m01 + m01 * m11, n11 = m01 * m01 + m11 * m11;
            const double nn = n00 + n11;
            m00 = n00 / nn;
            m01 = n01 / nn;
            m11 = n11 / nn;
        }
        const bool first = std::hypot(m00, m01) >= std::hypot(m01, m11);
        const double vx = first ? m00 : m01, vy = first ? m01 : m11;
        const double lateral = compass_angle(vx, vy);
        EXPECT_NEAR(angular_distance(2 * principal_axis(s).axis_deg, 2 * wrap180(lateral + 90)) / 2, 0.0, 1e-6);
    }
}

TEST(Disambiguate, StraightTraces) {
    std::vector<Point2d> up, down;
    for (int i = 0; i < 30; ++i) up.push_back({25.0, 40.0 - i});
    down.assign(up.rbegin(), up.rend());
    EXPECT_DOUBLE_EQ(disambiguate(up, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(disambiguate(down, 0.0), 180.0);
    EXPECT_THROW(disambiguate(std::span(up).first(9), 0.0), UnresolvedDirectionError);
    std::vector<Point2d> still(20, Point2d{3, 3});
    EXPECT_THROW(disambiguate(still, 0.0), UnresolvedDirectionError);
}

TEST(Disambiguate, TimeReversalFlips) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> ang(0, 360), off(-60, 60);
    std::normal_distribution<double> jitter(0, 0.3);
    for (int trial = 0; trial < 200; ++trial) {
        const double dir = ang(rng);
        double ux = 0, uy = 0;
        compass_vector(dir, ux, uy);
        std::vector<Point2d> tr;
        for (int i = 0; i < 40; ++i) tr.push_back({i * ux + jitter(rng), i * uy + jitter(rng)});
        const double axis = wrap180(dir + off(rng));
        const double a = disambiguate(tr, axis);
        std::reverse(tr.begin(), tr.end());
        const double b = disambiguate(tr, axis);
        EXPECT_NEAR(angular_distance(a, b), 180.0, 1e-9);
        EXPECT_NEAR(wrap180(a), axis, 1e-9);
        EXPECT_LE(angular_distance(a, dir), 90.0);
    }
}

TEST(Decode, CleanDancerUp) {
    const auto runs = render_runs(0.0, 1, 0.0, 1);
    ASSERT_EQ(runs.size(), 1u);
    const auto r = decode_orientation(runs[0].snippets, runs[0].trace, BandpassConfig{});
    ASSERT_TRUE(r.direction_deg);
    EXPECT_LE(angular_distance(*r.direction_deg, 0.0), 3.0);
}

TEST(Decode, AxisAt37AndDirection215) {
    const auto a = render_runs(37.0, 1, 0.0, 2);
    EXPECT_LE(angular_distance(2 * decode_orientation(a[0].snippets, a[0].trace, BandpassConfig{}).axis_deg, 74.0) / 2, 3.0);
    const auto b = render_runs(215.0, 1, 0.0, 3);
    const auto r = decode_orientation(b[0].snippets, b[0].trace, BandpassConfig{});
    ASSERT_TRUE(r.direction_deg);
    EXPECT_LE(angular_distance(*r.direction_deg, 215.0), 10.0);
}

TEST(Decode, RotationEquivariance) {
    for (double dir : {20.0, 130.0, 250.0}) {
        const auto runs = render_runs(dir, 1, 2.0, 7);
        const auto& s = runs[0];
        std::vector<GrayImage> rot;
        for (const auto& g : s.snippets) rot.push_back(rotate90_cw(g));
        std::vector<Point2d> rtr;
        for (const auto& p : s.trace) rtr.push_back({-p.y, p.x});
        const auto a = decode_orientation(s.snippets, s.trace, BandpassConfig{});
        const auto b = decode_orientation(rot, rtr, BandpassConfig{});
        ASSERT_TRUE(a.direction_deg && b.direction_deg);
        EXPECT_LT(angular_distance(*b.direction_deg, *a.direction_deg + 90.0), 0.5) << dir;
    }
}

TEST(Decode, DirectionConsistentWithAxis) {
    for (const auto& s : render_runs(300.0, 8, 3.0, 11, 30.0)) {
        const auto r = decode_orientation(s.snippets, s.trace, BandpassConfig{});
        EXPECT_GE(r.confidence, 1.0);
        EXPECT_GE(r.axis_deg, 0.0);
        EXPECT_LT(r.axis_deg, 180.0);
        if (r.direction_deg) {
            EXPECT_GE(*r.direction_deg, 0.0);
            EXPECT_LT(*r.direction_deg, 360.0);
            EXPECT_NEAR(wrap180(*r.direction_deg), r.axis_deg, 1e-9);
        }
    }
}

TEST(Decode, NoisyBatchAccuracy) {
    std::vector<double> err;
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> ang(0, 360);
    for (int k = 0; k < 6; ++k)
        for (const auto& s : render_runs(ang(rng), 4, 3.0, 100 + k, 20.0)) {
            const auto r = decode_orientation(s.snippets, s.trace, BandpassConfig{});
            ASSERT_TRUE(r.direction_deg);
            err.push_back(signed_angle_diff(*r.direction_deg, s.direction));
        }
    double mae = 0;
    for (double e : err) mae += std::abs(e);
    mae /= err.size();
    EXPECT_LE(mae, 5.0);
    EXPECT_LE(synth::sample_sd(err), 8.0);
}
