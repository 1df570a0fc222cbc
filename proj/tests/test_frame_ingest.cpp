#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <filesystem>
#include <random>

#include "wdd/homography.hpp"
#include "wdd/image.hpp"
#include "wdd/ingest.hpp"
#include "wdd/snippet_io.hpp"
#include "wdd/source.hpp"
#include "wdd/synth.hpp"
#include "wdd/time.hpp"

namespace fs = std::filesystem;
using namespace wdd;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("wdd_ingest_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

GrayImage pattern(int w, int h, int seed) {
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img(x, y) = static_cast<std::uint8_t>((x * 7 + y * 13 + seed * 31) & 0xFF);
    return img;
}

GrayImage checkerboard(int w, int h, int cell) {
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img(x, y) = ((x / cell + y / cell) % 2) ? 220 : 30;
    return img;
}

// 8x8 DLT system solved with Eigen's LU, independent of the library solver
Homography eigen_homography(const std::array<Point2d, 4>& src, const std::array<Point2d, 4>& dst) {
    Eigen::Matrix<double, 8, 8> A;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
        A.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        A.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    const Eigen::Matrix<double, 8, 1> h = A.fullPivLu().solve(b);
    return Homography({h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0});
}

// per pixel: inverse map then bilinear, written out longhand
GrayImage naive_rectify(const GrayImage& src, const Homography& h) {
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = h(r, c);
    const Eigen::Matrix3d inv = m.inverse();
    GrayImage out(src.width(), src.height(), 0);
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) {
            const Eigen::Vector3d p = inv * Eigen::Vector3d(x, y, 1);
            const double sx = p(0) / p(2), sy = p(1) / p(2);
            const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            const double ax = sx - x0, ay = sy - y0;
            auto px = [&](int xx, int yy) -> double {
                if (xx < 0 || yy < 0 || xx >= src.width() || yy >= src.height()) return 0.0;
                return src(xx, yy);
            };
            const double v = (1 - ax) * (1 - ay) * px(x0, y0) + ax * (1 - ay) * px(x0 + 1, y0) +
                             (1 - ax) * ay * px(x0, y0 + 1) + ax * ay * px(x0 + 1, y0 + 1);
            out(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    return out;
}

const std::array<Point2d, 4> kSquare{Point2d{0, 0}, Point2d{1, 0}, Point2d{1, 1}, Point2d{0, 1}};

} // namespace

TEST(PgmSequence, HundredQvgaFrames) {
    const auto dir = temp_dir("pgm100");
    for (int i = 0; i < 100; ++i) write_pgm(dir / ("frame_" + std::to_string(i) + ".pgm"), pattern(320, 240, i));
    auto s = open_source(dir.string(), 100.0);
    EXPECT_EQ(s->info().width, 320);
    EXPECT_EQ(s->info().height, 240);
    EXPECT_EQ(s->info().sample_rate, 100.0);
    std::int64_t count = 0, last = -1;
    while (auto f = s->next()) {
        EXPECT_GT(f->index, last);
        last = f->index;
        // numeric order, not lexicographic: frame_10 comes after frame_9
        EXPECT_EQ(f->image.pixels()[0], pattern(320, 240, static_cast<int>(count)).pixels()[0]);
        ++count;
    }
    EXPECT_EQ(count, 100);
}

TEST(PgmSequence, MismatchedFrameIsFormatError) {
    const auto dir = temp_dir("pgm_mismatch");
    for (int i = 0; i < 5; ++i) write_pgm(dir / ("f" + std::to_string(i) + ".pgm"), pattern(320, 240, i));
    write_pgm(dir / "f5.pgm", pattern(100, 100, 5));
    EXPECT_THROW(PgmSequenceStream{dir}, FormatError);
}

TEST(PgmSequence, CorruptHeaderIsFormatError) {
    const auto dir = temp_dir("pgm_corrupt");
    std::ofstream(dir / "f0.pgm") << "P2\n3 3\n255\n";
    EXPECT_THROW(PgmSequenceStream{dir}, FormatError);
}

TEST(OpenSource, MissingSourceIsUnreadable) {
    EXPECT_THROW(open_source("/nonexistent/wdd/source"), UnreadableSourceError);
    EXPECT_THROW(open_source("synth:/nonexistent/scene.json"), UnreadableSourceError);
}

TEST(RawContainer, RoundTripAndDeterministicReplay) {
    const auto dir = temp_dir("raw");
    const auto path = dir / "video.raw";
    {
        RawContainerWriter w(path, 64, 48, 100);
        for (int i = 0; i < 12; ++i) w.write(pattern(64, 48, i));
    }
    auto read_all = [&] {
        std::vector<GrayImage> frames;
        auto s = open_source(path.string());
        EXPECT_EQ(s->info().width, 64);
        EXPECT_EQ(s->info().height, 48);
        EXPECT_EQ(s->info().sample_rate, 100.0);
        EXPECT_EQ(s->info().frame_count.value_or(-1), 12);
        while (auto f = s->next()) frames.push_back(f->image);
        return frames;
    };
    const auto a = read_all(), b = read_all();
    ASSERT_EQ(a.size(), 12u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_TRUE(std::equal(a[i].pixels().begin(), a[i].pixels().end(), b[i].pixels().begin()));
        EXPECT_TRUE(std::equal(a[i].pixels().begin(), a[i].pixels().end(), pattern(64, 48, static_cast<int>(i)).pixels().begin()));
    }
}

TEST(RawContainer, TruncatedFileIsFormatError) {
    const auto dir = temp_dir("raw_trunc");
    const auto path = dir / "video.raw";
    {
        RawContainerWriter w(path, 16, 16, 100);
        for (int i = 0; i < 3; ++i) w.write(pattern(16, 16, i));
    }
    fs::resize_file(path, fs::file_size(path) - 10);
    EXPECT_THROW(
        {
            RawContainerStream s(path);
            while (s.next()) {
            }
        },
        FormatError);
}

TEST(RawContainer, WriterRejectsWrongSize) {
    const auto dir = temp_dir("raw_size");
    RawContainerWriter w(dir / "v.raw", 16, 16, 100);
    EXPECT_THROW(w.write(pattern(8, 8, 0)), DimensionMismatchError);
}

TEST(SyntheticSource, MetadataMatchesScene) {
    const auto dir = temp_dir("synth");
    synth::Scene scene;
    scene.width = 96;
    scene.height = 64;
    scene.fps = 50;
    scene.frames = 7;
    std::ofstream(dir / "scene.json") << synth::to_json(scene).dump();
    auto s = open_source("synth:" + (dir / "scene.json").string());
    EXPECT_EQ(s->info().width, 96);
    EXPECT_EQ(s->info().height, 64);
    EXPECT_EQ(s->info().sample_rate, 50.0);
    int n = 0;
    while (s->next()) ++n;
    EXPECT_EQ(n, 7);
}

TEST(Homography, UnitSquareGivesIdentity) {
    const auto h = estimate_homography(kSquare, kSquare);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(h(r, c), r == c ? 1.0 : 0.0, 1e-12);
}

TEST(Homography, ShiftGivesTranslation) {
    std::array<Point2d, 4> dst{};
    for (int i = 0; i < 4; ++i) dst[i] = {kSquare[i].x + 5, kSquare[i].y};
    const auto h = estimate_homography(kSquare, dst);
    const std::array<double, 9> expect{1, 0, 5, 0, 1, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(h.elements()[i], expect[i], 1e-12);
}

TEST(Homography, TrapezoidMatchesEigenSolve) {
    const std::array<Point2d, 4> src{Point2d{40, 20}, Point2d{280, 35}, Point2d{300, 225}, Point2d{15, 200}};
    const std::array<Point2d, 4> dst{Point2d{0, 0}, Point2d{319, 0}, Point2d{319, 239}, Point2d{0, 239}};
    const auto h = estimate_homography(src, dst);
    const auto oracle = eigen_homography(src, dst);
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(h.elements()[i], oracle.elements()[i], 1e-9 * (1 + std::abs(oracle.elements()[i])));
    for (int i = 0; i < 4; ++i) {
        const auto p = h.apply(src[i]);
        EXPECT_LT(std::hypot(p.x - dst[i].x, p.y - dst[i].y), 0.5);
    }
    EXPECT_DOUBLE_EQ(h(2, 2), 1.0);
}

TEST(Homography, CollinearPointsAreDegenerate) {
    const std::array<Point2d, 4> line{Point2d{0, 0}, Point2d{1, 1}, Point2d{2, 2}, Point2d{0, 5}};
    EXPECT_THROW(estimate_homography(line, kSquare), DegenerateConfigurationError);
    EXPECT_THROW(estimate_homography(kSquare, line), DegenerateConfigurationError);
}

TEST(HomographyProperty, ForwardTimesBackwardIsIdentity) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> jitter(-30, 30);
    int tested = 0;
    for (int trial = 0; trial < 300; ++trial) {
        std::array<Point2d, 4> p{}, q{};
        const std::array<Point2d, 4> base{Point2d{0, 0}, Point2d{320, 0}, Point2d{320, 240}, Point2d{0, 240}};
        for (int i = 0; i < 4; ++i) {
            p[i] = {base[i].x + jitter(rng), base[i].y + jitter(rng)};
            q[i] = {base[i].x + jitter(rng), base[i].y + jitter(rng)};
        }
        const auto pq = estimate_homography(p, q);
        const auto qp = estimate_homography(q, p);
        const auto id = pq * qp;
        const double n = id(2, 2);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) EXPECT_NEAR(id(r, c) / n, r == c ? 1.0 : 0.0, 1e-6);
        for (int i = 0; i < 4; ++i) {
            const auto m = pq.apply(p[i]);
            EXPECT_LT(std::hypot(m.x - q[i].x, m.y - q[i].y), 0.5);
        }
        ++tested;
    }
    EXPECT_EQ(tested, 300);
}

TEST(Rectify, IdentityIsBitwiseIdentical) {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        GrayImage img(37 + trial, 23 + trial);
        for (auto& px : img.pixels()) px = static_cast<std::uint8_t>(rng());
        const auto out = rectify(img, Homography::identity());
        EXPECT_TRUE(std::equal(img.pixels().begin(), img.pixels().end(), out.pixels().begin()));
    }
}

TEST(Rectify, IntegerTranslationShiftsWithZeroBorder) {
    const auto img = pattern(40, 30, 1);
    const auto out = rectify(img, Homography({1, 0, 3, 0, 1, 2, 0, 0, 1}));
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x) {
            if (x < 3 || y < 2) EXPECT_EQ(out(x, y), 0);
            else EXPECT_EQ(out(x, y), img(x - 3, y - 2));
        }
}

TEST(Rectify, TrapezoidMatchesNaiveOracle) {
    const auto board = checkerboard(160, 120, 10);
    const std::array<Point2d, 4> src{Point2d{20, 10}, Point2d{140, 18}, Point2d{150, 112}, Point2d{8, 100}};
    const auto h = corners_to_frame(src, 160, 120);
    const auto out = rectify(board, h);
    const auto oracle = naive_rectify(board, h);
    int off = 0;
    for (std::size_t i = 0; i < out.size(); ++i) off += std::abs(int(out.pixels()[i]) - int(oracle.pixels()[i])) > 1;
    EXPECT_EQ(off, 0);
}

TEST(Rectify, StreamWrapperAppliesCorners) {
    std::vector<GrayImage> frames{checkerboard(80, 60, 8), checkerboard(80, 60, 6)};
    const std::array<Point2d, 4> corners{Point2d{5, 4}, Point2d{75, 2}, Point2d{78, 58}, Point2d{2, 55}};
    auto s = maybe_rectify(std::make_unique<MemoryStream>(frames, 100.0), corners);
    const auto h = corners_to_frame(corners, 80, 60);
    for (const auto& f : frames) {
        const auto got = s->next();
        ASSERT_TRUE(got);
        const auto expect = rectify(f, h);
        EXPECT_TRUE(std::equal(got->image.pixels().begin(), got->image.pixels().end(), expect.pixels().begin()));
    }
    EXPECT_FALSE(s->next());
    auto plain = maybe_rectify(std::make_unique<MemoryStream>(frames, 100.0), std::nullopt);
    const auto first = plain->next();
    ASSERT_TRUE(first);
    EXPECT_TRUE(std::equal(first->image.pixels().begin(), first->image.pixels().end(), frames[0].pixels().begin()));
}

TEST(Snippets, StackRoundTrip) {
    const auto dir = temp_dir("snip");
    std::vector<GrayImage> stack;
    for (int i = 0; i < 9; ++i) stack.push_back(pattern(50, 50, i));
    write_snippet_stack(dir / "a.wdds", stack);
    const auto back = read_snippet_stack(dir / "a.wdds");
    ASSERT_EQ(back.size(), stack.size());
    for (std::size_t i = 0; i < back.size(); ++i)
        EXPECT_TRUE(std::equal(back[i].pixels().begin(), back[i].pixels().end(), stack[i].pixels().begin()));
    std::ofstream(dir / "bad.wdds") << "nope";
    EXPECT_THROW(read_snippet_stack(dir / "bad.wdds"), FormatError);
}

TEST(Crop, MatchesPerPixelOracle) {
    const auto img = pattern(64, 48, 4);
    const std::vector<Point2d> centers{{32, 24}, {3.4, 2.6}, {62.5, 47}, {-10, -10}, {31.49, 20.51}};
    for (const auto c : centers) {
        const auto crop = crop_centered(img, c, 11);
        const long cx = std::lround(c.x), cy = std::lround(c.y);
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const long sx = cx - 5 + x, sy = cy - 5 + y;
                const int expect = (sx >= 0 && sy >= 0 && sx < 64 && sy < 48) ? img(int(sx), int(sy)) : 0;
                EXPECT_EQ(crop(x, y), expect);
            }
    }
}

TEST(Time, FrameTimestamps) {
    const auto t0 = parse_utc("2016-08-02T11:00:00Z");
    EXPECT_EQ(format_utc(frame_time(t0, 150, 100.0)), "2016-08-02T11:00:01.500Z");
    EXPECT_EQ(format_utc(parse_utc("2016-08-02T23:59:59.250Z")), "2016-08-02T23:59:59.250Z");
    EXPECT_THROW(parse_utc("yesterday"), std::exception);
}
