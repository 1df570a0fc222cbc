#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "wdd/mapping.hpp"
#include "wdd/synth.hpp"

using namespace wdd;
using namespace wdd::mapping;

namespace {

const UtcTime kT0 = parse_utc("2016-08-02T10:00:00Z");

RunRecord rec(std::int64_t id, double x, double y, double seconds, double dir, double dur = 600) {
    RunRecord r;
    r.id = id;
    r.start_utc = kT0 + std::chrono::milliseconds{std::llround(seconds * 1000)};
    r.duration_ms = dur;
    r.direction_deg = dir;
    r.trace = {{0, x, y}};
    return r;
}

Config cfg40() {
    Config c;
    c.cluster_distance = 40;
    c.hive = {52.457, 13.296};
    return c;
}

std::set<std::set<std::int64_t>> id_sets(const std::vector<DanceCluster>& ds) {
    std::set<std::set<std::int64_t>> out;
    for (const auto& d : ds) {
        std::set<std::int64_t> s;
        for (const auto& r : d.runs) s.insert(r.run_id);
        out.insert(s);
    }
    return out;
}

// brute-force single linkage: transitive closure of the d <= cut relation
std::set<std::set<std::int64_t>> brute_linkage(const std::vector<RunRecord>& rs, double cut, int min_runs) {
    const std::size_t n = rs.size();
    std::vector<int> comp(n);
    std::iota(comp.begin(), comp.end(), 0);
    auto xyt = [&](std::size_t i) {
        const double t = unix_seconds(rs[i].start_utc) * 4;
        return std::array<double, 3>{rs[i].trace[0].x, rs[i].trace[0].y, t};
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const auto a = xyt(i), b = xyt(j);
                const double d = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
                if (d <= cut && comp[i] != comp[j]) {
                    const int lo = std::min(comp[i], comp[j]);
                    comp[i] = comp[j] = lo;
                    changed = true;
                }
            }
    }
    std::map<int, std::set<std::int64_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[comp[i]].insert(rs[i].id);
    std::set<std::set<std::int64_t>> out;
    for (auto& [k, s] : groups)
        if (static_cast<int>(s.size()) >= min_runs) out.insert(s);
    return out;
}

// consensus count of every candidate model angle
int best_consensus(const std::vector<double>& a, double th) {
    int best = 0;
    for (double m : a) {
        int c = 0;
        for (double x : a) c += angular_distance(x, m) <= th;
        best = std::max(best, c);
    }
    return best;
}

} // namespace

TEST(MappingConfig, Validation) {
    Config c;
    EXPECT_NO_THROW(c.validate());
    c.min_runs = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = Config{};
    c.ransac.threshold_deg = 90;
    EXPECT_THROW(c.validate(), ConfigError);
    c = Config{};
    c.meters_per_ms = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = Config{};
    c.cluster_distance = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(QuarterSeconds, LocalMidnight) {
    const auto t = parse_utc("2016-08-02T11:00:00Z");
    EXPECT_DOUBLE_EQ(quarter_seconds(t, t, 0.0), 11 * 3600 * 4.0);
    EXPECT_DOUBLE_EQ(quarter_seconds(t, t, 2.0), 13 * 3600 * 4.0);
    EXPECT_DOUBLE_EQ(quarter_seconds(t + std::chrono::milliseconds(250), t, 0.0), 11 * 3600 * 4.0 + 1);
}

TEST(ClusterDances, SixRunsOneSpot) {
    std::vector<RunRecord> rs;
    for (int i = 0; i < 6; ++i) rs.push_back(rec(i, 100, 100, 4.0 * i, 30));
    const auto d = cluster_dances(rs, cfg40());
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].runs.size(), 6u);
}

TEST(ClusterDances, ThreeRunsIsNoDance) {
    std::vector<RunRecord> rs;
    for (int i = 0; i < 3; ++i) rs.push_back(rec(i, 100, 100, 4.0 * i, 30));
    EXPECT_TRUE(cluster_dances(rs, cfg40()).empty());
}

TEST(ClusterDances, BoutsTenMinutesApart) {
    std::vector<RunRecord> rs;
    for (int i = 0; i < 5; ++i) rs.push_back(rec(i, 100, 100, 4.0 * i, 30));
    for (int i = 0; i < 5; ++i) rs.push_back(rec(10 + i, 100, 100, 600 + 4.0 * i, 30));
    // 10 min = 2400 quarter-seconds, far beyond the cut
    const auto d = cluster_dances(rs, cfg40());
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(id_sets(d), (std::set<std::set<std::int64_t>>{{0, 1, 2, 3, 4}, {10, 11, 12, 13, 14}}));
}

TEST(ClusterDances, RunsWithoutDirectionIgnored) {
    std::vector<RunRecord> rs;
    for (int i = 0; i < 4; ++i) rs.push_back(rec(i, 100, 100, 4.0 * i, 30));
    rs[2].direction_deg.reset();
    EXPECT_TRUE(cluster_dances(rs, cfg40()).empty());
}

TEST(ClusterDances, MatchesBruteForceAndPermutation) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> x(0, 320), y(0, 240), t(0, 120), ang(0, 360);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<RunRecord> rs;
        const int n = 5 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) rs.push_back(rec(i, x(rng), y(rng), t(rng), ang(rng)));
        const auto want = brute_linkage(rs, 40, 4);
        EXPECT_EQ(id_sets(cluster_dances(rs, cfg40())), want);
        std::shuffle(rs.begin(), rs.end(), rng);
        EXPECT_EQ(id_sets(cluster_dances(rs, cfg40())), want);
    }
}

TEST(Ransac, FlipsExcluded) {
    const std::vector<double> a{10, 12, 8, 11, 190, 192};
    RansacConfig c;
    c.threshold_deg = 20;
    const auto r = ransac_angles(a, c);
    EXPECT_TRUE(r.accepted);
    EXPECT_EQ(r.consensus, 4);
    EXPECT_EQ(r.inliers, (std::vector<bool>{true, true, true, true, false, false}));
}

TEST(Ransac, AllEqualAndNoMode) {
    RansacConfig c;
    c.threshold_deg = 20;
    const auto all = ransac_angles(std::vector<double>(7, 42.0), c);
    EXPECT_TRUE(all.accepted);
    EXPECT_EQ(std::count(all.inliers.begin(), all.inliers.end(), true), 7);
    const auto none = ransac_angles(std::vector<double>{0, 90, 180, 270}, c);
    EXPECT_FALSE(none.accepted);
    EXPECT_EQ(none.consensus, 1);
}

TEST(Ransac, ExhaustiveEnumerationAndDeterminism) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 360);
    std::normal_distribution<double> nd(0, 15);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 9);
        std::vector<double> a(n);
        const double c0 = u(rng);
        for (auto& v : a) v = rng() % 3 ? wrap360(c0 + nd(rng)) : u(rng);
        RansacConfig c;
        c.seed = rng();
        const auto r = ransac_angles(a, c);
        EXPECT_EQ(r.consensus, best_consensus(a, c.threshold_deg));
        // the mask is the consensus set of the chosen model
        for (int i = 0; i < n; ++i) EXPECT_EQ(r.inliers[i], angular_distance(a[i], r.model_deg) <= c.threshold_deg);
        EXPECT_EQ(std::count(r.inliers.begin(), r.inliers.end(), true), r.consensus);
        const auto again = ransac_angles(a, c);
        EXPECT_EQ(again.inliers, r.inliers);
        EXPECT_EQ(again.model_deg, r.model_deg);
    }
}

TEST(Ransac, InliersMoreConcentrated) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 360);
    std::normal_distribution<double> nd(0, 14);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> a;
        const double c0 = u(rng);
        for (int i = 0; i < 10; ++i) a.push_back(c0 + nd(rng));
        for (int i = 0; i < 2; ++i) a.push_back(c0 + 180 + nd(rng));
        const auto r = ransac_angles(a, RansacConfig{});
        std::vector<double> in;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (r.inliers[i]) in.push_back(a[i]);
        EXPECT_GE(resultant_length(in) + 1e-12, resultant_length(a));
    }
}

TEST(DecodeDance, PaperDistanceAndBearing) {
    Config c = cfg40();
    std::vector<RunRecord> rs;
    for (int i = 0; i < 4; ++i) rs.push_back(rec(i, 50, 50, 2.0 * i, 0.0, 582.79));
    auto ds = cluster_dances(rs, c);
    ASSERT_EQ(ds.size(), 1u);
    ASSERT_TRUE(fit_dance(ds[0], c));
    const auto v = decode_dance(ds[0], c);
    EXPECT_NEAR(v.distance_m, 342.0, 0.01);
    EXPECT_NEAR(c.meters_per_ms, 0.5868, 1e-4);
    EXPECT_NEAR(v.alpha_deg, 0.0, 1e-9);
    const auto mid = kT0 + std::chrono::milliseconds(std::llround((6.0 * 1000 + 582.79) / 2));
    EXPECT_NEAR(unix_seconds(v.mid_time), unix_seconds(mid), 0.002);
    EXPECT_NEAR(v.azimuth_deg, solar_azimuth(52.457, 13.296, v.mid_time), 1e-12);
    EXPECT_NEAR(v.bearing_deg, v.azimuth_deg, 1e-9);
    // endpoint along the bearing at the decoded distance
    const auto back = geodesic_inverse(c.hive, v.endpoint);
    EXPECT_NEAR(back.distance_m, 342.0, 0.1);
    EXPECT_LE(angular_distance(back.bearing_deg, v.bearing_deg), 0.01);
}

TEST(DecodeDance, BearingIsAzimuthPlusAngle) {
    Config c = cfg40();
    std::vector<RunRecord> rs;
    for (int i = 0; i < 5; ++i) rs.push_back(rec(i, 50, 50, 2.0 * i, 90.0));
    const auto res = map_dances(rs, c);
    ASSERT_EQ(res.size(), 1u);
    ASSERT_TRUE(res[0].vector);
    const auto& v = *res[0].vector;
    EXPECT_NEAR(angular_distance(v.bearing_deg, v.azimuth_deg + 90.0), 0.0, 1e-9);
}

TEST(DecodeDance, BearingEquivariance) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0, 10);
    std::uniform_real_distribution<double> u(0, 360);
    for (int trial = 0; trial < 50; ++trial) {
        const double base = u(rng), delta = u(rng) - 180;
        std::vector<RunRecord> a, b;
        for (int i = 0; i < 6; ++i) {
            const double d = base + nd(rng);
            a.push_back(rec(i, 80, 80, 2.0 * i, wrap360(d)));
            b.push_back(rec(i, 80, 80, 2.0 * i, wrap360(d + delta)));
        }
        const auto ra = map_dances(a, cfg40()), rb = map_dances(b, cfg40());
        ASSERT_TRUE(ra[0].vector && rb[0].vector);
        EXPECT_EQ(ra[0].cluster.inliers, rb[0].cluster.inliers);
        EXPECT_LE(angular_distance(rb[0].vector->bearing_deg, ra[0].vector->bearing_deg + delta), 1e-9);
    }
}

TEST(DecodeDance, ReturnDurationsAndProfitability) {
    Config c = cfg40();
    // runs of 500 ms starting every 2 s: return gap 1500 ms; one 6 s interruption
    std::vector<RunRecord> rs;
    for (int i = 0; i < 4; ++i) rs.push_back(rec(i, 50, 50, 2.0 * i, 20, 500));
    rs.push_back(rec(4, 50, 50, 6.0 + 6.5, 20, 500));
    auto d = cluster_dances(rs, c);
    ASSERT_EQ(d.size(), 1u);
    ASSERT_TRUE(fit_dance(d[0], c));
    const auto v = decode_dance(d[0], c);
    ASSERT_TRUE(v.mean_return_ms);
    EXPECT_NEAR(*v.mean_return_ms, 1500.0, 1e-9);
    EXPECT_NEAR(*v.profitability, 500.0 / 1500.0, 1e-12);

    // only non-consecutive inliers: no return duration
    DanceCluster alt;
    for (int i = 0; i < 8; ++i)
        alt.runs.push_back({i, 0, 0, 8.0 * i, i % 2 ? 200.0 : 20.0, 500, kT0 + std::chrono::seconds(2 * i)});
    alt.inliers = {true, false, true, false, true, false, true, false};
    const auto w = decode_dance(alt, c);
    EXPECT_FALSE(w.mean_return_ms);
    EXPECT_FALSE(w.profitability);
    EXPECT_NEAR(w.alpha_deg, 20.0, 1e-9);
}

TEST(DecodeDance, UnfittedClusterThrows) {
    DanceCluster d;
    d.runs.resize(4);
    EXPECT_THROW(decode_dance(d, Config{}), Error);
}

TEST(DecodeDance, SyntheticColonyDances) {
    synth::ColonyOptions opt;
    opt.dances = 40;
    opt.run_sd_deg = 2.0;
    opt.duration_sd_ms = 20.0;
    opt.mean_runs = 8;
    synth::ColonyTruth truth;
    const auto rs = synth::generate_colony_runs(opt, &truth);
    Config c = cfg40();
    c.hive = opt.hive;
    c.meters_per_ms = truth.meters_per_ms;
    const auto res = map_dances(rs, c);
    ASSERT_EQ(res.size(), 40u);
    for (const auto& d : res) {
        ASSERT_TRUE(d.vector);
        EXPECT_LE(angular_distance(d.vector->bearing_deg, 225.0), 3.0);
        EXPECT_NEAR(d.vector->distance_m, 342.0, 0.05 * 342.0);
    }
}

TEST(Calibration, Examples) {
    const std::vector<double> same(12, 582.79);
    const auto a = calibrate_distance(same, 342.0);
    EXPECT_NEAR(a.meters_per_ms, 0.58684, 1e-5);
    EXPECT_NEAR(a.cv, 0.0, 1e-12);
    const auto b = calibrate_distance(std::vector<double>{500, 500}, 100.0, 2);
    EXPECT_DOUBLE_EQ(b.meters_per_ms, 0.2);
    EXPECT_DOUBLE_EQ(b.cv, 0.0);
    EXPECT_THROW(calibrate_distance(std::vector<double>{500, 500}, 100.0), CalibrationError);
    EXPECT_THROW(calibrate_distance(same, 0.0), CalibrationError);
}

TEST(Calibration, RecoversCoefficientOfVariation) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(582.79, 0.34 * 582.79);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> d(500);
        for (auto& x : d) x = nd(rng);
        const auto c = calibrate_distance(d, 342.0);
        EXPECT_NEAR(c.cv, 0.34, 0.05);
        EXPECT_NEAR(c.meters_per_ms, 342.0 / 582.79, 0.05 * 342.0 / 582.79);
    }
}

TEST(Calibration, RunsNearBearing) {
    const std::vector<double> b{225, 231, 240, 219, 45, 214.9};
    EXPECT_EQ(runs_near_bearing(b, 225.0), (std::vector<std::size_t>{0, 1, 3}));
}

TEST(Export, EmptyFeatureCollection) {
    const auto j = to_geojson({}, GeoPoint{52.457, 13.296});
    EXPECT_EQ(j["type"], "FeatureCollection");
    EXPECT_TRUE(j["features"].is_array());
    EXPECT_TRUE(j["features"].empty());
    EXPECT_NE(to_svg({}, GeoPoint{52.457, 13.296}).find("<svg"), std::string::npos);
}

TEST(Export, OneDanceNorth) {
    const GeoPoint hive{52.457, 13.296};
    FieldVector v;
    v.bearing_deg = 0;
    v.distance_m = 100;
    v.runs = 6;
    v.endpoint = geodesic_destination(hive, 0, 100);
    const std::vector<FieldVector> vs{v};
    const auto j = to_geojson(vs, hive, GeoPoint{52.455, 13.293});
    std::vector<std::string> kinds;
    for (const auto& f : j["features"]) kinds.push_back(f["properties"]["kind"]);
    EXPECT_EQ(kinds, (std::vector<std::string>{"dance", "hive", "feeder", "mean_direction"}));
    const auto& pt = j["features"][0];
    const GeoPoint p{pt["geometry"]["coordinates"][1].get<double>(), pt["geometry"]["coordinates"][0].get<double>()};
    const auto back = geodesic_inverse(hive, p);
    EXPECT_NEAR(back.distance_m, 100.0, 0.1);
    EXPECT_LE(angular_distance(back.bearing_deg, 0.0), 0.01);
    EXPECT_EQ(pt["properties"]["runs"], 6);
    EXPECT_TRUE(pt["properties"]["p_R"].is_null());
    const auto svg = to_svg(vs, hive);
    EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 3, true);
    EXPECT_NE(svg.find("<circle"), std::string::npos);
}

TEST(Export, SaturationScalesWithRuns) {
    EXPECT_DOUBLE_EQ(saturation(4, 12), 0.0);
    EXPECT_DOUBLE_EQ(saturation(12, 12), 1.0);
    EXPECT_DOUBLE_EQ(saturation(8, 12), 0.5);
    EXPECT_DOUBLE_EQ(saturation(4, 4), 1.0);
}

TEST(Export, DanceSummary) {
    std::vector<RunRecord> rs;
    for (int i = 0; i < 5; ++i) rs.push_back(rec(i + 1, 50, 50, 2.0 * i, i == 4 ? 200.0 : 10.0));
    const auto res = map_dances(rs, cfg40());
    ASSERT_EQ(res.size(), 1u);
    const auto j = dance_summary(res[0], 0);
    EXPECT_EQ(j["dance_id"], 1);
    EXPECT_EQ(j["status"], "decoded");
    EXPECT_EQ(j["run_ids"], nlohmann::json({1, 2, 3, 4, 5}));
    EXPECT_EQ(j["inliers"], nlohmann::json({true, true, true, true, false}));
    EXPECT_EQ(j["n_inliers"], 4);
}
