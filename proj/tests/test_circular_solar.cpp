#include <gtest/gtest.h>

#include <complex>
#include <numbers>
#include <random>

#include "oracles/oracles.hpp"
#include "wdd/circular.hpp"
#include "wdd/geo.hpp"
#include "wdd/solar.hpp"

using namespace wdd;
using oracle::complex_mean_deg;
using oracle::kAlmanac;

TEST(Angles, Wrapping) {
    EXPECT_EQ(wrap360(-10), 350);
    EXPECT_EQ(wrap360(720), 0);
    EXPECT_EQ(wrap360(-1e-20), 0);
    EXPECT_EQ(wrap180(190), 10);
    EXPECT_EQ(wrap180(-30), 150);
    EXPECT_EQ(signed_angle_diff(10, 350), 20);
    EXPECT_EQ(signed_angle_diff(350, 10), -20);
    EXPECT_EQ(signed_angle_diff(0, 180), 180);
    EXPECT_EQ(angular_distance(359, 1), 2);
}

TEST(Angles, CompassConvention) {
    EXPECT_DOUBLE_EQ(compass_angle(0, -1), 0);   // up
    EXPECT_DOUBLE_EQ(compass_angle(1, 0), 90);   // right
    EXPECT_DOUBLE_EQ(compass_angle(0, 1), 180);  // down
    EXPECT_DOUBLE_EQ(compass_angle(-1, 0), 270);
    for (double a = 0; a < 360; a += 17) {
        double dx = 0, dy = 0;
        compass_vector(a, dx, dy);
        EXPECT_NEAR(compass_angle(dx, dy), a, 1e-9);
    }
}

TEST(CircularMean, Examples) {
    EXPECT_NEAR(angular_distance(circular_mean(std::vector<double>{350, 10}), 0), 0, 1e-12);
    EXPECT_NEAR(angular_distance(circular_mean(std::vector<double>{10, -10}), 0), 0, 1e-12);
    EXPECT_NEAR(circular_mean(std::vector<double>{90}), 90, 1e-12);
    EXPECT_THROW(circular_mean(std::vector<double>{}), UndefinedMeanError);
    EXPECT_THROW(circular_mean(std::vector<double>{0, 180}), UndefinedMeanError);
    EXPECT_THROW(circular_mean(std::vector<double>{0, 120, 240}), UndefinedMeanError);
}

TEST(CircularMean, MatchesComplexSumOracle) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto s = oracle::random_angle_set(rng);
        const double got = circular_mean(s);
        EXPECT_GE(got, 0.0);
        EXPECT_LT(got, 360.0);
        EXPECT_LE(angular_distance(got, complex_mean_deg(s)), 1e-9) << trial;
    }
}

TEST(CircularMean, RotationEquivariance) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> delta(-1000, 1000);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto s = oracle::random_angle_set(rng);
        const double d = delta(rng);
        auto r = s;
        for (auto& a : r) a += d;
        EXPECT_LE(angular_distance(circular_mean(r), circular_mean(s) + d), 1e-9) << trial;
    }
}

TEST(CircularStats, ResultantAndSd) {
    EXPECT_NEAR(resultant_length(std::vector<double>{5, 5, 5}), 1.0, 1e-15);
    EXPECT_NEAR(resultant_length(std::vector<double>{0, 180}), 0.0, 1e-15);
    EXPECT_NEAR(circular_sd(std::vector<double>{5, 5, 5}), 0.0, 1e-6);
    // wrapped normal: R = exp(-sigma^2/2), so the SD recovers sigma
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0, 14.37);
    std::vector<double> s(200000);
    for (auto& a : s) a = 40 + nd(rng);
    EXPECT_NEAR(circular_sd(s), 14.37, 0.1);
}

TEST(Solar, AlmanacValues) {
    for (const auto& c : kAlmanac) {
        const auto p = solar_position(c.lat, c.lon, parse_utc(c.utc));
        EXPECT_LE(angular_distance(p.azimuth_deg, c.azimuth), 0.5) << c.utc << " " << c.lat;
        EXPECT_NEAR(p.elevation_deg, c.elevation, 0.5) << c.utc << " " << c.lat;
        EXPECT_DOUBLE_EQ(solar_azimuth(c.lat, c.lon, parse_utc(c.utc)), p.azimuth_deg);
    }
}

TEST(Solar, BerlinSolarNoonAndEquatorSunrise) {
    EXPECT_LE(angular_distance(solar_azimuth(52.45, 13.30, parse_utc("2016-08-02T11:13:01Z")), 180.0), 0.5);
    EXPECT_LE(angular_distance(solar_azimuth(0.0, 0.0, parse_utc("2020-03-20T06:04:05Z")), 90.0), 1.0);
}

TEST(Solar, Continuity) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> lat(-60, 60), lon(-180, 180), t(0, 3e9);
    for (int i = 0; i < 500; ++i) {
        const double la = lat(rng), lo = lon(rng);
        const auto t0 = from_unix_seconds(std::floor(t(rng)));
        const auto p = solar_position(la, lo, t0);
        if (std::abs(p.elevation_deg) > 70) continue;  // azimuth turns fast near zenith and nadir
        const double a = solar_azimuth(la, lo, t0), b = solar_azimuth(la, lo, t0 + std::chrono::seconds(1));
        EXPECT_LT(angular_distance(a, b), 0.02);
    }
}

TEST(Solar, RejectsBadLatitude) {
    EXPECT_THROW(solar_azimuth(91, 0, parse_utc("2020-01-01T00:00:00Z")), Error);
}

TEST(Geodesic, HundredMetersNorth) {
    const GeoPoint hive{52.457, 13.296};
    const auto p = geodesic_destination(hive, 0.0, 100.0);
    EXPECT_NEAR(p.lon_deg, hive.lon_deg, 1e-12);
    EXPECT_NEAR((p.lat_deg - hive.lat_deg) * std::numbers::pi / 180 * 6371000.0, 100.0, 0.1);
    const auto v = geodesic_inverse(hive, p);
    EXPECT_NEAR(v.distance_m, 100.0, 0.1);
    EXPECT_LE(angular_distance(v.bearing_deg, 0.0), 0.01);
}

TEST(Geodesic, RoundTripProperty) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180), brg(0, 360), dist(1, 10000);
    for (int i = 0; i < 2000; ++i) {
        const GeoPoint o{lat(rng), lon(rng)};
        const double b = brg(rng), d = dist(rng);
        const auto v = geodesic_inverse(o, geodesic_destination(o, b, d));
        EXPECT_LE(angular_distance(v.bearing_deg, b), 0.01);
        EXPECT_NEAR(v.distance_m, d, 0.1);
    }
}
