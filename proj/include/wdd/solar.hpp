#pragma once

// Solar position after the NOAA solar calculator formulation (Meeus-based
// low-precision series). Azimuth is measured clockwise from true north.

#include <algorithm>
#include <cmath>

#include "wdd/circular.hpp"
#include "wdd/errors.hpp"
#include "wdd/time.hpp"

namespace wdd {

struct SolarPosition {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;  // geometric, no refraction
    double declination_deg = 0.0;
    double equation_of_time_min = 0.0;
};

inline SolarPosition solar_position(double latitude_deg, double longitude_deg, UtcTime when) {
    if (!(std::abs(latitude_deg) <= 90.0)) throw Error("solar position: latitude outside [-90, 90]");
    const double unix_s = unix_seconds(when);
    const double jd = unix_s / 86400.0 + 2440587.5;
    const double t = (jd - 2451545.0) / 36525.0;

    const double l0 = wrap360(280.46646 + t * (36000.76983 + t * 0.0003032));
    const double m = 357.52911 + t * (35999.05029 - 0.0001537 * t);
    const double e = 0.016708634 - t * (0.000042037 + 0.0000001267 * t);
    const double mr = m * kRadPerDeg;
    const double center = std::sin(mr) * (1.914602 - t * (0.004817 + 0.000014 * t)) +
                          std::sin(2 * mr) * (0.019993 - 0.000101 * t) + std::sin(3 * mr) * 0.000289;
    const double true_long = l0 + center;
    const double omega = 125.04 - 1934.136 * t;
    const double app_long = true_long - 0.00569 - 0.00478 * std::sin(omega * kRadPerDeg);
    const double eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0;
    const double eps = eps0 + 0.00256 * std::cos(omega * kRadPerDeg);
    const double decl = std::asin(std::sin(eps * kRadPerDeg) * std::sin(app_long * kRadPerDeg));

    const double y = std::pow(std::tan(eps * kRadPerDeg / 2.0), 2);
    const double l0r = l0 * kRadPerDeg;
    const double eot = 4.0 * kDegPerRad *
                       (y * std::sin(2 * l0r) - 2 * e * std::sin(mr) + 4 * e * y * std::sin(mr) * std::cos(2 * l0r) -
                        0.5 * y * y * std::sin(4 * l0r) - 1.25 * e * e * std::sin(2 * mr));

    const double minutes_utc = std::fmod(unix_s, 86400.0) / 60.0;
    double true_solar = std::fmod(minutes_utc + eot + 4.0 * longitude_deg, 1440.0);
    if (true_solar < 0) true_solar += 1440.0;
    const double hour_angle = (true_solar / 4.0 - 180.0) * kRadPerDeg;

    const double lat = latitude_deg * kRadPerDeg;
    const double cos_zen = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
    const double zenith = std::acos(std::clamp(cos_zen, -1.0, 1.0));

    SolarPosition pos;
    pos.declination_deg = decl * kDegPerRad;
    pos.equation_of_time_min = eot;
    pos.elevation_deg = 90.0 - zenith * kDegPerRad;
    pos.azimuth_deg = wrap360(
        180.0 + kDegPerRad * std::atan2(std::sin(hour_angle),
                                        std::cos(hour_angle) * std::sin(lat) - std::tan(decl) * std::cos(lat)));
    return pos;
}

inline double solar_azimuth(double latitude_deg, double longitude_deg, UtcTime when) {
    return solar_position(latitude_deg, longitude_deg, when).azimuth_deg;
}

} // namespace wdd
