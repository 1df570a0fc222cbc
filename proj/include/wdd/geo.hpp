#pragma once

// Great-circle geometry on a spherical Earth (R = 6371 km).

#include <algorithm>
#include <cmath>

#include "wdd/circular.hpp"

namespace wdd {

inline constexpr double kEarthRadiusM = 6371000.0;

struct GeoPoint {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
};

struct GeoVector {
    double bearing_deg = 0.0;
    double distance_m = 0.0;
};

/// Point reached from `origin` travelling `distance_m` along initial bearing `bearing_deg`.
inline GeoPoint geodesic_destination(GeoPoint origin, double bearing_deg, double distance_m) {
    const double lat1 = origin.lat_deg * kRadPerDeg, lon1 = origin.lon_deg * kRadPerDeg;
    const double brg = bearing_deg * kRadPerDeg, ang = distance_m / kEarthRadiusM;
    const double lat2 = std::asin(std::sin(lat1) * std::cos(ang) + std::cos(lat1) * std::sin(ang) * std::cos(brg));
    const double lon2 = lon1 + std::atan2(std::sin(brg) * std::sin(ang) * std::cos(lat1),
                                          std::cos(ang) - std::sin(lat1) * std::sin(lat2));
    double lon_deg = lon2 * kDegPerRad;
    lon_deg = std::fmod(lon_deg + 540.0, 360.0) - 180.0;
    return {lat2 * kDegPerRad, lon_deg};
}

/// Initial bearing and haversine distance from `a` to `b`.
inline GeoVector geodesic_inverse(GeoPoint a, GeoPoint b) {
    const double lat1 = a.lat_deg * kRadPerDeg, lat2 = b.lat_deg * kRadPerDeg;
    const double dlat = lat2 - lat1, dlon = (b.lon_deg - a.lon_deg) * kRadPerDeg;
    const double h = std::pow(std::sin(dlat / 2), 2) + std::cos(lat1) * std::cos(lat2) * std::pow(std::sin(dlon / 2), 2);
    const double dist = 2 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
    const double brg = std::atan2(std::sin(dlon) * std::cos(lat2),
                                  std::cos(lat1) * std::sin(lat2) - std::sin(lat1) * std::cos(lat2) * std::cos(dlon));
    return {wrap360(brg * kDegPerRad), dist};
}

/// Local east/north offset in meters of `p` relative to `origin` (equirectangular, short ranges).
inline void local_offset_m(GeoPoint origin, GeoPoint p, double& east, double& north) {
    east = (p.lon_deg - origin.lon_deg) * kRadPerDeg * kEarthRadiusM * std::cos(origin.lat_deg * kRadPerDeg);
    north = (p.lat_deg - origin.lat_deg) * kRadPerDeg * kEarthRadiusM;
}

} // namespace wdd
