#pragma once

// Angle conventions: comb/compass angles in degrees, 0 = up (north), clockwise
// positive. Image coordinates have y pointing down.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>

#include "wdd/errors.hpp"

namespace wdd {

inline constexpr double kDegPerRad = 180.0 / std::numbers::pi;
inline constexpr double kRadPerDeg = std::numbers::pi / 180.0;

/// Maps any angle into [0, 360).
inline double wrap360(double deg) {
    double r = std::fmod(deg, 360.0);
    if (r < 0) r += 360.0;
    return r >= 360.0 ? 0.0 : r;
}

/// Maps an undirected axis into [0, 180).
inline double wrap180(double deg) {
    double r = std::fmod(deg, 180.0);
    if (r < 0) r += 180.0;
    return r >= 180.0 ? 0.0 : r;
}

/// Signed difference a - b folded into (-180, 180].
inline double signed_angle_diff(double a, double b) {
    double d = wrap360(a - b);
    return d > 180.0 ? d - 360.0 : d;
}

inline double angular_distance(double a, double b) { return std::abs(signed_angle_diff(a, b)); }

/// Compass angle of an image-space vector (dx right, dy down).
inline double compass_angle(double dx, double dy) { return wrap360(std::atan2(dx, -dy) * kDegPerRad); }

/// Image-space unit vector of a compass angle.
inline void compass_vector(double deg, double& dx, double& dy) {
    dx = std::sin(deg * kRadPerDeg);
    dy = -std::cos(deg * kRadPerDeg);
}

/// Mean resultant length of a set of angles, in [0, 1].
inline double resultant_length(std::span<const double> degs) {
    if (degs.empty()) return 0.0;
    double s = 0.0, c = 0.0;
    for (double a : degs) {
        s += std::sin(a * kRadPerDeg);
        c += std::cos(a * kRadPerDeg);
    }
    return std::hypot(s, c) / static_cast<double>(degs.size());
}

/// atan2 of the summed sines and cosines, in [0, 360).
inline double circular_mean(std::span<const double> degs) {
    if (degs.empty()) throw UndefinedMeanError("circular mean of an empty set");
    double s = 0.0, c = 0.0;
    for (double a : degs) {
        s += std::sin(a * kRadPerDeg);
        c += std::cos(a * kRadPerDeg);
    }
    if (std::hypot(s, c) / static_cast<double>(degs.size()) < 1e-12)
        throw UndefinedMeanError("circular mean undefined: resultant vector vanishes");
    return wrap360(std::atan2(s, c) * kDegPerRad);
}

/// Circular standard deviation sqrt(-2 ln R) in degrees.
inline double circular_sd(std::span<const double> degs) {
    const double r = resultant_length(degs);
    if (r <= 0.0) return 180.0;
    return std::sqrt(-2.0 * std::log(std::min(1.0, r))) * kDegPerRad;
}

} // namespace wdd
