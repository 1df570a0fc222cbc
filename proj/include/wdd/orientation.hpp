#pragma once

// Waggle orientation from a snippet stack: difference images, accumulated
// power spectra, ring-shaped DoG bandpass, weighted PCA, and disambiguation of
// the body axis by the forward motion of the dot-detector trace.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "wdd/circular.hpp"
#include "wdd/errors.hpp"
#include "wdd/fft.hpp"
#include "wdd/image.hpp"

namespace wdd::orientation {

struct BandpassConfig {
    int snippet_size_px = 50;
    /// Expected lateral displacement of the dancer between frames.
    double displacement_px = 6.0;
    /// Gaussian widths of the radial profile; unset means k/2 and k.
    std::optional<double> sigma_inner;
    std::optional<double> sigma_outer;

    /// Ring radius k = I_size / (2 x): one period of the difference pattern spans two displacements.
    double expected_frequency() const { return snippet_size_px / (2.0 * displacement_px); }
    double inner() const { return sigma_inner.value_or(expected_frequency() / 2.0); }
    double outer() const { return sigma_outer.value_or(expected_frequency()); }

    void validate() const {
        if (snippet_size_px < 2) throw ConfigError("orientation.snippet_size_px", "must be >= 2");
        if (!(displacement_px > 0)) throw ConfigError("orientation.displacement_px", "must be positive");
        if (!(inner() > 0) || !(inner() < outer()))
            throw ConfigError("orientation.sigma_inner", "need 0 < sigma_inner < sigma_outer");
        if (!(expected_frequency() < snippet_size_px / 2.0))
            throw ConfigError("orientation.displacement_px", "ring radius must be below I_size/2");
    }
};

struct AxisEstimate {
    double axis_deg = 0.0;    // [0, 180)
    double confidence = 1.0;  // lambda1 / lambda2
    bool low_confidence = false;
};

struct OrientationResult {
    double axis_deg = 0.0;
    /// Disambiguated direction in [0, 360); empty when the trace could not resolve it.
    std::optional<double> direction_deg;
    double confidence = 1.0;
    bool low_confidence = false;
};

/// Eigenvalue ratio below which the spectrum is treated as isotropic.
inline constexpr double kLowConfidenceRatio = 1.2;

inline Image<int> diff_image(const GrayImage& current, const GrayImage& previous) {
    require_same_size(current, previous, "difference image");
    Image<int> out(current.width(), current.height());
    for (std::size_t i = 0; i < current.size(); ++i)
        out.data()[i] = static_cast<int>(current.data()[i]) - static_cast<int>(previous.data()[i]);
    return out;
}

/// Sum over t of |FFT2(f_t - f_{t-1})|^2 with DC moved to (N/2, N/2).
inline Image<double> accumulate_spectrum(std::span<const GrayImage> stack) {
    if (stack.size() < 2) throw NoSignalError("spectrum accumulation needs at least two snippets");
    const int w = stack.front().width(), h = stack.front().height();
    Image<double> acc(w, h, 0.0);
    for (std::size_t t = 1; t < stack.size(); ++t) {
        const auto spec = fft2(diff_image(stack[t], stack[t - 1]));
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += std::norm(spec.data()[i]);
    }
    return fft_shift(acc);
}

/// Radial Mexican-hat profile centered on radius k, scaled to gain 1 at r = k.
/// Negative lobes are returned as is; dog_bandpass clamps them.
inline double dog_gain(double radius, const BandpassConfig& cfg) {
    const double k = cfg.expected_frequency();
    const double si = cfg.inner(), so = cfg.outer();
    const double d = radius - k;
    const double g = std::exp(-d * d / (2 * si * si)) / si - std::exp(-d * d / (2 * so * so)) / so;
    return g / (1.0 / si - 1.0 / so);
}

inline Image<double> dog_bandpass(const Image<double>& spectrum, const BandpassConfig& cfg) {
    cfg.validate();
    const int w = spectrum.width(), h = spectrum.height();
    Image<double> out(w, h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double r = std::hypot(x - w / 2, y - h / 2);
            out(x, y) = std::max(0.0, spectrum(x, y) * dog_gain(r, cfg));
        }
    return out;
}

/// Weighted PCA of the DC-centered frequency coordinates. The dominant
/// frequency direction is the lateral motion; the body axis is 90 degrees off.
inline AxisEstimate principal_axis(const Image<double>& spectrum) {
    const int w = spectrum.width(), h = spectrum.height();
    double sw = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = spectrum(x, y);
            if (m <= 0.0) continue;
            const double u = x - w / 2, v = y - h / 2;
            sw += m;
            sxx += m * u * u;
            syy += m * v * v;
            sxy += m * u * v;
        }
    if (!(sw > 0.0)) throw NoSignalError("principal axis: spectrum is zero");
    sxx /= sw;
    syy /= sw;
    sxy /= sw;
    const double mean = 0.5 * (sxx + syy);
    const double spread = std::hypot(0.5 * (sxx - syy), sxy);
    const double l1 = mean + spread, l2 = mean - spread;
    const double phi = 0.5 * std::atan2(2.0 * sxy, sxx - syy);  // image axes, y down
    AxisEstimate est;
    est.axis_deg = wrap180(compass_angle(std::cos(phi), std::sin(phi)) + 90.0);
    est.confidence = l2 > 1e-12 * std::max(1.0, l1) ? l1 / l2 : 1e12;
    est.low_confidence = est.confidence < kLowConfidenceRatio;
    return est;
}

/// Picks the branch of `axis_deg` (axis or axis + 180) that agrees with the
/// forward motion of the trace: anchor = mean of the first 10% of points, the
/// modal 10-degree bin of anchor-relative vectors gives the forward direction.
inline double disambiguate(std::span<const Point2d> trace, double axis_deg) {
    if (trace.size() < 10)
        throw UnresolvedDirectionError("direction needs at least 10 trace points, got " + std::to_string(trace.size()));
    const std::size_t n_anchor = std::max<std::size_t>(1, trace.size() / 10);
    Point2d anchor;
    for (std::size_t i = 0; i < n_anchor; ++i) {
        anchor.x += trace[i].x;
        anchor.y += trace[i].y;
    }
    anchor.x /= static_cast<double>(n_anchor);
    anchor.y /= static_cast<double>(n_anchor);

    constexpr int kBins = 36;
    std::array<int, kBins> counts{};
    std::array<double, kBins> sum_x{}, sum_y{};
    for (std::size_t i = n_anchor; i < trace.size(); ++i) {
        const double dx = trace[i].x - anchor.x, dy = trace[i].y - anchor.y;
        if (dx == 0.0 && dy == 0.0) continue;
        const int bin = std::min(kBins - 1, static_cast<int>(compass_angle(dx, dy) / (360.0 / kBins)));
        ++counts[bin];
        const double len = std::hypot(dx, dy);
        sum_x[bin] += dx / len;
        sum_y[bin] += dy / len;
    }
    const auto mode = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[mode] == 0) throw UnresolvedDirectionError("trace shows no motion");
    const double forward = compass_angle(sum_x[mode], sum_y[mode]);
    const double axis = wrap180(axis_deg);
    return angular_distance(axis, forward) <= 90.0 ? axis : axis + 180.0;
}

inline OrientationResult decode_orientation(std::span<const GrayImage> snippets, std::span<const Point2d> trace,
                                            const BandpassConfig& cfg) {
    cfg.validate();
    const auto filtered = dog_bandpass(accumulate_spectrum(snippets), cfg);
    const auto axis = principal_axis(filtered);
    OrientationResult res;
    res.axis_deg = axis.axis_deg;
    res.confidence = axis.confidence;
    res.low_confidence = axis.low_confidence;
    try {
        res.direction_deg = disambiguate(trace, axis.axis_deg);
    } catch (const UnresolvedDirectionError&) {
        res.direction_deg.reset();
    }
    return res;
}

} // namespace wdd::orientation
