#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "wdd/errors.hpp"
#include "wdd/image.hpp"

namespace wdd {

/// Projective transform of the image plane, stored row-major with m[8] == 1.
class Homography {
public:
    Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

    explicit Homography(const std::array<double, 9>& m) : m_(m) {
        if (m_[8] == 0.0) throw DegenerateConfigurationError("homography: bottom-right element is zero");
        const double s = m_[8];
        for (auto& v : m_) v /= s;
        if (std::abs(determinant()) < 1e-12) throw DegenerateConfigurationError("homography: singular matrix");
    }

    static Homography identity() { return {}; }

    double operator()(int row, int col) const { return m_[static_cast<std::size_t>(row * 3 + col)]; }
    const std::array<double, 9>& elements() const noexcept { return m_; }

    Point2d apply(Point2d p) const {
        const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
        return {(m_[0] * p.x + m_[1] * p.y + m_[2]) / w, (m_[3] * p.x + m_[4] * p.y + m_[5]) / w};
    }

    double determinant() const {
        return m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) - m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
               m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
    }

    Homography inverse() const {
        const double det = determinant();
        if (std::abs(det) < 1e-300) throw DegenerateConfigurationError("homography: singular matrix");
        const auto& a = m_;
        std::array<double, 9> inv{
            a[4] * a[8] - a[5] * a[7], a[2] * a[7] - a[1] * a[8], a[1] * a[5] - a[2] * a[4],
            a[5] * a[6] - a[3] * a[8], a[0] * a[8] - a[2] * a[6], a[2] * a[3] - a[0] * a[5],
            a[3] * a[7] - a[4] * a[6], a[1] * a[6] - a[0] * a[7], a[0] * a[4] - a[1] * a[3]};
        for (auto& v : inv) v /= det;
        return Homography(inv);
    }

    Homography operator*(const Homography& rhs) const {
        std::array<double, 9> r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) r[i * 3 + j] += m_[i * 3 + k] * rhs.m_[k * 3 + j];
        return Homography(r);
    }

private:
    std::array<double, 9> m_;
};

namespace detail {

/// Solves A x = b in place (Gaussian elimination, partial pivoting). A is n x n row-major.
template <std::size_t N>
std::array<double, N> solve_dense(std::array<double, N * N> a, std::array<double, N> b) {
    for (std::size_t col = 0; col < N; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < N; ++r)
            if (std::abs(a[r * N + col]) > std::abs(a[pivot * N + col])) pivot = r;
        if (std::abs(a[pivot * N + col]) < 1e-12)
            throw DegenerateConfigurationError("singular linear system");
        if (pivot != col) {
            for (std::size_t c = 0; c < N; ++c) std::swap(a[col * N + c], a[pivot * N + c]);
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < N; ++r) {
            const double f = a[r * N + col] / a[col * N + col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < N; ++c) a[r * N + c] -= f * a[col * N + c];
            b[r] -= f * b[col];
        }
    }
    std::array<double, N> x{};
    for (std::size_t i = N; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < N; ++c) s -= a[i * N + c] * x[c];
        x[i] = s / a[i * N + i];
    }
    return x;
}

inline void require_general_position(std::span<const Point2d, 4> p, const char* which) {
    double scale = 0.0;
    for (const auto& q : p) scale = std::max({scale, std::abs(q.x), std::abs(q.y)});
    const double tol = 1e-9 * std::max(1.0, scale * scale);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            for (int k = j + 1; k < 4; ++k) {
                const double cross = (p[j].x - p[i].x) * (p[k].y - p[i].y) - (p[j].y - p[i].y) * (p[k].x - p[i].x);
                if (std::abs(cross) <= tol)
                    throw DegenerateConfigurationError(std::string("homography: three ") + which +
                                                       " points are collinear");
            }
}

} // namespace detail

/// Exact 4-point homography mapping src[i] to dst[i].
inline Homography estimate_homography(std::span<const Point2d, 4> src, std::span<const Point2d, 4> dst) {
    detail::require_general_position(src, "source");
    detail::require_general_position(dst, "destination");
    std::array<double, 64> a{};
    std::array<double, 8> b{};
    for (std::size_t i = 0; i < 4; ++i) {
        const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
        double* r0 = &a[(2 * i) * 8];
        double* r1 = &a[(2 * i + 1) * 8];
        r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -x * u; r0[7] = -y * u;
        r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -x * v; r1[7] = -y * v;
        b[2 * i] = u;
        b[2 * i + 1] = v;
    }
    const auto h = detail::solve_dense<8>(a, b);
    return Homography({h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0});
}

/// Bilinear sample with off-image neighbours treated as 0.
inline double sample_bilinear(const GrayImage& img, double x, double y) {
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    if (fx0 < -1.0 || fy0 < -1.0 || fx0 >= img.width() || fy0 >= img.height()) return 0.0;
    const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
    const double ax = x - fx0, ay = y - fy0;
    const double p00 = img.at_or(x0, y0, 0), p10 = img.at_or(x0 + 1, y0, 0);
    const double p01 = img.at_or(x0, y0 + 1, 0), p11 = img.at_or(x0 + 1, y0 + 1, 0);
    return (1.0 - ay) * ((1.0 - ax) * p00 + ax * p10) + ay * ((1.0 - ax) * p01 + ax * p11);
}

/// Warps `frame` by `h` (source -> output coordinates) into an image of the given size,
/// sampling the source through the inverse map.
inline GrayImage rectify(const GrayImage& frame, const Homography& h, int out_width, int out_height) {
    const Homography inv = h.inverse();
    GrayImage out(out_width, out_height, 0);
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            const Point2d s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            if (!std::isfinite(s.x) || !std::isfinite(s.y)) continue;
            const double v = sample_bilinear(frame, s.x, s.y);
            out(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

inline GrayImage rectify(const GrayImage& frame, const Homography& h) {
    return rectify(frame, h, frame.width(), frame.height());
}

/// Homography taking four reference corners (TL, TR, BR, BL) onto the corners of a width x height image.
inline Homography corners_to_frame(std::span<const Point2d, 4> corners, int width, int height) {
    const std::array<Point2d, 4> dst{Point2d{0, 0}, Point2d{double(width - 1), 0},
                                     Point2d{double(width - 1), double(height - 1)}, Point2d{0, double(height - 1)}};
    return estimate_homography(corners, dst);
}

} // namespace wdd
