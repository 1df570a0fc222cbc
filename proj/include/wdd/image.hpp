#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "wdd/errors.hpp"

namespace wdd {

struct Point2d {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2d&, const Point2d&) = default;
};

struct Point2i {
    int x = 0;
    int y = 0;

    friend bool operator==(const Point2i&, const Point2i&) = default;
};

/// Dense row-major single-channel image.
template <typename T>
class Image {
public:
    using value_type = T;

    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height),
          pixels_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    T& operator()(int x, int y) noexcept { return pixels_[index(x, y)]; }
    const T& operator()(int x, int y) const noexcept { return pixels_[index(x, y)]; }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    /// Value at (x, y), or `outside` when the coordinate is off the image.
    T at_or(int x, int y, T outside) const noexcept {
        return contains(x, y) ? (*this)(x, y) : outside;
    }

    std::span<T> row(int y) noexcept {
        return {pixels_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
    }
    std::span<const T> row(int y) const noexcept {
        return {pixels_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
    }

    std::span<T> pixels() noexcept { return pixels_; }
    std::span<const T> pixels() const noexcept { return pixels_; }
    T* data() noexcept { return pixels_.data(); }
    const T* data() const noexcept { return pixels_.data(); }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> pixels_;
};

using GrayImage = Image<std::uint8_t>;

template <typename A, typename B>
void require_same_size(const Image<A>& a, const Image<B>& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw DimensionMismatchError(std::string(what) + ": image sizes differ (" +
                                     std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                     " vs " + std::to_string(b.width()) + "x" +
                                     std::to_string(b.height()) + ")");
    }
}

/// Square crop of edge `size` whose center pixel is round(center); off-image pixels are 0.
inline GrayImage crop_centered(const GrayImage& src, Point2d center, int size) {
    GrayImage out(size, size, 0);
    const int x0 = static_cast<int>(std::lround(center.x)) - size / 2;
    const int y0 = static_cast<int>(std::lround(center.y)) - size / 2;
    for (int y = 0; y < size; ++y) {
        const int sy = y0 + y;
        if (sy < 0 || sy >= src.height()) continue;
        for (int x = 0; x < size; ++x) {
            const int sx = x0 + x;
            if (sx >= 0 && sx < src.width()) out(x, y) = src(sx, sy);
        }
    }
    return out;
}

/// Rotates by 90 degrees clockwise (as displayed, y pointing down).
template <typename T>
Image<T> rotate90_cw(const Image<T>& src) {
    Image<T> out(src.height(), src.width());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) out(src.height() - 1 - y, x) = src(x, y);
    return out;
}

} // namespace wdd
