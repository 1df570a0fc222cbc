#pragma once

// 2-D DFT of small real images through FFTW.

#include <complex>
#include <mutex>

#include <fftw3.h>

#include "wdd/image.hpp"

namespace wdd {

using Complex = std::complex<double>;

namespace detail {

// FFTW's planner is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

/// Forward 2-D DFT X[u,v] = sum x[x,y] exp(-2 pi i (ux/w + vy/h)).
template <typename T>
Image<Complex> fft2(const Image<T>& img) {
    const int w = img.width(), h = img.height();
    Image<Complex> in(w, h), out(w, h);
    if (in.empty()) return out;
    for (std::size_t i = 0; i < in.size(); ++i) in.data()[i] = static_cast<double>(img.data()[i]);
    auto* pin = reinterpret_cast<fftw_complex*>(in.data());
    auto* pout = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan plan;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan = fftw_plan_dft_2d(h, w, pin, pout, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

/// Moves the zero frequency to pixel (w/2, h/2).
template <typename T>
Image<T> fft_shift(const Image<T>& in) {
    const int w = in.width(), h = in.height();
    Image<T> out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out((x + w / 2) % w, (y + h / 2) % h) = in(x, y);
    return out;
}

} // namespace wdd
