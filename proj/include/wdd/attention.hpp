#pragma once

// Attention stage: per-pixel waggle-band scoring, spatial clustering of active
// dot detectors, and temporal assembly of waggle-run candidates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "wdd/clustering.hpp"
#include "wdd/errors.hpp"
#include "wdd/image.hpp"
#include "wdd/ingest.hpp"

namespace wdd::attention {

struct Config {
    int window_frames = 32;
    double sample_rate_hz = 100.0;
    std::vector<double> waggle_band_hz{10, 11, 12, 13, 14, 15, 16};
    double score_threshold = 110.0;
    double cluster_distance_px = 11.0;
    int cluster_min_size = 10;
    double max_step_px = 7.0;
    int max_gap_frames = 20;
    int min_detections = 20;
    double min_waggle_ms = 200.0;
    int snippet_size_px = 50;
    /// Worker threads for per-pixel scoring; 0 picks the hardware concurrency.
    int threads = 0;

    void validate() const {
        if (window_frames < 2) throw ConfigError("attention.window_frames", "must be >= 2");
        if (!(sample_rate_hz > 0)) throw ConfigError("attention.sample_rate_hz", "must be positive");
        if (waggle_band_hz.empty()) throw ConfigError("attention.waggle_band_hz", "must not be empty");
        for (double r : waggle_band_hz) {
            if (r < 10.0 || r > 16.0)
                throw ConfigError("attention.waggle_band_hz", "frequencies must lie in [10, 16] Hz");
            if (r >= sample_rate_hz / 2)
                throw ConfigError("attention.waggle_band_hz", "frequencies must be below Nyquist");
        }
        if (!(score_threshold > 0)) throw ConfigError("attention.score_threshold", "must be positive");
        if (!(cluster_distance_px > 0)) throw ConfigError("attention.cluster_distance_px", "must be positive");
        if (cluster_min_size < 1) throw ConfigError("attention.cluster_min_size", "must be >= 1");
        if (!(max_step_px > 0)) throw ConfigError("attention.max_step_px", "must be positive");
        if (max_gap_frames < 1) throw ConfigError("attention.max_gap_frames", "must be >= 1");
        if (min_detections < 1) throw ConfigError("attention.min_detections", "must be >= 1");
        if (!(min_waggle_ms > 0)) throw ConfigError("attention.min_waggle_ms", "must be positive");
        if (snippet_size_px < 2) throw ConfigError("attention.snippet_size_px", "must be >= 2");
        if (threads < 0) throw ConfigError("attention.threads", "must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Layer 0: dot detectors

/// Affine map of `raw` onto [-1, 1] (min -> -1, max -> +1); all zeros when constant.
template <typename T>
void normalize_window_into(std::span<const T> raw, std::span<double> out) {
    if (raw.empty()) return;
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = static_cast<double>(*lo_it), hi = static_cast<double>(*hi_it);
    if (hi == lo) {
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(raw.size()), 0.0);
        return;
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (2.0 * (static_cast<double>(raw[i]) - lo) - span) / span;
}

template <typename T>
std::vector<double> normalize_window(std::span<const T> raw) {
    std::vector<double> out(raw.size());
    normalize_window_into<T>(raw, out);
    return out;
}

inline std::vector<double> normalize_window(const std::vector<double>& raw) {
    return normalize_window<double>(std::span<const double>(raw));
}

/// Cosine/sine basis for a set of test frequencies over a window of b samples,
/// phase 2*pi*r*m/s_r for m = 1..b. Interleaved (cos, sin) per frequency and
/// padded to a multiple of 4 so the projection loop vectorizes.
class BandBasis {
public:
    BandBasis(std::span<const double> freqs_hz, int window, double sample_rate)
        : window_(window), count_(freqs_hz.size()) {
        stride_ = (2 * count_ + 3) / 4 * 4;
        table_.assign(static_cast<std::size_t>(window) * stride_, 0.0);
        for (int m = 0; m < window; ++m)
            for (std::size_t f = 0; f < count_; ++f) {
                const double phase = 2.0 * std::numbers::pi * freqs_hz[f] * (m + 1) / sample_rate;
                table_[m * stride_ + 2 * f] = std::cos(phase);
                table_[m * stride_ + 2 * f + 1] = std::sin(phase);
            }
    }

    int window() const noexcept { return window_; }
    std::size_t frequencies() const noexcept { return count_; }

    /// scores[f] = (sum_m w[m] cos)^2 + (sum_m w[m] sin)^2 for each frequency f.
    void project(const double* w, double* scores) const {
        switch (stride_) {
        case 4: project_fixed<4>(w, scores); break;
        case 8: project_fixed<8>(w, scores); break;
        case 16: project_fixed<16>(w, scores); break;
        default: project_generic(w, scores); break;
        }
    }

private:
    template <std::size_t Stride>
    void project_fixed(const double* w, double* scores) const {
        std::array<double, Stride> acc{};
        const double* basis = table_.data();
        for (int m = 0; m < window_; ++m, basis += Stride) {
            const double wm = w[m];
            for (std::size_t j = 0; j < Stride; ++j) acc[j] += wm * basis[j];
        }
        for (std::size_t f = 0; f < count_; ++f) scores[f] = acc[2 * f] * acc[2 * f] + acc[2 * f + 1] * acc[2 * f + 1];
    }

    void project_generic(const double* w, double* scores) const {
        std::vector<double> acc(stride_, 0.0);
        const double* basis = table_.data();
        for (int m = 0; m < window_; ++m, basis += stride_) {
            const double wm = w[m];
            for (std::size_t j = 0; j < stride_; ++j) acc[j] += wm * basis[j];
        }
        for (std::size_t f = 0; f < count_; ++f) scores[f] = acc[2 * f] * acc[2 * f] + acc[2 * f + 1] * acc[2 * f + 1];
    }

    int window_;
    std::size_t count_;
    std::size_t stride_;
    std::vector<double> table_;
};

/// Power of an already normalized window at test frequency `r_hz`: the squared
/// projections onto cos(2*pi*r*m/s_r) and sin(2*pi*r*m/s_r), summed.
inline double dd_score(std::span<const double> window, double r_hz, double sample_rate_hz) {
    if (window.empty()) return 0.0;
    const double freq[1] = {r_hz};
    const BandBasis basis(freq, static_cast<int>(window.size()), sample_rate_hz);
    double score = 0.0;
    basis.project(window.data(), &score);
    return score;
}

/// cos/sin of 2*pi*r*k/s_r rounded to multiples of 2^-30. Products with 8-bit
/// samples and sums of up to 2^12 of them are then exact in double precision,
/// so a sliding sum equals a fresh sum bit for bit.
inline double quantized_phase(double r_hz, std::int64_t k, double sample_rate, bool sine) {
    const double cycles = std::fmod(r_hz * static_cast<double>(k), sample_rate) / sample_rate;
    const double v = sine ? std::sin(2.0 * std::numbers::pi * cycles) : std::cos(2.0 * std::numbers::pi * cycles);
    return std::ldexp(std::nearbyint(std::ldexp(v, 30)), -30);
}

/// Band score of one pixel from its raw projections A (sum x_k q_k), the
/// summed basis E over the same window and the window extrema. Equals the
/// projection of the normalized window (x - lo) * 2 / (hi - lo) - 1.
inline double band_power(double a_re, double a_im, double e_re, double e_im, double lo, double hi) {
    const double s = 2.0 / (hi - lo);
    const double pr = s * (a_re - lo * e_re) - e_re;
    const double pi = s * (a_im - lo * e_im) - e_im;
    return pr * pr + pi * pi;
}

/// Per-pixel ring buffers of the last b intensities plus the activation flags.
/// Each pixel keeps running projections onto the band frequencies at absolute
/// phase (frame counter k), updated in O(1) per frame; the phase reference
/// does not change the power.
class PixelWindowGrid {
public:
    PixelWindowGrid(int width, int height, const Config& cfg)
        : width_(width), height_(height), window_(cfg.window_frames),
          threshold_(cfg.score_threshold), threads_(cfg.threads), sample_rate_(cfg.sample_rate_hz),
          freqs_(cfg.waggle_band_hz) {
        cfg.validate();
        if (width < 1 || height < 1) throw DimensionMismatchError("dot detectors: empty frame geometry");
        const std::size_t n = pixels();
        ring_.assign(n * window_, 0);
        a_re_.assign(n * freqs_.size(), 0.0);
        a_im_.assign(n * freqs_.size(), 0.0);
        active_.assign(n, 0);
        scores_.assign(n, 0.0);
        lo_.assign(n, 0);
        hi_.assign(n, 0);
        e_re_.assign(freqs_.size(), 0.0);
        e_im_.assign(freqs_.size(), 0.0);
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int window() const noexcept { return window_; }
    std::int64_t frames_seen() const noexcept { return seen_; }
    bool full() const noexcept { return seen_ >= window_; }

    /// Samples of pixel (x, y) in arrival order; min(frames_seen, b) of them.
    std::vector<std::uint8_t> samples(int x, int y) const {
        const std::size_t p = static_cast<std::size_t>(y) * width_ + x;
        const std::int64_t count = std::min<std::int64_t>(seen_, window_);
        std::vector<std::uint8_t> out;
        for (std::int64_t k = seen_ - count; k < seen_; ++k) out.push_back(ring_[slot(k) * pixels() + p]);
        return out;
    }

    /// Activation flag D_ij of the last processed frame.
    bool active(int x, int y) const { return active_[static_cast<std::size_t>(y) * width_ + x] != 0; }

    /// Maximum band score of each pixel for the last processed frame (0 while underfull).
    std::span<const double> max_scores() const noexcept { return scores_; }

    /// Full recomputation of pixel (x, y)'s maximum band score from its ring
    /// buffer; the incremental scores must equal this exactly.
    double reference_score(int x, int y) const {
        if (!full()) return 0.0;
        const std::size_t p = static_cast<std::size_t>(y) * width_ + x;
        int lo = 255, hi = 0;
        for (std::int64_t k = seen_ - window_; k < seen_; ++k) {
            lo = std::min<int>(lo, ring_[slot(k) * pixels() + p]);
            hi = std::max<int>(hi, ring_[slot(k) * pixels() + p]);
        }
        if (lo == hi) return 0.0;
        double best = 0.0;
        for (std::size_t f = 0; f < freqs_.size(); ++f) {
            double ar = 0, ai = 0, er = 0, ei = 0;
            for (std::int64_t k = seen_ - window_; k < seen_; ++k) {
                const double x_k = ring_[slot(k) * pixels() + p];
                const double c = quantized_phase(freqs_[f], k, sample_rate_, false);
                const double s = quantized_phase(freqs_[f], k, sample_rate_, true);
                ar += x_k * c;
                ai += x_k * s;
                er += c;
                ei += s;
            }
            best = std::max(best, band_power(ar, ai, er, ei, lo, hi));
        }
        return best;
    }

    /// Appends a frame, rescoring every pixel once the buffers are full.
    /// Returns the active detector coordinates in row-major order.
    std::vector<Point2i> step(const GrayImage& frame) {
        if (frame.width() != width_ || frame.height() != height_)
            throw DimensionMismatchError("dot detectors: frame is " + std::to_string(frame.width()) + "x" +
                                         std::to_string(frame.height()) + ", grid is " + std::to_string(width_) +
                                         "x" + std::to_string(height_));
        const std::size_t n = pixels();
        const std::size_t nf = freqs_.size();
        const std::int64_t k_new = seen_;
        const bool evict = seen_ >= window_;
        std::uint8_t* ring_slot = ring_.data() + slot(k_new) * n;
        const std::uint8_t* src = frame.data();

        // Running projections: + x_new q(k_new) - x_old q(k_new - b).
        for (std::size_t f = 0; f < nf; ++f) {
            const double cn = quantized_phase(freqs_[f], k_new, sample_rate_, false);
            const double sn = quantized_phase(freqs_[f], k_new, sample_rate_, true);
            double* ar = a_re_.data() + f * n;
            double* ai = a_im_.data() + f * n;
            if (evict) {
                const double co = quantized_phase(freqs_[f], k_new - window_, sample_rate_, false);
                const double so = quantized_phase(freqs_[f], k_new - window_, sample_rate_, true);
                for (std::size_t p = 0; p < n; ++p) {
                    const double xn = src[p], xo = ring_slot[p];
                    ar[p] = ar[p] + xn * cn - xo * co;
                    ai[p] = ai[p] + xn * sn - xo * so;
                }
            } else {
                for (std::size_t p = 0; p < n; ++p) {
                    const double xn = src[p];
                    ar[p] = ar[p] + xn * cn;
                    ai[p] = ai[p] + xn * sn;
                }
            }
        }
        std::copy(src, src + n, ring_slot);
        ++seen_;

        std::vector<Point2i> actives;
        if (!full()) {
            std::fill(active_.begin(), active_.end(), 0);
            return actives;
        }
        for (std::size_t f = 0; f < nf; ++f) {
            double er = 0, ei = 0;
            for (std::int64_t k = seen_ - window_; k < seen_; ++k) {
                er += quantized_phase(freqs_[f], k, sample_rate_, false);
                ei += quantized_phase(freqs_[f], k, sample_rate_, true);
            }
            e_re_[f] = er;
            e_im_[f] = ei;
        }
        score_all();
        for (int y = 0; y < height_; ++y)
            for (int x = 0; x < width_; ++x)
                if (active_[static_cast<std::size_t>(y) * width_ + x]) actives.push_back({x, y});
        return actives;
    }

private:
    std::size_t pixels() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t slot(std::int64_t k) const { return static_cast<std::size_t>(k % window_); }

    void score_range(std::size_t p0, std::size_t p1) {
        const std::size_t n = pixels();
        std::uint8_t* lo = lo_.data();
        std::uint8_t* hi = hi_.data();
        std::copy(ring_.data() + p0, ring_.data() + p1, lo + p0);
        std::copy(ring_.data() + p0, ring_.data() + p1, hi + p0);
        for (int s = 1; s < window_; ++s) {
            const std::uint8_t* r = ring_.data() + static_cast<std::size_t>(s) * n;
            for (std::size_t p = p0; p < p1; ++p) {
                lo[p] = std::min(lo[p], r[p]);
                hi[p] = std::max(hi[p], r[p]);
            }
        }
        for (std::size_t p = p0; p < p1; ++p) scores_[p] = 0.0;
        for (std::size_t f = 0; f < freqs_.size(); ++f) {
            const double* ar = a_re_.data() + f * n;
            const double* ai = a_im_.data() + f * n;
            const double er = e_re_[f], ei = e_im_[f];
            for (std::size_t p = p0; p < p1; ++p) {
                if (lo[p] == hi[p]) continue;
                scores_[p] = std::max(scores_[p], band_power(ar[p], ai[p], er, ei, lo[p], hi[p]));
            }
        }
        for (std::size_t p = p0; p < p1; ++p) active_[p] = scores_[p] > threshold_ ? 1 : 0;
    }

    void score_all() {
        const std::size_t n = pixels();
        int workers = threads_ > 0 ? threads_ : static_cast<int>(std::thread::hardware_concurrency());
        workers = std::clamp(workers, 1, height_);
        if (workers == 1) {
            score_range(0, n);
            return;
        }
        std::vector<std::thread> pool;
        const int rows = (height_ + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
            const int y0 = t * rows, y1 = std::min(height_, y0 + rows);
            if (y0 < y1)
                pool.emplace_back([this, y0, y1] {
                    score_range(static_cast<std::size_t>(y0) * width_, static_cast<std::size_t>(y1) * width_);
                });
        }
        for (auto& th : pool) th.join();
    }

    int width_;
    int height_;
    int window_;
    double threshold_;
    int threads_;
    double sample_rate_;
    std::vector<double> freqs_;
    std::vector<std::uint8_t> ring_;  // frame-major: slot k % b holds frame k
    std::vector<double> a_re_, a_im_;  // per frequency, per pixel
    std::vector<double> e_re_, e_im_;  // summed basis over the current window
    std::vector<std::uint8_t> lo_, hi_;
    std::vector<std::uint8_t> active_;
    std::vector<double> scores_;
    std::int64_t seen_ = 0;
};

inline std::vector<Point2i> step_frame(PixelWindowGrid& grid, const GrayImage& frame) {
    return grid.step(frame);
}

// ---------------------------------------------------------------------------
// Layer 1: potential dancers

/// Single-linkage clusters of active detectors cut at `max_distance`; clusters
/// smaller than `min_size` are dropped. Centroids sorted by (y, x).
inline std::vector<Point2d> cluster_active(std::span<const Point2i> points, double max_distance, int min_size) {
    std::vector<Point2d> centroids;
    for (const auto& members : single_linkage_2d<Point2i>(points, max_distance)) {
        if (static_cast<int>(members.size()) < min_size) continue;
        double sx = 0.0, sy = 0.0;
        for (std::size_t i : members) {
            sx += points[i].x;
            sy += points[i].y;
        }
        centroids.push_back({sx / members.size(), sy / members.size()});
    }
    std::sort(centroids.begin(), centroids.end(),
              [](const Point2d& a, const Point2d& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
    return centroids;
}

// ---------------------------------------------------------------------------
// Layer 2: waggle runs

struct TracePoint {
    std::int64_t frame = 0;
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct WaggleRun {
    std::int64_t id = 0;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;
    double duration_ms = 0.0;
    std::vector<TracePoint> trace;
    std::vector<GrayImage> snippets;
};

inline double run_duration_ms(std::int64_t first_frame, std::int64_t last_frame, double sample_rate_hz) {
    return static_cast<double>(last_frame - first_frame + 1) / sample_rate_hz * 1000.0;
}

struct RunCandidate {
    std::int64_t id = 0;
    std::int64_t start_frame = 0;
    std::int64_t last_update_frame = 0;
    std::vector<TracePoint> trace;
    std::vector<GrayImage> snippets;
};

/// Concatenates per-frame dancer positions into waggle-run candidates and emits
/// the closed ones that qualify as waggle runs.
class RunAssembler {
public:
    explicit RunAssembler(const Config& cfg) : cfg_(cfg) { cfg_.validate(); }

    /// Processes the centroids of one frame. When `frame` is given, a snippet
    /// centered on each appended centroid is cropped from it.
    std::vector<WaggleRun> push(std::int64_t frame_index, std::span<const Point2d> centroids,
                                const GrayImage* frame = nullptr) {
        if (last_frame_ && frame_index <= *last_frame_)
            throw OrderError("run assembly: frame " + std::to_string(frame_index) + " after frame " +
                             std::to_string(*last_frame_));
        last_frame_ = frame_index;

        std::vector<WaggleRun> emitted;
        close_if([&](const RunCandidate& c) { return frame_index - c.last_update_frame > cfg_.max_gap_frames; },
                 emitted);

        struct Pair {
            double distance;
            std::size_t candidate;
            std::size_t centroid;
        };
        std::vector<Pair> pairs;
        for (std::size_t ci = 0; ci < open_.size(); ++ci) {
            const auto& last = open_[ci].trace.back();
            for (std::size_t k = 0; k < centroids.size(); ++k) {
                const double d = std::hypot(centroids[k].x - last.x, centroids[k].y - last.y);
                if (d <= cfg_.max_step_px) pairs.push_back({d, ci, k});
            }
        }
        std::sort(pairs.begin(), pairs.end(), [this](const Pair& a, const Pair& b) {
            return std::tie(a.distance, open_[a.candidate].id, a.centroid) <
                   std::tie(b.distance, open_[b.candidate].id, b.centroid);
        });
        std::vector<char> cand_used(open_.size(), 0), cent_used(centroids.size(), 0);
        for (const auto& p : pairs) {
            if (cand_used[p.candidate] || cent_used[p.centroid]) continue;
            cand_used[p.candidate] = cent_used[p.centroid] = 1;
            append(open_[p.candidate], frame_index, centroids[p.centroid], frame);
        }
        for (std::size_t k = 0; k < centroids.size(); ++k) {
            if (cent_used[k]) continue;
            RunCandidate c;
            c.id = next_candidate_id_++;
            c.start_frame = frame_index;
            append(c, frame_index, centroids[k], frame);
            open_.push_back(std::move(c));
        }
        return emitted;
    }

    /// Closes every open candidate (end of stream).
    std::vector<WaggleRun> flush() {
        std::vector<WaggleRun> emitted;
        close_if([](const RunCandidate&) { return true; }, emitted);
        return emitted;
    }

    const std::vector<RunCandidate>& open_candidates() const noexcept { return open_; }

private:
    void append(RunCandidate& c, std::int64_t frame_index, Point2d p, const GrayImage* frame) {
        c.trace.push_back({frame_index, p.x, p.y});
        c.last_update_frame = frame_index;
        if (frame) c.snippets.push_back(crop_centered(*frame, p, cfg_.snippet_size_px));
    }

    template <typename Pred>
    void close_if(Pred should_close, std::vector<WaggleRun>& emitted) {
        std::vector<RunCandidate> still_open;
        for (auto& c : open_) {
            if (!should_close(c)) {
                still_open.push_back(std::move(c));
                continue;
            }
            const double duration = run_duration_ms(c.start_frame, c.trace.back().frame, cfg_.sample_rate_hz);
            if (static_cast<int>(c.trace.size()) < cfg_.min_detections || duration < cfg_.min_waggle_ms) continue;
            WaggleRun run;
            run.id = next_run_id_++;
            run.start_frame = c.start_frame;
            run.end_frame = c.trace.back().frame;
            run.duration_ms = duration;
            run.trace = std::move(c.trace);
            run.snippets = std::move(c.snippets);
            emitted.push_back(std::move(run));
        }
        open_ = std::move(still_open);
    }

    Config cfg_;
    std::vector<RunCandidate> open_;
    std::optional<std::int64_t> last_frame_;
    std::int64_t next_candidate_id_ = 1;
    std::int64_t next_run_id_ = 1;
};

/// The three attention layers chained over a frame stream.
class Detector {
public:
    Detector(int width, int height, const Config& cfg) : cfg_(cfg), grid_(width, height, cfg), assembler_(cfg) {}

    std::vector<WaggleRun> process(const Frame& frame) {
        const auto actives = grid_.step(frame.image);
        last_active_count_ = actives.size();
        const auto centroids = cluster_active(actives, cfg_.cluster_distance_px, cfg_.cluster_min_size);
        return assembler_.push(frame.index, centroids, &frame.image);
    }

    std::vector<WaggleRun> finish() { return assembler_.flush(); }

    std::size_t last_active_count() const noexcept { return last_active_count_; }
    const PixelWindowGrid& grid() const noexcept { return grid_; }

private:
    Config cfg_;
    PixelWindowGrid grid_;
    RunAssembler assembler_;
    std::size_t last_active_count_ = 0;
};

/// Runs the detector over a whole stream; runs are returned in emission order.
inline std::vector<WaggleRun> detect_runs(FrameStream& stream, const Config& cfg) {
    Detector det(stream.info().width, stream.info().height, cfg);
    std::vector<WaggleRun> runs;
    while (auto f = stream.next()) {
        auto closed = det.process(*f);
        std::move(closed.begin(), closed.end(), std::back_inserter(runs));
    }
    auto rest = det.finish();
    std::move(rest.begin(), rest.end(), std::back_inserter(runs));
    return runs;
}

/// Re-reads the run's frames from `source` and crops one snippet per trace point.
/// The stream must not yet be past the run's first frame.
inline std::vector<GrayImage> export_snippets(const WaggleRun& run, FrameStream& source, int size = 50) {
    std::vector<GrayImage> stack;
    stack.reserve(run.trace.size());
    std::size_t next = 0;
    while (next < run.trace.size()) {
        auto f = source.next();
        if (!f) throw FramesUnavailableError("snippet export: stream ended before frame " +
                                             std::to_string(run.trace[next].frame));
        if (f->index > run.trace[next].frame)
            throw FramesUnavailableError("snippet export: frame " + std::to_string(run.trace[next].frame) +
                                         " is no longer available");
        while (next < run.trace.size() && run.trace[next].frame == f->index) {
            stack.push_back(crop_centered(f->image, {run.trace[next].x, run.trace[next].y}, size));
            ++next;
        }
    }
    return stack;
}

} // namespace wdd::attention
