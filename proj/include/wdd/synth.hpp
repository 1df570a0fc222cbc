#pragma once

// Synthetic hive videos with scripted dancers and distractors, their ground
// truth, detection scoring, and a run-level colony generator for mapping
// replays. Everything is deterministic for a given seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "wdd/circular.hpp"
#include "wdd/errors.hpp"
#include "wdd/geo.hpp"
#include "wdd/image.hpp"
#include "wdd/ingest.hpp"
#include "wdd/records.hpp"
#include "wdd/solar.hpp"
#include "wdd/time.hpp"

namespace wdd::synth {

/// Inverse of the standard normal CDF.
inline double normal_quantile(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Seeded generator with platform-independent distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t bits() { return eng_(); }
    /// Uniform in (0, 1).
    double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal(double mean = 0.0, double sd = 1.0) { return mean + sd * normal_quantile(uniform()); }
    bool chance(double p) { return uniform() < p; }
    /// Integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    int poisson(double mean) {
        const double limit = std::exp(-mean);
        double prod = uniform();
        int k = 0;
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        return k;
    }

private:
    std::mt19937_64 eng_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// Scene description

struct DanceScript {
    int id = 0;
    double x = 160.0;  // start point of every waggle run
    double y = 120.0;
    double body_length_px = 20.0;
    double body_width_px = 8.0;
    double intensity = 190.0;
    double direction_deg = 0.0;  // compass, 0 = up
    double waggle_ms = 600.0;
    double waggle_sd_ms = 0.0;
    double frequency_hz = 13.0;
    double amplitude_px = 7.5;
    double forward_px_per_frame = 0.4;
    int runs = 6;
    double return_ms = 1200.0;
    double divergence_sd_deg = 14.0;
    /// Alternating +/- offset added to successive runs.
    double alternating_bias_deg = 0.0;
    std::int64_t start_frame = 0;
    std::uint64_t seed = 0;
};

struct Walker {
    double x = 50.0, y = 50.0;
    double heading_deg = 90.0;
    double speed_px_per_frame = 1.0;
    double turn_sd_deg = 3.0;
    double body_length_px = 20.0;
    double body_width_px = 8.0;
    double intensity = 180.0;
    std::int64_t start_frame = 0;
    std::int64_t frames = -1;  // -1: whole video
    std::uint64_t seed = 0;
};

/// Bee vibrating in place outside the waggle band (grooming, trembling).
struct Shaker {
    double x = 100.0, y = 100.0;
    double heading_deg = 0.0;
    double frequency_hz = 5.0;
    double amplitude_px = 4.0;
    double drift_px_per_frame = 0.0;
    double body_length_px = 20.0;
    double body_width_px = 8.0;
    double intensity = 185.0;
    std::int64_t start_frame = 0;
    std::int64_t frames = 100;
};

struct Scene {
    int width = 320;
    int height = 240;
    double fps = 100.0;
    std::int64_t frames = 1000;
    double background = 40.0;
    double noise_sigma = 3.0;
    std::uint64_t seed = 0;
    UtcTime start_utc = parse_utc("2016-08-02T11:00:00Z");
    std::optional<GeoPoint> hive;
    double meters_per_ms = 342.0 / 582.79;
    std::vector<DanceScript> dancers;
    std::vector<Walker> walkers;
    std::vector<Shaker> shakers;
};

// ---------------------------------------------------------------------------
// Ground truth

struct TruthRun {
    int dancer = 0;
    int run = 0;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;
    double duration_ms = 0.0;
    double direction_deg = 0.0;
    std::vector<attention::TracePoint> trace;

    Point2d mean_position() const {
        Point2d p;
        for (const auto& t : trace) {
            p.x += t.x;
            p.y += t.y;
        }
        if (!trace.empty()) {
            p.x /= static_cast<double>(trace.size());
            p.y /= static_cast<double>(trace.size());
        }
        return p;
    }
};

struct TruthDance {
    int dancer = 0;
    double direction_deg = 0.0;
    std::optional<double> bearing_deg;
    std::optional<double> distance_m;
};

struct GroundTruth {
    std::vector<TruthRun> runs;
    std::vector<TruthDance> dances;
    double body_length_px = 20.0;
};

// ---------------------------------------------------------------------------
// Motion

struct BodyPose {
    double x = 0.0, y = 0.0;
    double heading_deg = 0.0;
};

struct DancerPlan {
    struct Phase {
        std::int64_t start = 0;
        std::int64_t frames = 0;
        bool waggle = true;
        double direction_deg = 0.0;
        Point2d from, to;
        int side = 1;  // return loop side
        double phase0 = 0.0;
    };
    const DanceScript* script = nullptr;
    std::vector<Phase> phases;
    std::int64_t end_frame = 0;
};

inline DancerPlan plan_dancer(const DanceScript& s, double fps) {
    if (s.runs < 1) throw ConfigError("dancers.runs", "must be >= 1");
    if (!(s.frequency_hz > 0 && s.frequency_hz < fps / 2))
        throw ConfigError("dancers.frequency_hz", "must lie in (0, fps/2)");
    if (!(s.waggle_ms > 0)) throw ConfigError("dancers.waggle_ms", "must be positive");
    DancerPlan plan;
    plan.script = &s;
    Rng rng(splitmix64(s.seed ^ (0xDA7CEULL + static_cast<std::uint64_t>(s.id))));
    std::int64_t t = s.start_frame;
    for (int i = 0; i < s.runs; ++i) {
        DancerPlan::Phase w;
        w.start = t;
        const double ms = std::max(150.0, s.waggle_ms + (s.waggle_sd_ms > 0 ? rng.normal(0.0, s.waggle_sd_ms) : 0.0));
        w.frames = std::max<std::int64_t>(2, std::llround(ms / 1000.0 * fps));
        w.direction_deg = wrap360(s.direction_deg + (s.divergence_sd_deg > 0 ? rng.normal(0.0, s.divergence_sd_deg) : 0.0) +
                                  (i % 2 == 0 ? 1.0 : -1.0) * s.alternating_bias_deg);
        w.phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double ux = 0, uy = 0;
        compass_vector(w.direction_deg, ux, uy);
        w.from = {s.x, s.y};
        const double len = s.forward_px_per_frame * static_cast<double>(w.frames - 1);
        w.to = {s.x + ux * len, s.y + uy * len};
        plan.phases.push_back(w);
        t += w.frames;
        DancerPlan::Phase r;
        r.waggle = false;
        r.start = t;
        r.frames = std::max<std::int64_t>(2, std::llround(s.return_ms / 1000.0 * fps));
        r.from = w.to;
        r.to = w.from;
        r.direction_deg = w.direction_deg;
        r.side = i % 2 == 0 ? 1 : -1;
        plan.phases.push_back(r);
        t += r.frames;
    }
    plan.end_frame = t;
    return plan;
}

/// Pose of a planned dancer at frame k, or nullopt outside its dance.
inline std::optional<BodyPose> dancer_pose(const DancerPlan& plan, std::int64_t k, double fps) {
    const auto& s = *plan.script;
    for (const auto& ph : plan.phases) {
        if (k < ph.start || k >= ph.start + ph.frames) continue;
        const double j = static_cast<double>(k - ph.start);
        if (ph.waggle) {
            double ux = 0, uy = 0;
            compass_vector(ph.direction_deg, ux, uy);
            const double lateral = s.amplitude_px * std::sin(2.0 * std::numbers::pi * s.frequency_hz * j / fps + ph.phase0);
            const double fwd = s.forward_px_per_frame * j;
            // perpendicular (to the right of the heading): (-uy, ux)
            return BodyPose{ph.from.x + ux * fwd - uy * lateral, ph.from.y + uy * fwd + ux * lateral, ph.direction_deg};
        }
        // Half circle from the waggle end back to the start, alternating sides.
        const double cx = 0.5 * (ph.from.x + ph.to.x), cy = 0.5 * (ph.from.y + ph.to.y);
        const double rx = ph.from.x - cx, ry = ph.from.y - cy;
        const double radius = std::hypot(rx, ry);
        const double u = (j + 1.0) / static_cast<double>(ph.frames + 1);
        const double ang = ph.side * std::numbers::pi * u;
        const double ca = std::cos(ang), sa = std::sin(ang);
        const double px = cx + rx * ca - ry * sa, py = cy + rx * sa + ry * ca;
        // tangent direction of travel
        const double tx = -(rx * sa + ry * ca) * ph.side, ty = (rx * ca - ry * sa) * ph.side;
        const double heading = radius > 1e-9 ? compass_angle(tx, ty) : ph.direction_deg;
        return BodyPose{px, py, heading};
    }
    return std::nullopt;
}

struct WalkerTrack {
    const Walker* walker = nullptr;
    std::vector<BodyPose> poses;  // one per active frame
    std::int64_t start = 0;
};

inline WalkerTrack plan_walker(const Walker& w, const Scene& scene) {
    WalkerTrack tr;
    tr.walker = &w;
    tr.start = w.start_frame;
    const std::int64_t n = w.frames < 0 ? scene.frames - w.start_frame : w.frames;
    Rng rng(splitmix64(w.seed ^ 0x3A1CULL));
    BodyPose p{w.x, w.y, w.heading_deg};
    const double margin = w.body_length_px / 2 + 1;
    for (std::int64_t k = 0; k < n; ++k) {
        tr.poses.push_back(p);
        p.heading_deg = wrap360(p.heading_deg + rng.normal(0.0, w.turn_sd_deg));
        double dx = 0, dy = 0;
        compass_vector(p.heading_deg, dx, dy);
        double nx = p.x + dx * w.speed_px_per_frame, ny = p.y + dy * w.speed_px_per_frame;
        if (nx < margin || nx > scene.width - margin) {
            dx = -dx;
            nx = p.x + dx * w.speed_px_per_frame;
        }
        if (ny < margin || ny > scene.height - margin) {
            dy = -dy;
            ny = p.y + dy * w.speed_px_per_frame;
        }
        p.heading_deg = compass_angle(dx, dy);
        p.x = std::clamp(nx, margin, scene.width - margin);
        p.y = std::clamp(ny, margin, scene.height - margin);
    }
    return tr;
}

inline std::optional<BodyPose> shaker_pose(const Shaker& s, std::int64_t k, double fps) {
    if (k < s.start_frame || k >= s.start_frame + s.frames) return std::nullopt;
    const double j = static_cast<double>(k - s.start_frame);
    double ux = 0, uy = 0;
    compass_vector(s.heading_deg, ux, uy);
    const double lateral = s.amplitude_px * std::sin(2.0 * std::numbers::pi * s.frequency_hz * j / fps);
    const double fwd = s.drift_px_per_frame * j;
    return BodyPose{s.x + ux * fwd - uy * lateral, s.y + uy * fwd + ux * lateral, s.heading_deg};
}

// ---------------------------------------------------------------------------
// Rendering

/// Alpha-blends a soft-edged ellipse (major axis along the heading) into `canvas`.
inline void draw_ellipse(Image<float>& canvas, const BodyPose& pose, double length, double width, double intensity) {
    const double a = length / 2, b = width / 2;
    double ux = 0, uy = 0;
    compass_vector(pose.heading_deg, ux, uy);
    const int x0 = std::max(0, static_cast<int>(std::floor(pose.x - a - 2)));
    const int x1 = std::min(canvas.width() - 1, static_cast<int>(std::ceil(pose.x + a + 2)));
    const int y0 = std::max(0, static_cast<int>(std::floor(pose.y - a - 2)));
    const int y1 = std::min(canvas.height() - 1, static_cast<int>(std::ceil(pose.y + a + 2)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - pose.x, dy = y - pose.y;
            const double along = dx * ux + dy * uy, across = -dx * uy + dy * ux;
            const double rho = std::sqrt((along / a) * (along / a) + (across / b) * (across / b));
            // roughly one pixel of soft edge
            const double alpha = std::clamp((1.0 - rho) * b + 0.5, 0.0, 1.0);
            if (alpha <= 0.0) continue;
            float& px = canvas(x, y);
            px = static_cast<float>(px + alpha * (intensity - px));
        }
}

class Renderer {
public:
    explicit Renderer(const Scene& scene) : scene_(scene) {
        if (scene.width < 8 || scene.height < 8) throw ConfigError("scene.width", "scene must be at least 8x8");
        if (!(scene.fps > 0)) throw ConfigError("scene.fps", "must be positive");
        if (scene.frames < 0) throw ConfigError("scene.frames", "must be >= 0");
        if (!(scene.noise_sigma >= 0)) throw ConfigError("scene.noise_sigma", "must be >= 0");
        for (const auto& d : scene_.dancers) plans_.push_back(plan_dancer(d, scene.fps));
        for (const auto& w : scene_.walkers) walkers_.push_back(plan_walker(w, scene_));
        if (scene.noise_sigma > 0) {
            noise_.resize(kNoiseTable);
            for (std::size_t i = 0; i < kNoiseTable; ++i)
                noise_[i] = static_cast<float>(scene.noise_sigma * normal_quantile((i + 0.5) / kNoiseTable));
        }
        truth_ = build_truth();
    }

    const Scene& scene() const noexcept { return scene_; }
    const GroundTruth& truth() const noexcept { return truth_; }

    /// Frame k; a pure function of the scene and k.
    GrayImage render(std::int64_t k) const {
        Image<float> canvas(scene_.width, scene_.height, static_cast<float>(scene_.background));
        for (const auto& w : walkers_) {
            const std::int64_t j = k - w.start;
            if (j < 0 || j >= static_cast<std::int64_t>(w.poses.size())) continue;
            draw_ellipse(canvas, w.poses[j], w.walker->body_length_px, w.walker->body_width_px, w.walker->intensity);
        }
        for (const auto& s : scene_.shakers)
            if (const auto p = shaker_pose(s, k, scene_.fps)) draw_ellipse(canvas, *p, s.body_length_px, s.body_width_px, s.intensity);
        for (const auto& plan : plans_)
            if (const auto p = dancer_pose(plan, k, scene_.fps))
                draw_ellipse(canvas, *p, plan.script->body_length_px, plan.script->body_width_px, plan.script->intensity);

        GrayImage out(scene_.width, scene_.height);
        std::uint64_t state = splitmix64(scene_.seed ^ splitmix64(static_cast<std::uint64_t>(k) + 0x51ULL));
        const float* c = canvas.data();
        std::uint8_t* o = out.data();
        const std::size_t n = out.size();
        if (noise_.empty()) {
            for (std::size_t i = 0; i < n; ++i) o[i] = static_cast<std::uint8_t>(std::clamp(std::lround(c[i]), 0L, 255L));
            return out;
        }
        for (std::size_t i = 0; i < n; i += 4) {
            state = splitmix64(state);
            for (std::size_t j = 0; j < 4 && i + j < n; ++j) {
                const float v = c[i + j] + noise_[(state >> (16 * j)) & (kNoiseTable - 1)];
                o[i + j] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
        return out;
    }

private:
    static constexpr std::size_t kNoiseTable = 1 << 16;

    GroundTruth build_truth() const {
        GroundTruth gt;
        double body = 0.0;
        for (std::size_t d = 0; d < plans_.size(); ++d) {
            const auto& plan = plans_[d];
            const auto& s = *plan.script;
            body = std::max(body, s.body_length_px);
            int run = 0;
            std::vector<double> dirs;
            for (const auto& ph : plan.phases) {
                if (!ph.waggle) continue;
                TruthRun tr;
                tr.dancer = s.id;
                tr.run = run++;
                tr.start_frame = ph.start;
                tr.end_frame = ph.start + ph.frames - 1;
                tr.duration_ms = static_cast<double>(ph.frames) / scene_.fps * 1000.0;
                tr.direction_deg = ph.direction_deg;
                for (std::int64_t k = tr.start_frame; k <= tr.end_frame; ++k) {
                    const auto p = dancer_pose(plan, k, scene_.fps);
                    tr.trace.push_back({k, p->x, p->y});
                }
                dirs.push_back(ph.direction_deg);
                gt.runs.push_back(std::move(tr));
            }
            for (std::int64_t k = s.start_frame; k < plan.end_frame; ++k) {
                const auto p = dancer_pose(plan, k, scene_.fps);
                const double m = s.body_length_px / 2;
                if (p->x < m || p->y < m || p->x > scene_.width - m || p->y > scene_.height - m)
                    throw ConfigError("dancers[" + std::to_string(d) + "]", "dance leaves the frame at frame " + std::to_string(k));
            }
            TruthDance td;
            td.dancer = s.id;
            td.direction_deg = s.direction_deg;
            if (scene_.hive) {
                const std::int64_t mid = (s.start_frame + plan.end_frame) / 2;
                const auto t = frame_time(scene_.start_utc, mid, scene_.fps);
                td.bearing_deg = wrap360(solar_azimuth(scene_.hive->lat_deg, scene_.hive->lon_deg, t) + s.direction_deg);
                td.distance_m = scene_.meters_per_ms * s.waggle_ms;
            }
            gt.dances.push_back(td);
        }
        if (body > 0) gt.body_length_px = body;
        std::sort(gt.runs.begin(), gt.runs.end(), [](const TruthRun& a, const TruthRun& b) {
            return std::tie(a.start_frame, a.dancer) < std::tie(b.start_frame, b.dancer);
        });
        return gt;
    }

    Scene scene_;
    std::vector<DancerPlan> plans_;
    std::vector<WalkerTrack> walkers_;
    std::vector<float> noise_;
    GroundTruth truth_;
};

/// Frame stream over a rendered scene; frames are produced on demand.
class SyntheticStream final : public FrameStream {
public:
    explicit SyntheticStream(const Scene& scene) : renderer_(std::make_shared<Renderer>(scene)) { init(); }
    explicit SyntheticStream(std::shared_ptr<const Renderer> renderer) : renderer_(std::move(renderer)) { init(); }

    const StreamInfo& info() const override { return info_; }

    std::optional<Frame> next() override {
        if (pos_ >= renderer_->scene().frames) return std::nullopt;
        Frame f{pos_, renderer_->render(pos_)};
        ++pos_;
        return f;
    }

    const Renderer& renderer() const noexcept { return *renderer_; }

private:
    void init() {
        info_.width = renderer_->scene().width;
        info_.height = renderer_->scene().height;
        info_.sample_rate = renderer_->scene().fps;
        info_.frame_count = renderer_->scene().frames;
    }

    std::shared_ptr<const Renderer> renderer_;
    std::int64_t pos_ = 0;
    StreamInfo info_;
};

// ---------------------------------------------------------------------------
// Scene JSON

namespace detail {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path + "." + key, "has the wrong type");
    }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "must be an object");
    for (const auto& [k, v] : j.items())
        if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; }))
            throw ConfigError(path.empty() ? k : path + "." + k, "unknown field");
}

} // namespace detail

inline Scene scene_from_json(const nlohmann::json& j) {
    using detail::take;
    detail::reject_unknown(j, {"width", "height", "fps", "frames", "duration_s", "background", "noise_sigma", "seed",
                               "start_utc", "hive", "meters_per_ms", "dancers", "walkers", "shakers"},
                           "scene");
    Scene s;
    take(j, "width", s.width, "scene");
    take(j, "height", s.height, "scene");
    take(j, "fps", s.fps, "scene");
    take(j, "frames", s.frames, "scene");
    if (j.contains("duration_s")) {
        double d = 0;
        take(j, "duration_s", d, "scene");
        s.frames = std::llround(d * s.fps);
    }
    take(j, "background", s.background, "scene");
    take(j, "noise_sigma", s.noise_sigma, "scene");
    take(j, "seed", s.seed, "scene");
    take(j, "meters_per_ms", s.meters_per_ms, "scene");
    if (j.contains("start_utc")) {
        try {
            s.start_utc = parse_utc(j.at("start_utc").get<std::string>());
        } catch (const std::exception&) {
            throw ConfigError("scene.start_utc", "must be an ISO-8601 UTC timestamp");
        }
    }
    if (j.contains("hive")) {
        GeoPoint h;
        detail::reject_unknown(j["hive"], {"latitude", "longitude"}, "scene.hive");
        take(j["hive"], "latitude", h.lat_deg, "scene.hive");
        take(j["hive"], "longitude", h.lon_deg, "scene.hive");
        s.hive = h;
    }
    if (j.contains("dancers")) {
        int i = 0;
        for (const auto& d : j["dancers"]) {
            const std::string p = "scene.dancers[" + std::to_string(i) + "]";
            detail::reject_unknown(d, {"id", "x", "y", "body_length_px", "body_width_px", "intensity", "direction_deg",
                                       "waggle_ms", "waggle_sd_ms", "frequency_hz", "amplitude_px",
                                       "forward_px_per_frame", "runs", "return_ms", "divergence_sd_deg",
                                       "alternating_bias_deg", "start_frame", "seed"},
                                   p);
            DanceScript ds;
            ds.id = i;
            ds.seed = s.seed + static_cast<std::uint64_t>(i);
            take(d, "id", ds.id, p);
            take(d, "x", ds.x, p);
            take(d, "y", ds.y, p);
            take(d, "body_length_px", ds.body_length_px, p);
            take(d, "body_width_px", ds.body_width_px, p);
            take(d, "intensity", ds.intensity, p);
            take(d, "direction_deg", ds.direction_deg, p);
            take(d, "waggle_ms", ds.waggle_ms, p);
            take(d, "waggle_sd_ms", ds.waggle_sd_ms, p);
            take(d, "frequency_hz", ds.frequency_hz, p);
            take(d, "amplitude_px", ds.amplitude_px, p);
            take(d, "forward_px_per_frame", ds.forward_px_per_frame, p);
            take(d, "runs", ds.runs, p);
            take(d, "return_ms", ds.return_ms, p);
            take(d, "divergence_sd_deg", ds.divergence_sd_deg, p);
            take(d, "alternating_bias_deg", ds.alternating_bias_deg, p);
            take(d, "start_frame", ds.start_frame, p);
            take(d, "seed", ds.seed, p);
            s.dancers.push_back(ds);
            ++i;
        }
    }
    if (j.contains("walkers")) {
        int i = 0;
        for (const auto& d : j["walkers"]) {
            const std::string p = "scene.walkers[" + std::to_string(i) + "]";
            detail::reject_unknown(d, {"x", "y", "heading_deg", "speed_px_per_frame", "turn_sd_deg", "body_length_px",
                                       "body_width_px", "intensity", "start_frame", "frames", "seed"},
                                   p);
            Walker w;
            w.seed = s.seed + 1000 + static_cast<std::uint64_t>(i);
            take(d, "x", w.x, p);
            take(d, "y", w.y, p);
            take(d, "heading_deg", w.heading_deg, p);
            take(d, "speed_px_per_frame", w.speed_px_per_frame, p);
            take(d, "turn_sd_deg", w.turn_sd_deg, p);
            take(d, "body_length_px", w.body_length_px, p);
            take(d, "body_width_px", w.body_width_px, p);
            take(d, "intensity", w.intensity, p);
            take(d, "start_frame", w.start_frame, p);
            take(d, "frames", w.frames, p);
            take(d, "seed", w.seed, p);
            s.walkers.push_back(w);
            ++i;
        }
    }
    if (j.contains("shakers")) {
        int i = 0;
        for (const auto& d : j["shakers"]) {
            const std::string p = "scene.shakers[" + std::to_string(i) + "]";
            detail::reject_unknown(d, {"x", "y", "heading_deg", "frequency_hz", "amplitude_px", "drift_px_per_frame",
                                       "body_length_px", "body_width_px", "intensity", "start_frame", "frames"},
                                   p);
            Shaker sh;
            take(d, "x", sh.x, p);
            take(d, "y", sh.y, p);
            take(d, "heading_deg", sh.heading_deg, p);
            take(d, "frequency_hz", sh.frequency_hz, p);
            take(d, "amplitude_px", sh.amplitude_px, p);
            take(d, "drift_px_per_frame", sh.drift_px_per_frame, p);
            take(d, "body_length_px", sh.body_length_px, p);
            take(d, "body_width_px", sh.body_width_px, p);
            take(d, "intensity", sh.intensity, p);
            take(d, "start_frame", sh.start_frame, p);
            take(d, "frames", sh.frames, p);
            s.shakers.push_back(sh);
            ++i;
        }
    }
    return s;
}

inline Scene load_scene(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw UnreadableSourceError("cannot open scene " + path.string());
    try {
        return scene_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline nlohmann::json to_json(const GroundTruth& gt) {
    nlohmann::json j;
    j["body_length_px"] = gt.body_length_px;
    j["runs"] = nlohmann::json::array();
    for (const auto& r : gt.runs) {
        auto trace = nlohmann::json::array();
        for (const auto& t : r.trace) trace.push_back({t.frame, t.x, t.y});
        j["runs"].push_back({{"dancer", r.dancer},
                             {"run", r.run},
                             {"start_frame", r.start_frame},
                             {"end_frame", r.end_frame},
                             {"duration_ms", r.duration_ms},
                             {"direction_deg", r.direction_deg},
                             {"trace", trace}});
    }
    j["dances"] = nlohmann::json::array();
    for (const auto& d : gt.dances) {
        nlohmann::json dj{{"dancer", d.dancer}, {"direction_deg", d.direction_deg}};
        if (d.bearing_deg) dj["bearing_deg"] = *d.bearing_deg;
        if (d.distance_m) dj["distance_m"] = *d.distance_m;
        j["dances"].push_back(dj);
    }
    return j;
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
    try {
        GroundTruth gt;
        gt.body_length_px = j.value("body_length_px", 20.0);
        for (const auto& r : j.at("runs")) {
            TruthRun tr;
            tr.dancer = r.at("dancer").get<int>();
            tr.run = r.at("run").get<int>();
            tr.start_frame = r.at("start_frame").get<std::int64_t>();
            tr.end_frame = r.at("end_frame").get<std::int64_t>();
            tr.duration_ms = r.at("duration_ms").get<double>();
            tr.direction_deg = r.at("direction_deg").get<double>();
            for (const auto& p : r.at("trace"))
                tr.trace.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<double>(), p.at(2).get<double>()});
            gt.runs.push_back(std::move(tr));
        }
        if (j.contains("dances"))
            for (const auto& d : j["dances"]) {
                TruthDance td;
                td.dancer = d.at("dancer").get<int>();
                td.direction_deg = d.at("direction_deg").get<double>();
                if (d.contains("bearing_deg")) td.bearing_deg = d["bearing_deg"].get<double>();
                if (d.contains("distance_m")) td.distance_m = d["distance_m"].get<double>();
                gt.dances.push_back(td);
            }
        return gt;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("ground truth: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Scoring

struct Detection {
    std::int64_t id = 0;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;
    double duration_ms = 0.0;
    double x = 0.0, y = 0.0;  // mean trace position
    std::optional<double> direction_deg;
};

inline Detection detection_from(const RunRecord& r) {
    Detection d;
    d.id = r.id;
    d.start_frame = r.start_frame;
    d.end_frame = r.trace.empty() ? r.start_frame : r.trace.back().frame;
    d.duration_ms = r.duration_ms;
    const auto p = r.position();
    d.x = p.x;
    d.y = p.y;
    d.direction_deg = r.direction_deg;
    return d;
}

struct Match {
    std::size_t truth = 0;
    std::size_t detection = 0;
};

struct Report {
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
    double precision = 1.0;
    double recall = 0.0;
    double duration_bias_ms = 0.0;
    double duration_sd_ms = 0.0;
    std::optional<double> angle_error_mean_deg;
    std::optional<double> angle_error_sd_deg;
    std::vector<Match> matches;
};

inline std::int64_t overlap_frames(std::int64_t a0, std::int64_t a1, std::int64_t b0, std::int64_t b1) {
    return std::max<std::int64_t>(0, std::min(a1, b1) - std::max(a0, b0) + 1);
}

inline bool detection_matches(const TruthRun& t, const Detection& d, double body_length_px) {
    const std::int64_t len = t.end_frame - t.start_frame + 1;
    if (2 * overlap_frames(t.start_frame, t.end_frame, d.start_frame, d.end_frame) < len) return false;
    const auto c = t.mean_position();
    return std::hypot(c.x - d.x, c.y - d.y) <= body_length_px;
}

inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// One-to-one greedy matching: pairs ordered by larger overlap, then smaller
/// centroid distance, then detection start frame and position (not id).
inline Report score_detections(const GroundTruth& gt, std::span<const Detection> dets) {
    struct Pair {
        std::int64_t overlap;
        double distance;
        std::size_t t, d;
    };
    std::vector<Pair> pairs;
    for (std::size_t t = 0; t < gt.runs.size(); ++t)
        for (std::size_t d = 0; d < dets.size(); ++d) {
            if (!detection_matches(gt.runs[t], dets[d], gt.body_length_px)) continue;
            const auto c = gt.runs[t].mean_position();
            pairs.push_back({overlap_frames(gt.runs[t].start_frame, gt.runs[t].end_frame, dets[d].start_frame, dets[d].end_frame),
                             std::hypot(c.x - dets[d].x, c.y - dets[d].y), t, d});
        }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
        const auto& da = dets[a.d];
        const auto& db = dets[b.d];
        return std::tie(b.overlap, a.distance, a.t, da.start_frame, da.end_frame, da.x, da.y) <
               std::tie(a.overlap, b.distance, b.t, db.start_frame, db.end_frame, db.x, db.y);
    });
    std::vector<char> t_used(gt.runs.size(), 0), d_used(dets.size(), 0);
    Report rep;
    std::vector<double> dur_err, ang_err;
    for (const auto& p : pairs) {
        if (t_used[p.t] || d_used[p.d]) continue;
        t_used[p.t] = d_used[p.d] = 1;
        rep.matches.push_back({p.t, p.d});
        dur_err.push_back(dets[p.d].duration_ms - gt.runs[p.t].duration_ms);
        if (dets[p.d].direction_deg) ang_err.push_back(signed_angle_diff(*dets[p.d].direction_deg, gt.runs[p.t].direction_deg));
    }
    std::sort(rep.matches.begin(), rep.matches.end(), [](const Match& a, const Match& b) { return a.truth < b.truth; });
    rep.true_positives = static_cast<int>(rep.matches.size());
    rep.false_positives = static_cast<int>(dets.size()) - rep.true_positives;
    rep.false_negatives = static_cast<int>(gt.runs.size()) - rep.true_positives;
    rep.precision = dets.empty() ? 1.0 : static_cast<double>(rep.true_positives) / static_cast<double>(dets.size());
    rep.recall = gt.runs.empty() ? 1.0 : static_cast<double>(rep.true_positives) / static_cast<double>(gt.runs.size());
    rep.duration_bias_ms = mean_of(dur_err);
    rep.duration_sd_ms = sample_sd(dur_err);
    if (!ang_err.empty()) {
        // signed errors are small, so plain mean/SD of the wrapped differences
        rep.angle_error_mean_deg = mean_of(ang_err);
        rep.angle_error_sd_deg = sample_sd(ang_err);
    }
    return rep;
}

inline nlohmann::json to_json(const Report& r) {
    nlohmann::json j{{"true_positives", r.true_positives},
                     {"false_positives", r.false_positives},
                     {"false_negatives", r.false_negatives},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"duration_bias_ms", r.duration_bias_ms},
                     {"duration_sd_ms", r.duration_sd_ms}};
    j["angle_error_mean_deg"] = r.angle_error_mean_deg ? nlohmann::json(*r.angle_error_mean_deg) : nlohmann::json(nullptr);
    j["angle_error_sd_deg"] = r.angle_error_sd_deg ? nlohmann::json(*r.angle_error_sd_deg) : nlohmann::json(nullptr);
    auto m = nlohmann::json::array();
    for (const auto& x : r.matches) m.push_back({x.truth, x.detection});
    j["matches"] = m;
    return j;
}

// ---------------------------------------------------------------------------
// Scene generation

struct BenchmarkOptions {
    int dances = 20;
    int width = 320;
    int height = 240;
    double fps = 100.0;
    double noise_sigma = 3.0;
    int walkers = 4;
    int shakers = 6;
    std::uint64_t seed = 20;
};

/// Random non-overlapping dancers with staggered starts plus distractors.
inline Scene make_benchmark_scene(const BenchmarkOptions& opt) {
    Scene s;
    s.width = opt.width;
    s.height = opt.height;
    s.fps = opt.fps;
    s.noise_sigma = opt.noise_sigma;
    s.seed = opt.seed;
    s.hive = GeoPoint{52.457, 13.296};
    Rng rng(splitmix64(opt.seed));
    // Dancers occupy slots in a spatial grid and take turns in time so that
    // simultaneous dances stay apart.
    const int cols = 3, rows = 2;
    const double cw = static_cast<double>(opt.width) / cols, ch = static_cast<double>(opt.height) / rows;
    std::vector<std::int64_t> slot_free(cols * rows, 0);
    for (int d = 0; d < opt.dances; ++d) {
        DanceScript ds;
        ds.id = d;
        ds.seed = splitmix64(opt.seed * 1000 + d);
        const int slot = d % (cols * rows);
        ds.x = (slot % cols + 0.5) * cw + rng.uniform(-8, 8);
        ds.y = (slot / cols + 0.5) * ch + rng.uniform(-8, 8);
        ds.direction_deg = rng.uniform(0, 360);
        ds.waggle_ms = rng.uniform(450, 900);
        ds.waggle_sd_ms = 60;
        ds.runs = static_cast<int>(rng.integer(4, 8));
        ds.return_ms = rng.uniform(1000, 1500);
        ds.divergence_sd_deg = 14.0;
        ds.frequency_hz = rng.uniform(12, 14);
        ds.start_frame = slot_free[slot] + rng.integer(0, 100);
        s.dancers.push_back(ds);
        const auto plan = plan_dancer(ds, opt.fps);
        slot_free[slot] = plan.end_frame + 50;
    }
    std::int64_t end = 0;
    for (auto f : slot_free) end = std::max(end, f);
    s.frames = end + 100;
    for (int w = 0; w < opt.walkers; ++w) {
        Walker wk;
        wk.x = rng.uniform(20, opt.width - 20);
        wk.y = rng.uniform(20, opt.height - 20);
        wk.heading_deg = rng.uniform(0, 360);
        wk.speed_px_per_frame = rng.uniform(0.5, 2.0);
        wk.seed = splitmix64(opt.seed * 7 + w);
        s.walkers.push_back(wk);
    }
    for (int k = 0; k < opt.shakers; ++k) {
        Shaker sh;
        sh.x = rng.uniform(20, opt.width - 20);
        sh.y = rng.uniform(20, opt.height - 20);
        sh.heading_deg = rng.uniform(0, 360);
        sh.frequency_hz = rng.chance(0.5) ? rng.uniform(4, 6) : rng.uniform(22, 28);
        sh.amplitude_px = rng.uniform(3, 6);
        sh.drift_px_per_frame = rng.uniform(0.0, 0.3);
        sh.start_frame = rng.integer(0, std::max<std::int64_t>(1, s.frames - 200));
        sh.frames = rng.integer(60, 150);
        s.shakers.push_back(sh);
    }
    return s;
}

inline nlohmann::json to_json(const Scene& s) {
    nlohmann::json j;
    j["width"] = s.width;
    j["height"] = s.height;
    j["fps"] = s.fps;
    j["frames"] = s.frames;
    j["background"] = s.background;
    j["noise_sigma"] = s.noise_sigma;
    j["seed"] = s.seed;
    j["start_utc"] = format_utc(s.start_utc);
    j["meters_per_ms"] = s.meters_per_ms;
    if (s.hive) j["hive"] = {{"latitude", s.hive->lat_deg}, {"longitude", s.hive->lon_deg}};
    j["dancers"] = nlohmann::json::array();
    for (const auto& d : s.dancers)
        j["dancers"].push_back({{"id", d.id},
                                {"x", d.x},
                                {"y", d.y},
                                {"body_length_px", d.body_length_px},
                                {"body_width_px", d.body_width_px},
                                {"intensity", d.intensity},
                                {"direction_deg", d.direction_deg},
                                {"waggle_ms", d.waggle_ms},
                                {"waggle_sd_ms", d.waggle_sd_ms},
                                {"frequency_hz", d.frequency_hz},
                                {"amplitude_px", d.amplitude_px},
                                {"forward_px_per_frame", d.forward_px_per_frame},
                                {"runs", d.runs},
                                {"return_ms", d.return_ms},
                                {"divergence_sd_deg", d.divergence_sd_deg},
                                {"alternating_bias_deg", d.alternating_bias_deg},
                                {"start_frame", d.start_frame},
                                {"seed", d.seed}});
    j["walkers"] = nlohmann::json::array();
    for (const auto& w : s.walkers)
        j["walkers"].push_back({{"x", w.x},
                                {"y", w.y},
                                {"heading_deg", w.heading_deg},
                                {"speed_px_per_frame", w.speed_px_per_frame},
                                {"turn_sd_deg", w.turn_sd_deg},
                                {"body_length_px", w.body_length_px},
                                {"body_width_px", w.body_width_px},
                                {"intensity", w.intensity},
                                {"start_frame", w.start_frame},
                                {"frames", w.frames},
                                {"seed", w.seed}});
    j["shakers"] = nlohmann::json::array();
    for (const auto& k : s.shakers)
        j["shakers"].push_back({{"x", k.x},
                                {"y", k.y},
                                {"heading_deg", k.heading_deg},
                                {"frequency_hz", k.frequency_hz},
                                {"amplitude_px", k.amplitude_px},
                                {"drift_px_per_frame", k.drift_px_per_frame},
                                {"body_length_px", k.body_length_px},
                                {"body_width_px", k.body_width_px},
                                {"intensity", k.intensity},
                                {"start_frame", k.start_frame},
                                {"frames", k.frames}});
    return j;
}

// ---------------------------------------------------------------------------
// Colony replay (run records without video)

struct ColonyOptions {
    GeoPoint hive{52.457, 13.296};
    double feeder_bearing_deg = 225.0;
    double feeder_distance_m = 342.0;
    int dances = 571;
    /// Runs per dance: 4 + Poisson(mean - 4).
    double mean_runs = 5.8;
    double run_sd_deg = 14.37;
    double alternating_bias_deg = 0.0;
    double duration_mean_ms = 582.79;
    double duration_sd_ms = 196.10;
    double return_mean_ms = 1200.0;
    double return_sd_ms = 200.0;
    /// Fraction of runs (over the whole colony) whose direction is flipped by 180 degrees.
    double flip_fraction = 0.0;
    UtcTime day_start = parse_utc("2016-08-02T07:00:00Z");
    double day_hours = 8.0;
    int comb_width = 320;
    int comb_height = 240;
    std::uint64_t seed = 1;
};

struct ColonyTruth {
    struct Dance {
        double alpha_deg = 0.0;
        UtcTime start{};
        std::vector<std::size_t> runs;  // indices into the record list
    };
    std::vector<Dance> dances;
    std::vector<std::size_t> flipped;
    double meters_per_ms = 0.0;
};

/// Run records of a colony foraging at one feeder. Directions are comb angles
/// (0 = up) chosen so that bearing = solar azimuth at the dance + angle.
inline std::vector<RunRecord> generate_colony_runs(const ColonyOptions& opt, ColonyTruth* truth = nullptr) {
    if (opt.dances < 1) throw ConfigError("colony.dances", "must be >= 1");
    if (opt.mean_runs < 4) throw ConfigError("colony.mean_runs", "must be >= 4");
    Rng rng(splitmix64(opt.seed ^ 0xC010ULL));
    ColonyTruth local;
    ColonyTruth& tr = truth ? *truth : local;
    tr = ColonyTruth{};
    tr.meters_per_ms = opt.feeder_distance_m / opt.duration_mean_ms;
    std::vector<RunRecord> records;
    const double span_ms = opt.day_hours * 3600.0 * 1000.0;
    const double slot_ms = span_ms / opt.dances;
    std::int64_t next_id = 1;
    for (int d = 0; d < opt.dances; ++d) {
        const int runs = 4 + rng.poisson(opt.mean_runs - 4.0);
        std::vector<double> durs, gaps;
        double total = 0.0;
        for (int r = 0; r < runs; ++r) {
            double dur = rng.normal(opt.duration_mean_ms, opt.duration_sd_ms);
            while (dur < 100.0) dur = rng.normal(opt.duration_mean_ms, opt.duration_sd_ms);
            const double gap = std::max(300.0, rng.normal(opt.return_mean_ms, opt.return_sd_ms));
            durs.push_back(dur);
            gaps.push_back(gap);
            total += dur + (r + 1 < runs ? gap : 0.0);
        }
        const double offset = d * slot_ms + rng.uniform(0.0, std::max(0.0, slot_ms - total));
        const UtcTime start = opt.day_start + std::chrono::milliseconds{std::llround(offset)};
        const UtcTime mid = start + std::chrono::milliseconds{std::llround(total / 2)};
        const double az = solar_azimuth(opt.hive.lat_deg, opt.hive.lon_deg, mid);
        const double alpha = wrap360(opt.feeder_bearing_deg - az);
        const double cx = rng.uniform(30, opt.comb_width - 30), cy = rng.uniform(30, opt.comb_height - 30);

        ColonyTruth::Dance td{alpha, start, {}};
        double t_ms = 0.0;
        for (int r = 0; r < runs; ++r) {
            RunRecord rec;
            rec.id = next_id++;
            rec.start_utc = start + std::chrono::milliseconds{std::llround(t_ms)};
            rec.duration_ms = std::round(durs[r]);
            rec.start_frame = std::llround((unix_seconds(rec.start_utc) - unix_seconds(opt.day_start)) * 100.0);
            const double dir = alpha + rng.normal(0.0, opt.run_sd_deg) + (r % 2 == 0 ? 1.0 : -1.0) * opt.alternating_bias_deg;
            rec.direction_deg = wrap360(dir);
            rec.axis_deg = wrap180(dir);
            const double jx = rng.normal(0.0, 3.0), jy = rng.normal(0.0, 3.0);
            rec.trace = {{rec.start_frame, cx + jx, cy + jy}, {rec.start_frame + 1, cx + jx, cy + jy}};
            td.runs.push_back(records.size());
            records.push_back(std::move(rec));
            t_ms += durs[r] + gaps[r];
        }
        tr.dances.push_back(std::move(td));
    }
    if (opt.flip_fraction > 0) {
        std::vector<std::size_t> idx(records.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const auto n = static_cast<std::size_t>(std::llround(opt.flip_fraction * static_cast<double>(records.size())));
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(i), static_cast<std::int64_t>(idx.size() - 1)));
            std::swap(idx[i], idx[j]);
            auto& rec = records[idx[i]];
            rec.direction_deg = wrap360(*rec.direction_deg + 180.0);
            tr.flipped.push_back(idx[i]);
        }
        std::sort(tr.flipped.begin(), tr.flipped.end());
    }
    return records;
}

} // namespace wdd::synth
