#pragma once

// Mapping stage: groups waggle runs into dances in XYT space, rejects angular
// outliers with RANSAC and decodes each dance into a field vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "wdd/circular.hpp"
#include "wdd/clustering.hpp"
#include "wdd/errors.hpp"
#include "wdd/geo.hpp"
#include "wdd/records.hpp"
#include "wdd/solar.hpp"
#include "wdd/time.hpp"

namespace wdd::mapping {

struct RansacConfig {
    int iterations = 100;
    double threshold_deg = 25.0;
    std::uint64_t seed = 0;
};

struct Config {
    /// Single-linkage cut in XYT units (comb pixels and quarter-seconds).
    double cluster_distance = 60.0;
    int min_runs = 4;
    RansacConfig ransac;
    /// Offset of local time from UTC, defines "local midnight" for the time axis.
    double utc_offset_hours = 0.0;
    GeoPoint hive;
    /// Linear duration-to-distance factor, meters per millisecond of waggle.
    double meters_per_ms = 342.0 / 582.79;
    /// Added to image-space run directions to obtain angles relative to gravity-up.
    double camera_rotation_deg = 0.0;
    /// Gaps between consecutive waggle runs longer than this are interruptions.
    double max_return_gap_ms = 5000.0;

    void validate() const {
        if (!(cluster_distance > 0)) throw ConfigError("mapping.cluster_distance", "must be positive");
        if (min_runs < 4) throw ConfigError("mapping.min_runs", "a dance needs at least 4 waggle runs");
        if (ransac.iterations < 1) throw ConfigError("mapping.ransac.iterations", "must be >= 1");
        if (!(ransac.threshold_deg > 0 && ransac.threshold_deg < 90))
            throw ConfigError("mapping.ransac.threshold_deg", "must lie in (0, 90)");
        if (!(meters_per_ms > 0)) throw ConfigError("mapping.meters_per_ms", "must be positive");
        if (!(std::abs(hive.lat_deg) <= 90)) throw ConfigError("hive.latitude", "must lie in [-90, 90]");
        if (!(max_return_gap_ms > 0)) throw ConfigError("mapping.max_return_gap_ms", "must be positive");
    }
};

struct DanceRun {
    std::int64_t run_id = 0;
    double x = 0.0;
    double y = 0.0;
    double t = 0.0;  // quarter-seconds since local midnight
    double direction_deg = 0.0;
    double duration_ms = 0.0;
    UtcTime start{};
};

struct DanceCluster {
    std::vector<DanceRun> runs;  // ordered by start time
    std::vector<bool> inliers;   // filled by fit_dance
    bool accepted = false;
};

struct FieldVector {
    double alpha_deg = 0.0;    // mean waggle angle relative to gravity-up
    double azimuth_deg = 0.0;  // sun azimuth at the dance mid-time
    double bearing_deg = 0.0;  // from true north
    double distance_m = 0.0;
    double mean_duration_ms = 0.0;
    std::optional<double> mean_return_ms;
    std::optional<double> profitability;
    GeoPoint endpoint;
    int runs = 0;
    int inliers = 0;
    UtcTime mid_time{};
    double x = 0.0;
    double y = 0.0;
};

/// Quarter-seconds of `t` since local midnight of the day containing `epoch`.
inline double quarter_seconds(UtcTime t, UtcTime epoch, double utc_offset_hours) {
    const double offset_s = utc_offset_hours * 3600.0;
    const double day0 = std::floor((unix_seconds(epoch) + offset_s) / 86400.0) * 86400.0;
    return (unix_seconds(t) + offset_s - day0) * 4.0;
}

/// XYT single-linkage clustering; clusters with fewer than min_runs members are dropped.
/// Records without a direction are ignored.
inline std::vector<DanceCluster> cluster_dances(std::span<const RunRecord> records, const Config& cfg) {
    cfg.validate();
    std::vector<const RunRecord*> usable;
    for (const auto& r : records)
        if (r.direction_deg) usable.push_back(&r);
    if (usable.empty()) return {};
    std::sort(usable.begin(), usable.end(), [](const RunRecord* a, const RunRecord* b) {
        const auto pa = a->position(), pb = b->position();
        return std::tie(a->start_utc, a->id, pa.x, pa.y) < std::tie(b->start_utc, b->id, pb.x, pb.y);
    });
    const UtcTime epoch = usable.front()->start_utc;
    std::vector<DanceRun> pts;
    pts.reserve(usable.size());
    for (const auto* r : usable) {
        const auto p = r->position();
        pts.push_back({r->id, p.x, p.y, quarter_seconds(r->start_utc, epoch, cfg.utc_offset_hours),
                       wrap360(*r->direction_deg + cfg.camera_rotation_deg), r->duration_ms, r->start_utc});
    }
    auto xyt = [](const DanceRun& a, const DanceRun& b) {
        return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.t - b.t) * (a.t - b.t));
    };
    std::vector<DanceCluster> dances;
    for (const auto& members : single_linkage<DanceRun>(pts, xyt, cfg.cluster_distance)) {
        if (static_cast<int>(members.size()) < cfg.min_runs) continue;
        DanceCluster c;
        for (std::size_t i : members) c.runs.push_back(pts[i]);
        dances.push_back(std::move(c));
    }
    return dances;
}

struct RansacResult {
    std::vector<bool> inliers;
    int consensus = 0;
    double model_deg = 0.0;
    bool accepted = false;
};

/// One-angle RANSAC: each hypothesis is a sampled run angle, its consensus the
/// angles within the circular threshold. Hypotheses are drawn without
/// replacement from a seeded permutation; ties keep the first found.
inline RansacResult ransac_angles(std::span<const double> directions, const RansacConfig& cfg, int min_consensus = 4) {
    RansacResult res;
    res.inliers.assign(directions.size(), false);
    const std::size_t n = directions.size();
    if (n == 0) return res;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

    const std::size_t trials = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.iterations));
    int best = -1;
    std::size_t best_idx = 0;
    for (std::size_t k = 0; k < trials; ++k) {
        const double model = directions[order[k]];
        int count = 0;
        for (double a : directions)
            if (angular_distance(a, model) <= cfg.threshold_deg) ++count;
        if (count > best) {
            best = count;
            best_idx = order[k];
        }
    }
    res.model_deg = directions[best_idx];
    res.consensus = best;
    for (std::size_t i = 0; i < n; ++i) res.inliers[i] = angular_distance(directions[i], res.model_deg) <= cfg.threshold_deg;
    res.accepted = best >= min_consensus;
    return res;
}

/// Runs RANSAC on the cluster's directions and stores the inlier mask.
inline bool fit_dance(DanceCluster& dance, const Config& cfg) {
    std::vector<double> dirs;
    for (const auto& r : dance.runs) dirs.push_back(r.direction_deg);
    const auto fit = ransac_angles(dirs, cfg.ransac, cfg.min_runs);
    dance.inliers = fit.inliers;
    dance.accepted = fit.accepted;
    return dance.accepted;
}

/// Field vector of an accepted dance: bearing = sun azimuth at mid-time + mean
/// waggle angle, distance = c_d * mean duration, profitability = d_w / d_r.
inline FieldVector decode_dance(const DanceCluster& dance, const Config& cfg) {
    if (dance.inliers.size() != dance.runs.size()) throw Error("decode_dance: cluster has not been fitted");
    std::vector<const DanceRun*> in;
    for (std::size_t i = 0; i < dance.runs.size(); ++i)
        if (dance.inliers[i]) in.push_back(&dance.runs[i]);
    if (in.empty()) throw Error("decode_dance: no inlier runs");

    FieldVector fv;
    std::vector<double> dirs;
    double dur = 0.0, sx = 0.0, sy = 0.0;
    for (const auto* r : in) {
        dirs.push_back(r->direction_deg);
        dur += r->duration_ms;
        sx += r->x;
        sy += r->y;
    }
    fv.alpha_deg = circular_mean(dirs);
    fv.mean_duration_ms = dur / static_cast<double>(in.size());
    fv.x = sx / static_cast<double>(in.size());
    fv.y = sy / static_cast<double>(in.size());
    fv.runs = static_cast<int>(dance.runs.size());
    fv.inliers = static_cast<int>(in.size());

    const UtcTime first = in.front()->start;
    const UtcTime last_end = in.back()->start + std::chrono::milliseconds{std::llround(in.back()->duration_ms)};
    fv.mid_time = first + (last_end - first) / 2;
    fv.azimuth_deg = solar_azimuth(cfg.hive.lat_deg, cfg.hive.lon_deg, fv.mid_time);
    fv.bearing_deg = wrap360(fv.azimuth_deg + fv.alpha_deg);
    fv.distance_m = cfg.meters_per_ms * fv.mean_duration_ms;
    fv.endpoint = geodesic_destination(cfg.hive, fv.bearing_deg, fv.distance_m);

    double gaps = 0.0;
    int n_gaps = 0;
    for (std::size_t i = 0; i + 1 < dance.runs.size(); ++i) {
        if (!dance.inliers[i] || !dance.inliers[i + 1]) continue;
        const auto& a = dance.runs[i];
        const auto& b = dance.runs[i + 1];
        const double gap = static_cast<double>((b.start - a.start).count()) - a.duration_ms;
        if (gap <= 0.0 || gap > cfg.max_return_gap_ms) continue;
        gaps += gap;
        ++n_gaps;
    }
    if (n_gaps > 0) {
        fv.mean_return_ms = gaps / n_gaps;
        fv.profitability = fv.mean_duration_ms / *fv.mean_return_ms;
    }
    return fv;
}

struct DanceResult {
    DanceCluster cluster;
    std::optional<FieldVector> vector;  // empty when RANSAC rejected the dance
};

inline std::vector<DanceResult> map_dances(std::span<const RunRecord> records, const Config& cfg) {
    std::vector<DanceResult> out;
    for (auto& c : cluster_dances(records, cfg)) {
        DanceResult r{std::move(c), std::nullopt};
        if (fit_dance(r.cluster, cfg)) r.vector = decode_dance(r.cluster, cfg);
        out.push_back(std::move(r));
    }
    return out;
}

struct DistanceCalibration {
    double meters_per_ms = 0.0;
    double mean_ms = 0.0;
    double sd_ms = 0.0;
    double cv = 0.0;
};

/// c_d = feeder distance / mean waggle duration of runs advertising the feeder.
inline DistanceCalibration calibrate_distance(std::span<const double> durations_ms, double feeder_distance_m,
                                              std::size_t min_runs = 10) {
    if (durations_ms.size() < std::max<std::size_t>(min_runs, 1))
        throw CalibrationError("calibration needs at least " + std::to_string(min_runs) + " runs, got " +
                               std::to_string(durations_ms.size()));
    if (!(feeder_distance_m > 0)) throw CalibrationError("feeder distance must be positive");
    DistanceCalibration cal;
    cal.mean_ms = std::accumulate(durations_ms.begin(), durations_ms.end(), 0.0) / durations_ms.size();
    if (!(cal.mean_ms > 0)) throw CalibrationError("mean waggle duration must be positive");
    double ss = 0.0;
    for (double d : durations_ms) ss += (d - cal.mean_ms) * (d - cal.mean_ms);
    cal.sd_ms = durations_ms.size() > 1 ? std::sqrt(ss / (durations_ms.size() - 1)) : 0.0;
    cal.cv = cal.sd_ms / cal.mean_ms;
    cal.meters_per_ms = feeder_distance_m / cal.mean_ms;
    return cal;
}

/// Indices of runs whose field bearing lies within `tolerance_deg` of `feeder_bearing_deg`.
inline std::vector<std::size_t> runs_near_bearing(std::span<const double> field_bearings_deg, double feeder_bearing_deg,
                                                  double tolerance_deg = 10.0) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < field_bearings_deg.size(); ++i)
        if (angular_distance(field_bearings_deg[i], feeder_bearing_deg) <= tolerance_deg) idx.push_back(i);
    return idx;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json dance_summary(const DanceResult& d, std::size_t index) {
    nlohmann::json j;
    j["dance_id"] = index + 1;
    auto ids = nlohmann::json::array();
    auto mask = nlohmann::json::array();
    for (std::size_t i = 0; i < d.cluster.runs.size(); ++i) {
        ids.push_back(d.cluster.runs[i].run_id);
        mask.push_back(i < d.cluster.inliers.size() ? static_cast<bool>(d.cluster.inliers[i]) : false);
    }
    j["run_ids"] = ids;
    j["inliers"] = mask;
    j["status"] = d.vector ? "decoded" : "rejected";
    if (d.vector) {
        const auto& v = *d.vector;
        j["x"] = v.x;
        j["y"] = v.y;
        j["mid_utc"] = format_utc(v.mid_time);
        j["n_inliers"] = v.inliers;
        j["mean_duration_ms"] = v.mean_duration_ms;
        j["mean_return_ms"] = v.mean_return_ms ? nlohmann::json(*v.mean_return_ms) : nlohmann::json(nullptr);
        j["profitability"] = v.profitability ? nlohmann::json(*v.profitability) : nlohmann::json(nullptr);
        j["alpha_deg"] = v.alpha_deg;
        j["azimuth_deg"] = v.azimuth_deg;
        j["bearing_deg"] = v.bearing_deg;
        j["distance_m"] = v.distance_m;
        j["end_lat"] = v.endpoint.lat_deg;
        j["end_lon"] = v.endpoint.lon_deg;
    }
    return j;
}

/// Color saturation in [0, 1]: 0 for minimal four-run dances, 1 for the largest dance.
inline double saturation(int runs, int max_runs) {
    if (max_runs <= 4) return 1.0;
    return std::clamp(static_cast<double>(runs - 4) / (max_runs - 4), 0.0, 1.0);
}

inline std::optional<double> mean_bearing(std::span<const FieldVector> vectors) {
    std::vector<double> b;
    for (const auto& v : vectors) b.push_back(v.bearing_deg);
    try {
        return circular_mean(b);
    } catch (const UndefinedMeanError&) {
        return std::nullopt;
    }
}

inline nlohmann::json to_geojson(std::span<const FieldVector> vectors, GeoPoint hive,
                                 std::optional<GeoPoint> feeder = std::nullopt) {
    nlohmann::json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = nlohmann::json::array();
    if (vectors.empty()) return fc;

    auto point = [](GeoPoint p, nlohmann::json props) {
        return nlohmann::json{{"type", "Feature"},
                              {"geometry", {{"type", "Point"}, {"coordinates", {p.lon_deg, p.lat_deg}}}},
                              {"properties", std::move(props)}};
    };
    int max_runs = 0;
    for (const auto& v : vectors) max_runs = std::max(max_runs, v.runs);
    for (const auto& v : vectors) {
        fc["features"].push_back(point(
            v.endpoint, {{"kind", "dance"},
                         {"runs", v.runs},
                         {"bearing", v.bearing_deg},
                         {"distance_m", v.distance_m},
                         {"p_R", v.profitability ? nlohmann::json(*v.profitability) : nlohmann::json(nullptr)},
                         {"saturation", saturation(v.runs, max_runs)},
                         {"mid_utc", format_utc(v.mid_time)}}));
    }
    fc["features"].push_back(point(hive, {{"kind", "hive"}}));
    if (feeder) fc["features"].push_back(point(*feeder, {{"kind", "feeder"}}));
    if (const auto mb = mean_bearing(vectors)) {
        double mean_dist = 0.0;
        for (const auto& v : vectors) mean_dist += v.distance_m;
        mean_dist /= static_cast<double>(vectors.size());
        const GeoPoint end = geodesic_destination(hive, *mb, mean_dist);
        fc["features"].push_back(
            {{"type", "Feature"},
             {"geometry",
              {{"type", "LineString"},
               {"coordinates", {{hive.lon_deg, hive.lat_deg}, {end.lon_deg, end.lat_deg}}}}},
             {"properties", {{"kind", "mean_direction"}, {"bearing", *mb}, {"distance_m", mean_dist}}}});
    }
    return fc;
}

/// Scatter plot of dance endpoints in local meters around the hive.
inline std::string to_svg(std::span<const FieldVector> vectors, GeoPoint hive,
                          std::optional<GeoPoint> feeder = std::nullopt) {
    struct P {
        double e, n;
    };
    std::vector<P> pts;
    double extent = 50.0;
    for (const auto& v : vectors) {
        P p{};
        local_offset_m(hive, v.endpoint, p.e, p.n);
        extent = std::max({extent, std::abs(p.e), std::abs(p.n)});
        pts.push_back(p);
    }
    std::optional<P> fp;
    if (feeder) {
        P p{};
        local_offset_m(hive, *feeder, p.e, p.n);
        extent = std::max({extent, std::abs(p.e), std::abs(p.n)});
        fp = p;
    }
    const double size = 600.0, half = size / 2.0, scale = (half - 20.0) / (extent * 1.05);
    auto sx = [&](double e) { return half + e * scale; };
    auto sy = [&](double n) { return half - n * scale; };
    int max_runs = 0;
    for (const auto& v : vectors) max_runs = std::max(max_runs, v.runs);

    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
       << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"10\" y=\"20\" font-size=\"12\">N up; scale " << extent * 1.05 << " m to edge</text>\n";
    if (const auto mb = mean_bearing(vectors)) {
        double e = 0, n = 0;
        compass_vector(*mb, e, n);
        os << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(e * extent) << "\" y2=\""
           << sy(-n * extent) << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double s = saturation(vectors[i].runs, max_runs);
        os << "<circle cx=\"" << sx(pts[i].e) << "\" cy=\"" << sy(pts[i].n) << "\" r=\"4\" fill=\"purple\" fill-opacity=\""
           << 0.15 + 0.85 * s << "\" stroke=\"purple\" stroke-width=\"0.5\"/>\n";
    }
    auto triangle = [&](double e, double n, const char* color) {
        const double x = sx(e), y = sy(n);
        os << "<polygon points=\"" << x << ',' << y - 8 << ' ' << x - 7 << ',' << y + 6 << ' ' << x + 7 << ','
           << y + 6 << "\" fill=\"" << color << "\"/>\n";
    };
    triangle(0, 0, "red");
    if (fp) triangle(fp->e, fp->n, "green");
    os << "</svg>\n";
    return os.str();
}

} // namespace wdd::mapping
