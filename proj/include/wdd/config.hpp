#pragma once

// Pipeline configuration file (JSON). Unknown keys are rejected and every
// error names the offending field by its dotted path.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdd/attention.hpp"
#include "wdd/errors.hpp"
#include "wdd/filter_net.hpp"
#include "wdd/geo.hpp"
#include "wdd/homography.hpp"
#include "wdd/mapping.hpp"
#include "wdd/orientation.hpp"
#include "wdd/time.hpp"

namespace wdd {

struct RecordingConfig {
    UtcTime start_utc{};
    /// Frame rate for image-sequence sources, which carry none.
    double fps = 100.0;
    std::optional<std::array<Point2d, 4>> corners;
};

struct FilterStageConfig {
    filter::TrainConfig train;
    std::optional<std::filesystem::path> model;
    std::optional<double> threshold;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    GeoPoint hive;
    RecordingConfig recording;
    attention::Config attention;
    FilterStageConfig filter;
    orientation::BandpassConfig orientation;
    mapping::Config mapping;  // hive and ransac seed mirror the top level

    void validate() const {
        attention.validate();
        filter.train.validate();
        orientation.validate();
        mapping.validate();
        if (filter.threshold && !(*filter.threshold >= 0 && *filter.threshold <= 1))
            throw ConfigError("filter.threshold", "must lie in [0, 1]");
        if (!(recording.fps > 0)) throw ConfigError("recording.fps", "must be positive");
    }
};

namespace config_detail {

inline const nlohmann::json& object_at(const nlohmann::json& j, const char* key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path.empty() ? key : path + "." + key, "missing required field");
    const auto& v = j.at(key);
    if (!v.is_object()) throw ConfigError(path.empty() ? key : path + "." + key, "must be an object");
    return v;
}

inline void known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "must be an object");
    for (const auto& [k, v] : j.items())
        if (std::none_of(keys.begin(), keys.end(), [&](const char* n) { return k == n; }))
            throw ConfigError(path.empty() ? k : path + "." + k, "unknown field");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& path, bool required = false) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!j.contains(key)) {
        if (required) throw ConfigError(full, "missing required field");
        return;
    }
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(full, "must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(full, "must be an integer");
        if constexpr (std::is_unsigned_v<T>)
            if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                throw ConfigError(full, "must be non-negative");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(full, "must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(full, "must be a string");
    }
    try {
        out = v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(full, "has the wrong type");
    }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out, const std::string& path) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    T v{};
    read(j, key, v, path);
    out = v;
}

} // namespace config_detail

inline PipelineConfig config_from_json(const nlohmann::json& root) {
    using namespace config_detail;
    known_keys(root, {"seed", "hive", "recording", "attention", "filter", "orientation", "mapping"}, "");
    PipelineConfig c;
    read(root, "seed", c.seed, "", true);

    const auto& hive = object_at(root, "hive", "");
    known_keys(hive, {"latitude", "longitude"}, "hive");
    read(hive, "latitude", c.hive.lat_deg, "hive", true);
    read(hive, "longitude", c.hive.lon_deg, "hive", true);
    if (!(std::abs(c.hive.lat_deg) <= 90)) throw ConfigError("hive.latitude", "must lie in [-90, 90]");
    if (!(std::abs(c.hive.lon_deg) <= 180)) throw ConfigError("hive.longitude", "must lie in [-180, 180]");

    const auto& rec = object_at(root, "recording", "");
    known_keys(rec, {"start_utc", "fps", "corners", "utc_offset_hours", "camera_rotation_deg"}, "recording");
    std::string start;
    read(rec, "start_utc", start, "recording", true);
    try {
        c.recording.start_utc = parse_utc(start);
    } catch (const std::exception&) {
        throw ConfigError("recording.start_utc", "must look like 2016-08-02T11:00:00Z");
    }
    read(rec, "fps", c.recording.fps, "recording");
    read(rec, "utc_offset_hours", c.mapping.utc_offset_hours, "recording");
    read(rec, "camera_rotation_deg", c.mapping.camera_rotation_deg, "recording");
    if (rec.contains("corners")) {
        std::vector<double> v;
        read(rec, "corners", v, "recording");
        if (v.size() != 8) throw ConfigError("recording.corners", "needs 8 numbers x1,y1,...,x4,y4");
        std::array<Point2d, 4> pts{};
        for (int i = 0; i < 4; ++i) pts[i] = {v[2 * i], v[2 * i + 1]};
        c.recording.corners = pts;
    }

    if (root.contains("attention")) {
        const auto& a = object_at(root, "attention", "");
        known_keys(a, {"window_frames", "sample_rate_hz", "waggle_band_hz", "score_threshold", "cluster_distance_px",
                       "cluster_min_size", "max_step_px", "max_gap_frames", "min_detections", "min_waggle_ms",
                       "snippet_size_px", "threads"},
                   "attention");
        auto& t = c.attention;
        read(a, "window_frames", t.window_frames, "attention");
        read(a, "sample_rate_hz", t.sample_rate_hz, "attention");
        read(a, "waggle_band_hz", t.waggle_band_hz, "attention");
        read(a, "score_threshold", t.score_threshold, "attention");
        read(a, "cluster_distance_px", t.cluster_distance_px, "attention");
        read(a, "cluster_min_size", t.cluster_min_size, "attention");
        read(a, "max_step_px", t.max_step_px, "attention");
        read(a, "max_gap_frames", t.max_gap_frames, "attention");
        read(a, "min_detections", t.min_detections, "attention");
        read(a, "min_waggle_ms", t.min_waggle_ms, "attention");
        read(a, "snippet_size_px", t.snippet_size_px, "attention");
        read(a, "threads", t.threads, "attention");
    }

    if (root.contains("filter")) {
        const auto& f = object_at(root, "filter", "");
        known_keys(f, {"model", "threshold", "architecture", "dropout", "sequence_length", "batch_size", "epochs",
                       "learning_rate", "beta1", "beta2", "epsilon", "validation_fraction", "augment",
                       "target_precision", "threads"},
                   "filter");
        auto& t = c.filter.train;
        std::optional<std::string> model;
        read_opt(f, "model", model, "filter");
        if (model) c.filter.model = *model;
        read_opt(f, "threshold", c.filter.threshold, "filter");
        std::string arch = "s1";
        read(f, "architecture", arch, "filter");
        if (arch == "deep") t.architecture = filter::Architecture::deep();
        else if (arch != "s1") throw ConfigError("filter.architecture", "must be \"s1\" or \"deep\"");
        read(f, "dropout", t.architecture.dropout, "filter");
        read(f, "sequence_length", t.architecture.sequence_length, "filter");
        read(f, "batch_size", t.batch_size, "filter");
        read(f, "epochs", t.epochs, "filter");
        read(f, "learning_rate", t.adam.learning_rate, "filter");
        read(f, "beta1", t.adam.beta1, "filter");
        read(f, "beta2", t.adam.beta2, "filter");
        read(f, "epsilon", t.adam.epsilon, "filter");
        read(f, "validation_fraction", t.validation_fraction, "filter");
        read(f, "augment", t.augment, "filter");
        read(f, "target_precision", t.target_precision, "filter");
        read(f, "threads", t.threads, "filter");
    }

    if (root.contains("orientation")) {
        const auto& o = object_at(root, "orientation", "");
        known_keys(o, {"snippet_size_px", "displacement_px", "sigma_inner", "sigma_outer"}, "orientation");
        read(o, "snippet_size_px", c.orientation.snippet_size_px, "orientation");
        read(o, "displacement_px", c.orientation.displacement_px, "orientation");
        read_opt(o, "sigma_inner", c.orientation.sigma_inner, "orientation");
        read_opt(o, "sigma_outer", c.orientation.sigma_outer, "orientation");
    }

    if (root.contains("mapping")) {
        const auto& m = object_at(root, "mapping", "");
        known_keys(m, {"cluster_distance", "min_runs", "ransac", "meters_per_ms", "max_return_gap_ms"}, "mapping");
        read(m, "cluster_distance", c.mapping.cluster_distance, "mapping");
        read(m, "min_runs", c.mapping.min_runs, "mapping");
        read(m, "meters_per_ms", c.mapping.meters_per_ms, "mapping");
        read(m, "max_return_gap_ms", c.mapping.max_return_gap_ms, "mapping");
        if (m.contains("ransac")) {
            const auto& r = object_at(m, "ransac", "mapping");
            known_keys(r, {"iterations", "threshold_deg", "seed"}, "mapping.ransac");
            read(r, "iterations", c.mapping.ransac.iterations, "mapping.ransac");
            read(r, "threshold_deg", c.mapping.ransac.threshold_deg, "mapping.ransac");
        }
    }

    c.mapping.hive = c.hive;
    c.mapping.ransac.seed = c.seed;
    if (root.contains("mapping") && root["mapping"].contains("ransac") && root["mapping"]["ransac"].contains("seed"))
        read(root["mapping"]["ransac"], "seed", c.mapping.ransac.seed, "mapping.ransac");
    c.filter.train.seed = c.seed;
    c.validate();
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("--config", "cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

/// Re-seeds everything that draws random numbers.
inline void apply_seed(PipelineConfig& c, std::uint64_t seed) {
    c.seed = seed;
    c.mapping.ransac.seed = seed;
    c.filter.train.seed = seed;
}

} // namespace wdd
