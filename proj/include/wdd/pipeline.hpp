#pragma once

// Pipeline stages over files. Each stage reads and writes JSON lines so it can
// be rerun on its own; `run_pipeline` chains the same functions.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdd/attention.hpp"
#include "wdd/config.hpp"
#include "wdd/errors.hpp"
#include "wdd/filter_net.hpp"
#include "wdd/mapping.hpp"
#include "wdd/orientation.hpp"
#include "wdd/records.hpp"
#include "wdd/snippet_io.hpp"
#include "wdd/source.hpp"
#include "wdd/synth.hpp"

namespace wdd {

/// Failure inside a named stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

namespace fs = std::filesystem;

inline fs::path snippet_path(const fs::path& records_file, const std::string& rel) {
    return (records_file.parent_path() / rel).lexically_normal();
}

/// Path of `rel` (relative to `from_file`'s directory) re-expressed relative to `to_file`'s directory.
inline std::string relocate(const std::string& rel, const fs::path& from_file, const fs::path& to_file) {
    const fs::path target = fs::absolute(snippet_path(from_file, rel)).lexically_normal();
    const fs::path base = fs::absolute(to_file.parent_path().empty() ? fs::path(".") : to_file.parent_path()).lexically_normal();
    return target.lexically_relative(base).generic_string();
}

inline std::vector<GrayImage> load_run_snippets(const RunRecord& r, const fs::path& records_file) {
    if (!r.snippet) throw FramesUnavailableError("run " + std::to_string(r.id) + " has no snippet stack");
    return read_snippet_stack(snippet_path(records_file, *r.snippet));
}

struct DetectSummary {
    std::int64_t frames = 0;
    std::size_t runs = 0;
    double seconds = 0.0;  // time spent in the detector itself
};

/// Attention over a stream: writes `runs_file` plus one snippet stack per run
/// in a `snippets` directory next to it.
inline DetectSummary detect_stage(const PipelineConfig& cfg, FrameStream& stream, const fs::path& runs_file) {
    attention::Config acfg = cfg.attention;
    acfg.sample_rate_hz = stream.info().sample_rate;
    try {
        acfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.field(), std::string("stream sample rate ") + std::to_string(acfg.sample_rate_hz) +
                                         " Hz incompatible: " + e.what());
    }
    const fs::path dir = runs_file.parent_path().empty() ? fs::path(".") : runs_file.parent_path();
    fs::create_directories(dir / "snippets");
    attention::Detector det(stream.info().width, stream.info().height, acfg);
    DetectSummary sum;
    std::vector<RunRecord> records;
    auto keep = [&](std::vector<attention::WaggleRun>&& runs) {
        for (auto& w : runs) {
            char name[64];
            std::snprintf(name, sizeof name, "snippets/run_%06lld.wdds", static_cast<long long>(w.id));
            write_snippet_stack(dir / name, w.snippets);
            RunRecord r;
            r.id = w.id;
            r.start_frame = w.start_frame;
            r.start_utc = frame_time(cfg.recording.start_utc, w.start_frame, acfg.sample_rate_hz);
            r.duration_ms = w.duration_ms;
            r.trace = std::move(w.trace);
            r.snippet = name;
            records.push_back(std::move(r));
        }
    };
    using clock = std::chrono::steady_clock;
    clock::duration busy{};
    while (auto f = stream.next()) {
        const auto t0 = clock::now();
        auto closed = det.process(*f);
        busy += clock::now() - t0;
        ++sum.frames;
        keep(std::move(closed));
    }
    keep(det.finish());
    sum.runs = records.size();
    sum.seconds = std::chrono::duration<double>(busy).count();
    write_run_records(runs_file, records);
    return sum;
}

inline double filter_threshold(const PipelineConfig& cfg, const std::optional<double>& override_threshold) {
    if (override_threshold) return *override_threshold;
    if (cfg.filter.threshold) return *cfg.filter.threshold;
    return 0.5;
}

/// Keeps the runs the filter network accepts and records their probability.
inline std::size_t filter_stage(const PipelineConfig& cfg, const fs::path& in_file, const fs::path& out_file,
                                const fs::path& model_file, std::optional<double> threshold = std::nullopt) {
    const double th = filter_threshold(cfg, threshold);
    if (!(th >= 0 && th <= 1)) throw ConfigError("--threshold", "must lie in [0, 1]");
    if (!fs::exists(model_file)) throw ConfigError("filter.model", "model file does not exist: " + model_file.string());
    const auto model = filter::load_model(model_file);
    auto records = read_run_records(in_file);
    std::vector<RunRecord> kept;
    for (auto& r : records) {
        const auto stack = load_run_snippets(r, in_file);
        const double p = filter::predict(model, stack);
        if (p < th) continue;
        r.filter_prob = p;
        r.snippet = relocate(*r.snippet, in_file, out_file);
        kept.push_back(std::move(r));
    }
    write_run_records(out_file, kept);
    return kept.size();
}

/// Adds axis, direction and confidence to every run whose snippets allow it.
inline std::size_t orient_stage(const PipelineConfig& cfg, const fs::path& in_file, const fs::path& out_file) {
    auto records = read_run_records(in_file);
    std::size_t decoded = 0;
    for (auto& r : records) {
        const auto stack = load_run_snippets(r, in_file);
        try {
            const auto res = orientation::decode_orientation(stack, r.trace_points(), cfg.orientation);
            r.axis_deg = res.axis_deg;
            r.direction_deg = res.direction_deg;
            r.confidence = res.confidence;
            r.low_confidence = res.low_confidence;
            if (res.direction_deg) ++decoded;
        } catch (const NoSignalError&) {
            // left undecoded; mapping skips runs without a direction
        }
        r.snippet = relocate(*r.snippet, in_file, out_file);
    }
    write_run_records(out_file, records);
    return decoded;
}

struct MapSummary {
    std::size_t dances = 0;
    std::size_t decoded = 0;
};

/// Dances, field vectors and the map files (dances.jsonl, map.geojson, map.svg) in `out_dir`.
inline MapSummary map_stage(const PipelineConfig& cfg, const fs::path& runs_file, const fs::path& out_dir,
                            std::optional<GeoPoint> feeder = std::nullopt) {
    const auto records = read_run_records(runs_file);
    const auto dances = mapping::map_dances(records, cfg.mapping);
    fs::create_directories(out_dir);
    std::vector<nlohmann::json> rows;
    std::vector<mapping::FieldVector> vectors;
    for (std::size_t i = 0; i < dances.size(); ++i) {
        rows.push_back(mapping::dance_summary(dances[i], i));
        if (dances[i].vector) vectors.push_back(*dances[i].vector);
    }
    write_jsonl(out_dir / "dances.jsonl", rows);
    {
        std::ofstream os(out_dir / "map.geojson");
        if (!os) throw UnreadableSourceError("cannot write " + (out_dir / "map.geojson").string());
        os << mapping::to_geojson(vectors, cfg.hive, feeder).dump(2) << '\n';
    }
    {
        std::ofstream os(out_dir / "map.svg");
        if (!os) throw UnreadableSourceError("cannot write " + (out_dir / "map.svg").string());
        os << mapping::to_svg(vectors, cfg.hive, feeder);
    }
    return {dances.size(), vectors.size()};
}

template <typename F>
auto in_stage(const char* name, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

struct PipelineSummary {
    DetectSummary detect;
    std::size_t after_filter = 0;
    std::size_t oriented = 0;
    MapSummary map;
};

/// detect -> filter (when a model is configured) -> orient -> map, all inside `out_dir`.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg, const std::string& source, const fs::path& out_dir,
                                    std::optional<GeoPoint> feeder = std::nullopt,
                                    std::optional<fs::path> model = std::nullopt,
                                    std::optional<double> threshold = std::nullopt) {
    fs::create_directories(out_dir);
    PipelineSummary s;
    const fs::path runs = out_dir / "runs.jsonl";
    s.detect = in_stage("detect", [&] {
        auto stream = maybe_rectify(open_source(source, cfg.recording.fps), cfg.recording.corners);
        return detect_stage(cfg, *stream, runs);
    });
    fs::path current = runs;
    if (!model) model = cfg.filter.model;
    if (model) {
        const fs::path filtered = out_dir / "filtered.jsonl";
        s.after_filter = in_stage("filter", [&] { return filter_stage(cfg, current, filtered, *model, threshold); });
        current = filtered;
    } else {
        s.after_filter = s.detect.runs;
    }
    const fs::path oriented = out_dir / "oriented.jsonl";
    s.oriented = in_stage("orient", [&] { return orient_stage(cfg, current, oriented); });
    s.map = in_stage("map", [&] { return map_stage(cfg, oriented, out_dir, feeder); });
    return s;
}

// ---------------------------------------------------------------------------
// Filter datasets: DIR/dataset.jsonl with {"snippet": path, "label": 0|1}

inline std::vector<filter::Sample> load_dataset(const fs::path& dir) {
    const fs::path index = dir / "dataset.jsonl";
    if (!fs::exists(index)) throw DatasetError("missing " + index.string());
    std::vector<filter::Sample> data;
    for (const auto& j : read_jsonl(index)) {
        filter::Sample s;
        try {
            s.stack = read_snippet_stack(dir / j.at("snippet").get<std::string>());
            s.label = j.at("label").get<int>() != 0;
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError(index.string() + ": " + e.what());
        }
        data.push_back(std::move(s));
    }
    return data;
}

struct LabelCounts {
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// Labels detected runs by matching them to ground truth and appends them to a
/// dataset directory. Snippet stacks are copied in as `<tag>_run_NNNNNN.wdds`.
inline LabelCounts append_labeled(const synth::GroundTruth& gt, const fs::path& runs_file, const fs::path& dir,
                                  const std::string& tag) {
    const auto records = read_run_records(runs_file);
    std::vector<synth::Detection> dets;
    for (const auto& r : records) dets.push_back(synth::detection_from(r));
    const auto report = synth::score_detections(gt, dets);
    std::vector<bool> positive(records.size(), false);
    for (const auto& m : report.matches) positive[m.detection] = true;

    fs::create_directories(dir / "snippets");
    std::vector<nlohmann::json> rows;
    if (fs::exists(dir / "dataset.jsonl")) rows = read_jsonl(dir / "dataset.jsonl");
    LabelCounts counts;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!r.snippet) throw FramesUnavailableError("run " + std::to_string(r.id) + " has no snippet stack");
        char name[96];
        std::snprintf(name, sizeof name, "snippets/%s_run_%06lld.wdds", tag.c_str(), static_cast<long long>(r.id));
        fs::copy_file(snippet_path(runs_file, *r.snippet), dir / name, fs::copy_options::overwrite_existing);
        rows.push_back({{"snippet", name}, {"label", positive[i] ? 1 : 0}});
        (positive[i] ? counts.positives : counts.negatives)++;
    }
    write_jsonl(dir / "dataset.jsonl", rows);
    return counts;
}

} // namespace wdd
