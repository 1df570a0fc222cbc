#pragma once

// `wdd` command line: one subcommand per pipeline stage plus simulate, score
// and train-filter. Exit codes: 0 ok, 2 config error, 3 stage failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wdd/config.hpp"
#include "wdd/errors.hpp"
#include "wdd/filter_net.hpp"
#include "wdd/pipeline.hpp"
#include "wdd/synth.hpp"

namespace wdd::cli {

inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kStageFailure = 3;

inline std::vector<double> parse_numbers(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(flag, "not a number: '" + item + "'");
        }
    }
    return out;
}

inline std::array<Point2d, 4> parse_corners(const std::string& text) {
    const auto v = parse_numbers(text, "--corners");
    if (v.size() != 8) throw ConfigError("--corners", "needs 8 numbers x1,y1,...,x4,y4");
    std::array<Point2d, 4> c{};
    for (int i = 0; i < 4; ++i) c[i] = {v[2 * i], v[2 * i + 1]};
    return c;
}

inline GeoPoint parse_feeder(const std::string& text) {
    const auto v = parse_numbers(text, "--feeder");
    if (v.size() != 2) throw ConfigError("--feeder", "needs lat,lon");
    if (std::abs(v[0]) > 90 || std::abs(v[1]) > 180) throw ConfigError("--feeder", "out of range");
    return {v[0], v[1]};
}

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string source, runs, out, model, data, scene, truth, label_out, tag = "scene", corners, feeder;
    std::optional<double> threshold;
    std::optional<int> epochs;
    // simulate --benchmark
    bool benchmark = false;
    synth::BenchmarkOptions bench;
};

inline PipelineConfig make_config(const Options& o, bool required) {
    PipelineConfig c;
    if (!o.config.empty()) c = load_config(o.config);
    else if (required) throw ConfigError("--config", "missing required option");
    if (o.seed) apply_seed(c, *o.seed);
    if (!o.corners.empty()) c.recording.corners = parse_corners(o.corners);
    return c;
}

inline void log(const std::string& s) { std::cerr << s << '\n'; }

inline int cmd_detect(const Options& o) {
    const auto cfg = make_config(o, true);
    const auto s = in_stage("detect", [&] {
        auto stream = maybe_rectify(open_source(o.source, cfg.recording.fps), cfg.recording.corners);
        fs::create_directories(o.out);
        return detect_stage(cfg, *stream, fs::path(o.out) / "runs.jsonl");
    });
    std::ostringstream m;
    m << "detect: " << s.frames << " frames, " << s.runs << " runs";
    if (s.seconds > 0) m << ", " << static_cast<long long>(s.frames / s.seconds) << " frames/s";
    log(m.str());
    return kOk;
}

inline int cmd_filter(const Options& o) {
    const auto cfg = make_config(o, false);
    std::optional<fs::path> model = o.model.empty() ? cfg.filter.model : std::optional<fs::path>(o.model);
    if (!model) throw ConfigError("--model", "missing required option");
    const auto kept = in_stage("filter", [&] { return filter_stage(cfg, o.runs, o.out, *model, o.threshold); });
    log("filter: " + std::to_string(kept) + " runs kept");
    return kOk;
}

inline int cmd_orient(const Options& o) {
    const auto cfg = make_config(o, false);
    const auto n = in_stage("orient", [&] { return orient_stage(cfg, o.runs, o.out); });
    log("orient: " + std::to_string(n) + " directions");
    return kOk;
}

inline int cmd_map(const Options& o) {
    const auto cfg = make_config(o, true);
    std::optional<GeoPoint> feeder;
    if (!o.feeder.empty()) feeder = parse_feeder(o.feeder);
    const auto s = in_stage("map", [&] { return map_stage(cfg, o.runs, o.out, feeder); });
    log("map: " + std::to_string(s.dances) + " dances, " + std::to_string(s.decoded) + " field vectors");
    return kOk;
}

inline int cmd_pipeline(const Options& o) {
    const auto cfg = make_config(o, true);
    std::optional<GeoPoint> feeder;
    if (!o.feeder.empty()) feeder = parse_feeder(o.feeder);
    std::optional<fs::path> model;
    if (!o.model.empty()) model = o.model;
    const auto s = run_pipeline(cfg, o.source, o.out, feeder, model, o.threshold);
    log("pipeline: " + std::to_string(s.detect.runs) + " runs, " + std::to_string(s.after_filter) + " after filter, " +
        std::to_string(s.map.dances) + " dances");
    return kOk;
}

inline int cmd_train(const Options& o) {
    auto cfg = make_config(o, false);
    auto tc = cfg.filter.train;
    if (o.epochs) tc.epochs = *o.epochs;
    tc.validate();
    const auto result = in_stage("train-filter", [&] {
        const auto data = load_dataset(o.data);
        return filter::train(data, tc);
    });
    in_stage("train-filter", [&] {
        filter::save_model(o.out, result.model);
        return 0;
    });
    for (std::size_t e = 0; e < result.epochs.size(); ++e) {
        const auto& m = result.epochs[e];
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %zu: loss %.4f, train accuracy %.3f, validation accuracy %.3f", e + 1,
                      m.train_loss, m.train_accuracy, m.validation_accuracy);
        log(buf);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "threshold %.4f", result.threshold);
    log(buf);
    std::cout << nlohmann::json{{"model", o.out}, {"threshold", result.threshold}}.dump() << '\n';
    return kOk;
}

inline int cmd_simulate(const Options& o) {
    if (o.benchmark) {
        if (o.out.empty()) throw ConfigError("--out", "missing required option");
        auto b = o.bench;
        if (o.seed) b.seed = *o.seed;
        const auto scene = synth::make_benchmark_scene(b);
        std::ofstream os(o.out);
        if (!os) throw StageError("simulate", "cannot write " + o.out);
        os << synth::to_json(scene).dump(2) << '\n';
        return kOk;
    }
    if (o.scene.empty()) throw ConfigError("--scene", "missing required option");
    in_stage("simulate", [&] {
        const auto scene = synth::load_scene(o.scene);
        auto renderer = std::make_shared<const synth::Renderer>(scene);
        fs::create_directories(o.out);
        synth::SyntheticStream stream(renderer);
        RawContainerWriter w(fs::path(o.out) / "video.raw", stream.info().width, stream.info().height,
                             static_cast<std::uint32_t>(std::lround(stream.info().sample_rate)));
        while (auto f = stream.next()) w.write(f->image);
        w.close();
        std::ofstream os(fs::path(o.out) / "truth.json");
        if (!os) throw UnreadableSourceError("cannot write truth.json");
        os << synth::to_json(renderer->truth()).dump(2) << '\n';
        return 0;
    });
    return kOk;
}

inline synth::GroundTruth load_truth(const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw UnreadableSourceError("cannot open " + p.string());
    try {
        return synth::truth_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("ground truth: ") + e.what());
    }
}

inline int cmd_score(const Options& o) {
    in_stage("score", [&] {
        const auto gt = load_truth(o.truth);
        const auto records = read_run_records(o.runs);
        std::vector<synth::Detection> dets;
        for (const auto& r : records) dets.push_back(synth::detection_from(r));
        const auto report = synth::score_detections(gt, dets);
        const auto j = synth::to_json(report);
        if (o.out.empty()) std::cout << j.dump(2) << '\n';
        else std::ofstream(o.out) << j.dump(2) << '\n';
        if (!o.label_out.empty()) {
            const auto c = append_labeled(gt, o.runs, o.label_out, o.tag);
            log("labeled " + std::to_string(c.positives) + " positives, " + std::to_string(c.negatives) + " negatives");
        }
        return 0;
    });
    return kOk;
}

/// Entry point; returns the process exit code.
inline int run(int argc, char** argv) {
    CLI::App app{"Waggle dance detection and decoding"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* s, bool seed = true) {
        s->add_option("--config", o.config, "Pipeline configuration (JSON)");
        if (seed) s->add_option("--seed", o.seed, "Override every seed in the configuration");
    };

    auto* detect = app.add_subcommand("detect", "Attention over a video, writes runs.jsonl and snippets");
    common(detect);
    detect->add_option("--source", o.source, "synth:SCENE.json, PGM directory or raw container")->required();
    detect->add_option("--out", o.out, "Output directory")->required();
    detect->add_option("--corners", o.corners, "Reference corners x1,y1,...,x4,y4 for rectification");

    auto* filt = app.add_subcommand("filter", "Drop runs the filter network rejects");
    common(filt);
    filt->add_option("--runs", o.runs, "Input runs.jsonl")->required();
    filt->add_option("--out", o.out, "Output JSONL")->required();
    filt->add_option("--model", o.model, "Trained model file");
    filt->add_option("--threshold", o.threshold, "Acceptance probability");

    auto* orient = app.add_subcommand("orient", "Decode waggle orientation");
    common(orient);
    orient->add_option("--runs", o.runs, "Input JSONL")->required();
    orient->add_option("--out", o.out, "Output JSONL")->required();

    auto* map = app.add_subcommand("map", "Group runs into dances and map them");
    common(map);
    map->add_option("--runs", o.runs, "Oriented runs JSONL")->required();
    map->add_option("--out", o.out, "Output directory")->required();
    map->add_option("--feeder", o.feeder, "Known feeder position lat,lon");

    auto* train = app.add_subcommand("train-filter", "Train the filter network");
    common(train);
    train->add_option("--data", o.data, "Directory with dataset.jsonl")->required();
    train->add_option("--epochs", o.epochs, "Training epochs");
    train->add_option("--out", o.out, "Model file")->required();

    auto* sim = app.add_subcommand("simulate", "Render a scene script, or write a benchmark scene");
    sim->add_option("--seed", o.seed, "Benchmark seed");
    sim->add_option("--scene", o.scene, "Scene script JSON");
    sim->add_option("--out", o.out, "Output directory (scene) or scene file (--benchmark)");
    sim->add_flag("--benchmark", o.benchmark, "Generate a benchmark scene script");
    sim->add_option("--dances", o.bench.dances, "Benchmark dances");
    sim->add_option("--walkers", o.bench.walkers, "Benchmark walking distractors");
    sim->add_option("--shakers", o.bench.shakers, "Benchmark shaking distractors");

    auto* score = app.add_subcommand("score", "Compare detected runs with ground truth");
    score->add_option("--truth", o.truth, "truth.json from simulate")->required();
    score->add_option("--runs", o.runs, "Runs JSONL")->required();
    score->add_option("--out", o.out, "Report file (default stdout)");
    score->add_option("--label-out", o.label_out, "Append labeled snippets to this dataset directory");
    score->add_option("--tag", o.tag, "Snippet name prefix in the dataset");

    auto* pipe = app.add_subcommand("pipeline", "detect, filter, orient and map in one go");
    common(pipe);
    pipe->add_option("--source", o.source, "synth:SCENE.json, PGM directory or raw container")->required();
    pipe->add_option("--out", o.out, "Output directory")->required();
    pipe->add_option("--model", o.model, "Trained model file");
    pipe->add_option("--threshold", o.threshold, "Acceptance probability");
    pipe->add_option("--feeder", o.feeder, "Known feeder position lat,lon");
    pipe->add_option("--corners", o.corners, "Reference corners x1,y1,...,x4,y4 for rectification");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*detect) return cmd_detect(o);
        if (*filt) return cmd_filter(o);
        if (*orient) return cmd_orient(o);
        if (*map) return cmd_map(o);
        if (*train) return cmd_train(o);
        if (*sim) return cmd_simulate(o);
        if (*score) return cmd_score(o);
        if (*pipe) return cmd_pipeline(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const StageError& e) {
        std::cerr << "stage failure: " << e.what() << '\n';
        return kStageFailure;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << '\n';
        return kStageFailure;
    }
    return kConfigError;
}

} // namespace wdd::cli
