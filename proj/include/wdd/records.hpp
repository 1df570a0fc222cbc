#pragma once

// JSON-lines run records exchanged between stages.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdd/attention.hpp"
#include "wdd/errors.hpp"
#include "wdd/time.hpp"

namespace wdd {

struct RunRecord {
    std::int64_t id = 0;
    std::int64_t start_frame = 0;
    UtcTime start_utc{};
    double duration_ms = 0.0;
    std::vector<attention::TracePoint> trace;
    std::optional<std::string> snippet;  // path relative to the records file
    std::optional<double> filter_prob;
    std::optional<double> axis_deg;
    std::optional<double> direction_deg;
    std::optional<double> confidence;
    std::optional<bool> low_confidence;

    /// Mean trace position, the run's comb location.
    Point2d position() const {
        Point2d p;
        if (trace.empty()) return p;
        for (const auto& t : trace) {
            p.x += t.x;
            p.y += t.y;
        }
        p.x /= static_cast<double>(trace.size());
        p.y /= static_cast<double>(trace.size());
        return p;
    }

    std::vector<Point2d> trace_points() const {
        std::vector<Point2d> pts;
        pts.reserve(trace.size());
        for (const auto& t : trace) pts.push_back({t.x, t.y});
        return pts;
    }
};

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["start_frame"] = r.start_frame;
    j["start_utc"] = format_utc(r.start_utc);
    j["duration_ms"] = r.duration_ms;
    auto trace = nlohmann::json::array();
    for (const auto& t : r.trace) trace.push_back({t.frame, t.x, t.y});
    j["trace"] = std::move(trace);
    if (r.snippet) j["snippet"] = *r.snippet;
    if (r.filter_prob) j["filter_prob"] = *r.filter_prob;
    if (r.axis_deg) j["axis_deg"] = *r.axis_deg;
    if (r.direction_deg) j["direction_deg"] = *r.direction_deg;
    if (r.confidence) j["confidence"] = *r.confidence;
    if (r.low_confidence) j["low_confidence"] = *r.low_confidence;
    return j;
}

inline RunRecord run_from_json(const nlohmann::json& j) {
    try {
        RunRecord r;
        r.id = j.at("id").get<std::int64_t>();
        r.start_frame = j.at("start_frame").get<std::int64_t>();
        r.start_utc = parse_utc(j.at("start_utc").get<std::string>());
        r.duration_ms = j.at("duration_ms").get<double>();
        for (const auto& p : j.at("trace"))
            r.trace.push_back({p.at(0).get<std::int64_t>(), p.at(1).get<double>(), p.at(2).get<double>()});
        if (j.contains("snippet")) r.snippet = j["snippet"].get<std::string>();
        if (j.contains("filter_prob")) r.filter_prob = j["filter_prob"].get<double>();
        if (j.contains("axis_deg")) r.axis_deg = j["axis_deg"].get<double>();
        if (j.contains("direction_deg") && !j["direction_deg"].is_null())
            r.direction_deg = j["direction_deg"].get<double>();
        if (j.contains("confidence")) r.confidence = j["confidence"].get<double>();
        if (j.contains("low_confidence")) r.low_confidence = j["low_confidence"].get<bool>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("run record: ") + e.what());
    }
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw UnreadableSourceError("cannot open " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    std::ofstream os(path);
    if (!os) throw UnreadableSourceError("cannot write " + path.string());
    for (const auto& r : rows) os << r.dump() << '\n';
}

inline std::vector<RunRecord> read_run_records(const std::filesystem::path& path) {
    std::vector<RunRecord> runs;
    for (const auto& j : read_jsonl(path)) runs.push_back(run_from_json(j));
    return runs;
}

inline void write_run_records(const std::filesystem::path& path, const std::vector<RunRecord>& runs) {
    std::vector<nlohmann::json> rows;
    rows.reserve(runs.size());
    for (const auto& r : runs) rows.push_back(to_json(r));
    write_jsonl(path, rows);
}

} // namespace wdd
