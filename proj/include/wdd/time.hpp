#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "wdd/errors.hpp"

namespace wdd {

/// UTC instant with millisecond resolution.
using UtcTime = std::chrono::sys_time<std::chrono::milliseconds>;

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff]Z" (the trailing Z is optional).
inline UtcTime parse_utc(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double s = 0.0;
    const std::string str(text);
    int consumed = 0;
    if (std::sscanf(str.c_str(), "%d-%d-%dT%d:%d:%lf%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6)
        throw FormatError("not an ISO-8601 UTC timestamp: '" + str + "'");
    const std::string_view rest = std::string_view(str).substr(static_cast<std::size_t>(consumed));
    if (!(rest.empty() || rest == "Z"))
        throw FormatError("only UTC timestamps ending in 'Z' are supported: '" + str + "'");
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0.0 || s >= 61.0)
        throw FormatError("timestamp out of range: '" + str + "'");
    const auto ms = static_cast<std::int64_t>(std::llround(s * 1000.0));
    return sys_days{ymd} + hours{h} + minutes{mi} + milliseconds{ms};
}

inline std::string format_utc(UtcTime t) {
    using namespace std::chrono;
    const auto day_start = floor<days>(t);
    const year_month_day ymd{day_start};
    const auto in_day = t - day_start;
    const auto h = duration_cast<hours>(in_day);
    const auto mi = duration_cast<minutes>(in_day - h);
    const auto s = duration_cast<seconds>(in_day - h - mi);
    const auto ms = (in_day - h - mi - s).count();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(h.count()), static_cast<int>(mi.count()),
                  static_cast<int>(s.count()), static_cast<int>(ms));
    return buf;
}

/// Seconds since the Unix epoch.
inline double unix_seconds(UtcTime t) {
    return static_cast<double>(t.time_since_epoch().count()) / 1000.0;
}

inline UtcTime from_unix_seconds(double seconds) {
    return UtcTime{std::chrono::milliseconds{static_cast<std::int64_t>(std::llround(seconds * 1000.0))}};
}

/// Timestamp of frame `index` of a stream that started at `start` with the given sample rate.
inline UtcTime frame_time(UtcTime start, std::int64_t index, double sample_rate) {
    return start + std::chrono::milliseconds{
                       static_cast<std::int64_t>(std::llround(static_cast<double>(index) * 1000.0 / sample_rate))};
}

} // namespace wdd
