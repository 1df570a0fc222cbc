#pragma once

// Frame sources: numbered PGM (P5) sequences, the raw planar container and
// in-memory streams. All frames are 8-bit grayscale.
//
// Raw container layout (all integers little-endian u32):
//   offset 0  width
//   offset 4  height
//   offset 8  frames per second
//   offset 12 frame count
//   offset 16 frame_count * width * height bytes, frame-major, row-major

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wdd/errors.hpp"
#include "wdd/image.hpp"

namespace wdd {

struct StreamInfo {
    int width = 0;
    int height = 0;
    double sample_rate = 100.0;
    std::optional<std::int64_t> frame_count;
};

struct Frame {
    std::int64_t index = 0;
    GrayImage image;
};

/// Sequential source of equally sized grayscale frames with increasing indices.
class FrameStream {
public:
    virtual ~FrameStream() = default;

    virtual const StreamInfo& info() const = 0;

    /// Next frame, or nullopt once the stream is exhausted.
    virtual std::optional<Frame> next() = 0;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
    std::uint32_t bits = 0;
    static_assert(sizeof bits == sizeof f);
    std::memcpy(&bits, &f, sizeof f);
    put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float f = 0.0f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

// Reads the next whitespace-delimited PGM header token, skipping '#' comments.
inline std::string pgm_token(std::istream& is) {
    std::string tok;
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            if (!tok.empty()) break;
        } else {
            tok.push_back(static_cast<char>(c));
        }
        c = is.get();
    }
    return tok;
}

struct PgmHeader {
    int width = 0;
    int height = 0;
    int maxval = 0;
};

inline PgmHeader read_pgm_header(std::istream& is, const std::string& name) {
    if (pgm_token(is) != "P5") throw FormatError(name + ": not a binary PGM (P5) file");
    PgmHeader h;
    try {
        h.width = std::stoi(pgm_token(is));
        h.height = std::stoi(pgm_token(is));
        h.maxval = std::stoi(pgm_token(is));
    } catch (const std::logic_error&) {
        throw FormatError(name + ": malformed PGM header");
    }
    if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 255)
        throw FormatError(name + ": unsupported PGM geometry or depth");
    return h;
}

} // namespace detail

inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UnreadableSourceError("cannot open " + path.string());
    const auto h = detail::read_pgm_header(is, path.string());
    GrayImage img(h.width, h.height);
    if (!is.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size())))
        throw FormatError(path.string() + ": truncated pixel data");
    return img;
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UnreadableSourceError("cannot write " + path.string());
    os << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

/// Frames held in memory; used for tests and for already-rendered synthetic clips.
class MemoryStream final : public FrameStream {
public:
    MemoryStream(std::vector<GrayImage> frames, double sample_rate) : frames_(std::move(frames)) {
        info_.sample_rate = sample_rate;
        info_.frame_count = static_cast<std::int64_t>(frames_.size());
        if (!frames_.empty()) {
            info_.width = frames_.front().width();
            info_.height = frames_.front().height();
        }
        for (const auto& f : frames_)
            if (f.width() != info_.width || f.height() != info_.height)
                throw FormatError("memory stream: inconsistent frame dimensions");
    }

    const StreamInfo& info() const override { return info_; }

    std::optional<Frame> next() override {
        if (pos_ >= frames_.size()) return std::nullopt;
        Frame f{static_cast<std::int64_t>(pos_), frames_[pos_]};
        ++pos_;
        return f;
    }

private:
    std::vector<GrayImage> frames_;
    std::size_t pos_ = 0;
    StreamInfo info_;
};

/// Directory of numbered P5 images, ordered by the first run of digits in the file name.
class PgmSequenceStream final : public FrameStream {
public:
    explicit PgmSequenceStream(const std::filesystem::path& dir, double sample_rate = 100.0) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir)) throw UnreadableSourceError("not a directory: " + dir.string());
        std::vector<std::pair<long long, fs::path>> numbered;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
            const std::string stem = entry.path().stem().string();
            const auto first = std::find_if(stem.begin(), stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
            if (first == stem.end()) continue;
            const auto last = std::find_if_not(first, stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
            numbered.emplace_back(std::stoll(std::string(first, last)), entry.path());
        }
        if (numbered.empty()) throw UnreadableSourceError("no numbered .pgm files in " + dir.string());
        std::sort(numbered.begin(), numbered.end());
        for (std::size_t i = 1; i < numbered.size(); ++i)
            if (numbered[i].first == numbered[i - 1].first)
                throw FormatError("duplicate frame number " + std::to_string(numbered[i].first) + " in " + dir.string());

        for (auto& [num, path] : numbered) {
            std::ifstream is(path, std::ios::binary);
            if (!is) throw UnreadableSourceError("cannot open " + path.string());
            const auto h = detail::read_pgm_header(is, path.string());
            if (files_.empty()) {
                info_.width = h.width;
                info_.height = h.height;
            } else if (h.width != info_.width || h.height != info_.height) {
                throw FormatError(path.string() + ": frame is " + std::to_string(h.width) + "x" +
                                  std::to_string(h.height) + ", expected " + std::to_string(info_.width) +
                                  "x" + std::to_string(info_.height));
            }
            files_.push_back(path);
        }
        info_.sample_rate = sample_rate;
        info_.frame_count = static_cast<std::int64_t>(files_.size());
    }

    const StreamInfo& info() const override { return info_; }

    std::optional<Frame> next() override {
        if (pos_ >= files_.size()) return std::nullopt;
        Frame f{static_cast<std::int64_t>(pos_), read_pgm(files_[pos_])};
        if (f.image.width() != info_.width || f.image.height() != info_.height)
            throw FormatError(files_[pos_].string() + ": frame dimensions changed while reading");
        ++pos_;
        return f;
    }

private:
    std::vector<std::filesystem::path> files_;
    std::size_t pos_ = 0;
    StreamInfo info_;
};

class RawContainerStream final : public FrameStream {
public:
    explicit RawContainerStream(const std::filesystem::path& path) : path_(path), is_(path, std::ios::binary) {
        if (!is_) throw UnreadableSourceError("cannot open " + path.string());
        try {
            info_.width = static_cast<int>(detail::get_u32(is_));
            info_.height = static_cast<int>(detail::get_u32(is_));
            info_.sample_rate = detail::get_u32(is_);
            info_.frame_count = detail::get_u32(is_);
        } catch (const FormatError&) {
            throw FormatError(path.string() + ": truncated raw container header");
        }
        if (info_.width <= 0 || info_.height <= 0 || info_.sample_rate <= 0)
            throw FormatError(path.string() + ": invalid raw container header");
        const auto expected = 16 + static_cast<std::uintmax_t>(*info_.frame_count) * info_.width * info_.height;
        if (std::filesystem::file_size(path) != expected)
            throw FormatError(path.string() + ": size does not match header (" + std::to_string(expected) + " bytes expected)");
    }

    const StreamInfo& info() const override { return info_; }

    std::optional<Frame> next() override {
        if (pos_ >= *info_.frame_count) return std::nullopt;
        Frame f{pos_, GrayImage(info_.width, info_.height)};
        if (!is_.read(reinterpret_cast<char*>(f.image.data()), static_cast<std::streamsize>(f.image.size())))
            throw FormatError(path_.string() + ": truncated frame " + std::to_string(pos_));
        ++pos_;
        return f;
    }

private:
    std::filesystem::path path_;
    std::ifstream is_;
    std::int64_t pos_ = 0;
    StreamInfo info_;
};

/// Streaming writer for the raw container; the frame count is patched on close.
class RawContainerWriter {
public:
    RawContainerWriter(const std::filesystem::path& path, int width, int height, std::uint32_t fps)
        : os_(path, std::ios::binary), width_(width), height_(height) {
        if (!os_) throw UnreadableSourceError("cannot write " + path.string());
        detail::put_u32(os_, static_cast<std::uint32_t>(width));
        detail::put_u32(os_, static_cast<std::uint32_t>(height));
        detail::put_u32(os_, fps);
        detail::put_u32(os_, 0);
    }

    RawContainerWriter(const RawContainerWriter&) = delete;
    RawContainerWriter& operator=(const RawContainerWriter&) = delete;

    ~RawContainerWriter() {
        try {
            close();
        } catch (...) {
        }
    }

    void write(const GrayImage& frame) {
        if (frame.width() != width_ || frame.height() != height_)
            throw DimensionMismatchError("raw container: frame size differs from header");
        os_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
        ++count_;
    }

    void close() {
        if (!os_.is_open()) return;
        os_.seekp(12);
        detail::put_u32(os_, count_);
        os_.close();
    }

private:
    std::ofstream os_;
    int width_;
    int height_;
    std::uint32_t count_ = 0;
};

} // namespace wdd
