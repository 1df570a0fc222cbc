#pragma once

// Opening frame sources by URI and optional perspective rectification.
//
//   synth:PATH   scene script rendered on the fly
//   DIR          numbered PGM sequence
//   FILE         raw container

#include <filesystem>
#include <memory>
#include <string>

#include "wdd/errors.hpp"
#include "wdd/homography.hpp"
#include "wdd/ingest.hpp"
#include "wdd/synth.hpp"

namespace wdd {

/// Wraps a stream and warps every frame with a fixed homography (same output size).
class RectifyingStream final : public FrameStream {
public:
    RectifyingStream(std::unique_ptr<FrameStream> inner, const Homography& h) : inner_(std::move(inner)), h_(h) {
        if (std::abs(h.determinant()) < 1e-12) throw DegenerateConfigurationError("rectification: singular homography");
    }

    const StreamInfo& info() const override { return inner_->info(); }

    std::optional<Frame> next() override {
        auto f = inner_->next();
        if (f) f->image = rectify(f->image, h_);
        return f;
    }

private:
    std::unique_ptr<FrameStream> inner_;
    Homography h_;
};

inline std::unique_ptr<FrameStream> open_source(const std::string& uri, double sequence_fps = 100.0) {
    namespace fs = std::filesystem;
    if (uri.rfind("synth:", 0) == 0) return std::make_unique<synth::SyntheticStream>(synth::load_scene(uri.substr(6)));
    const fs::path p(uri);
    std::error_code ec;
    if (fs::is_directory(p, ec)) return std::make_unique<PgmSequenceStream>(p, sequence_fps);
    if (fs::is_regular_file(p, ec)) return std::make_unique<RawContainerStream>(p);
    throw UnreadableSourceError("no such source: " + uri);
}

/// Applies rectification from four reference corners (TL, TR, BR, BL) when given.
inline std::unique_ptr<FrameStream> maybe_rectify(std::unique_ptr<FrameStream> s,
                                                  const std::optional<std::array<Point2d, 4>>& corners) {
    if (!corners) return s;
    const auto h = corners_to_frame(std::span<const Point2d, 4>(*corners), s->info().width, s->info().height);
    return std::make_unique<RectifyingStream>(std::move(s), h);
}

} // namespace wdd
