#pragma once

// Snippet stack file: 16-byte header of little-endian u32 {magic "WDDS", T, width, height}
// followed by T frames of width*height 8-bit pixels.

#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "wdd/errors.hpp"
#include "wdd/image.hpp"
#include "wdd/ingest.hpp"

namespace wdd {

inline constexpr std::uint32_t kSnippetMagic = 0x53444457;  // "WDDS"

inline void write_snippet_stack(const std::filesystem::path& path, std::span<const GrayImage> stack) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UnreadableSourceError("cannot write " + path.string());
    const int w = stack.empty() ? 0 : stack.front().width();
    const int h = stack.empty() ? 0 : stack.front().height();
    detail::put_u32(os, kSnippetMagic);
    detail::put_u32(os, static_cast<std::uint32_t>(stack.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(w));
    detail::put_u32(os, static_cast<std::uint32_t>(h));
    for (const auto& img : stack) {
        if (img.width() != w || img.height() != h) throw DimensionMismatchError("snippet stack: mixed sizes");
        os.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
    }
    if (!os) throw UnreadableSourceError("write failed: " + path.string());
}

inline std::vector<GrayImage> read_snippet_stack(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UnreadableSourceError("cannot open " + path.string());
    std::uint32_t magic = 0, t = 0, w = 0, h = 0;
    try {
        magic = detail::get_u32(is);
        t = detail::get_u32(is);
        w = detail::get_u32(is);
        h = detail::get_u32(is);
    } catch (const FormatError&) {
        throw FormatError(path.string() + ": truncated snippet header");
    }
    if (magic != kSnippetMagic) throw FormatError(path.string() + ": not a snippet stack file");
    std::vector<GrayImage> stack;
    stack.reserve(t);
    for (std::uint32_t i = 0; i < t; ++i) {
        GrayImage img(static_cast<int>(w), static_cast<int>(h));
        if (!is.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size())))
            throw FormatError(path.string() + ": truncated snippet data");
        stack.push_back(std::move(img));
    }
    return stack;
}

} // namespace wdd
