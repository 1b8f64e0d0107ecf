#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace atlas::png {

struct PngError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 8-bit interleaved pixels, 3 (RGB) or 4 (RGBA) channels, row 0 at the top.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    friend bool operator==(const Image&, const Image&) = default;
};

std::string encode(const Image& img);

/// Decodes any PNG to 8-bit RGB, or RGBA when the source has alpha.
Image decode(std::string_view bytes);

}  // namespace atlas::png
